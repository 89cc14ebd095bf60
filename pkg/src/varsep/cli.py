"""Command-line harness: ``varsep {vsv run | qga run | reference table | witness build}``.

Configuration is layered: built-in defaults, then a JSON ``--config`` file,
then explicit flags.  The resolved config and seed are embedded in every
output file (as ``#`` comment lines in CSVs, as a ``config`` key in JSON),
and a summary JSON written by a previous run can be fed back through
``--config`` to repeat it.

Exit codes: 0 success, 1 usage error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .ensemble import EXACT, MODES, estimator_calls
from .qga import HaltCriterion, qga_call_count, run_qga
from .qstate import DensityMatrix, StateError, build_ghz, build_xmems, product_vectors, random_product_params
from .reference import ReferenceSolveError, css_matrix, ghz_hse, xmems_css_nq, xmems_hse_bound
from .swap_test import DEFAULT_SHOTS, ShotConfig, make_rng
from .vsv import OPTIMIZERS, VsvConfig, build_witness, run_vsv

log = logging.getLogger("varsep")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
STATES = ("ghz", "xmems", "file")
VSV_N_RANGE = (2, 7)
TABLE_N_RANGE = (2, 9)

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "command", "config", "seed", "points"],
    "properties": {
        "schema_version": {"const": 1},
        "command": {"enum": ["vsv run", "qga run", "reference table", "witness build"]},
        "version": {"type": "string"},
        "config": {"type": "object"},
        "seed": {"type": "integer"},
        "points": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["tag", "n"],
                "properties": {
                    "tag": {"type": "string"},
                    "n": {"type": "integer", "minimum": 1},
                    "gamma": {"type": ["number", "null"]},
                    "hse": {"type": ["number", "null"]},
                    "reference_hse": {"type": ["number", "null"]},
                    "gap": {"type": ["number", "null"]},
                    "evaluations": {"type": "integer", "minimum": 0},
                    "device_calls": {"type": "integer", "minimum": 0},
                },
            },
        },
        "files": {"type": "array", "items": {"type": "string"}},
    },
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    state: str = "ghz"
    n: str = "2"
    gamma: Optional[str] = None
    gamma_range: Optional[str] = None
    state_file: Optional[str] = None
    mode: str = EXACT
    shots: int = DEFAULT_SHOTS
    seed: int = 0
    budget: Optional[int] = None
    s_components: Optional[int] = None
    optimizer: str = "annealing"
    out: str = "runs"
    css: str = "auto"
    vsv_budget: int = 2000
    samples: int = 10000

    def validate(self, n_range: tuple[int, int]) -> None:
        if self.state not in STATES:
            raise UsageError(f"--state must be one of {STATES}")
        if self.mode not in MODES:
            raise UsageError(f"--mode must be one of {MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise UsageError(f"--optimizer must be one of {OPTIMIZERS}")
        if self.shots < 1:
            raise UsageError("--shots must be positive")
        if self.budget is not None and self.budget < 1:
            raise UsageError("--budget must be positive")
        if self.state == "file" and not self.state_file:
            raise UsageError("--state file needs a path (--state-file)")
        if self.state != "file":
            lo, hi = n_range
            for n in self.qubit_counts():
                if not lo <= n <= hi:
                    raise UsageError(f"n = {n} outside [{lo}, {hi}]")
        for g in self.gammas():
            if g is not None and not 0.0 <= abs(g) <= 0.5:
                raise UsageError(f"gamma {g} outside [0, 1/2]")

    def qubit_counts(self) -> list[int]:
        return parse_int_list(self.n)

    def gammas(self) -> list:
        if self.gamma_range:
            return parse_gamma_range(self.gamma_range)
        if self.gamma is not None:
            return [parse_gamma(self.gamma)]
        return [None]

    def to_dict(self) -> dict:
        return asdict(self)


def parse_int_list(text) -> list[int]:
    """``"3"``, ``"2,4,5"`` or an inclusive range ``"2:9"``."""
    text = str(text).strip()
    try:
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":"))
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse qubit count {text!r}") from exc


def parse_gamma(text):
    try:
        g = complex(str(text).replace(" ", ""))
    except ValueError as exc:
        raise UsageError(f"cannot parse gamma {text!r}") from exc
    return g.real if g.imag == 0 else g


def parse_gamma_range(text: str) -> list[float]:
    """Inclusive ``a:b:step`` grid."""
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"--gamma-range must be a:b:step, got {text!r}") from exc
    if step <= 0 or b < a:
        raise UsageError("--gamma-range needs b >= a and step > 0")
    count = int(np.floor((b - a) / step + 1e-9)) + 1
    vals = [round(a + k * step, 12) for k in range(count)]
    if abs(vals[-1] - b) > 1e-9 and vals[-1] < b:
        vals.append(b)
    return vals


def load_state_file(path) -> DensityMatrix:
    try:
        data = json.loads(Path(path).read_text())
        n = int(data["n"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot read state file {path}: {exc}") from exc
    d = 1 << n
    try:
        m = (re + 1j * im).reshape(d, d)
    except ValueError as exc:
        raise UsageError(f"state file entries do not form a {d}x{d} matrix") from exc
    try:
        return DensityMatrix(m)
    except StateError as exc:
        raise UsageError(f"state file is not a valid density matrix: {exc}") from exc


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_with_config(body: str, cfg: dict) -> str:
    return f"# config: {json.dumps(cfg, sort_keys=True)}\n" + body


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _gamma_json(g):
    # HSE depends on |gamma| only
    return None if g is None else float(abs(g))


class Outputs:
    """Collects files and writes them only after all computation succeeded."""

    def __init__(self, root):
        self.root = Path(root)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def commit(self) -> list[str]:
        for name, text in self.files.items():
            _write_atomic(self.root / name, text)
        return sorted(self.files)


def _states(cfg: ExperimentConfig):
    """Yield ``(tag, n, gamma, rho)`` for every requested state."""
    if cfg.state == "file":
        rho = load_state_file(cfg.state_file)
        yield f"file_n{rho.n}", rho.n, None, rho
        return
    for n in cfg.qubit_counts():
        if cfg.state == "ghz":
            yield f"ghz_n{n}", n, None, build_ghz(n).density()
            continue
        for g in cfg.gammas():
            if g is None:
                raise UsageError("--state xmems needs --gamma or --gamma-range")
            yield f"xmems_n{n}_g{abs(g):.6f}", n, g, build_xmems(n, g)


def _reference(cfg: ExperimentConfig, n: int, gamma):
    if cfg.state == "ghz":
        return ghz_hse(n)
    if cfg.state == "xmems":
        return xmems_css_nq(n, gamma).hse
    return None


def _vsv_config(cfg: ExperimentConfig, seed: int) -> VsvConfig:
    return VsvConfig(
        s=cfg.s_components,
        optimizer=cfg.optimizer,
        max_evaluations=cfg.budget or 20000,
        mode=cfg.mode,
        shots=ShotConfig(shots=cfg.shots, seed=seed),
        seed=seed,
    )


def cmd_vsv_run(cfg: ExperimentConfig) -> dict:
    cfg.validate(VSV_N_RANGE)
    out = Outputs(cfg.out)
    resolved = cfg.to_dict()
    points = []
    for tag, n, gamma, rho in _states(cfg):
        vcfg = _vsv_config(cfg, cfg.seed)
        log.info("vsv %s: s=%d budget=%d mode=%s", tag, vcfg.components(n), vcfg.max_evaluations, vcfg.mode)
        res = run_vsv(rho, vcfg, tag=tag)
        ref = _reference(cfg, n, gamma)
        ens = res.best_ensemble
        out.add(f"trace_{tag}.csv", _csv_with_config(res.trace.to_csv(), resolved))
        out.add(
            f"ensemble_{tag}.json",
            _json({"config": resolved, "seed": cfg.seed, "n": n, "p": ens.p, "thetas": ens.thetas, "phis": ens.phis, "hse": res.hse}),
        )
        points.append(
            {
                "tag": tag,
                "n": n,
                "gamma": _gamma_json(gamma),
                "hse": res.hse,
                "reference_hse": ref,
                "gap": None if ref is None else res.hse - ref,
                "evaluations": res.evaluation_count,
                "device_calls": res.device_calls,
                "s": ens.s,
                "best_improvements": res.trace.improvements(),
                "lower_failures": res.lower_failures,
            }
        )
        log.info("vsv %s: hse=%.10g reference=%s", tag, res.hse, ref)
    return _finish(out, "vsv run", cfg, points)


def cmd_qga_run(cfg: ExperimentConfig) -> dict:
    cfg.validate(VSV_N_RANGE)
    out = Outputs(cfg.out)
    resolved = cfg.to_dict()
    points = []
    for tag, n, gamma, rho in _states(cfg):
        halt = HaltCriterion(max_trials=cfg.budget or 10000)
        res = run_qga(rho, halt, seed=cfg.seed, mode=cfg.mode, shots=ShotConfig(cfg.shots, cfg.seed))
        out.add(f"qga_trace_{tag}.csv", _csv_with_config(res.trace.to_csv(), resolved))
        ref = _reference(cfg, n, gamma)
        point = {
            "tag": tag,
            "n": n,
            "gamma": _gamma_json(gamma),
            "hse": res.state.hsd,
            "reference_hse": ref,
            "gap": None if ref is None else res.state.hsd - ref,
            "evaluations": res.state.c_t,
            "device_calls": res.state.device_calls,
            "successes": res.state.c_s,
            "stored_components": res.state.component_count(),
            "halt_reason": res.halt_reason,
            "modeled_device_calls": qga_call_count(max(res.state.c_t, 1)),
            "modeled_device_calls_1e6": qga_call_count(10**6),
        }
        if cfg.vsv_budget > 0:
            vcfg = VsvConfig(s=cfg.s_components, optimizer=cfg.optimizer, max_evaluations=cfg.vsv_budget, mode=cfg.mode, shots=ShotConfig(cfg.shots, cfg.seed), seed=cfg.seed)
            vres = run_vsv(rho, vcfg, tag=tag)
            point.update(
                {
                    "vsv_hse": vres.hse,
                    "vsv_evaluations": vres.evaluation_count,
                    "vsv_device_calls": vres.device_calls,
                    "vsv_calls_per_evaluation": estimator_calls(vcfg.components(n)) - 1,
                    "qga_calls_per_vsv_evaluation": res.state.device_calls / max(vres.evaluation_count, 1),
                }
            )
        points.append(point)
        log.info("qga %s: hsd=%.10g after %d trials (%d successes)", tag, res.state.hsd, res.state.c_t, res.state.c_s)
    return _finish(out, "qga run", cfg, points)


TABLE_HEADER = ("n", "gamma", "hse", "a", "b", "abs_delta", "bound_2gamma_sq")


def cmd_reference_table(cfg: ExperimentConfig) -> dict:
    cfg.validate(TABLE_N_RANGE)
    gammas = cfg.gammas()
    if gammas == [None]:
        gammas = parse_gamma_range("0:0.5:0.01")
    out = Outputs(cfg.out)
    lines = [",".join(TABLE_HEADER)]
    points = []
    for n in cfg.qubit_counts():
        for g in gammas:
            sol = xmems_css_nq(n, g)
            p = sol.params
            row = (n, abs(g), sol.hse, p.a, p.b, abs(p.delta), xmems_hse_bound(g))
            lines.append(",".join(str(x) if isinstance(x, int) else repr(float(x)) for x in row))
            points.append({"tag": f"n{n}_g{abs(g):.6f}", "n": n, "gamma": abs(g), "hse": sol.hse, "kkt_residual": sol.kkt_residual})
    out.add("reference_table.csv", _csv_with_config("\n".join(lines) + "\n", cfg.to_dict()))
    return _finish(out, "reference table", cfg, points)


def _analytic_css(cfg: ExperimentConfig, n: int, gamma) -> Optional[np.ndarray]:
    if cfg.state == "ghz":
        # GHZ_n is the X-MEMS at gamma = 1/2
        return css_matrix(xmems_css_nq(n, 0.5).params)
    if cfg.state == "xmems":
        return css_matrix(xmems_css_nq(n, gamma).params)
    return None


def cmd_witness_build(cfg: ExperimentConfig) -> dict:
    cfg.validate(VSV_N_RANGE)
    if cfg.css not in ("auto", "analytic", "vsv"):
        raise UsageError("--css must be auto, analytic or vsv")
    out = Outputs(cfg.out)
    resolved = cfg.to_dict()
    points = []
    for tag, n, gamma, rho in _states(cfg):
        sigma = _analytic_css(cfg, n, gamma) if cfg.css in ("auto", "analytic") else None
        source = "analytic"
        if sigma is None:
            if cfg.css == "analytic":
                raise UsageError("no analytic CSS for a file state; use --css vsv")
            sigma = run_vsv(rho, _vsv_config(cfg, cfg.seed)).css().entries
            source = "vsv"
        rng = make_rng(cfg.seed)
        wit = build_witness(rho, sigma, budget=cfg.budget or 20, rng=rng)
        th, ph = random_product_params(n, rng, size=cfg.samples)
        vecs = product_vectors(th, ph)
        sampled = np.real(np.einsum("ki,ij,kj->k", vecs.conj(), wit.W, vecs))
        out.add(
            f"witness_{tag}.json",
            _json(
                {
                    "config": resolved,
                    "seed": cfg.seed,
                    "n": n,
                    "offset": wit.offset,
                    "offset_is_lower_bound": wit.offset_is_lower_bound,
                    "value_on_state": wit.value,
                    "W_re": wit.W.real,
                    "W_im": wit.W.imag,
                }
            ),
        )
        points.append(
            {
                "tag": tag,
                "n": n,
                "gamma": _gamma_json(gamma),
                "css_source": source,
                "value_on_state": wit.value,
                "offset": wit.offset,
                "min_on_sampled_products": float(sampled.min()),
                "sampled_products": int(cfg.samples),
            }
        )
    return _finish(out, "witness build", cfg, points)


def _finish(out: Outputs, command: str, cfg: ExperimentConfig, points: list) -> dict:
    import jsonschema

    summary = {
        "schema_version": 1,
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "points": points,
    }
    summary["files"] = sorted([*out.files, "summary.json"])
    jsonschema.validate(json.loads(_json(summary)), SUMMARY_SCHEMA)
    out.add("summary.json", _json(summary))
    out.commit()
    return summary


COMMANDS = {
    ("vsv", "run"): cmd_vsv_run,
    ("qga", "run"): cmd_qga_run,
    ("reference", "table"): cmd_reference_table,
    ("witness", "build"): cmd_witness_build,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only explicitly given flags override the config file
    p.add_argument("--state", choices=STATES)
    p.add_argument("--state-file", dest="state_file")
    p.add_argument("--n", help="qubit count: 3, 2,4 or 2:9")
    p.add_argument("--gamma")
    p.add_argument("--gamma-range", dest="gamma_range", help="inclusive a:b:step")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--s-components", dest="s_components", type=int)
    p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--out")
    p.add_argument("--config", help="JSON config (or a previous summary.json)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="varsep", description="Closest-separable-state workbench")
    parser.add_argument("--version", action="version", version=__version__)
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    vsv = groups.add_parser("vsv").add_subparsers(dest="action", required=True, parser_class=_Parser)
    _add_common(vsv.add_parser("run", help="bilevel variational CSS search"))

    qga = groups.add_parser("qga").add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = qga.add_parser("run", help="Gilbert baseline with call-count report")
    _add_common(q)
    q.add_argument("--vsv-budget", dest="vsv_budget", type=int, help="budget of the paired VSV run (0 disables it)")

    ref = groups.add_parser("reference").add_subparsers(dest="action", required=True, parser_class=_Parser)
    _add_common(ref.add_parser("table", help="analytic X-MEMS HSE table"))

    wit = groups.add_parser("witness").add_subparsers(dest="action", required=True, parser_class=_Parser)
    w = wit.add_parser("build", help="witness from the (analytic or VSV) CSS")
    _add_common(w)
    w.add_argument("--css", choices=("auto", "analytic", "vsv"))
    w.add_argument("--samples", type=int, help="random product states used to check the witness")
    return parser


def resolve_config(args: argparse.Namespace, command_defaults: dict | None = None) -> ExperimentConfig:
    """defaults < config file < flags."""
    base = asdict(ExperimentConfig())
    base.update(command_defaults or {})
    log.debug("defaults: %s", base)
    known = {f.name for f in fields(ExperimentConfig)}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        data = data.get("config", data)
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        log.debug("config file: %s", data)
        base.update(data)
    flags = {k: v for k, v in vars(args).items() if k in known and v is not None}
    log.debug("flags: %s", flags)
    base.update(flags)
    if base.get("n") is not None:
        base["n"] = str(base["n"])
    if base.get("gamma") is not None:
        base["gamma"] = str(base["gamma"])
    return ExperimentConfig(**base)


_COMMAND_DEFAULTS = {
    ("reference", "table"): {"state": "xmems", "n": "2:9"},
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    key = (args.group, args.action)
    try:
        cfg = resolve_config(args, _COMMAND_DEFAULTS.get(key))
        summary = COMMANDS[key](cfg)
    except UsageError as exc:
        print(f"varsep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ReferenceSolveError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"varsep: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"out": cfg.out, "files": summary["files"]}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
