"""Closest fully separable states and Hilbert-Schmidt entanglement of small qubit systems."""

__version__ = "0.1.0"

from .ensemble import (
    EXACT,
    SHOTS,
    OverlapCache,
    SeparableEnsemble,
    build_cache,
    densify,
    ensemble_overlap,
    ensemble_purity,
    hsd_from_cache,
)
from .qga import HaltCriterion, QgaState, qga_call_count, run_qga
from .qstate import (
    DensityMatrix,
    ProductStateParams,
    PureState,
    build_ghz,
    build_product_state,
    build_xmems,
    hsd_exact,
    partial_trace,
    partial_transpose,
)
from .reference import ghz_hse, xmems_css_2q, xmems_css_nq, xmems_hse_bound
from .swap_test import ShotConfig, bell_pair_distribution, overlap_exact, sample_overlap
from .trace import OptimizationTrace
from .vsv import VsvConfig, VsvResult, build_witness, lower_solve, run_vsv
