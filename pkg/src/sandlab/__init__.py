"""Infinite-volume sandpile tooling: stabilization on growing windows,
one-sided zero dynamics in one dimension, and percolation statistics of
toppled clusters."""

__version__ = "0.1.0"

from .backend import backend_name
from .lattice import (
    HeightConfig,
    IllegalTopplingError,
    SandpileError,
    SiteOutsideWindowError,
    ToppleField,
    Window,
    WindowMismatchError,
    is_stable,
    topple,
    toppling_matrix_entry,
    verify_evolution,
)
from .measures import (
    Constant,
    InvalidSpecError,
    Poisson,
    Seed,
    SingleDefect,
    TwoPoint,
    chernov_rate,
    mgf,
    mgf_inverse,
    parse_measure,
    sample,
    t_rho,
)
from .onesided import (
    IntervalTracker,
    OneSidedState,
    OneSidedTrace,
    ZeroEvent,
    advance,
    interval_stats,
    raster_export,
    run_one_sided,
    two_sided,
    validate_trace,
)
from .percolation import (
    ClusterDecomposition,
    FitResult,
    InsufficientSupportError,
    TailEstimate,
    bond_bound_check,
    decompose,
    extract_sets,
    fit_exponential,
    origin_cluster_size,
    region_grain_check,
    survival_tail,
)
from .schedulers import (
    BudgetExceededError,
    NestedVolumes,
    Parallel,
    RandomSequential,
    StabilizeOutcome,
    Waves,
    abelian_check,
    fast_stabilize,
    parse_scheduler,
    run_nested,
    stabilize,
)
from .stats import KSResult, clt_statistic, ks_two_sample
