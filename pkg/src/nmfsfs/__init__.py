"""Poisson NMF fitting and sampling of the set of feasible solutions (SFS)."""

__version__ = "0.1.0"

from .model import (
    CountMatrix,
    DegenerateComponentError,
    Factorization,
    InfiniteDivergenceError,
    NegativeEntryError,
    ShapeError,
    gkl_divergence,
    match_components,
    normalize_columns,
)
from .fit import FitConfig, FitResult, fit, lee_seung_step
from .sampler import (
    DegeneracyWarning,
    FeasibleInterval,
    SamplerConfig,
    SfsChain,
    SfsEnvelope,
    TransformSpec,
    build_transform,
    feasible_interval,
    run_sampler,
    sample_lambda,
    sfs_size,
)
from .rank2 import Rank2Sfs, rank2_sfs
from .svd import (
    AlphaCloud,
    InfeasibleSolutionError,
    TruncatedSvd,
    alpha_of_E,
    alpha_of_P,
    reconstruct_from_alpha,
    truncated_svd,
)
from .experiments import (
    BootstrapResult,
    InitStudyResult,
    RankScanResult,
    bootstrap_study,
    init_study,
    poisson_bootstrap,
    rank_scan,
)
