"""Gaussian-approximation lab.

Building blocks for studying how sums of independent random vectors
approach their Gaussian limit: seedable sampling of the relevant random
objects, exact and entropic transport distances between replicate
clouds, closed-form rate bounds with explicit constants, Hermite/flow
diagnostics, and a Monte-Carlo harness that sweeps (n, p, L) grids and
fits empirical convergence rates.
"""

from .bounds import (
    BoundInputs,
    MomentVector,
    SubGaussianProfile,
    anti_concentration_const,
    empirical_moment_vector,
    empirical_mu,
    final_dist_bound,
    gaussian_comparison_bound,
    main_bound_cnp,
    main_tail_threshold,
    onedim_coupling_threshold,
    onedim_wl_const,
    subgaussian_moment_bound,
    subgaussian_quantile,
    subgaussian_tail,
    summand_moment_bound,
    wlt_bound,
    wlt_subgaussian_bound,
)
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    GalError,
    InputError,
    OutputError,
    SizeError,
)
from .experiments import (
    CellResult,
    ExperimentGrid,
    RateFit,
    calibrate_constant,
    calibrate_final_dist_constant,
    fit_rate,
    ks_statistic,
    run_max_sweep,
    run_wl_sweep,
)
from .hermite_ou import (
    BoniCheck,
    MultiIndex,
    VelocityEstimate,
    boni_inequality_check,
    estimate_velocity_field,
    hermite_eval,
    hermite_eval_many,
    hermite_orthogonality_check,
    silverman_bandwidth,
)
from .sampling import (
    CovarianceSpec,
    PointCloud,
    SeedSpec,
    SummandModel,
    ou_interpolate,
    sample_gaussian,
    sample_sum_replicates,
    sample_sum_replicates_coupled,
)
from .transport import (
    SinkhornConfig,
    TransportPlan,
    TransportResult,
    exact_wl,
    sinkhorn_wl,
    wl_between_sum_and_gaussian,
)

__version__ = "0.1.0"
