"""Numerical laboratory for distribution-dependent SDEs driven by additive fractional Brownian motion."""

__version__ = "0.1.0"

from .drift import (  # noqa: E402
    BilinearKernelDrift,
    ConvolutionalDrift,
    RegimeParams,
    StatisticDrift,
    TimeProfile,
    ZeroDrift,
    check_class,
    effective_field,
    regime_gate,
)
from .fbm import (  # noqa: E402
    FbmPath,
    TimeGrid,
    fbm_covariance,
    holder_seminorm,
    sample_fbm_circulant,
    sample_fbm_cholesky,
    sample_fbm_ensemble,
)
from .field import SpectralField, besov_norm, evaluate, mollify, synth_besov_field  # noqa: E402
from .measure import (  # noqa: E402
    EmpiricalMeasure,
    MeasureFlow,
    convolve_field,
    moment_norm,
    wasserstein,
    wasserstein_1d,
    wasserstein_exact,
    wasserstein_sinkhorn,
)
from .rng import RngStream  # noqa: E402
from .solver import (  # noqa: E402
    InitialLaw,
    SolverConfig,
    law_flow,
    particle_system,
    picard_iterate,
    solve_frozen_sde,
)
from .young import (  # noqa: E402
    AveragedField,
    averaged_field,
    estimate_holder_exponent,
    nonlinear_young_integral,
)
