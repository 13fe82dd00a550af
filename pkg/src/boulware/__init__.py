"""Two-point functions of a massive scalar on the Schwarzschild exterior.

Radial modes are built from asymptotic seeds and adaptive integration,
combined into frequency-domain Green's functions by the Wronskian method,
and assembled into ground-state and thermal position-space correlators
with a flat-spacetime baseline for cross-checks.
"""

from .errors import (
    BoulwareError,
    BranchError,
    ConfigError,
    ConvergenceError,
    DegenerateModesError,
    DomainError,
    InterpolationError,
    QuadratureError,
    ResidualError,
    SeedAccuracyError,
    StepSizeUnderflow,
    ThresholdError,
    TruncationError,
    WindowTooSmall,
)
from .geometry import (
    RadialGrid,
    SpacetimeParams,
    effective_potential,
    horizon_gap,
    inverse_tortoise,
    tortoise,
)
from .radial import (
    AsymptoticFit,
    ModeSolution,
    Seed,
    fit_asymptotics,
    infinity_boundary,
    integrate_mode,
    residual_check,
    seed_phi_infinity,
    seed_psi_horizon,
    solve_mode,
    wronskian,
)
from .greens import FrequencyGreen, green_frequency, green_residual_check, solve_channel
from .thermal import (
    SpectralDensity,
    ThermalParams,
    bose_occupation,
    bose_weight,
    detailed_balance_check,
    ground_positivity_check,
    kms_strip_check,
    thermal_green_frequency,
)
from .flat import (
    FlatPoint,
    flat_channel_green,
    flat_limit_compare,
    flat_thermal_closed,
    flat_two_point,
    flat_wightman_closed,
    flat_wightman_integral,
    rho_flat,
)
from .position import (
    ChannelSumResult,
    QuadratureSpec,
    TwoPointResult,
    channel_sum,
    decay_profile,
    integrability_check,
    kernel,
    two_point,
)

__version__ = "0.1.0"
