"""Anisotropic stochastic flow toolkit: spectral fields on the 2-torus,
exact dealiased advection, structured noise maps, exponential-Euler
integration, rate-function optimisation and rare-event probes."""

from .spectral import (
    GridSpec,
    SpectralField,
    ScalarGridField,
    GridMismatchError,
    SymmetryError,
    SnapshotFormatError,
    leray_project,
    sobolev_norm,
    sobolev_weights,
    inner,
    partial_derivative,
    mollify,
    to_physical,
    from_physical,
    mixed_norm,
    write_snapshot,
    read_snapshot,
    field_from_modes,
    horizontal_shear,
    vertical_shear,
    random_divergence_free,
)
from .nonlinear import (
    AdvectionWorkspace,
    BoundRatios,
    advect,
    trilinear,
    partial2_identity_check,
    estimate_diagnostic,
    diagnostic_study,
    write_diagnostic_csv,
)
from .noise import (
    NoiseModel,
    AssumptionReport,
    apply_sigma,
    sigma_columns,
    hs_norm,
    sample_increment,
    verify_assumptions,
    make_probe_pairs,
    K2_CLOSURE_MAX,
    K2_TILDE_CLOSURE_MAX,
    L2_CLOSURE_MAX,
)
from .dynamics import (
    SolverConfig,
    EquationSpec,
    Trajectory,
    BlowUpError,
    ExitTime,
    solve,
    solve_skeleton,
    step,
    exit_time,
    read_trajectory_csv,
)
from .rate import (
    Control,
    RateOptions,
    RateResult,
    minimize_small_noise_rate,
    small_time_rate,
    write_control_csv,
    read_control_csv,
)
from .experiments import (
    TerminalNormExceeds,
    SupDeviationFromSkeleton,
    SupPairDeviation,
    LdpProbeSpec,
    ProbeRow,
    ProbeResult,
    EnergyStats,
    ScalingCheck,
    wilson_bounds,
    mc_tail,
    exp_equivalence_probe,
    energy_stats,
    small_time_scaling_check,
    read_probe_csv,
)

__version__ = "0.1.0"
