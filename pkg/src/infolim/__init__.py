"""Information limits of continuous-time control and filtering channels.

Estimates the information rate carried by additive white Gaussian
control and observation channels around linear and scalar nonlinear
plants, by deterministic Riccati routes and by Monte Carlo estimation
with exact or approximate nonlinear filters, and checks the capacity
and sensitivity bounds those rates must satisfy.
"""

from .errors import (
    AssumptionViolatedError,
    ConfigError,
    DegeneracyError,
    DivergedError,
    InfolimError,
    NoDichotomyError,
    NotConvergedError,
    NumericalBreakdownError,
    PowerConstraintViolatedError,
)
from .grids import TimeGrid
from .sde import SamplePath, SeedSpec, ou_exact_path, simulate_control_loop, simulate_observation
from .statespace import (
    LtiSystem,
    LtvSystem,
    ModalDecomposition,
    NonlinearScalarSystem,
    SpectralSummary,
    lyapunov_exponents,
    modal_decompose,
    system_from_config,
    unstable_pole_sum,
)
from .riccati import (
    AreSolution,
    RdeSolution,
    integrate_rde,
    solve_are,
    vanishing_noise_expansion,
)
from .estimators import (
    KalmanRun,
    KushnerRun,
    ParticleRun,
    kalman_bucy_run,
    kushner_grid_run,
    particle_filter_run,
)
from .inforate import (
    BodeReport,
    CapacityBounds,
    ChainReport,
    InfoReport,
    capacity_check,
    control_rate_monte_carlo,
    control_rate_riccati,
    control_rate_spectral,
    filtering_rate,
    filtering_rate_monte_carlo,
    filtering_rate_riccati,
    ltv_bode_integral,
    ltv_rate_bounds_check,
    nonlinear_control_rate,
    nonlinear_filtering_rate,
)
from .experiments import (
    ExperimentResult,
    list_experiments,
    run_experiment,
)
from .report import write_report

__version__ = "0.1.0"

__all__ = [
    "AreSolution",
    "AssumptionViolatedError",
    "BodeReport",
    "CapacityBounds",
    "ChainReport",
    "ConfigError",
    "DegeneracyError",
    "DivergedError",
    "ExperimentResult",
    "InfoReport",
    "InfolimError",
    "KalmanRun",
    "KushnerRun",
    "LtiSystem",
    "LtvSystem",
    "ModalDecomposition",
    "NoDichotomyError",
    "NonlinearScalarSystem",
    "NotConvergedError",
    "NumericalBreakdownError",
    "ParticleRun",
    "PowerConstraintViolatedError",
    "RdeSolution",
    "SamplePath",
    "SeedSpec",
    "SpectralSummary",
    "TimeGrid",
    "capacity_check",
    "control_rate_monte_carlo",
    "control_rate_riccati",
    "control_rate_spectral",
    "filtering_rate",
    "filtering_rate_monte_carlo",
    "filtering_rate_riccati",
    "integrate_rde",
    "kalman_bucy_run",
    "kushner_grid_run",
    "list_experiments",
    "lyapunov_exponents",
    "ltv_bode_integral",
    "ltv_rate_bounds_check",
    "modal_decompose",
    "run_experiment",
    "nonlinear_control_rate",
    "nonlinear_filtering_rate",
    "ou_exact_path",
    "particle_filter_run",
    "simulate_control_loop",
    "simulate_observation",
    "solve_are",
    "system_from_config",
    "unstable_pole_sum",
    "vanishing_noise_expansion",
    "write_report",
]
