"""hfhrlab: HFHR and kinetic Langevin samplers, reflection-coupling
contraction diagnostics, and the explicit constant calculus behind them."""

from .potentials import (
    AssumptionConstants,
    ClassificationPotential,
    GaussianPotential,
    LinearRegressionPotential,
    MultiWellPotential,
    PotentialModel,
)
from .integrators import (
    PhasePoint,
    SamplerParams,
    TrajectoryRecord,
    hfhr_step,
    klmc_step,
    run_ensemble,
    ula_step,
)
from .constants import (
    AccelerationLedger,
    BaselineDrift,
    CorrectorSpec,
    LyapunovSpec,
    RateReport,
    acceleration_report,
    baseline_drift_constants,
    build_corrector,
    case_study_constants,
    contraction_rate,
    lyapunov_quadratic_bounds,
)
from .coupling import (
    CoupledPair,
    CouplingParams,
    ProfileSpec,
    build_profile,
    coupled_step,
    estimate_contraction,
    phase_distance,
    run_coupled_ensemble,
    semimetric,
)
from .metrics import w2_assignment, w2_exact_1d, w2_sliced

__version__ = "0.1.0"

__all__ = [
    "AssumptionConstants",
    "PotentialModel",
    "MultiWellPotential",
    "GaussianPotential",
    "LinearRegressionPotential",
    "ClassificationPotential",
    "PhasePoint",
    "SamplerParams",
    "TrajectoryRecord",
    "hfhr_step",
    "klmc_step",
    "ula_step",
    "run_ensemble",
    "LyapunovSpec",
    "BaselineDrift",
    "CorrectorSpec",
    "RateReport",
    "AccelerationLedger",
    "lyapunov_quadratic_bounds",
    "baseline_drift_constants",
    "build_corrector",
    "contraction_rate",
    "acceleration_report",
    "case_study_constants",
    "CouplingParams",
    "CoupledPair",
    "ProfileSpec",
    "build_profile",
    "coupled_step",
    "phase_distance",
    "semimetric",
    "run_coupled_ensemble",
    "estimate_contraction",
    "w2_exact_1d",
    "w2_assignment",
    "w2_sliced",
]
