"""Power-system inertia estimation from PMU frequency records."""

__version__ = "0.1.0"

from .core import (
    BaseConvention,
    DisturbanceScenario,
    EstimateResult,
    FrequencyTrace,
    GeneratorSpec,
    SystemSpec,
    inertia_constant_from_physical,
    per_unit_imbalance,
)
from .estimator import (
    CoiMethod,
    WindowSpec,
    coi_frequency,
    estimate_from_traces,
    estimate_generator_inertia,
    estimate_system_inertia,
    extract_window,
    fit_rocof,
    ground_truth_inertia,
    sweep_windows,
)
from .simulator import (
    ArtifactModel,
    GovernorModel,
    SimConfig,
    inject_artifacts,
    simulate_aggregate,
    simulate_multimachine,
)

__all__ = [
    "ArtifactModel",
    "BaseConvention",
    "coi_frequency",
    "CoiMethod",
    "DisturbanceScenario",
    "estimate_from_traces",
    "estimate_generator_inertia",
    "estimate_system_inertia",
    "EstimateResult",
    "extract_window",
    "fit_rocof",
    "FrequencyTrace",
    "GeneratorSpec",
    "GovernorModel",
    "ground_truth_inertia",
    "inertia_constant_from_physical",
    "inject_artifacts",
    "per_unit_imbalance",
    "SimConfig",
    "simulate_aggregate",
    "simulate_multimachine",
    "sweep_windows",
    "SystemSpec",
    "WindowSpec",
]
