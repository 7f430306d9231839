from .spectral import (
    AssumptionParams,
    BasisKind,
    RegimeReport,
    SpectralOperator,
)
from .nonlinearity import (
    Nonlinearity,
    NonlinearityKind,
    NoiseSpec,
)
from .noise import (
    GridSpec,
    NoiseDomain,
    NoiseTable,
)
from .integrators import (
    ModelSpec,
    SodeDrift,
    SodeDriftKind,
    SodeModel,
    Trajectory,
)
from .statistics import (
    Ensemble,
    KSResult,
    Moments,
    OrderFit,
    StatReport,
    StatRow,
)
from .oracles import (
    LinearLimitMoments,
    OUMoments,
    SodeLimitMoments,
)
from .experiment import ExperimentConfig

__all__ = [
    "AssumptionParams",
    "BasisKind",
    "RegimeReport",
    "SpectralOperator",
    "Nonlinearity",
    "NonlinearityKind",
    "NoiseSpec",
    "GridSpec",
    "NoiseDomain",
    "NoiseTable",
    "ModelSpec",
    "SodeDrift",
    "SodeDriftKind",
    "SodeModel",
    "Trajectory",
    "Ensemble",
    "KSResult",
    "Moments",
    "OrderFit",
    "StatReport",
    "StatRow",
    "LinearLimitMoments",
    "OUMoments",
    "SodeLimitMoments",
    "ExperimentConfig",
]
