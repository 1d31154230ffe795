"""Multi-species Patlak-Keller-Segel solver via minimizing movements in
Wasserstein space, with free-energy diagnostics and criticality analysis."""

from .criticality import (
    InteractionMatrix,
    MassClass,
    MassRegime,
    classify_mass,
    lambda_subset,
    predicted_moment_slope,
)
from .energy import (
    EnergyReport,
    PotentialField,
    dissipation,
    entropy,
    free_energy,
    interaction_energy,
    newtonian_potential,
)
from .grids import (
    Grid,
    InvalidArgumentError,
    MultiDensity,
    make_gaussian,
    make_uniform,
    mass,
    second_moment,
)
from .inequalities import bhn_check, carleman_check, gns_check
from .jko import (
    JkoParams,
    StepReport,
    Trajectory,
    de_giorgi_interpolate,
    energy_identity_report,
    jko_step,
    production_check,
    run_scheme,
    slope_check,
)
from .transport import TransportResult, exact_w2_lp, product_distance, sinkhorn_w2

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "MultiDensity",
    "InteractionMatrix",
    "MassClass",
    "MassRegime",
    "InvalidArgumentError",
    "EnergyReport",
    "PotentialField",
    "TransportResult",
    "JkoParams",
    "StepReport",
    "Trajectory",
    "lambda_subset",
    "classify_mass",
    "predicted_moment_slope",
    "mass",
    "second_moment",
    "make_gaussian",
    "make_uniform",
    "newtonian_potential",
    "entropy",
    "interaction_energy",
    "free_energy",
    "dissipation",
    "carleman_check",
    "bhn_check",
    "gns_check",
    "sinkhorn_w2",
    "exact_w2_lp",
    "product_distance",
    "jko_step",
    "run_scheme",
    "de_giorgi_interpolate",
    "production_check",
    "energy_identity_report",
    "slope_check",
    "__version__",
]
