"""Variationality of second-order dynamics on regular Lie algebroids.

The package decides, numerically at sample points, whether a SODE section on
a Lie algebroid is variational or weak variational for a given multiplier
map, derives SODEs from regular Lagrangians, and reconstructs Lagrangians
where the local theory permits.
"""

from .algebroid import (
    AtiyahData,
    LieAlgebroid,
    OneSection,
    RegularityError,
    Report,
    atiyah_algebroid,
    atiyah_curvature,
    dE_function,
    dE_one_section,
    kernel_basis,
    lie_algebra,
    local_exactness_check,
    tangent_bundle,
    validate_structure,
)
from .exprlang import ParseError, parse
from .jets import EvalContext, EvaluationError, Jet2, fd_check
from .model import ModelError, ModelFile, load
from .morphism import (
    AlgebroidMorphism,
    check_morphism,
    pullback_covector,
    reduction_check,
    sode_related,
)
from .prolongation import (
    ProlongCovector,
    ProlongSection,
    ProlongVector,
    euler_section,
    horizontal_lift_basis,
    lift_map,
    prolong_structure,
    theta_composition,
    tulczyjew_map,
    vertical_endo,
)
from .sode import (
    Classification,
    HelmholtzReport,
    MultiplierMap,
    SodeSection,
    atiyah_reduced_residuals,
    classify,
    connection_quantities,
    helmholtz_residuals,
    kernel_condition,
    horizontal_helmholtz_residuals,
    theta_components,
)
from .variational import (
    DegenerateLagrangianError,
    Lagrangian,
    ReconstructionError,
    el_residual,
    energy,
    legendre,
    reconstruct_lagrangian,
    sode_from_lagrangian,
)

__all__ = [
    "AlgebroidMorphism",
    "AtiyahData",
    "Classification",
    "DegenerateLagrangianError",
    "EvalContext",
    "EvaluationError",
    "HelmholtzReport",
    "Jet2",
    "Lagrangian",
    "LieAlgebroid",
    "ModelError",
    "ModelFile",
    "MultiplierMap",
    "OneSection",
    "ParseError",
    "ProlongCovector",
    "ProlongSection",
    "ProlongVector",
    "ReconstructionError",
    "RegularityError",
    "Report",
    "SodeSection",
    "atiyah_algebroid",
    "atiyah_curvature",
    "atiyah_reduced_residuals",
    "check_morphism",
    "classify",
    "connection_quantities",
    "dE_function",
    "dE_one_section",
    "el_residual",
    "energy",
    "euler_section",
    "fd_check",
    "helmholtz_residuals",
    "horizontal_lift_basis",
    "kernel_basis",
    "kernel_condition",
    "legendre",
    "lie_algebra",
    "lift_map",
    "load",
    "local_exactness_check",
    "parse",
    "horizontal_helmholtz_residuals",
    "prolong_structure",
    "pullback_covector",
    "reconstruct_lagrangian",
    "reduction_check",
    "sode_from_lagrangian",
    "sode_related",
    "tangent_bundle",
    "theta_composition",
    "theta_components",
    "tulczyjew_map",
    "validate_structure",
    "vertical_endo",
]

__version__ = "0.1.0"
