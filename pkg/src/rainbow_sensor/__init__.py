"""Subwavelength resonator arrays: capacitance, resonances, robustness and filter banks."""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    ConfigError,
    GeometryError,
    Material,
    PerturbationSpec,
    ResonatorArray,
    apply_perturbation,
    array_from_config,
    as_dilute,
    graded_array_for_length,
    make_dilute_array,
    make_graded_array,
)
from .capacitance import GeneralizedCapacitanceMatrix, dilute_gcm, gcm_from_bem  # noqa: E402
from .spectral import Spectrum, compute_spectrum  # noqa: E402

__all__ = [
    "ConfigError",
    "GeometryError",
    "GeneralizedCapacitanceMatrix",
    "Material",
    "PerturbationSpec",
    "ResonatorArray",
    "Spectrum",
    "apply_perturbation",
    "array_from_config",
    "as_dilute",
    "compute_spectrum",
    "dilute_gcm",
    "gcm_from_bem",
    "graded_array_for_length",
    "make_dilute_array",
    "make_graded_array",
]
