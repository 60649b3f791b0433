"""Pseudospectral min-max solver for super-Liouville systems on flat tori."""

__version__ = "0.1.0"

from .fields import (ScalarField, SpinorField, TorusGeometry, build_geometry,
                     zero_scalar, zero_spinor)
from .spectral import DiracSpectrum, eigendecompose

__all__ = [
    "ScalarField",
    "SpinorField",
    "TorusGeometry",
    "build_geometry",
    "zero_scalar",
    "zero_spinor",
    "DiracSpectrum",
    "eigendecompose",
    "__version__",
]
