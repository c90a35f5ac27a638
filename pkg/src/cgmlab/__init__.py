"""Numerical laboratory for Willmore surfaces and their conformal Gauss maps."""

from .conformal_gauss import ConformalGaussField, build_cgm, energies
from .immersion import ParametricImmersion, build_fixture
from .minkowski import ETA, eta_inner

__all__ = ["ETA", "ConformalGaussField", "ParametricImmersion", "build_cgm", "build_fixture", "energies",
           "eta_inner"]
__version__ = "0.1.0"
