"""Ring-trap BEC simulation and quantum-sensing toolkit.

Simulates imbalanced counter-rotating OAM superpositions in a 2D ring
trap, predicts the nodal-line rotation frequency from reduced coupled-mode
models, runs a fluorescence-style measurement protocol on density images,
and inverts the observed rotation into interaction strength, magnetic
field or external rotation rate.
"""

__version__ = "0.1.0"

from .fields import ComplexField2D, DensityImage, Grid2D, RadialProfile
from .units import DimensionlessParams, PhysicalParams

__all__ = [
    "ComplexField2D", "DensityImage", "Grid2D", "RadialProfile",
    "DimensionlessParams", "PhysicalParams", "__version__",
]
