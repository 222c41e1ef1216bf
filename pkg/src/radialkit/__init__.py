"""Radial distortion toolkit for face-image quality work.

Invertible division-model and Kannala-Brandt point transforms, an
inverse-mapping warp engine, deterministic synthetic-dataset generation,
a logit-based native quality measure with a baseline detector, and
DET/EDC evaluation curves.
"""

from .geometry import DistortionModel, DomainError, DescriptorError
from .imaging import WarpSpec, warp, psnr, displacement_field, magnification_rate
from .quality import nqm

__version__ = "0.1.0"

__all__ = [
    "DistortionModel", "DomainError", "DescriptorError",
    "WarpSpec", "warp", "psnr", "displacement_field", "magnification_rate",
    "nqm", "__version__",
]
