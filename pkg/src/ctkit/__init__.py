"""Fan-beam CT reconstruction toolkit."""

from .geometry import FanGeometry, ImageGrid, uniform_angles
from .projector import Image, Sinogram, forward_project, back_project
from .filtering import FilterSpec, ram_lak, fbp, calibrate_fbp_scale
from .extrapolation import BasisSpec, Extrapolator, KnownMask
from .model import FnoBpModel, reconstruct, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "FanGeometry", "ImageGrid", "uniform_angles",
    "Image", "Sinogram", "forward_project", "back_project",
    "FilterSpec", "ram_lak", "fbp", "calibrate_fbp_scale",
    "BasisSpec", "Extrapolator", "KnownMask",
    "FnoBpModel", "reconstruct", "load_checkpoint", "save_checkpoint",
    "__version__",
]
