"""graspkit: physics-aware two-finger grasp analysis and dataset generation."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
