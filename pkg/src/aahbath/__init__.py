"""AAH chain coupled to a d-dimensional lattice bath."""

from .model import ModelConfig, GOLDEN

__all__ = ["ModelConfig", "GOLDEN"]
__version__ = "0.1.0"
