"""Low-temperature quantum transfer matrix spectrum of the XXZ chain via a
non-linear integral equation."""
from .core_types import ModelParams, SignedMultiset, validate_params

__all__ = ["ModelParams", "SignedMultiset", "validate_params"]
