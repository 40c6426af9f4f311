"""Batch and online nonnegative matrix factorization under the
Itakura-Saito divergence."""
from .core import Dictionary, SolverConfig, frobenius_delta, rescale_dictionary
from .errors import IsnmfError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dictionary",
    "IsnmfError",
    "SolverConfig",
    "frobenius_delta",
    "rescale_dictionary",
]
