"""Exact 2-Wasserstein distance between uniform discrete measures."""

from ._backend import DEFAULT_BACKEND, available_backends
from .exact import PointCloud, W2Result, as_cloud, w2_bruteforce, w2_exact

__all__ = [
    "DEFAULT_BACKEND",
    "PointCloud",
    "W2Result",
    "as_cloud",
    "available_backends",
    "w2_bruteforce",
    "w2_exact",
]
