"""Differentially private optimization with filtered gradient streams."""

from fiberopt._backend import HAVE_COMPILED_KERNELS

__version__ = "0.1.0"

__all__ = ["HAVE_COMPILED_KERNELS", "__version__"]
