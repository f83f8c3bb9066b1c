"""Handwritten multiple-choice answer recognition with an Unknown class.

A small numpy deep-learning stack (tape autodiff, residual network, SGD with a
cyclic cosine schedule) plus the dataset builder, training harness and the
grader built on top of it.
"""
from .autograd import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
