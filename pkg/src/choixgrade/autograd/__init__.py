"""Tensors, reverse-mode differentiation and the numeric kernels behind them."""
from . import ops
from .kernels import BACKEND
from .ops import (add, batch_norm, conv2d, exp, flatten, global_avg_pool, log, matmul,
                  maxpool2d, mean, mul, record_kinks, relu, reshape, scale, sub)
from .ops import sum as sum_
from .tensor import Tape, Tensor, backward, no_record

__all__ = ["BACKEND", "Tape", "Tensor", "add", "backward", "batch_norm", "conv2d", "exp",
           "flatten", "global_avg_pool", "log", "matmul", "maxpool2d", "mean", "mul",
           "no_record", "ops", "record_kinks", "relu", "reshape", "scale", "sub", "sum_"]
