"""Differentiation engine, FFT and stochastic norm estimation."""

from .autodiff import NumericFailure, Var, check_finite, grad, value_of
from .forward import Dual, full_jacobian, jvp, linear, linear_map, relu, relu_mask, sqrt, stack, vsum
from .hutchinson import DirectionSampler, frobenius_sq, frobenius_sq_hutchinson

__all__ = [
    "NumericFailure", "Var", "check_finite", "grad", "value_of",
    "Dual", "full_jacobian", "jvp", "linear", "linear_map", "relu", "relu_mask", "sqrt", "stack", "vsum",
    "DirectionSampler", "frobenius_sq", "frobenius_sq_hutchinson",
]
