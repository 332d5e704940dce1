"""Minimal reverse-mode autodiff on float64 NumPy arrays, plus the layer
zoo and checkpoint format used by the fixation models."""

from .tensor import (
    NonFiniteError,
    ParameterSet,
    Tape,
    TensorError,
    Var,
    as_tensor,
    backward,
    check_finite,
    sgd_step,
)

__all__ = [
    "NonFiniteError",
    "ParameterSet",
    "Tape",
    "TensorError",
    "Var",
    "as_tensor",
    "backward",
    "check_finite",
    "sgd_step",
]
