"""Dense float64 tensors, the reverse-mode tape, and named parameter storage.

Tensors are plain C-contiguous ``numpy.float64`` arrays.  Differentiable
operations (see :mod:`foveate.nn.ops`) wrap arrays in :class:`Var` nodes and
append backward closures to a :class:`Tape`; calling :func:`backward` walks
the tape in reverse and accumulates exact gradients.
"""

from __future__ import annotations

import numpy as np


class TensorError(ValueError):
    """Shape/validity violation in a tensor operation."""


class NonFiniteError(TensorError):
    """An operation produced NaN or Inf."""


def as_tensor(data, shape=None) -> np.ndarray:
    """Coerce ``data`` to a C-contiguous float64 array and validate it.

    Raises :class:`TensorError` if the element count does not match ``shape``
    and :class:`NonFiniteError` if any value is NaN/Inf.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        if int(np.prod(shape)) != arr.size:
            raise TensorError(
                f"shape {tuple(shape)} holds {int(np.prod(shape))} elements, "
                f"got {arr.size}"
            )
        arr = arr.reshape(shape)
    check_finite(arr, "as_tensor")
    return arr


def check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {where}")


class Var:
    """A value in the computation graph with a lazily allocated gradient."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value: np.ndarray, name: str | None = None):
        self.value = value
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def __repr__(self):  # pragma: no cover - debug aid
        return f"Var(name={self.name!r}, shape={self.value.shape})"


class Tape:
    """Ordered record of backward closures for one forward pass."""

    def __init__(self):
        self._ops: list = []
        self._consumed = False

    def record(self, fn) -> None:
        self._ops.append(fn)

    def __len__(self):
        return len(self._ops)


def backward(tape: Tape, root: Var) -> None:
    """Run reverse-mode accumulation from scalar ``root`` through ``tape``.

    A tape can be consumed once; a second call raises.
    """
    if tape._consumed:
        raise TensorError("tape already consumed by a previous backward()")
    if root.value.size != 1:
        raise TensorError(f"backward root must be scalar, got shape {root.shape}")
    tape._consumed = True
    root.grad = np.ones_like(root.value)
    for fn in reversed(tape._ops):
        fn()


class ParameterSet:
    """Named map of parameter Vars with parallel gradient slots.

    Entries created through :meth:`add` are trainable (updated by
    :func:`sgd_step`); entries added with ``trainable=False`` (e.g. batch-norm
    running statistics) are persisted and checkpointed but never stepped.
    """

    def __init__(self):
        self._vars: dict[str, Var] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, value, trainable: bool = True) -> Var:
        if name in self._vars:
            raise TensorError(f"duplicate parameter name {name!r}")
        v = Var(as_tensor(value), name=name)
        self._vars[name] = v
        self._trainable[name] = trainable
        return v

    def __contains__(self, name: str) -> bool:
        return name in self._vars

    def __getitem__(self, name: str) -> Var:
        return self._vars[name]

    def names(self) -> list[str]:
        return list(self._vars)

    def items(self):
        return self._vars.items()

    def trainable_items(self):
        return [(n, v) for n, v in self._vars.items() if self._trainable[n]]

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def zero_grad(self, prefix: str = "") -> None:
        for n, v in self._vars.items():
            if n.startswith(prefix):
                v.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: v.value.copy() for n, v in self._vars.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for n, arr in state.items():
            if n in self._vars:
                v = self._vars[n]
                if v.value.shape != arr.shape:
                    raise TensorError(
                        f"shape mismatch loading {n!r}: "
                        f"{v.value.shape} vs {arr.shape}"
                    )
                v.value[...] = arr
            else:
                # Grown lazily; loaded tensors default to trainable.
                self.add(n, arr)


def sgd_step(params: ParameterSet, lr: float, prefix: str = "") -> None:
    """Plain gradient descent: p <- p - lr * grad; gradients are zeroed.

    Only trainable entries matching ``prefix`` are stepped; every such entry
    must have a populated gradient.
    """
    stepped = False
    for name, v in params.trainable_items():
        if not name.startswith(prefix):
            continue
        if v.grad is None:
            raise TensorError(f"sgd_step: parameter {name!r} has no gradient")
        v.value -= lr * v.grad
        check_finite(v.value, f"sgd_step({name})")
        v.grad = None
        stepped = True
    if not stepped:
        raise TensorError(f"sgd_step: no trainable parameters match prefix {prefix!r}")
