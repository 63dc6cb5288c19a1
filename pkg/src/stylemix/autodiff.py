"""Reverse-mode automatic differentiation over dense numpy-backed tensors.

The engine keeps an explicit tape: every differentiable operation appends a
node holding its inputs, its output, and a closure mapping the output
gradient to per-input gradients.  Because nodes are appended in execution
order the tape is topologically sorted by construction, and ``backward`` is
a single reverse sweep over it.

float32 is the working precision for training and inference.  Build tensors
as float64 when checking gradients against finite differences; central
differences are unreliable at single precision.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "TapeError",
    "active_tape",
    "no_grad",
    "grad_enabled",
    "record",
    "backward",
    "grad_check",
    "add",
    "sub",
    "mul",
    "matmul",
    "reshape",
    "transpose",
]

_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_Scalar = (int, float, np.integer, np.floating)


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class TapeError(RuntimeError):
    """backward was asked to traverse a tape that no longer records the loss."""


class Tensor:
    """Dense n-dimensional float array, optionally participating in gradients.

    ``data`` is always a C-contiguous float32 or float64 numpy array.
    ``grad`` is populated by :func:`backward` for leaves created with
    ``requires_grad=True``; it always matches ``data`` in shape and dtype.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=np.float32 if dtype is None else dtype)
        if arr.dtype not in _ALLOWED_DTYPES:
            raise TypeError(f"Tensor: dtype must be float32 or float64, got {arr.dtype}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: Tape | None = None
        if self.requires_grad:
            active_tape()._register_leaf(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(())[()])

    def detach(self) -> "Tensor":
        """A view of the same data with gradient participation turned off."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; scalars are treated as constants.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if not isinstance(other, _Scalar):
            raise TypeError("tensor division is supported for scalar divisors only")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> "Tensor":
        """Sum of all entries, as a scalar tensor."""
        out = np.asarray(self.data.sum(dtype=self.data.dtype))

        def bwd(g, x=self):
            return (np.full(x.data.shape, g, dtype=x.data.dtype),)

        return record("sum", (self,), out, bwd)

    def mean(self) -> "Tensor":
        """Mean of all entries, as a scalar tensor."""
        n = self.data.size
        out = np.asarray(self.data.mean(dtype=self.data.dtype))

        def bwd(g, x=self, n=n):
            return (np.full(x.data.shape, g / n, dtype=x.data.dtype),)

        return record("mean", (self,), out, bwd)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class _TapeNode:
    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed differentiable operations.

    Intended to live for one training step: enter it as a context manager,
    run the forward pass, call :func:`backward`, and let it drop (or call
    :meth:`clear`) once gradients are consumed.  A module-level default tape
    sits at the bottom of the stack for casual use.
    """

    def __init__(self):
        self._nodes: list[_TapeNode] = []
        self._produced: set[int] = set()
        self._leaves: dict[int, Tensor] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def clear(self) -> None:
        """Drop all recorded nodes and leaf registrations."""
        self._nodes.clear()
        self._produced.clear()
        self._leaves.clear()

    def _register_leaf(self, t: Tensor) -> None:
        if id(t) not in self._produced:
            self._leaves.setdefault(id(t), t)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise TapeError("tape context exited out of order")


_TAPE_STACK: list[Tape] = [Tape()]
_GRAD_ENABLED: list[bool] = [True]


def active_tape() -> Tape:
    """The tape that currently records differentiable operations."""
    return _TAPE_STACK[-1]


def grad_enabled() -> bool:
    return _GRAD_ENABLED[-1]


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference, numeric probes)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def record(op: str, inputs: Sequence[Tensor], out_data: np.ndarray,
           backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    """Wrap ``out_data`` in a tensor, recording the op when gradients flow.

    ``backward_fn`` receives the gradient at the output and returns one
    gradient array (or None) per input, in order.  Returned arrays must be
    freshly computed; they are accumulated without copying.
    """
    out_data = np.asarray(out_data)
    out = Tensor(out_data, dtype=out_data.dtype)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        tape = active_tape()
        for t in inputs:
            if t.requires_grad:
                tape._register_leaf(t)
        out.requires_grad = True
        out._tape = tape
        tape._nodes.append(_TapeNode(op, tuple(inputs), out, backward_fn))
        tape._produced.add(id(out))
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf of the loss's tape.

    Leaves the tape intact, so calling twice reproduces the same gradients
    bit for bit.  Leaves registered on the tape but unreachable from the
    loss receive an exact zero gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss._tape
    if tape is None or id(loss) not in tape._produced:
        raise TapeError("backward: loss is not recorded on an intact tape "
                        "(cleared tape, or computed with gradients disabled)")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape._nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for t, ig in zip(node.inputs, in_grads):
            if ig is None:
                continue
            if ig.shape != t.data.shape:  # pragma: no cover - op author guard
                raise ShapeError(f"{node.op}: backward produced gradient of shape "
                                 f"{ig.shape} for input of shape {t.data.shape}")
            cur = grads.get(id(t))
            grads[id(t)] = ig if cur is None else cur + ig
    for lid, leaf in tape._leaves.items():
        g = grads.get(lid)
        leaf.grad = g if g is not None else np.zeros_like(leaf.data)


# ---------------------------------------------------------------------------
# Primitive operations


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} do not match")


def _as_scalar(x) -> float:
    return float(x)


def add(a: Tensor, b):
    """Element-wise sum; the second operand may be a python scalar."""
    if isinstance(b, _Scalar):
        s = _as_scalar(b)
        out = a.data + a.data.dtype.type(s)

        def bwd(g):
            return (g,)

        return record("add", (a,), out, bwd)
    _check_same_shape("add", a, b)

    def bwd2(g):
        return (g, g)

    return record("add", (a, b), a.data + b.data, bwd2)


def sub(a: Tensor, b):
    """Element-wise difference; the second operand may be a python scalar."""
    if isinstance(b, _Scalar):
        return add(a, -_as_scalar(b))
    _check_same_shape("sub", a, b)

    def bwd(g):
        return (g, -g)

    return record("sub", (a, b), a.data - b.data, bwd)


def mul(a: Tensor, b):
    """Element-wise product, or scaling by a python scalar."""
    if isinstance(b, _Scalar):
        s = a.data.dtype.type(_as_scalar(b))
        out = a.data * s

        def bwd(g, s=s):
            return (g * s,)

        return record("scalar_mul", (a,), out, bwd)
    _check_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    needs = (a.requires_grad, b.requires_grad)

    def bwd2(g, ad=ad, bd=bd, needs=needs):
        return (g * bd if needs[0] else None, g * ad if needs[1] else None)

    return record("mul", (a, b), ad * bd, bwd2)


def matmul(a: Tensor, b: Tensor):
    """Matrix product of 2-D tensors, or stacked matrices with equal batch dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: operand shapes {a.shape} and {b.shape} do not conform")
    ad, bd = a.data, b.data
    needs = (a.requires_grad, b.requires_grad)

    def bwd(g, ad=ad, bd=bd, needs=needs):
        ga = g @ bd.swapaxes(-1, -2) if needs[0] else None
        gb = ad.swapaxes(-1, -2) @ g if needs[1] else None
        return (ga, gb)

    return record("matmul", (a, b), ad @ bd, bwd)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view shape {a.shape} as {shape}") from e

    def bwd(g, orig=a.data.shape):
        return (np.ascontiguousarray(g.reshape(orig)),)

    return record("reshape", (a,), np.ascontiguousarray(out), bwd)


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {axes} are not a permutation for shape {a.shape}")
    inv = tuple(np.argsort(axes))

    def bwd(g, inv=inv):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return record("transpose", (a,), np.ascontiguousarray(a.data.transpose(axes)), bwd)


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(fn: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` must map ``x`` to a scalar tensor deterministically.  ``x`` must
    be float64 with ``requires_grad=True``; the relative error is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`` maximised
    over entries.
    """
    if x.data.dtype != np.float64:
        raise TypeError("grad_check requires float64 tensors; float32 finite differences are unreliable")
    if not x.requires_grad:
        raise ValueError("grad_check: x must have requires_grad=True")
    with Tape():
        y = fn(x)
        if y.data.size != 1:
            raise ShapeError(f"grad_check: fn must return a scalar, got shape {y.shape}")
        backward(y)
        analytic = x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    nflat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = fn(x).item()
            flat[i] = orig - step
            fm = fn(x).item()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * step)

    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise FloatingPointError("grad_check: non-finite values encountered")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
