"""Dense float64 tensors with hand-derived reverse-mode gradients.

Every op returns a new :class:`TensorF`. When a :class:`Tape` is active the op
also records a backward closure; ``Tape.backward`` replays them newest-first.
Parameters live in a :class:`ParamSet`, a single flat buffer exposed through
named tensor views so optimizers can work on one vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class TensorF:
    """A (rows, cols) float64 value plus a same-shape gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value, grad=None):
        value = np.asarray(value, dtype=DTYPE)
        if value.ndim == 1:
            value = value.reshape(-1, 1)
        elif value.ndim == 0:
            value = value.reshape(1, 1)
        if value.ndim != 2:
            raise ShapeError(f"TensorF must be 2-D, got shape {value.shape}")
        self.value = value
        if grad is None:
            grad = np.zeros_like(value)
        elif grad.shape != value.shape:
            raise ShapeError(f"grad shape {grad.shape} != value shape {value.shape}")
        self.grad = grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"TensorF(shape={self.shape})"


def vector(values: Iterable[float]) -> TensorF:
    return TensorF(np.asarray(list(values), dtype=DTYPE).reshape(-1, 1))


def zeros(rows: int, cols: int = 1) -> TensorF:
    return TensorF(np.zeros((rows, cols), dtype=DTYPE))


# ---------------------------------------------------------------------------
# tape


class Tape:
    """Records backward closures of ops executed inside ``with Tape():``."""

    _active: list["Tape"] = []

    def __init__(self):
        self._entries: list[Callable[[], None]] = []

    def __enter__(self) -> "Tape":
        Tape._active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._active.pop()

    @classmethod
    def current(cls) -> "Tape | None":
        return cls._active[-1] if cls._active else None

    def record(self, fn: Callable[[], None]) -> None:
        self._entries.append(fn)

    def backward(self, out: TensorF, seed: float | np.ndarray = 1.0) -> None:
        """Seed ``out.grad`` and propagate through every recorded op."""
        out.grad += seed
        for fn in reversed(self._entries):
            fn()


def _record(fn: Callable[[], None]) -> None:
    tape = Tape.current()
    if tape is not None:
        tape.record(fn)


def _same_shape(a: TensorF, b: TensorF, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# ops


def matvec(W: TensorF, x: TensorF) -> TensorF:
    if x.shape[1] != 1 or W.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: cannot multiply {W.shape} by {x.shape}")
    out = TensorF(W.value @ x.value)

    def backward():
        W.grad += out.grad @ x.value.T
        x.grad += W.value.T @ out.grad

    _record(backward)
    return out


def add(a: TensorF, b: TensorF) -> TensorF:
    _same_shape(a, b, "add")
    out = TensorF(a.value + b.value)

    def backward():
        a.grad += out.grad
        b.grad += out.grad

    _record(backward)
    return out


def hadamard(a: TensorF, b: TensorF) -> TensorF:
    _same_shape(a, b, "hadamard")
    out = TensorF(a.value * b.value)

    def backward():
        a.grad += out.grad * b.value
        b.grad += out.grad * a.value

    _record(backward)
    return out


def scale(a: TensorF, k: float) -> TensorF:
    out = TensorF(a.value * k)

    def backward():
        a.grad += out.grad * k

    _record(backward)
    return out


def sigmoid(a: TensorF) -> TensorF:
    out = TensorF(stable_sigmoid(a.value))

    def backward():
        s = out.value
        a.grad += out.grad * s * (1.0 - s)

    _record(backward)
    return out


def tanh(a: TensorF) -> TensorF:
    out = TensorF(np.tanh(a.value))

    def backward():
        a.grad += out.grad * (1.0 - out.value**2)

    _record(backward)
    return out


def relu(a: TensorF) -> TensorF:
    out = TensorF(np.maximum(a.value, 0.0))

    def backward():
        a.grad += out.grad * (a.value > 0.0)

    _record(backward)
    return out


def sum_rows(items: Sequence[TensorF], shape: tuple[int, int] | None = None) -> TensorF:
    """Elementwise sum of same-shape tensors, accumulated in list order."""
    if not items:
        if shape is None:
            raise ShapeError("sum_rows: empty list needs an explicit shape")
        return zeros(*shape)
    acc = np.zeros_like(items[0].value)
    for t in items:
        _same_shape(items[0], t, "sum_rows")
        acc = acc + t.value
    out = TensorF(acc)

    def backward():
        for t in items:
            t.grad += out.grad

    _record(backward)
    return out


def mean_rows(items: Sequence[TensorF]) -> TensorF:
    if not items:
        raise ShapeError("mean_rows: empty list")
    return scale(sum_rows(items), 1.0 / len(items))


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = np.exp(z - z.max())
    return shifted / shifted.sum()


def xent(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy on a flat logit array; returns (loss, probs)."""
    n = logits.shape[0]
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} classes")
    m = logits.max()
    shifted = logits - m
    lse = math.log(np.exp(shifted).sum())
    probs = np.exp(shifted - lse)
    return float(lse - shifted[label]), probs


def softmax_xent(logits: TensorF, label: int) -> tuple[TensorF, TensorF]:
    """Returns (loss as a 1x1 tensor, probs). Backward feeds probs - onehot."""
    if logits.shape[1] != 1:
        raise ShapeError(f"softmax_xent expects a column vector, got {logits.shape}")
    loss_value, probs = xent(logits.value[:, 0], label)
    loss = TensorF(np.array([[loss_value]]))
    probs_t = TensorF(probs.reshape(-1, 1))

    def backward():
        g = probs.copy()
        g[label] -= 1.0
        logits.grad += loss.grad[0, 0] * g.reshape(-1, 1)

    _record(backward)
    return loss, probs_t


# ---------------------------------------------------------------------------
# parameters


class ParamSet:
    """Named parameter tensors that are views into one flat buffer.

    Names are laid out in insertion order, so ``flat`` and ``flat_grad`` have a
    fixed documented layout. Views are 2-D (vectors as (n, 1)).
    """

    def __init__(self, shapes: Sequence[tuple[str, tuple[int, int]]]):
        self.shapes: dict[str, tuple[int, int]] = {}
        total = 0
        for name, shape in shapes:
            if name in self.shapes:
                raise ValueError(f"duplicate parameter {name!r}")
            self.shapes[name] = tuple(shape)
            total += shape[0] * shape[1]
        self.flat = np.zeros(total, dtype=DTYPE)
        self.flat_grad = np.zeros(total, dtype=DTYPE)
        self.offsets: dict[str, tuple[int, int]] = {}
        self.tensors: dict[str, TensorF] = {}
        pos = 0
        for name, (r, c) in self.shapes.items():
            n = r * c
            self.offsets[name] = (pos, pos + n)
            self.tensors[name] = TensorF(
                self.flat[pos : pos + n].reshape(r, c),
                self.flat_grad[pos : pos + n].reshape(r, c),
            )
            pos += n

    def __getitem__(self, name: str) -> TensorF:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def names(self) -> list[str]:
        return list(self.shapes)

    @property
    def size(self) -> int:
        return self.flat.size

    def block(self, first: str, last: str) -> tuple[np.ndarray, np.ndarray]:
        """Contiguous (value, grad) span from ``first`` through ``last``."""
        lo = self.offsets[first][0]
        hi = self.offsets[last][1]
        return self.flat[lo:hi], self.flat_grad[lo:hi]

    def zero_grad(self) -> None:
        self.flat_grad[...] = 0.0

    def copy(self) -> "ParamSet":
        other = ParamSet(list(self.shapes.items()))
        other.flat[...] = self.flat
        return other


# ---------------------------------------------------------------------------
# rng


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# finite differences


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    worst_entry: tuple[str, int] | None
    n_checked: int
    tol: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def finite_diff_check(
    f: Callable[[], float],
    params: ParamSet | dict[str, TensorF],
    epsilon: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``f`` evaluates the loss at the current parameter values and accumulates
    its analytic gradient into each tensor's ``grad``. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero gradients
    from producing meaningless ratios.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    tensors = dict(params.tensors) if isinstance(params, ParamSet) else dict(params)

    for t in tensors.values():
        t.zero_grad()
    base = f()
    if not math.isfinite(base):
        raise NumericError(f"loss is not finite: {base}")
    analytic = {name: t.grad.copy() for name, t in tensors.items()}

    worst = 0.0
    worst_abs = 0.0
    worst_at = None
    per_tensor = {}
    count = 0
    for name, t in tensors.items():
        flat = t.value.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        tensor_worst = 0.0
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            plus = f()
            flat[idx] = orig - epsilon
            minus = f()
            flat[idx] = orig
            if not (math.isfinite(plus) and math.isfinite(minus)):
                raise NumericError(f"non-finite loss perturbing {name}[{idx}]")
            numeric = (plus - minus) / (2.0 * epsilon)
            a = a_flat[idx]
            err = abs(a - numeric)
            rel = err / max(abs(a), abs(numeric), floor)
            tensor_worst = max(tensor_worst, rel)
            worst_abs = max(worst_abs, err)
            if rel > worst or worst_at is None:
                worst, worst_at = max(rel, worst), (name, idx)
            count += 1
        per_tensor[name] = tensor_worst
    for t in tensors.values():
        t.zero_grad()
    return GradCheckReport(worst, worst_abs, worst_at, count, tol, per_tensor)
