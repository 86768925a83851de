"""Minimal tape-based reverse-mode automatic differentiation over dense
numpy tensors: just the operations the policy network and its episodic
objective need. All data is float64; convolutions are valid (no padding),
stride 1, cross-correlation orientation.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import NumericError


class Tensor:
    """A value node: float64 ndarray plus a gradient slot of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def _acc(t: Tensor, g) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    if np.shape(g) != t.grad.shape:
        # mixing () and (1,) scalars is fine; anything else is a bug upstream
        g = np.sum(g) if t.grad.shape == () else np.reshape(g, t.grad.shape)
    t.grad += g


class Tape:
    """Ordered record of primitive operations for one forward pass.

    Supports exactly one backward traversal; reuse raises.
    """

    def __init__(self):
        self._records: list = []
        self._consumed = False

    def record(self, backward_fn) -> None:
        self._records.append(backward_fn)

    def __len__(self) -> int:
        return len(self._records)


def backward(tape: Tape, out: Tensor) -> None:
    """Seed d(out)/d(out) = 1 and propagate through the tape in reverse,
    accumulating into every reached tensor's grad slot."""
    if out.data.size != 1:
        raise ValueError(f"backward requires a scalar output, got shape {out.data.shape}")
    if tape._consumed:
        raise ValueError("backward already ran for this tape")
    if not tape._records:
        raise ValueError("backward before forward: tape has no recorded operations")
    tape._consumed = True
    out.grad = np.ones_like(out.data)
    for fn in reversed(tape._records):
        fn()


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def conv1d(tape: Tape, x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid 1-D cross-correlation: x (c_in, L), kernels (c_out, c_in, k)
    -> (c_out, L - k + 1)."""
    length, k = x.data.shape[1], kernels.data.shape[2]
    if k > length:
        raise ValueError(f"kernel length {k} exceeds input length {length}")
    out = Tensor(_kernels.conv1d_fwd(x.data, kernels.data, bias.data))

    def back():
        gx, gk, gb = _kernels.conv1d_bwd(x.data, kernels.data, out.grad)
        _acc(x, gx)
        _acc(kernels, gk)
        _acc(bias, gb)

    tape.record(back)
    return out


def conv2d(tape: Tape, x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid 2-D cross-correlation: x (c_in, H, W), kernels
    (c_out, c_in, kh, kw) -> (c_out, H - kh + 1, W - kw + 1)."""
    h, w = x.data.shape[1], x.data.shape[2]
    kh, kw = kernels.data.shape[2], kernels.data.shape[3]
    if kh > h or kw > w:
        raise ValueError(f"kernel ({kh}, {kw}) exceeds input ({h}, {w})")
    out = Tensor(_kernels.conv2d_fwd(x.data, kernels.data, bias.data))

    def back():
        gx, gk, gb = _kernels.conv2d_bwd(x.data, kernels.data, out.grad)
        _acc(x, gx)
        _acc(kernels, gk)
        _acc(bias, gb)

    tape.record(back)
    return out


def dense(tape: Tape, x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map: x (n,) @ weights (n, o) + bias (o,)."""
    out = Tensor(x.data @ weights.data + bias.data)

    def back():
        _acc(x, weights.data @ out.grad)
        _acc(weights, np.outer(x.data, out.grad))
        _acc(bias, out.grad)

    tape.record(back)
    return out


def relu(tape: Tape, x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))

    def back():
        _acc(x, out.grad * (x.data > 0.0))

    tape.record(back)
    return out


def sigmoid(tape: Tape, x: Tensor) -> Tensor:
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor(y)

    def back():
        _acc(x, out.grad * out.data * (1.0 - out.data))

    tape.record(back)
    return out


def softmax(tape: Tape, x: Tensor) -> Tensor:
    """Stable softmax of a vector; output is strictly positive and sums to 1."""
    e = np.exp(x.data - np.max(x.data))
    y = e / e.sum()
    out = Tensor(y)

    def back():
        g = out.grad
        _acc(x, out.data * (g - float(g @ out.data)))

    tape.record(back)
    return out


def flatten(tape: Tape, x: Tensor) -> Tensor:
    out = Tensor(x.data.reshape(-1).copy())

    def back():
        _acc(x, out.grad.reshape(x.data.shape))

    tape.record(back)
    return out


def concat(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    na = a.data.size
    out = Tensor(np.concatenate([a.data.reshape(-1), b.data.reshape(-1)]))

    def back():
        _acc(a, out.grad[:na].reshape(a.data.shape))
        _acc(b, out.grad[na:].reshape(b.data.shape))

    tape.record(back)
    return out


def add(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def back():
        _acc(a, out.grad)
        _acc(b, out.grad)

    tape.record(back)
    return out


def sub(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def back():
        _acc(a, out.grad)
        _acc(b, -out.grad)

    tape.record(back)
    return out


def mul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def back():
        _acc(a, out.grad * b.data)
        _acc(b, out.grad * a.data)

    tape.record(back)
    return out


def add_const(tape: Tape, x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data + c)

    def back():
        _acc(x, out.grad)

    tape.record(back)
    return out


def scale(tape: Tape, x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c)

    def back():
        _acc(x, out.grad * c)

    tape.record(back)
    return out


def dot_const(tape: Tape, x: Tensor, c: np.ndarray) -> Tensor:
    """Inner product with a constant vector; result is a scalar tensor."""
    c = np.asarray(c, dtype=np.float64)
    out = Tensor(float(x.data @ c))

    def back():
        _acc(x, out.grad * c)

    tape.record(back)
    return out


def sumsq(tape: Tape, x: Tensor) -> Tensor:
    out = Tensor(float((x.data * x.data).sum()))

    def back():
        _acc(x, 2.0 * out.grad * x.data)

    tape.record(back)
    return out


# ---------------------------------------------------------------------------
# named-tensor checkpoint container
# ---------------------------------------------------------------------------

_MAGIC = "portalloc-tensors v1"


def save_tensors(path: str, tensors: dict[str, Tensor], header: str = "") -> None:
    """Write named tensors to a deterministic text container.

    Layout: magic line; one JSON header line (caller-defined metadata);
    per tensor a ``tensor <name> <ndim> <dims...>`` line followed by one
    line of space-separated repr floats; closing ``end`` line.
    """
    from .market_data import atomic_write_text

    lines = [_MAGIC, header if header else "{}"]
    for name in sorted(tensors):
        data = tensors[name].data
        dims = " ".join(str(d) for d in data.shape)
        lines.append(f"tensor {name} {data.ndim} {dims}".rstrip())
        lines.append(" ".join(repr(float(v)) for v in data.reshape(-1)))
    lines.append("end")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_tensors(path: str) -> tuple[dict[str, Tensor], str]:
    """Read a checkpoint container; returns (tensors, header line)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise NumericError(f"not a tensor container (bad magic): {path}")
    header = lines[1]
    tensors: dict[str, Tensor] = {}
    i = 2
    while i < len(lines) and lines[i] != "end":
        parts = lines[i].split()
        if parts[0] != "tensor" or len(parts) < 3:
            raise NumericError(f"corrupt tensor container at line {i + 1}: {path}")
        name, ndim = parts[1], int(parts[2])
        shape = tuple(int(d) for d in parts[3:3 + ndim])
        values = np.array(lines[i + 1].split(), dtype=float)
        expected = int(np.prod(shape)) if shape else 1
        if values.size != expected:
            raise NumericError(f"tensor {name} has {values.size} values, shape {shape}: {path}")
        tensors[name] = Tensor(values.reshape(shape))
        i += 2
    if i >= len(lines):
        raise NumericError(f"truncated tensor container (no end line): {path}")
    return tensors, header
