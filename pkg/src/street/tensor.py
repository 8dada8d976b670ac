"""Dense NHWC tensors with a recording tape for reverse-mode differentiation.

Every op here takes and returns :class:`Tensor` objects. When a :class:`Tape`
is active (``with Tape() as tape:``) and at least one input requires a
gradient, the op appends a node holding its backward rule. :func:`backward`
replays those nodes in reverse order.

Tensors are float32 by default; float64 arrays are kept as float64 so the
finite-difference tests can run at double precision.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "grad")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype != np.float64:
            arr = arr.astype(np.float32, copy=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None
    op: str


_local = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable ops executed while the tape is active."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward, op: str) -> None:
        self.nodes.append(_Node(out, tuple(inputs), backward, op))
        self._produced.add(id(out))

    def __len__(self) -> int:
        return len(self.nodes)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, inputs: Sequence[Tensor], backward, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype)
    tape = _active_tape()
    if needs and tape is not None:
        tape.record(out, inputs, backward, op)
    return out


def _result_dtype(*tensors: Tensor):
    return np.result_type(*(t.data.dtype for t in tensors))


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to leaf tensors.

    With ``params`` given, exactly those tensors are returned (zeros for any
    the loss does not depend on); otherwise every ``requires_grad`` leaf seen
    on the tape. Each returned tensor also gets its ``.grad`` attribute set.
    """
    if loss.size != 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
    if id(loss) not in tape._produced:
        raise TapeError("loss was not produced on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        if node.backward is None:
            raise TapeError(f"op {node.op!r} has no backward rule")
        in_grads = node.backward(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if id(t) not in tape._produced:
                leaves[id(t)] = t
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi

    targets = list(params) if params is not None else list(leaves.values())
    out: dict[Tensor, np.ndarray] = {}
    for t in targets:
        g = grads.get(id(t))
        if g is None:
            g = np.zeros_like(t.data)
        t.grad = g
        out[t] = g
    return out


# ---------------------------------------------------------------------------
# elementwise and reductions

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(data, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(data, (a, b), bw, "mul")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def sum_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.dtype).reshape(())

    def bw(g):
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return _result(data, (x,), bw, "sum")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - y * y),)

    return _result(y, (x,), bw, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)

    def bw(g):
        return (g * y * (1.0 - y),)

    return _result(y, (x,), bw, "sigmoid")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow warnings in exp for large |z|
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    data = x.data.reshape(shape)

    def bw(g):
        return (g.reshape(x.shape),)

    return _result(data, (x,), bw, "reshape")


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the last (depth) dimension: ``x @ weight + bias``."""
    if x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: input {x.shape} vs weight {weight.shape}, bias {bias.shape}")
    data = x.data @ weight.data + bias.data
    flat = x.data.reshape(-1, x.shape[-1])

    def bw(g):
        g2 = g.reshape(-1, weight.shape[1])
        return (g @ weight.data.T, flat.T @ g2, g2.sum(axis=0))

    return _result(data, (x, weight, bias), bw, "dense")


# ---------------------------------------------------------------------------
# layer primitives

def _same_pads(k: int) -> tuple[int, int]:
    before = (k - 1) // 2
    return before, k - 1 - before


def _patches(x: np.ndarray, kh: int, kw: int, pads_h, pads_w) -> np.ndarray:
    xp = np.pad(x, ((0, 0), pads_h, pads_w, (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # win: B x H x W x C x kh x kw  ->  B x H x W x kh x kw x C
    return win.transpose(0, 1, 2, 4, 5, 3)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 SAME cross-correlation of a B×H×W×C input with a Kh×Kw×C×F kernel."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape}, {kernel.shape}")
    b, h, w, c = x.shape
    kh, kw, kc, f = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: kernel depth {kc} != input depth {c}")
    if bias.shape != (f,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({f},)")
    ph, pw = _same_pads(kh), _same_pads(kw)
    cols = _patches(x.data, kh, kw, ph, pw).reshape(b * h * w, kh * kw * c)
    kmat = kernel.data.reshape(kh * kw * c, f)
    data = (cols @ kmat).reshape(b, h, w, f) + bias.data

    def bw(g):
        g2 = g.reshape(-1, f)
        dk = (cols.T @ g2).reshape(kernel.shape)
        db = g2.sum(axis=0)
        # input gradient: correlate the gradient with the flipped, transposed kernel
        kflip = kernel.data[::-1, ::-1].transpose(0, 1, 3, 2)
        gcols = _patches(g, kh, kw, ph[::-1], pw[::-1]).reshape(b * h * w, kh * kw * f)
        dx = (gcols @ kflip.reshape(kh * kw * f, c)).reshape(x.shape)
        return dx, dk, db

    return _result(data, (x, kernel, bias), bw, "conv2d")


def maxpool(x: Tensor, window: tuple[int, int]) -> Tensor:
    """Non-overlapping max pooling; edge windows pool over what remains."""
    b, h, w, c = x.shape
    wh, ww = window
    if wh > h or ww > w or wh < 1 or ww < 1:
        raise ShapeError(f"maxpool window {window} does not fit input {x.shape}")
    ho, wo = -(-h // wh), -(-w // ww)
    xp = x.data
    if ho * wh != h or wo * ww != w:
        xp = np.pad(xp, ((0, 0), (0, ho * wh - h), (0, wo * ww - w), (0, 0)), constant_values=-np.inf)
    blocks = xp.reshape(b, ho, wh, wo, ww, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, ho, wo, c, wh * ww)
    arg = blocks.argmax(axis=-1)
    data = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = gb.reshape(b, ho, wo, c, wh, ww).transpose(0, 1, 4, 2, 5, 3).reshape(b, ho * wh, wo * ww, c)
        return (gx[:, :h, :w, :],)

    return _result(data, (x,), bw, "maxpool")


@dataclass(frozen=True)
class ReshapeSpec:
    """Split dimension ``axis`` into ``factors`` (outermost first) and send
    factor ``k`` to dimension ``dests[k]``.

    A factor moved onto another dimension becomes the outer (major) part of
    that dimension. A factor whose destination is ``axis`` itself stays put.
    """

    axis: int
    factors: tuple[int, ...]
    dests: tuple[int, ...]

    def output_shape(self, shape: Sequence[int]) -> tuple[int, ...]:
        return _plan_reshape(tuple(shape), self)[2]


def _plan_reshape(shape: tuple[int, ...], spec: ReshapeSpec):
    nd = len(shape)
    axis = spec.axis % nd
    if len(spec.factors) != len(spec.dests) or not spec.factors:
        raise ShapeError("reshape spec needs one destination per factor")
    if any(f < 1 for f in spec.factors) or math.prod(spec.factors) != shape[axis]:
        raise ShapeError(f"factors {spec.factors} do not divide extent {shape[axis]} of dim {axis}")
    dests = [d % nd for d in spec.dests]
    if len(set(dests)) != len(dests):
        raise ShapeError(f"destination collision in {spec.dests}")
    nf = len(spec.factors)
    # expanded layout: dims before axis, the factors, dims after axis
    expanded = shape[:axis] + tuple(spec.factors) + shape[axis + 1:]

    def exp_index(d: int) -> int:
        return d if d < axis else d + nf - 1

    order: list[int] = []
    out_shape: list[int] = []
    for d in range(nd):
        group = [axis + k for k, dst in enumerate(dests) if dst == d and dst != axis]
        if d == axis:
            group += [axis + k for k, dst in enumerate(dests) if dst == axis]
        else:
            group.append(exp_index(d))
        order.extend(group)
        out_shape.append(math.prod(expanded[i] for i in group))
    return expanded, tuple(order), tuple(out_shape)


def generic_reshape(x: Tensor, spec: ReshapeSpec) -> Tensor:
    expanded, order, out_shape = _plan_reshape(x.shape, spec)
    moved = x.data.reshape(expanded).transpose(order)
    data = moved.reshape(out_shape)
    inv = np.argsort(order)

    def bw(g):
        return (g.reshape(moved.shape).transpose(inv).reshape(x.shape),)

    return _result(np.ascontiguousarray(data), (x,), bw, "generic_reshape")


def concat(axis: int, parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero tensors")
    nd = parts[0].data.ndim
    ax = axis % nd
    for p in parts[1:]:
        if p.data.ndim != nd or any(p.shape[d] != parts[0].shape[d] for d in range(nd) if d != ax):
            raise ShapeError(f"concat: mismatched shapes {[q.shape for q in parts]} on axis {axis}")
    data = np.concatenate([p.data for p in parts], axis=ax)
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result(data, tuple(parts), bw, "concat")


def softmax_depth(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), bw, "softmax")


def dropout(x: Tensor, rate: float, mode: str = "train", seed: int = 0) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate); eval is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    keep = np.random.default_rng(seed).random(x.shape) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    data = x.data * scale

    def bw(g):
        return (g * scale,)

    return _result(data, (x,), bw, "dropout")


# ---------------------------------------------------------------------------
# gradient checking

def numeric_grad(f: Callable[[], float], arr: np.ndarray, index, eps: float = 1e-5) -> float:
    """Central difference of ``f`` with respect to ``arr[index]`` (mutated in place, then restored)."""
    old = arr[index]
    arr[index] = old + eps
    fp = f()
    arr[index] = old - eps
    fm = f()
    arr[index] = old
    return (fp - fm) / (2 * eps)


def relative_error(analytic, numeric, floor: float = 1e-7) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def gradcheck(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
              samples: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Worst relative error between tape gradients and central differences.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call. With ``samples`` set, only that many random coordinates per
    parameter are probed.
    """
    rng = rng or np.random.default_rng(0)
    with Tape() as tape:
        loss = loss_fn()
    grads = backward(tape, loss, params)

    def value() -> float:
        return float(loss_fn().data)

    worst = 0.0
    for p in params:
        n = p.data.size
        idx = range(n) if samples is None or samples >= n else rng.choice(n, samples, replace=False)
        flat_grad = grads[p].reshape(-1)
        for i in idx:
            pos = np.unravel_index(int(i), p.shape)
            num = numeric_grad(value, p.data, pos, eps)
            worst = max(worst, relative_error(flat_grad[int(i)], num))
    return worst


def gradcheck_blocks(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
                     samples: int = 8, rng: np.random.Generator | None = None, floor: float = 1e-7) -> float:
    """Worst per-block relative error ``|a - n| / max(|a|, |n|)`` over probed coordinates.

    Each parameter block is probed at ``samples`` random coordinates plus its
    ``samples`` largest-gradient coordinates, and the analytic and numeric
    vectors are compared as wholes. Deep graphs have many gradients near the
    finite-difference noise floor; comparing norms keeps those from dominating
    while a wrong backward rule still shows up as a large block error.
    """
    rng = rng or np.random.default_rng(0)
    with Tape() as tape:
        loss = loss_fn()
    grads = backward(tape, loss, params)

    def value() -> float:
        return float(loss_fn().data)

    worst = 0.0
    for p in params:
        flat_grad = grads[p].reshape(-1)
        n = flat_grad.size
        top = np.argsort(-np.abs(flat_grad))[:samples]
        rand = rng.choice(n, min(samples, n), replace=False)
        idx = sorted(set(int(i) for i in top) | set(int(i) for i in rand))
        a = np.array([flat_grad[i] for i in idx])
        num = np.array([numeric_grad(value, p.data, np.unravel_index(i, p.shape), eps) for i in idx])
        scale = max(np.linalg.norm(a), np.linalg.norm(num), floor)
        worst = max(worst, float(np.linalg.norm(a - num) / scale))
    return worst
