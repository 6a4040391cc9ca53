"""Dense float64 tensors with reverse-mode differentiation.

Small tape-based autodiff sufficient for the CNN/MLP/ResNet components used
by the world models. Design constraints that shape everything here:

* float64 only — the equivariance audits assert bit-exact equality and
  training scale is tiny, so there is no reason to give up precision;
* every op reduces in a fixed, input-independent order, so a given input
  array always produces the identical output array;
* matmul/conv lower to a single GEMM whose accumulation order does not
  depend on row position (verified by the equivariance test suite, which
  asserts bit-exact equality across permuted component batches).

Ops only support the shapes the models need; anything else raises
``ShapeError`` naming the offending shapes. No silent broadcasting beyond
the documented bias adds.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when an op receives operands of incompatible shapes."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block (used for search/evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 array plus the tape bookkeeping for reverse mode."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def backward(out: Tensor) -> None:
    """Reverse-accumulate gradients of a scalar output into every reachable leaf."""
    if out.data.shape != ():
        raise ShapeError(f"backward needs a scalar output, got shape {out.data.shape}")
    # Iterative topological order; graphs from long unrolls overflow recursion.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    out.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def grad(fn: Callable[[], Tensor], params: dict[str, Tensor]) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate a scalar-valued composite and return its value and d/d(param)."""
    for p in params.values():
        p.zero_grad()
    out = fn()
    backward(out)
    grads = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    return out.item(), grads


# ---------------------------------------------------------------------------
# elementwise and arithmetic


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ShapeError(f"add shapes differ: {x.data.shape} vs {y.data.shape}")

    def bwd(g):
        _accumulate(x, g)
        _accumulate(y, g)

    return _result(x.data + y.data, (x, y), bwd)


def sub(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ShapeError(f"sub shapes differ: {x.data.shape} vs {y.data.shape}")

    def bwd(g):
        _accumulate(x, g)
        _accumulate(y, -g)

    return _result(x.data - y.data, (x, y), bwd)


def mul(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ShapeError(f"mul shapes differ: {x.data.shape} vs {y.data.shape}")
    xd, yd = x.data, y.data

    def bwd(g):
        _accumulate(x, g * yd)
        _accumulate(y, g * xd)

    return _result(xd * yd, (x, y), bwd)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g):
        _accumulate(x, g * c)

    return _result(x.data * c, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0

    def bwd(g):
        _accumulate(x, g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), bwd)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise ValueError("log requires strictly positive input")
    xd = x.data

    def bwd(g):
        _accumulate(x, g / xd)

    return _result(np.log(xd), (x,), bwd)


def clip_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor) elementwise; gradient is zero on the clipped region."""
    mask = x.data > floor

    def bwd(g):
        _accumulate(x, g * mask)

    return _result(np.where(mask, x.data, floor), (x,), bwd)


def softmax(x: Tensor) -> Tensor:
    """Row softmax over the last axis; shift-stable, strictly positive rows."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        _accumulate(x, out * (g - inner))

    return _result(out, (x,), bwd)


# ---------------------------------------------------------------------------
# linear layers


def matmul(x: Tensor, w: Tensor) -> Tensor:
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {x.data.shape} vs {w.data.shape}")
    xd, wd = x.data, w.data

    def bwd(g):
        _accumulate(x, g @ wd.T)
        _accumulate(w, xd.T @ g)

    return _result(xd @ wd, (x, w), bwd)


def add_row_bias(x: Tensor, b: Tensor) -> Tensor:
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise ShapeError(f"bias {b.data.shape} does not fit rows of {x.data.shape}")

    def bwd(g):
        _accumulate(x, g)
        _accumulate(b, g.sum(axis=0))

    return _result(x.data + b.data[None, :], (x, b), bwd)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map x @ w + b for x of shape (N, fan_in), w (fan_in, fan_out)."""
    return add_row_bias(matmul(x, w), b)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded cross-correlation, x (N,Cin,H,W), w (Cout,Cin,kh,kw), b (Cout,).

    Kernel sides must be odd so "same" padding is symmetric. Lowers to one
    im2col GEMM; the reduction order is fixed by the column layout.
    """
    xd, wd, bd = x.data, w.data, b.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise ShapeError(f"conv2d wants 4-d input and kernel, got {xd.shape} and {wd.shape}")
    n, cin, h, wid = xd.shape
    cout, cin_w, kh, kw = wd.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d channel mismatch: input {xd.shape} vs kernel {wd.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel sides must be odd, got {kh}x{kw}")
    ph, pw = kh // 2, kw // 2

    xp = np.zeros((n, cin, h + kh - 1, wid + kw - 1), dtype=np.float64)
    xp[:, :, ph : ph + h, pw : pw + wid] = xd
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (n,cin,h,w,kh,kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * h * wid, cin * kh * kw
    )
    w2d = wd.reshape(cout, cin * kh * kw)
    out2d = cols @ w2d.T + bd[None, :]
    out = np.ascontiguousarray(out2d.reshape(n, h, wid, cout).transpose(0, 3, 1, 2))

    def bwd(g):
        g2d = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * h * wid, cout)
        _accumulate(b, g2d.sum(axis=0))
        _accumulate(w, (g2d.T @ cols).reshape(cout, cin, kh, kw))
        if x.requires_grad:
            gcols = (g2d @ w2d).reshape(n, h, wid, cin, kh, kw)
            gxp = np.zeros_like(xp)
            # Fold columns back; fixed (u, v) order keeps accumulation deterministic.
            for u in range(kh):
                for v in range(kw):
                    gxp[:, :, u : u + h, v : v + wid] += gcols[:, :, :, :, u, v].transpose(
                        0, 3, 1, 2
                    )
            _accumulate(x, gxp[:, :, ph : ph + h, pw : pw + wid])

    return _result(out, (x, w, b), bwd)


def residual_block(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """x + conv(relu(conv(x))); both convs preserve the channel count."""
    return add(x, conv2d(relu(conv2d(x, w1, b1)), w2, b2))


# ---------------------------------------------------------------------------
# gathers, reductions, layout


def gather_rows(w: Tensor, idx: np.ndarray) -> Tensor:
    """Embedding lookup: out[i] = w[idx[i]]; scatter-add on the way back."""
    idx = np.asarray(idx, dtype=np.int64)
    if w.data.ndim != 2 or idx.ndim != 1:
        raise ShapeError(f"gather_rows wants 2-d table and 1-d index, got {w.data.shape}, {idx.shape}")

    def bwd(g):
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            np.add.at(gw, idx, g)
            _accumulate(w, gw)

    return _result(w.data[idx].copy(), (w,), bwd)


def gather_cols(x: Tensor, perm: np.ndarray) -> Tensor:
    """Column relabelling: out[:, j] = x[:, perm[j]] for a permutation perm."""
    perm = np.asarray(perm, dtype=np.int64)
    if x.data.ndim != 2 or perm.shape != (x.data.shape[1],):
        raise ShapeError(f"gather_cols perm {perm.shape} does not fit {x.data.shape}")

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for j in range(perm.shape[0]):
                gx[:, perm[j]] += g[:, j]
            _accumulate(x, gx)

    return _result(x.data[:, perm].copy(), (x,), bwd)


def sorted_sum(parts: Sequence[Tensor]) -> Tensor:
    """Elementwise sum with operands sorted before adding.

    Sorting makes the float result a function of the operand *multiset*, so
    any permutation of the inputs yields the bit-identical output. This is
    what upgrades the invariant heads from ~1e-9 to exact. The true gradient
    of a sum is 1 per operand regardless of order.
    """
    if not parts:
        raise ShapeError("sorted_sum of no operands")
    shape = parts[0].data.shape
    for p in parts:
        if p.data.shape != shape:
            raise ShapeError(f"sorted_sum operand shapes differ: {shape} vs {p.data.shape}")
    stacked = np.sort(np.stack([p.data for p in parts], axis=0), axis=0)
    out = stacked[0]
    for i in range(1, stacked.shape[0]):
        out = out + stacked[i]

    def bwd(g):
        for p in parts:
            _accumulate(p, g)

    return _result(out, tuple(parts), bwd)


def add_channel_bias(x: Tensor, v: Tensor) -> Tensor:
    """Broadcast a per-sample channel vector (N,C) over the pixels of x (N,C,H,W)."""
    if x.data.ndim != 4 or v.data.shape != x.data.shape[:2]:
        raise ShapeError(f"channel bias {v.data.shape} does not fit {x.data.shape}")

    def bwd(g):
        _accumulate(x, g)
        _accumulate(v, g.sum(axis=(2, 3)))

    return _result(x.data + v.data[:, :, None, None], (x, v), bwd)


def mean_hw(x: Tensor) -> Tensor:
    """Spatial mean pool (N,C,H,W) -> (N,C)."""
    if x.data.ndim != 4:
        raise ShapeError(f"mean_hw wants (N,C,H,W), got {x.data.shape}")
    n, c, h, w = x.data.shape
    inv = 1.0 / (h * w)

    def bwd(g):
        _accumulate(x, np.broadcast_to(g[:, :, None, None] * inv, x.data.shape).copy())

    return _result(x.data.mean(axis=(2, 3)), (x,), bwd)


def sum_total(x: Tensor) -> Tensor:
    shape = x.data.shape

    def bwd(g):
        _accumulate(x, np.broadcast_to(g, shape).copy())

    return _result(np.asarray(x.data.sum()), (x,), bwd)


def mean_total(x: Tensor) -> Tensor:
    return scale(sum_total(x), 1.0 / x.data.size)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.data.shape

    def bwd(g):
        _accumulate(x, g.reshape(old))

    return _result(x.data.reshape(shape), (x,), bwd)


def concat_batch(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along axis 0; used to push shared-weight components as one batch."""
    sizes = [p.data.shape[0] for p in parts]
    trailing = parts[0].data.shape[1:]
    for p in parts:
        if p.data.shape[1:] != trailing:
            raise ShapeError(f"concat_batch trailing shapes differ: {trailing} vs {p.data.shape[1:]}")
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, i0, i1 in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[i0:i1])

    return _result(np.concatenate([p.data for p in parts], axis=0), tuple(parts), bwd)


def slice_batch(x: Tensor, i0: int, i1: int) -> Tensor:
    n = x.data.shape[0]
    if not (0 <= i0 < i1 <= n):
        raise ShapeError(f"slice_batch [{i0}:{i1}] outside batch of {n}")

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[i0:i1] = g
            _accumulate(x, gx)

    return _result(x.data[i0:i1].copy(), (x,), bwd)


def split_batch(x: Tensor, n_parts: int) -> list[Tensor]:
    n = x.data.shape[0]
    if n % n_parts != 0:
        raise ShapeError(f"cannot split batch of {n} into {n_parts} equal parts")
    step = n // n_parts
    return [slice_batch(x, i * step, (i + 1) * step) for i in range(n_parts)]


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate (N,C,H,W) tensors along the channel axis."""
    n_hw = (parts[0].data.shape[0],) + parts[0].data.shape[2:]
    for p in parts:
        if (p.data.shape[0],) + p.data.shape[2:] != n_hw:
            raise ShapeError("concat_channels: batch/spatial shapes differ")
    sizes = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, i0, i1 in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[:, i0:i1])

    return _result(np.concatenate([p.data for p in parts], axis=1), tuple(parts), bwd)


def slice_channels(x: Tensor, i0: int, i1: int) -> Tensor:
    c = x.data.shape[1]
    if not (0 <= i0 < i1 <= c):
        raise ShapeError(f"slice_channels [{i0}:{i1}] outside {c} channels")

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, i0:i1] = g
            _accumulate(x, gx)

    return _result(x.data[:, i0:i1].copy(), (x,), bwd)


def split_channels(x: Tensor, n_parts: int) -> list[Tensor]:
    c = x.data.shape[1]
    if c % n_parts != 0:
        raise ShapeError(f"cannot split {c} channels into {n_parts} equal parts")
    step = c // n_parts
    return [slice_channels(x, i * step, (i + 1) * step) for i in range(n_parts)]


def slice_cols(x: Tensor, i0: int, i1: int) -> Tensor:
    c = x.data.shape[1]
    if x.data.ndim != 2 or not (0 <= i0 < i1 <= c):
        raise ShapeError(f"slice_cols [{i0}:{i1}] invalid for {x.data.shape}")

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, i0:i1] = g
            _accumulate(x, gx)

    return _result(x.data[:, i0:i1].copy(), (x,), bwd)


def rot90(x: Tensor, k: int) -> Tensor:
    """Clockwise rotation of the trailing two axes by 90*k degrees."""
    k = k % 4

    def bwd(g):
        _accumulate(x, np.rot90(g, k=k, axes=(-2, -1)).copy())

    return _result(np.rot90(x.data, k=-k, axes=(-2, -1)).copy(), (x,), bwd)


# ---------------------------------------------------------------------------
# initialisation


def glorot_uniform(
    shape: tuple[int, ...], rng: np.random.Generator, fan_in: int, fan_out: int
) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)), drawn from a seeded generator."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(np.float64)
