"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Every differentiable operation on a
tensor that requires a gradient records its parents and a vector-Jacobian
rule; :func:`backward` walks that record in reverse topological order.

Scalar precision defaults to float32. Use ``with precision("f64"):`` when
a computation must be compared against finite differences.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

_DTYPES = {"f32": np.float32, "f64": np.float64}
_default_dtype = np.float32


def default_dtype() -> type:
    return _default_dtype


def set_precision(name: str) -> None:
    global _default_dtype
    if name not in _DTYPES:
        raise ValueError(f"precision must be one of {sorted(_DTYPES)}, got {name!r}")
    _default_dtype = _DTYPES[name]


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the default scalar type (``"f32"`` or ``"f64"``)."""
    global _default_dtype
    saved = _default_dtype
    set_precision(name)
    try:
        yield
    finally:
        _default_dtype = saved


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_consumed", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        self.data = np.ascontiguousarray(arr, dtype=dtype or _default_dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._consumed = False

    # -- introspection -------------------------------------------------
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

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by a Python scalar")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _record(data: np.ndarray, parents: Sequence[Tensor], vjp) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite value produced by {what}")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def _binary_operands(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape} (only scalar operands broadcast)")
    return a, b


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.shape:
        return g
    return np.sum(g).reshape(t.shape).astype(t.dtype)


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return _record(a.data + b.data, (a, b), lambda g: (_reduce_to(g, a), _reduce_to(g, b)))


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return _record(a.data - b.data, (a, b), lambda g: (_reduce_to(g, a), _reduce_to(-g, b)))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        s = float(b)
        return _record(a.data * a.dtype.type(s), (a,), lambda g: (g * g.dtype.type(s),))
    a, b = _binary_operands(a, b)
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_reduce_to(g * b.data, a), _reduce_to(g * a.data, b)),
    )


def scale(a: Tensor, s: float) -> Tensor:
    return mul(a, float(s))


def sin(a: Tensor) -> Tensor:
    return _record(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1 - y * y),))


def soft_bound(a: Tensor, bound: float) -> Tensor:
    """``bound * tanh(a / bound)``: close to ``a`` near zero, inside ``(-bound, bound)``."""
    b = a.dtype.type(bound)
    out = np.tanh(a.data / b) * b
    return _record(out, (a,), lambda g: (g * (1 - np.square(out / b)),))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    s = a.dtype.type(slope)
    x = a.data
    out = np.maximum(x, x * s) if 0 <= slope <= 1 else np.where(x > 0, x, x * s)
    return _record(out, (a,), lambda g: (np.where(x > 0, g, g * s),))


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, 0.0)


def clamp(a: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip to ``[lo, hi]``; the gradient is passed only where the input is inside."""
    lo_ = -np.inf if lo is None else lo
    hi_ = np.inf if hi is None else hi
    inside = (a.data >= lo_) & (a.data <= hi_)
    return _record(np.clip(a.data, lo_, hi_), (a,), lambda g: (g * inside,))


def absolute(a: Tensor) -> Tensor:
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return _record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a: Tensor) -> Tensor:
    return _record(a.data * a.data, (a,), lambda g: (2 * g * a.data,))


def cube(a: Tensor) -> Tensor:
    return _record(a.data**3, (a,), lambda g: (3 * g * a.data * a.data,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,))


def straight_through(a: Tensor, value: np.ndarray) -> Tensor:
    """Output ``value`` in the forward pass while routing gradients to ``a``."""
    if value.shape != a.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {value.shape}")
    return _record(np.asarray(value, dtype=a.dtype), (a,), lambda g: (g,))


def round_nograd(a: Tensor) -> Tensor:
    """Round half to even; a constant with respect to the graph."""
    return Tensor(np.round(a.data), dtype=a.dtype)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "sin": sin,
    "tanh": tanh,
    "leaky_relu": leaky_relu,
    "clamp": clamp,
    "abs": absolute,
    "square": square,
}


def forward_elementwise(op_kind: str, a, b=None, **kwargs) -> Tensor:
    """Dispatch an elementwise primitive by name."""
    try:
        fn = _ELEMENTWISE[op_kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_kind!r}") from None
    if b is None:
        return fn(a, **kwargs)
    return fn(a, b, **kwargs)


# ---------------------------------------------------------------------------
# shape manipulation and reductions
# ---------------------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _record(np.sum(a.data, keepdims=False).reshape(()), (a,), lambda g: (np.full(shape, g, dtype=a.dtype),))


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    shape = a.shape
    return _record(
        np.mean(a.data).reshape(()).astype(a.dtype),
        (a,),
        lambda g: (np.full(shape, g / n, dtype=a.dtype),),
    )


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _record(np.ascontiguousarray(a.data.transpose(axes)), (a,), lambda g: (g.transpose(inv),))


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return _record(np.ascontiguousarray(a.data[index]), (a,), vjp)


def take(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather along one axis; repeated indices accumulate in the backward pass."""
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return _record(np.take(a.data, indices, axis=axis), (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _record(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Join two ``N x C x H x W`` tensors along the channel axis."""
    if a.ndim != 4 or b.ndim != 4:
        raise ValueError("concat_channels expects 4-d tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"batch/spatial extents differ: {a.shape} vs {b.shape}")
    return concat((a, b), axis=1)


def stack_channels(planes: Sequence[Tensor]) -> Tensor:
    """Stack ``N x H x W`` planes into ``N x C x H x W``."""
    return concat([reshape(p, (p.shape[0], 1) + p.shape[1:]) for p in planes], axis=1)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the trailing two axes (numpy semantics)."""

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if ga.shape != a.shape:
            ga = ga.reshape((-1,) + a.shape).sum(axis=0)
        if gb.shape != b.shape:
            gb = gb.reshape((-1,) + b.shape).sum(axis=0)
        return ga, gb

    return _record(a.data @ b.data, (a, b), vjp)


def avg_pool2(a: Tensor) -> Tensor:
    """2x2 average pooling over the last two axes."""
    *lead, h, w = a.shape
    if h % 2 or w % 2:
        raise ValueError(f"average pooling needs even extents, got {h}x{w}")
    y = a.data.reshape(*lead, h // 2, 2, w // 2, 2).mean(axis=(-3, -1))

    def vjp(g):
        up = np.repeat(np.repeat(g, 2, axis=-2), 2, axis=-1)
        return (up * g.dtype.type(0.25),)

    return _record(y.astype(a.dtype), (a,), vjp)


def upsample2(a: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling over the last two axes."""
    *lead, h, w = a.shape
    y = np.repeat(np.repeat(a.data, 2, axis=-2), 2, axis=-1)

    def vjp(g):
        return (g.reshape(*lead, h, 2, w, 2).sum(axis=(-3, -1)),)

    return _record(y, (a,), vjp)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def _out_extent(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def _pad2(x: np.ndarray, ph: int, pw: int, extra_h: int = 0, extra_w: int = 0) -> np.ndarray:
    """Zero-pad the two trailing axes (cheaper than np.pad for this case)."""
    if not (ph or pw or extra_h or extra_w):
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * ph + extra_h, w + 2 * pw + extra_w), dtype=x.dtype)
    out[:, :, ph : ph + h, pw : pw + w] = x
    return out


def _windows(xp: np.ndarray, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    """Strided ``N x C x Ho x Wo x k x k`` view of the padded input (no copy)."""
    xp = np.ascontiguousarray(xp)
    sn, sc, sh, sw = xp.strides
    return as_strided(xp, (xp.shape[0], xp.shape[1], ho, wo, k, k), (sn, sc, sh * s, sw * s, sh, sw), writeable=False)


def _conv_fwd(x: np.ndarray, w: np.ndarray, s: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    o, c, k = w.shape[0], w.shape[1], w.shape[-1]
    n = x.shape[0]
    ho = _out_extent(x.shape[2], k, s, p)
    wo = _out_extent(x.shape[3], k, s, p)
    win = _windows(_pad2(x, p, p), k, s, ho, wo)  # N C Ho Wo k k
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    out = (cols @ w.reshape(o, c * k * k).T).reshape(n, ho, wo, o)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), win


def _col2im(g: np.ndarray, w: np.ndarray, s: int, p: int, in_shape: tuple[int, ...]) -> np.ndarray:
    """Adjoint of the convolution with respect to its input.

    ``g`` is ``N x O x Ho x Wo`` and ``w`` is ``O x C x k x k``; the result has
    ``in_shape`` (unpadded).
    """
    n, _, ho, wo = g.shape
    c, k = w.shape[1], w.shape[-1]
    h, wd = in_shape[2], in_shape[3]
    # channel-major layout lets the matrix product write the columns in the
    # order the scatter below reads them
    o = w.shape[0]
    cols = (w.reshape(o, c * k * k).T @ g.transpose(1, 0, 2, 3).reshape(o, n * ho * wo)).reshape(c, k, k, n, ho, wo)
    hp, wp = h + 2 * p, wd + 2 * p
    # windows may not reach the far padded edge when (hp - k) % s != 0
    hp = max(hp, (ho - 1) * s + k)
    wp = max(wp, (wo - 1) * s + k)
    out = np.zeros((c, n, hp, wp), dtype=g.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += cols[:, i, j]
    return out.transpose(1, 0, 2, 3)[:, :, p : p + h, p : p + wd]


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``N x C x H x W`` input with ``O x C x k x k`` weights."""
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv2d expects 4-d input and weight")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, weight expects {w.shape[1]}")
    k = w.shape[-1]
    ho = _out_extent(x.shape[2], k, stride, padding)
    wo = _out_extent(x.shape[3], k, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output extent {ho}x{wo} < 1 for input {x.shape[2:]} and kernel {k}")
    out, win = _conv_fwd(x.data, w.data, stride, padding)
    if b is not None:
        out += b.data.reshape(1, -1, 1, 1)
    in_shape = x.shape

    def vjp(g):
        gx = _col2im(g, w.data, stride, padding, in_shape) if x.requires_grad else None
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return _record(out, parents, vjp)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution; ``w`` is ``C_in x C_out x k x k``.

    Output extent is ``(H - 1) * stride - 2 * padding + k``. The forward map is
    exactly the input-adjoint of :func:`conv2d` with the same weight.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv_transpose2d expects 4-d input and weight")
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"input has {x.shape[1]} channels, weight expects {w.shape[0]}")
    k = w.shape[-1]
    h = (x.shape[2] - 1) * stride - 2 * padding + k
    wd = (x.shape[3] - 1) * stride - 2 * padding + k
    if h < 1 or wd < 1:
        raise ValueError(f"conv_transpose2d output extent {h}x{wd} < 1")
    out_shape = (x.shape[0], w.shape[1], h, wd)
    out = _col2im(x.data, w.data, stride, padding, out_shape)
    if b is not None:
        out = out + b.data.reshape(1, -1, 1, 1)

    def vjp(g):
        hi, wi = x.shape[2], x.shape[3]
        # pad further when the forward output dropped a trailing partial stride
        extra_h = max(0, (hi - 1) * stride + k - (g.shape[2] + 2 * padding))
        extra_w = max(0, (wi - 1) * stride + k - (g.shape[3] + 2 * padding))
        gp = _pad2(g, padding, padding, extra_h, extra_w)
        win = _windows(gp, k, stride, hi, wi)  # N Cout Hi Wi k k
        gx = None
        if x.requires_grad:
            gx = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        gw = np.tensordot(x.data, win, axes=([0, 2, 3], [0, 2, 3])) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return _record(np.ascontiguousarray(out), parents, vjp)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

SMOOTH_LINF_TEMPERATURE = 50.0


def logsumexp_scaled(a: Tensor, t: float) -> Tensor:
    """``(1/t) * log(sum(exp(t * a)))`` computed stably, as a scalar."""
    z = a.data * a.dtype.type(t)
    m = z.max()
    e = np.exp(z - m)
    s = e.sum()
    val = (m + np.log(s)) / t
    soft = e / s
    return _record(np.asarray(val, dtype=a.dtype).reshape(()), (a,), lambda g: (g * soft,))


LOSS_KINDS = ("l1", "l2", "l2_sum", "linf")


def reduce_losses(kind: str, a: Tensor, b) -> Tensor:
    """Scalar distance between ``a`` and ``b``.

    ``l1`` is the mean absolute difference, ``l2`` the mean squared difference,
    ``l2_sum`` the plain sum of squares and ``linf`` a log-sum-exp relaxation
    of the largest absolute difference.
    """
    if isinstance(b, Tensor) and a.shape != b.shape:
        raise ValueError(f"loss operands differ in shape: {a.shape} vs {b.shape}")
    d = sub(a, b)
    if kind == "l1":
        return mean_all(absolute(d))
    if kind == "l2":
        return mean_all(square(d))
    if kind == "l2_sum":
        return sum_all(square(d))
    if kind == "linf":
        return logsumexp_scaled(absolute(d), SMOOTH_LINF_TEMPERATURE)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def mse(a: Tensor, b) -> Tensor:
    return reduce_losses("l2", a, b)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def tape(root: Tensor) -> list[Tensor]:
    """Recorded operations reachable from ``root``, inputs before outputs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def backward(root: Tensor) -> dict[int, np.ndarray]:
    """Accumulate d(root)/d(leaf) for every leaf that requires a gradient.

    Gradients are stored on each leaf's ``.grad`` (summed into any existing
    value) and also returned keyed by ``id(leaf)``. The recorded graph is
    released afterwards, so a second call on the same root raises.
    """
    if root._consumed:
        raise RuntimeError("backward already ran on this graph; re-run the forward pass")
    if not root.requires_grad:
        raise RuntimeError("root does not require grad (detached from the tape)")
    if root.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")

    _check_finite(root.data, "loss")
    order = tape(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape, dtype=root.dtype)}
    leaves: dict[int, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            node.grad = g if node.grad is None else node.grad + g
            leaves[id(node)] = node.grad
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in order:
        if node._vjp is not None:
            node._parents = ()
            node._vjp = None
            node._consumed = True
    root._consumed = True
    return leaves


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_default_dtype), requires_grad=requires_grad)


def constant_like(a: Tensor, value: float) -> Tensor:
    return Tensor(np.full(a.shape, value, dtype=a.dtype), dtype=a.dtype)


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        fp = f(x)
        x.flat[i] = orig - h
        fm = f(x)
        x.flat[i] = orig
        g.flat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


__all__ = [
    "Tensor",
    "absolute",
    "add",
    "as_tensor",
    "avg_pool2",
    "backward",
    "clamp",
    "concat",
    "concat_channels",
    "conv2d",
    "conv_transpose2d",
    "cube",
    "default_dtype",
    "forward_elementwise",
    "getitem",
    "leaky_relu",
    "matmul",
    "mean_all",
    "mse",
    "mul",
    "numerical_gradient",
    "precision",
    "reduce_losses",
    "relative_error",
    "relu",
    "reshape",
    "round_nograd",
    "set_precision",
    "sin",
    "square",
    "stack_channels",
    "straight_through",
    "sub",
    "sum_all",
    "take",
    "tanh",
    "tape",
    "transpose",
    "upsample2",
    "zeros",
]
