"""Minimal reverse-mode automatic differentiation on dense float64 arrays.

The operator set is deliberately small and fixed: exactly what vectorized
message passing needs. Per-edge tensors are 2-d arrays with one row per
directed arc; per-node reductions are segment reductions over contiguous row
blocks (sum, mean, min, max, population std), with gathers providing the
edge-side view of node tensors. Affine maps, sigmoid/softplus, log, exp and
concatenation cover the network bodies, and the two training losses reduce to
scalars.

Every operation appends a node to an implicit tape (the reference graph);
:func:`backward` walks it once in reverse topological order accumulating
vector-Jacobian products. Subgradient conventions are pinned so training is
reproducible bit for bit: min/max route their gradient to the first row of
the segment attaining the extremum, and the population std has derivative 0
at zero variance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "Node",
    "constant",
    "parameter",
    "backward",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "matmul",
    "sigmoid",
    "softplus",
    "log",
    "exp",
    "concat",
    "gather",
    "Segments",
    "ScatterPlan",
    "segment_sum",
    "segment_mean",
    "segment_min",
    "segment_max",
    "segment_std",
    "segment_pna",
    "reduce_sum",
    "reduce_mean",
    "least_squares_loss",
    "logistic_loss",
    "AdamState",
    "adam_init",
    "adam_step",
    "DenseLayer",
    "MLP",
    "init_mlp",
]


class Node:
    """One tape entry: a value, its accumulated adjoint, and the backward rule."""

    __slots__ = ("value", "grad", "parents", "vjp", "requires_grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = value
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        if not requires_grad:
            for p in parents:
                if p.requires_grad:
                    requires_grad = True
                    break
        self.requires_grad = requires_grad

    # small amount of operator sugar; everything routes through the module ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def shape(self):
        return self.value.shape


def constant(x) -> Node:
    return Node(np.asarray(x, dtype=np.float64))


def parameter(x) -> Node:
    return Node(np.asarray(x, dtype=np.float64), requires_grad=True)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def backward(root: Node) -> None:
    """Accumulate gradients of the scalar ``root`` into ``.grad`` fields."""
    if root.value.size != 1:
        raise ValueError("backward expects a scalar root")
    # iterative depth-first topological order
    order: list[Node] = []
    visiting: list[tuple[Node, bool]] = [(root, False)]
    seen: set[int] = set()
    while visiting:
        node, expanded = visiting.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        visiting.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                visiting.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        # vjps marked fresh return newly allocated, mutually unaliased
        # arrays, so the first accumulation can adopt them without a copy
        fresh = getattr(node.vjp, "fresh", False)
        for parent, g in zip(node.parents, node.vjp(node.grad)):
            if not parent.requires_grad or g is None:
                continue
            if parent.grad is None:
                parent.grad = g if fresh else np.array(g, dtype=np.float64, copy=True)
            else:
                parent.grad += g


def _fresh(vjp):
    """Tag a vjp whose outputs are always newly allocated and unaliased."""
    vjp.fresh = True
    return vjp


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(k for k, s in enumerate(shape) if s == 1 and grad.shape[k] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ----------------------------------------------------------------------
# elementwise and linear algebra
# ----------------------------------------------------------------------


def add(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    out = a.value + b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Node(out, (a, b), vjp)


def sub(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    out = a.value - b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), -_unbroadcast(g, b.value.shape)

    return Node(out, (a, b), vjp)


def mul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    out = a.value * b.value

    def vjp(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return Node(out, (a, b), _fresh(vjp))


def neg(a) -> Node:
    a = _as_node(a)
    return Node(-a.value, (a,), _fresh(lambda g: (-g,)))


def scale(a, c: float) -> Node:
    """Multiply by a python scalar (no broadcasting machinery involved)."""
    a = _as_node(a)
    c = float(c)
    return Node(a.value * c, (a,), _fresh(lambda g: (g * c,)))


def matmul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    out = a.value @ b.value

    def vjp(g):
        return (
            g @ b.value.T if a.requires_grad else None,
            a.value.T @ g if b.requires_grad else None,
        )

    return Node(out, (a, b), _fresh(vjp))


def sigmoid(a) -> Node:
    a = _as_node(a)
    s = expit(a.value)

    def vjp(g):
        return (g * s * (1.0 - s),)

    return Node(s, (a,), _fresh(vjp))


def softplus(a) -> Node:
    """log(1 + exp(x)), computed stably; derivative is sigmoid(x)."""
    a = _as_node(a)
    x = a.value
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def vjp(g):
        return (g * expit(x),)

    return Node(out, (a,), _fresh(vjp))


def log(a) -> Node:
    a = _as_node(a)
    out = np.log(a.value)

    def vjp(g):
        return (g / a.value,)

    return Node(out, (a,), _fresh(vjp))


def exp(a) -> Node:
    a = _as_node(a)
    out = np.exp(a.value)

    def vjp(g):
        return (g * out,)

    return Node(out, (a,), _fresh(vjp))


def concat(nodes, axis: int = 1) -> Node:
    nodes = [_as_node(x) for x in nodes]
    out = np.concatenate([x.value for x in nodes], axis=axis)
    sizes = [x.value.shape[axis] for x in nodes]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Node(out, tuple(nodes), vjp)


# ----------------------------------------------------------------------
# gathers and segment reductions
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ScatterPlan:
    """Adjoint layout for a row gather.

    The backward of ``y = x[rows]`` scatter-adds ``dy`` into ``dx``. With the
    plan, rows of ``dy`` are permuted into groups by target (``order``; None
    when already grouped), each group is summed with one ``reduceat``
    (``starts``), and group sums land in output rows ``targets`` of an array
    with ``num_targets`` rows. Avoids ``np.add.at``, which is slow.
    """

    order: np.ndarray | None
    starts: np.ndarray
    targets: np.ndarray
    num_targets: int


def gather(x, rows: np.ndarray, scatter: ScatterPlan | None = None) -> Node:
    """Row gather ``x[rows]`` with scatter-add backward."""
    x = _as_node(x)
    out = x.value[rows]
    n_rows = x.value.shape[0]

    def vjp(g):
        if scatter is not None:
            gg = g if scatter.order is None else g[scatter.order]
            dx = np.zeros((scatter.num_targets,) + g.shape[1:])
            dx[scatter.targets] = np.add.reduceat(gg, scatter.starts, axis=0)
            return (dx,)
        dx = np.zeros((n_rows,) + g.shape[1:])
        np.add.at(dx, rows, g)
        return (dx,)

    return Node(out, (x,), _fresh(vjp))


@dataclass(frozen=True)
class Segments:
    """Contiguous row segments for per-node multiset reductions.

    Input rows are grouped so segment ``k`` occupies rows
    ``[ptr[k], ptr[k+1])``; ``ids`` maps each input row to its segment.
    ``starts``/``nonempty`` index the non-empty segments for ``reduceat``.
    Empty segments reduce to zeros by convention.
    """

    n: int
    counts: np.ndarray
    ids: np.ndarray
    starts: np.ndarray
    nonempty: np.ndarray

    @staticmethod
    def from_lengths(counts: np.ndarray) -> "Segments":
        counts = np.asarray(counts, dtype=np.int64)
        n = counts.size
        ids = np.repeat(np.arange(n, dtype=np.int64), counts)
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        nonempty = np.flatnonzero(counts > 0)
        return Segments(
            n=n, counts=counts, ids=ids, starts=ptr[:-1][nonempty], nonempty=nonempty
        )


def _segment_reduceat(ufunc, values: np.ndarray, seg: Segments) -> np.ndarray:
    out = np.zeros((seg.n,) + values.shape[1:])
    if seg.starts.size:
        out[seg.nonempty] = ufunc.reduceat(values, seg.starts, axis=0)
    return out


def segment_sum(x, seg: Segments) -> Node:
    x = _as_node(x)
    out = _segment_reduceat(np.add, x.value, seg)

    def vjp(g):
        return (g[seg.ids],)

    return Node(out, (x,), _fresh(vjp))


def segment_mean(x, seg: Segments) -> Node:
    """Per-segment mean; empty segments give 0."""
    x = _as_node(x)
    out = _segment_reduceat(np.add, x.value, seg)
    denom = np.maximum(seg.counts, 1).astype(np.float64).reshape((-1,) + (1,) * (x.value.ndim - 1))
    out /= denom

    def vjp(g):
        return ((g / denom)[seg.ids],)

    return Node(out, (x,), _fresh(vjp))


def _segment_extremum(x, seg: Segments, ufunc, cmp) -> Node:
    x = _as_node(x)
    xv = x.value
    out = _segment_reduceat(ufunc, xv, seg)

    def vjp(g):
        # route to the first row of each segment attaining the extremum
        dx = np.zeros_like(xv)
        if seg.starts.size:
            hit = cmp(xv, out[seg.ids])
            row_idx = np.arange(xv.shape[0], dtype=np.int64).reshape(
                (-1,) + (1,) * (xv.ndim - 1)
            )
            masked = np.where(hit, row_idx, xv.shape[0])
            first = np.minimum.reduceat(masked, seg.starts, axis=0)
            cols = np.broadcast_to(
                np.arange(int(np.prod(xv.shape[1:], dtype=np.int64))).reshape(
                    (1,) + xv.shape[1:]
                ),
                first.shape,
            )
            flat = dx.reshape(xv.shape[0], -1)
            flat[first.ravel(), cols.ravel()] += g[seg.nonempty].ravel()
        return (dx,)

    return Node(out, (x,), _fresh(vjp))


def segment_min(x, seg: Segments) -> Node:
    """Per-segment minimum; empty segments give 0; ties route to first row."""
    return _segment_extremum(x, seg, np.minimum, lambda xv, m: xv == m)


def segment_max(x, seg: Segments) -> Node:
    """Per-segment maximum; empty segments give 0; ties route to first row."""
    return _segment_extremum(x, seg, np.maximum, lambda xv, m: xv == m)


def segment_std(x, seg: Segments) -> Node:
    """Per-segment population standard deviation.

    Computed as sqrt(max(E[x^2] - (E[x])^2, 0)). Empty segments give 0, and
    the derivative is defined as 0 wherever the variance is 0.
    """
    x = _as_node(x)
    xv = x.value
    shape = (-1,) + (1,) * (xv.ndim - 1)
    denom = np.maximum(seg.counts, 1).astype(np.float64).reshape(shape)
    s1 = _segment_reduceat(np.add, xv, seg) / denom
    s2 = _segment_reduceat(np.add, xv * xv, seg) / denom
    var = np.maximum(s2 - s1 * s1, 0.0)
    out = np.sqrt(var)

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(out > 0.0, g / (out * denom), 0.0)
        return (coef[seg.ids] * (xv - s1[seg.ids]),)

    return Node(out, (x,), _fresh(vjp))


def _extremum_scatter(dx, xv, ext, g_block, seg):
    """Add the min/max subgradient into ``dx`` (first attaining row wins)."""
    hit = xv == ext[seg.ids]
    row_idx = np.arange(xv.shape[0], dtype=np.int32).reshape(
        (-1,) + (1,) * (xv.ndim - 1)
    )
    masked = np.where(hit, row_idx, np.int32(xv.shape[0]))
    first = np.minimum.reduceat(masked, seg.starts, axis=0)
    cols = np.broadcast_to(
        np.arange(int(np.prod(xv.shape[1:], dtype=np.int64))).reshape(
            (1,) + xv.shape[1:]
        ),
        first.shape,
    )
    dx.reshape(xv.shape[0], -1)[first.ravel(), cols.ravel()] += g_block[
        seg.nonempty
    ].ravel()


def segment_pna(x, seg: Segments, amp: np.ndarray | None = None,
                att: np.ndarray | None = None) -> Node:
    """All five multiset aggregators in one node, optionally degree-scaled.

    Output columns are (mean, std, sum, min, max) blocks of ``x``'s width,
    equal to concatenating the individual segment ops; with ``amp``/``att``
    (constant per-segment column vectors) the block triples to
    (base, base*amp, base*att). Fusing saves the repeated sum reductions and
    the concat/split traffic of the composite form while keeping the same
    values and subgradient conventions (ties route to the first attaining
    row, zero variance has derivative 0).
    """
    x = _as_node(x)
    xv = x.value
    w = xv.shape[1]
    denom = np.maximum(seg.counts, 1).astype(np.float64)[:, None]
    sums = _segment_reduceat(np.add, xv, seg)
    s1 = sums / denom
    s2 = _segment_reduceat(np.add, xv * xv, seg) / denom
    std = np.sqrt(np.maximum(s2 - s1 * s1, 0.0))
    mins = _segment_reduceat(np.minimum, xv, seg)
    maxs = _segment_reduceat(np.maximum, xv, seg)
    base = np.concatenate([s1, std, sums, mins, maxs], axis=1)
    if amp is None:
        out = base
    else:
        out = np.concatenate([base, base * amp, base * att], axis=1)

    def vjp(g):
        if amp is None:
            gb = g
        else:
            gb = g[:, : 5 * w].copy()
            gb += g[:, 5 * w : 10 * w] * amp
            gb += g[:, 10 * w :] * att
        dx = np.zeros_like(xv)
        if seg.starts.size:
            dx += (gb[:, :w] / denom)[seg.ids]
            with np.errstate(divide="ignore", invalid="ignore"):
                coef = np.where(std > 0.0, gb[:, w : 2 * w] / (std * denom), 0.0)
            dx += coef[seg.ids] * (xv - s1[seg.ids])
            dx += gb[:, 2 * w : 3 * w][seg.ids]
            _extremum_scatter(dx, xv, mins, gb[:, 3 * w : 4 * w], seg)
            _extremum_scatter(dx, xv, maxs, gb[:, 4 * w :], seg)
        return (dx,)

    return Node(out, (x,), _fresh(vjp))


# ----------------------------------------------------------------------
# scalar reductions and losses
# ----------------------------------------------------------------------


def reduce_sum(x) -> Node:
    x = _as_node(x)
    out = np.asarray(x.value.sum())

    def vjp(g):
        return (np.broadcast_to(g, x.value.shape).copy(),)

    return Node(out, (x,), _fresh(vjp))


def reduce_mean(x) -> Node:
    x = _as_node(x)
    size = x.value.size
    out = np.asarray(x.value.mean())

    def vjp(g):
        return (np.broadcast_to(g / size, x.value.shape).copy(),)

    return Node(out, (x,), _fresh(vjp))


def least_squares_loss(pred, target) -> Node:
    """0.5 * sum of squared errors."""
    diff = sub(pred, target)
    return scale(reduce_sum(mul(diff, diff)), 0.5)


def logistic_loss(logit, labels) -> Node:
    """Sum over units of -y * f + log(1 + exp(f)) for log odds f."""
    labels = _as_node(labels)
    return reduce_sum(sub(softplus(logit), mul(logit, labels)))


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected Adam state over a fixed list of parameter arrays."""

    learning_rate: float
    beta1: float
    beta2: float
    eps: float
    step: int
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(
    params,
    learning_rate: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        step=0,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(state: AdamState, params, grads) -> None:
    """One in-place Adam update of ``params`` given matching ``grads``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ----------------------------------------------------------------------
# dense layers
# ----------------------------------------------------------------------


@dataclass
class DenseLayer:
    weight: Node  # (fan_in, fan_out)
    bias: Node  # (fan_out,)
    activation: str  # "sigmoid" or "identity"

    def __call__(self, x: Node) -> Node:
        h = add(matmul(x, self.weight), self.bias)
        if self.activation == "sigmoid":
            return sigmoid(h)
        if self.activation == "identity":
            return h
        raise ValueError(f"unknown activation {self.activation!r}")


class MLP:
    """A stack of dense layers sharing the tape."""

    def __init__(self, layers):
        self.layers = list(layers)

    def __call__(self, x: Node) -> Node:
        for layer in self.layers:
            x = layer(x)
        return x

    def parameters(self) -> list[Node]:
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out


def init_mlp(
    sizes,
    rng: np.random.Generator,
    activation: str = "sigmoid",
    final_activation: str | None = None,
) -> MLP:
    """Build an MLP with weights and biases uniform on [-a, a], a = fan_in^-1/2."""
    layers = []
    last = len(sizes) - 2
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        a = 1.0 / np.sqrt(fan_in)
        w = parameter(rng.uniform(-a, a, size=(fan_in, fan_out)))
        b = parameter(rng.uniform(-a, a, size=(fan_out,)))
        act = activation
        if k == last and final_activation is not None:
            act = final_activation
        layers.append(DenseLayer(w, b, act))
    return MLP(layers)
