"""Graph neural networks for nuisance estimation, on the built-in autodiff.

Three architectures, all depth-L message passing so a unit's output depends
on exactly its L-hop neighborhood:

* ``pna``: per-edge messages phi_1(h_i, h_j) pass through five multiset
  aggregators (mean, std, sum, min, max), each repeated under three degree
  scalers (identity, log-amplified, log-attenuated), then a per-node update
  phi_0(h_i, aggregate). The scaler normalizer is the training graph's mean
  of log(degree + 1) and is frozen into the model.
* ``gcn``: h' = act(W @ neighbor mean), no bias terms.
* ``sum``: messages phi_1(h_j) of the sender only, summed over neighbors,
  then phi_0(h_i, sum).

Every phi is a single dense unit block with sigmoid activation, except the
final readout which is linear so the network can emit unbounded regression
values and log odds. The first layer's phi blocks have ``hidden_width``
units; deeper layers use single units, keeping later embeddings scalar.
Units without neighbors aggregate to zeros.

Training is full-batch Adam on either a least-squares or a logistic loss,
restricted to a fitting mask; parameters initialize uniform on
[-1/sqrt(fan_in), +1/sqrt(fan_in)] from an explicit stream, so a (data,
stream) pair reproduces the whole trajectory bit for bit.

Two training engines produce that trajectory. The taped loop rebuilds the
autodiff graph every epoch and works for every architecture; it is the
semantic reference. The pna architecture additionally has a straight-line
loop with hand-written adjoints and preallocated buffers, used by default
because tape construction dominates the runtime at the small widths the
experiments need. The two perform the same floating point operations in the
same order, and the test suite pins their trajectories against each other.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .graph import Graph

__all__ = [
    "GNNConfig",
    "GNNModel",
    "scaler_normalizer",
    "pna_aggregate",
    "gcn_layer",
    "forward_gnn",
    "train_gnn",
    "predict_probability",
    "save_model",
    "load_model",
]

_AGGREGATORS = ("mean", "std", "sum", "min", "max")
_FORMAT_TAG = "netdr-gnn-v1"


@dataclass(frozen=True)
class GNNConfig:
    """Architecture and training knobs.

    ``aggregators`` chooses between the plain five-aggregator block and the
    degree-scaled fifteen-aggregator block (pna only). Epoch count and the
    first-layer width are design knobs with the defaults used throughout the
    experiments.
    """

    depth: int = 2
    architecture: str = "pna"  # pna | gcn | sum
    hidden_width: int = 8
    aggregators: str = "scaled"  # scaled | plain
    loss: str = "least_squares"  # least_squares | logistic
    epochs: int = 200
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if self.architecture not in ("pna", "gcn", "sum"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.aggregators not in ("scaled", "plain"):
            raise ValueError(f"unknown aggregator set {self.aggregators!r}")
        if self.loss not in ("least_squares", "logistic"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be positive")


@dataclass
class GNNModel:
    """A trained (or freshly initialized) network.

    ``params`` is the flat parameter list in construction order;
    ``scale_norm`` is the degree-scaler normalizer frozen from the training
    graph; ``loss_history`` has the loss before each update plus the final
    loss, so ``loss_history[0]`` is the initial and ``loss_history[-1]`` the
    final value.
    """

    config: GNNConfig
    feature_dim: int
    params: list = field(repr=False)
    scale_norm: float = 0.0
    loss_history: np.ndarray = field(default=None, repr=False)


def scaler_normalizer(g: Graph) -> float:
    """Mean over units of log(degree + 1); 0 on an edgeless graph."""
    if g.n == 0:
        return 0.0
    return float(np.mean(np.log(g.degrees.astype(np.float64) + 1.0)))


# ----------------------------------------------------------------------
# reference (per-node) semantics
# ----------------------------------------------------------------------


def pna_aggregate(
    neighbor_values: np.ndarray,
    degree: int,
    scale_norm: float,
    aggregators: str = "scaled",
) -> np.ndarray:
    """Aggregate one unit's multiset of message vectors.

    ``neighbor_values`` has one row per neighbor. The base block stacks
    (mean, std, sum, min, max) coordinate-wise, std being the population
    standard deviation. With ``aggregators="scaled"`` the base block is
    repeated under the identity, the log-amplifier s = log(degree+1) /
    scale_norm and the attenuator 1/s. An empty multiset aggregates to the
    zero vector, and ``scale_norm = 0`` (edgeless training graph) disables
    the scalers.
    """
    v = np.asarray(neighbor_values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("neighbor_values must be 2-d (neighbors x width)")
    if degree != v.shape[0]:
        raise ValueError("degree must equal the multiset size")
    width = v.shape[1]
    blocks = 15 if aggregators == "scaled" else 5
    if degree == 0:
        return np.zeros(blocks * width)
    base = np.concatenate(
        [v.mean(axis=0), v.std(axis=0), v.sum(axis=0), v.min(axis=0), v.max(axis=0)]
    )
    if aggregators == "plain":
        return base
    s = np.log(degree + 1.0) / scale_norm if scale_norm > 0 else 1.0
    return np.concatenate([base, base * s, base / s])


def gcn_layer(
    H: np.ndarray, g: Graph, weight: np.ndarray, activation: str = "sigmoid"
) -> np.ndarray:
    """One graph-convolution step: act(neighbor_mean(H) @ weight).

    Reference semantics used by tests; the trained forward pass builds the
    identical computation on the autodiff tape. Isolated units see a zero
    neighbor mean. No bias term.
    """
    H = np.asarray(H, dtype=np.float64)
    totals = g.csr() @ H
    degs = g.degrees.astype(np.float64)[:, None]
    mean = np.divide(totals, degs, out=np.zeros_like(totals), where=degs > 0)
    z = mean @ weight
    if activation == "sigmoid":
        return expit(z)
    if activation == "identity":
        return z
    raise ValueError(f"unknown activation {activation!r}")


# ----------------------------------------------------------------------
# parameter layout
# ----------------------------------------------------------------------


def _layer_widths(config: GNNConfig, feature_dim: int):
    """Per-layer (input, message, output) widths."""
    widths = []
    w_prev = feature_dim
    for layer in range(1, config.depth + 1):
        first = layer == 1
        last = layer == config.depth
        msg = config.hidden_width if first else 1
        out = 1 if last else (config.hidden_width if first else 1)
        widths.append((w_prev, msg, out))
        w_prev = out
    return widths


def _init_params(config: GNNConfig, feature_dim: int, rng: np.random.Generator):
    def uniform(fan_in, shape):
        a = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-a, a, size=shape)

    params = []
    n_scalers = 3 if config.aggregators == "scaled" else 1
    for w_prev, msg, out in _layer_widths(config, feature_dim):
        if config.architecture == "gcn":
            params.append(uniform(w_prev, (w_prev, out)))
            continue
        msg_in = 2 * w_prev if config.architecture == "pna" else w_prev
        params.append(uniform(msg_in, (msg_in, msg)))
        params.append(uniform(msg_in, (msg,)))
        agg_width = msg * (5 * n_scalers if config.architecture == "pna" else 1)
        upd_in = w_prev + agg_width
        params.append(uniform(upd_in, (upd_in, out)))
        params.append(uniform(upd_in, (out,)))
    return params


# ----------------------------------------------------------------------
# taped forward pass
# ----------------------------------------------------------------------


def _scaler_vectors(g: Graph, scale_norm: float):
    degs = g.degrees.astype(np.float64)
    logs = np.log(degs + 1.0)
    if scale_norm > 0:
        amp = np.where(degs > 0, logs / scale_norm, 0.0)
        att = np.where(degs > 0, scale_norm / np.where(logs > 0, logs, 1.0), 0.0)
    else:
        amp = np.ones_like(degs)
        att = np.ones_like(degs)
    return amp[:, None], att[:, None]


def _forward(config: GNNConfig, param_nodes, g: Graph, X: np.ndarray, scale_norm: float,
             const_cache: dict | None = None):
    """Build the taped forward computation; returns the (n, 1) output node.

    ``const_cache`` lets repeated calls on the same (graph, X) reuse the
    layer-one message inputs, which are parameter-free; training passes a
    dict, one-shot evaluation leaves it None.
    """
    feat = X[:, None] if X.ndim == 1 else X
    h = ad.constant(feat)
    if config.architecture == "gcn":
        for layer in range(1, config.depth + 1):
            mean = _neighbor_mean_node(h, g)
            z = ad.matmul(mean, param_nodes[layer - 1])
            h = z if layer == config.depth else ad.sigmoid(z)
        return h

    plan = g.arc_plan()
    # arcs are already grouped by receiver, so the plan's arrays double as
    # the segment layout without rebuilding them every epoch
    seg = ad.Segments(
        n=g.n, counts=plan.counts, ids=plan.dst,
        starts=plan.starts, nonempty=plan.nonempty,
    )
    dst_scatter = ad.ScatterPlan(
        order=None, starts=plan.starts, targets=plan.nonempty, num_targets=g.n
    )
    src_scatter = ad.ScatterPlan(
        order=plan.by_src_order,
        starts=plan.src_starts,
        targets=plan.src_nonempty,
        num_targets=g.n,
    )
    amp = att = None
    if config.architecture == "pna" and config.aggregators == "scaled":
        amp, att = _scaler_vectors(g, scale_norm)
    k = 0
    for layer in range(1, config.depth + 1):
        w1, b1, w0, b0 = param_nodes[k:k + 4]
        k += 4
        last = layer == config.depth
        if layer == 1 and const_cache is not None and "msg_in" in const_cache:
            pre = const_cache["msg_in"]
        else:
            hs = ad.gather(h, plan.src, src_scatter)
            if config.architecture == "pna":
                hd = ad.gather(h, plan.dst, dst_scatter)
                pre = ad.concat([hd, hs])
            else:
                pre = hs
            if layer == 1 and const_cache is not None:
                const_cache["msg_in"] = pre
        if config.architecture == "pna":
            msg = ad.sigmoid(ad.add(ad.matmul(pre, w1), b1))
            agg = ad.segment_pna(msg, seg, amp, att)
        else:  # sum
            msg = ad.sigmoid(ad.add(ad.matmul(pre, w1), b1))
            agg = ad.segment_sum(msg, seg)
        z = ad.add(ad.matmul(ad.concat([h, agg]), w0), b0)
        h = z if last else ad.sigmoid(z)
    return h


def _neighbor_mean_node(h: ad.Node, g: Graph) -> ad.Node:
    plan = g.arc_plan()
    seg = ad.Segments.from_lengths(plan.counts)
    src_scatter = ad.ScatterPlan(
        order=plan.by_src_order,
        starts=plan.src_starts,
        targets=plan.src_nonempty,
        num_targets=g.n,
    )
    return ad.segment_mean(ad.gather(h, plan.src, src_scatter), seg)


# ----------------------------------------------------------------------
# public entry points
# ----------------------------------------------------------------------


def forward_gnn(model: GNNModel, g: Graph, X: np.ndarray) -> np.ndarray:
    """Evaluate the network; returns one value per unit.

    The degree-scaler normalizer is the one frozen at training time, so
    predictions at a unit depend on exactly its depth-hop neighborhood of
    (X, edges) even on a modified graph.
    """
    nodes = [ad.constant(p) for p in model.params]
    out = _forward(model.config, nodes, g, X, model.scale_norm)
    return out.value[:, 0]


def predict_probability(model: GNNModel, g: Graph, X: np.ndarray) -> np.ndarray:
    """Sigmoid of the network output, for propensity style predictions."""
    return expit(forward_gnn(model, g, X))


def train_gnn(
    g: Graph,
    X: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    config: GNNConfig,
    rng: np.random.Generator,
) -> GNNModel:
    """Fit the network to ``targets`` on the units selected by ``mask``.

    ``mask`` is boolean over units (or an index array). The loss is summed
    over the masked units only; predictions remain defined everywhere. Runs
    exactly ``config.epochs`` full-batch Adam steps and records the loss
    before every step plus the final loss.
    """
    feat = X[:, None] if np.asarray(X).ndim == 1 else np.asarray(X)
    mask = np.asarray(mask)
    rows = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if rows.size == 0:
        raise ValueError("training mask selects no units")
    y = np.asarray(targets, dtype=np.float64)[rows][:, None]
    scale_norm = scaler_normalizer(g)
    params = _init_params(config, feat.shape[1], rng)
    if config.architecture == "pna":
        history = _run_pna_compiled(config, params, g, feat, scale_norm, rows, y)
    else:
        history = _run_tape(config, params, g, feat, scale_norm, rows, y)
    return GNNModel(
        config=config,
        feature_dim=feat.shape[1],
        params=params,
        scale_norm=scale_norm,
        loss_history=history,
    )


def _run_tape(config, params, g, feat, scale_norm, rows, y) -> np.ndarray:
    """Reference training loop: rebuild the tape every epoch."""
    state = ad.adam_init(
        params,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    loss_fn = ad.least_squares_loss if config.loss == "least_squares" else ad.logistic_loss
    history = np.empty(config.epochs + 1)
    cache: dict = {}
    for epoch in range(config.epochs):
        nodes = [ad.parameter(p) for p in params]
        out = _forward(config, nodes, g, feat, scale_norm, cache)
        loss = loss_fn(ad.gather(out, rows), y)
        ad.backward(loss)
        history[epoch] = float(loss.value)
        grads = [n.grad if n.grad is not None else np.zeros_like(n.value) for n in nodes]
        ad.adam_step(state, params, grads)
    nodes = [ad.constant(p) for p in params]
    out = _forward(config, nodes, g, feat, scale_norm, cache)
    history[-1] = float(loss_fn(ad.gather(out, rows), y).value)
    return history


class _PNALayer:
    """Scratch buffers for one pna layer of the straight-line loop."""

    def __init__(self, n, e, w_prev, w, out, n_scalers, plan, last):
        agg = 5 * w * n_scalers
        self.w_prev, self.w, self.out, self.agg = w_prev, w, out, agg
        self.last = last
        self.pre = np.empty((e, 2 * w_prev))
        self.msg = np.empty((e, w))
        self.xx = np.empty((e, w))
        self.s2 = np.empty((n, w))
        self.cat = np.empty((n, w_prev + agg))
        self.red = np.empty((plan.nonempty.size, w))
        self.z = np.empty((n, out))
        self.h = None if last else np.empty((n, out))
        # aggregator blocks live directly in the update input
        base = self.cat[:, w_prev:w_prev + 5 * w]
        self.base = base
        self.s1 = base[:, :w]
        self.std = base[:, w:2 * w]
        self.sm = base[:, 2 * w:3 * w]
        self.mn = base[:, 3 * w:4 * w]
        self.mx = base[:, 4 * w:]
        self.amp_block = self.cat[:, w_prev + 5 * w:w_prev + 10 * w] if n_scalers == 3 else None
        self.att_block = self.cat[:, w_prev + 10 * w:] if n_scalers == 3 else None
        self.dz = np.empty((n, out))
        self.dcat = np.empty((n, w_prev + agg))
        self.gb = np.empty((n, 5 * w)) if n_scalers == 3 else None
        self.tmp5 = np.empty((n, 5 * w)) if n_scalers == 3 else None
        self.tmp_n = np.empty((n, w))
        self.bmask = np.empty((n, w), dtype=bool)
        self.tmp_e = np.empty((e, w))
        self.tmp_e2 = np.empty((e, w))
        self.hit = np.empty((e, w), dtype=bool)
        self.masked = np.empty((e, w), dtype=np.int32)
        self.first = np.empty((plan.nonempty.size, w), dtype=np.int32)
        self.extg = np.empty((plan.nonempty.size, w))
        self.cols = np.broadcast_to(
            np.arange(w, dtype=np.int64), (plan.nonempty.size, w)
        ).ravel()
        self.dmsg = np.empty((e, w))
        self.dpre = np.empty((e, 2 * w_prev))
        self.dh = np.empty((n, w_prev))
        self.gg = np.empty((e, w_prev))
        self.dst_red = np.empty((plan.nonempty.size, w_prev))
        self.src_red = np.empty((plan.src_nonempty.size, w_prev))


def _run_pna_compiled(config, params, g, feat, scale_norm, rows, y) -> np.ndarray:
    """Straight-line pna training loop.

    Performs exactly the floating point work of the taped loop: the same
    kernels in the tape's evaluation and accumulation order, with the
    adjoints written out by hand and every buffer, index vector and degree
    constant hoisted out of the epoch loop. Exists purely for speed; the
    equivalence tests hold it bit-for-bit against :func:`_run_tape`.
    """
    n = g.n
    plan = g.arc_plan()
    e = plan.src.size
    n_scalers = 3 if config.aggregators == "scaled" else 1
    amp = att = None
    if n_scalers == 3:
        amp, att = _scaler_vectors(g, scale_norm)
    denom = np.maximum(plan.counts, 1).astype(np.float64)[:, None]
    ids, starts, nonempty = plan.dst, plan.starts, plan.nonempty
    rid = np.arange(e, dtype=np.int32)[:, None]
    eid = np.int32(e)
    logistic = config.loss == "logistic"

    # flat parameter block: Adam becomes a handful of whole-vector kernels
    shapes = [p.shape for p in params]
    offsets = np.concatenate(([0], np.cumsum([p.size for p in params])))
    pflat = np.concatenate([p.ravel() for p in params])
    gflat = np.empty_like(pflat)
    pviews, gviews = [], []
    for k, shape in enumerate(shapes):
        pviews.append(pflat[offsets[k]:offsets[k + 1]].reshape(shape))
        gviews.append(gflat[offsets[k]:offsets[k + 1]].reshape(shape))
        params[k] = pviews[k]
    m_adam = np.zeros_like(pflat)
    v_adam = np.zeros_like(pflat)
    t1 = np.empty_like(pflat)
    t2 = np.empty_like(pflat)
    lr, b1, b2, a_eps = (
        config.learning_rate, config.beta1, config.beta2, config.adam_eps,
    )

    widths = _layer_widths(config, feat.shape[1])
    layers = [
        _PNALayer(n, e, w_prev, w, out, n_scalers, plan, k == len(widths) - 1)
        for k, (w_prev, w, out) in enumerate(widths)
    ]
    # layer-one message inputs and own-feature block are parameter free
    lead = layers[0]
    if e:
        np.take(feat, plan.dst, axis=0, out=lead.pre[:, :feat.shape[1]], mode="clip")
        np.take(feat, plan.src, axis=0, out=lead.pre[:, feat.shape[1]:], mode="clip")
    lead.cat[:, :feat.shape[1]] = feat

    r = rows.size
    predr = np.empty((r, 1))
    lbuf1 = np.empty((r, 1))
    lbuf2 = np.empty((r, 1))
    lbuf3 = np.empty((r, 1))

    def forward() -> float:
        h_prev = None
        for k, ly in enumerate(layers):
            w_prev, w = ly.w_prev, ly.w
            w1, bias1, w0, bias0 = pviews[4 * k:4 * k + 4]
            if k:
                if e:
                    np.take(h_prev, plan.dst, axis=0, out=ly.pre[:, :w_prev], mode="clip")
                    np.take(h_prev, plan.src, axis=0, out=ly.pre[:, w_prev:], mode="clip")
                np.copyto(ly.cat[:, :w_prev], h_prev)
            np.dot(ly.pre, w1, out=ly.msg)
            ly.msg += bias1
            expit(ly.msg, out=ly.msg)
            # five multiset aggregators, then the degree-scaled copies
            ly.sm.fill(0.0)
            ly.s2.fill(0.0)
            ly.mn.fill(0.0)
            ly.mx.fill(0.0)
            if starts.size:
                np.add.reduceat(ly.msg, starts, axis=0, out=ly.red)
                ly.sm[nonempty] = ly.red
                np.multiply(ly.msg, ly.msg, out=ly.xx)
                np.add.reduceat(ly.xx, starts, axis=0, out=ly.red)
                ly.s2[nonempty] = ly.red
                np.minimum.reduceat(ly.msg, starts, axis=0, out=ly.red)
                ly.mn[nonempty] = ly.red
                np.maximum.reduceat(ly.msg, starts, axis=0, out=ly.red)
                ly.mx[nonempty] = ly.red
            np.divide(ly.sm, denom, out=ly.s1)
            ly.s2 /= denom
            np.multiply(ly.s1, ly.s1, out=ly.tmp_n)
            np.subtract(ly.s2, ly.tmp_n, out=ly.std)
            np.maximum(ly.std, 0.0, out=ly.std)
            np.sqrt(ly.std, out=ly.std)
            if n_scalers == 3:
                np.multiply(ly.base, amp, out=ly.amp_block)
                np.multiply(ly.base, att, out=ly.att_block)
            np.dot(ly.cat, w0, out=ly.z)
            ly.z += bias0
            if not ly.last:
                expit(ly.z, out=ly.h)
                h_prev = ly.h
        np.take(layers[-1].z, rows, axis=0, out=predr, mode="clip")
        if logistic:
            np.abs(predr, out=lbuf1)
            np.negative(lbuf1, out=lbuf1)
            np.exp(lbuf1, out=lbuf1)
            np.log1p(lbuf1, out=lbuf1)
            np.maximum(predr, 0.0, out=lbuf2)
            np.add(lbuf2, lbuf1, out=lbuf2)
            np.multiply(predr, y, out=lbuf3)
            np.subtract(lbuf2, lbuf3, out=lbuf3)
            return float(lbuf3.sum())
        np.subtract(predr, y, out=lbuf1)
        np.multiply(lbuf1, lbuf1, out=lbuf2)
        return float(lbuf2.sum() * 0.5)

    def extremum_backward(ly, ext, g_block):
        # subgradient routes to the first row attaining the extremum
        np.take(ext, ids, axis=0, out=ly.tmp_e, mode="clip")
        np.equal(ly.msg, ly.tmp_e, out=ly.hit)
        np.copyto(ly.masked, rid)
        np.logical_not(ly.hit, out=ly.hit)
        np.copyto(ly.masked, eid, where=ly.hit)
        np.minimum.reduceat(ly.masked, starts, axis=0, out=ly.first)
        np.take(g_block, nonempty, axis=0, out=ly.extg, mode="clip")
        ly.dmsg[ly.first.ravel(), ly.cols] += ly.extg.ravel()

    def backward():
        last = layers[-1]
        last.dz.fill(0.0)
        if logistic:
            expit(predr, out=lbuf1)
            np.subtract(lbuf1, y, out=lbuf1)
            last.dz[rows] = lbuf1
        else:
            last.dz[rows] = lbuf1
        for k in range(len(layers) - 1, -1, -1):
            ly = layers[k]
            w_prev, w = ly.w_prev, ly.w
            w1, bias1, w0, bias0 = pviews[4 * k:4 * k + 4]
            gw1, gb1, gw0, gb0 = gviews[4 * k:4 * k + 4]
            np.dot(ly.dz, w0.T, out=ly.dcat)
            np.dot(ly.cat.T, ly.dz, out=gw0)
            np.sum(ly.dz, axis=0, out=gb0)
            dagg = ly.dcat[:, w_prev:]
            if n_scalers == 3:
                np.copyto(ly.gb, dagg[:, :5 * w])
                np.multiply(dagg[:, 5 * w:10 * w], amp, out=ly.tmp5)
                ly.gb += ly.tmp5
                np.multiply(dagg[:, 10 * w:], att, out=ly.tmp5)
                ly.gb += ly.tmp5
                gb = ly.gb
            else:
                gb = dagg
            ly.dmsg.fill(0.0)
            if starts.size:
                np.divide(gb[:, :w], denom, out=ly.tmp_n)
                np.take(ly.tmp_n, ids, axis=0, out=ly.tmp_e, mode="clip")
                ly.dmsg += ly.tmp_e
                np.multiply(ly.std, denom, out=ly.tmp_n)
                with np.errstate(divide="ignore", invalid="ignore"):
                    np.divide(gb[:, w:2 * w], ly.tmp_n, out=ly.tmp_n)
                np.greater(ly.std, 0.0, out=ly.bmask)
                np.logical_not(ly.bmask, out=ly.bmask)
                np.copyto(ly.tmp_n, 0.0, where=ly.bmask)
                np.take(ly.tmp_n, ids, axis=0, out=ly.tmp_e, mode="clip")
                np.take(ly.s1, ids, axis=0, out=ly.tmp_e2, mode="clip")
                np.subtract(ly.msg, ly.tmp_e2, out=ly.tmp_e2)
                np.multiply(ly.tmp_e, ly.tmp_e2, out=ly.tmp_e2)
                ly.dmsg += ly.tmp_e2
                np.take(gb[:, 2 * w:3 * w], ids, axis=0, out=ly.tmp_e, mode="clip")
                ly.dmsg += ly.tmp_e
                extremum_backward(ly, ly.mn, gb[:, 3 * w:4 * w])
                extremum_backward(ly, ly.mx, gb[:, 4 * w:])
            # through the message sigmoid
            np.multiply(ly.dmsg, ly.msg, out=ly.dmsg)
            np.subtract(1.0, ly.msg, out=ly.msg)
            np.multiply(ly.dmsg, ly.msg, out=ly.dmsg)
            np.dot(ly.pre.T, ly.dmsg, out=gw1)
            np.sum(ly.dmsg, axis=0, out=gb1)
            if k:
                prev = layers[k - 1]
                np.dot(ly.dmsg, w1.T, out=ly.dpre)
                # tape order: update slice, then receiver then sender scatter
                np.copyto(ly.dh, ly.dcat[:, :w_prev])
                if nonempty.size:
                    np.add.reduceat(ly.dpre[:, :w_prev], starts, axis=0, out=ly.dst_red)
                    ly.dh[nonempty] += ly.dst_red
                if plan.src_nonempty.size:
                    np.take(ly.dpre[:, w_prev:], plan.by_src_order, axis=0,
                            out=ly.gg, mode="clip")
                    np.add.reduceat(ly.gg, plan.src_starts, axis=0, out=ly.src_red)
                    ly.dh[plan.src_nonempty] += ly.src_red
                np.multiply(ly.dh, prev.h, out=prev.dz)
                np.subtract(1.0, prev.h, out=prev.h)
                prev.dz *= prev.h

    history = np.empty(config.epochs + 1)
    step = 0
    for epoch in range(config.epochs):
        history[epoch] = forward()
        backward()
        step += 1
        c1 = 1.0 - b1 ** step
        c2 = 1.0 - b2 ** step
        m_adam *= b1
        np.multiply(gflat, 1.0 - b1, out=t1)
        m_adam += t1
        v_adam *= b2
        np.multiply(gflat, gflat, out=t1)
        t1 *= 1.0 - b2
        v_adam += t1
        np.divide(m_adam, c1, out=t1)
        t1 *= lr
        np.divide(v_adam, c2, out=t2)
        np.sqrt(t2, out=t2)
        t2 += a_eps
        t1 /= t2
        pflat -= t1
    history[-1] = forward()
    return history


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------


def save_model(model: GNNModel, path) -> None:
    """Write the model to ``path`` as a flat numeric archive with a header."""
    header = {
        "format": _FORMAT_TAG,
        "config": asdict(model.config),
        "feature_dim": model.feature_dim,
        "scale_norm": model.scale_norm,
    }
    arrays = {f"param_{k}": p for k, p in enumerate(model.params)}
    if model.loss_history is not None:
        arrays["loss_history"] = model.loss_history
    np.savez(path, header=json.dumps(header), **arrays)


def load_model(path) -> GNNModel:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != _FORMAT_TAG:
            raise ValueError(f"not a {_FORMAT_TAG} archive")
        params = []
        k = 0
        while f"param_{k}" in data:
            params.append(data[f"param_{k}"])
            k += 1
        history = data["loss_history"] if "loss_history" in data else None
        return GNNModel(
            config=GNNConfig(**header["config"]),
            feature_dim=int(header["feature_dim"]),
            params=params,
            scale_norm=float(header["scale_norm"]),
            loss_history=history,
        )
