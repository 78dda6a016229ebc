"""Two-layer GCN with skip connections, trained under DMoN or cross-entropy.

The forward pass is::

    Z1 = relu(S Z0 W0)
    Z2 = relu(S Z1 W1)
    Zhat = Z0 + Z1 + Z2

``W0`` and ``W1`` are K x K.  ``Z0`` (random Xavier features or a GEE
embedding) is the initial value of a learnable node embedding in the
clustering preset.  The classification preset keeps it fixed
(``train_input=False``): a learnable input lets the labelled rows memorise
their labels through the skip path, and the LDA head downstream then fits
features the test rows never get.  Gradients are derived by hand.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Callable

import numpy as np

from .errors import EmptyMaskError, ShapeError
from .graph import Graph, NormalizedAdjacency, apply_operator, normalized_adjacency


def xavier_init(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform on ``[-sqrt(6/(k+n)), sqrt(6/(k+n))]``, shape ``(n, k)``."""
    if n < 1 or k < 1:
        raise ValueError("xavier_init needs n, k >= 1")
    bound = np.sqrt(6.0 / (k + n))
    return rng.uniform(-bound, bound, size=(n, k))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 10_000
    patience: int = 500
    loss_tolerance: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    weight_decay: float = 0.0
    dropout: float = 0.0
    weight_init: str = "xavier"  # or "zeros" (test hook: identity skip path)
    train_input: bool = True
    val_tiebreak: str = "earliest"  # or "loss"
    seed: int | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")
        if self.patience > max(self.max_epochs, 1):
            self.patience = max(self.max_epochs, 1)
        if self.weight_init not in ("xavier", "zeros"):
            raise ValueError(f"unknown weight_init {self.weight_init!r}")
        if self.val_tiebreak not in ("loss", "earliest"):
            raise ValueError(f"unknown val_tiebreak {self.val_tiebreak!r}")

    @classmethod
    def clustering(cls, **overrides) -> "TrainConfig":
        return cls(**{"max_epochs": 10_000, "patience": 500, **overrides})

    @classmethod
    def classification(cls, **overrides) -> "TrainConfig":
        return cls(**{"max_epochs": 2_000, "patience": 200, "train_input": False, **overrides})

    def updated(self, **overrides) -> "TrainConfig":
        return replace(self, **overrides)


@dataclass
class GcnModel:
    w0: np.ndarray
    w1: np.ndarray

    @classmethod
    def init(cls, k: int, rng: np.random.Generator, scheme: str = "xavier") -> "GcnModel":
        if scheme == "zeros":
            return cls(np.zeros((k, k)), np.zeros((k, k)))
        return cls(xavier_init(k, k, rng), xavier_init(k, k, rng))

    @classmethod
    def init_live(
        cls, s: "NormalizedAdjacency", h0: np.ndarray, rng: np.random.Generator, scheme: str = "xavier", tries: int = 100
    ) -> "GcnModel":
        """Initialise, redrawing a layer while one of its ReLU units is
        inactive on every node (such a unit never receives gradient)."""
        k = h0.shape[1]
        if scheme == "zeros":
            return cls.init(k, rng, scheme)
        w0 = xavier_init(k, k, rng)
        for _ in range(tries):
            if ((h0 @ w0).max(axis=0) > 0).all():
                break
            w0 = xavier_init(k, k, rng)
        h1 = apply_operator(s, np.maximum(h0 @ w0, 0.0))
        w1 = xavier_init(k, k, rng)
        for _ in range(tries):
            if ((h1 @ w1).max(axis=0) > 0).all():
                break
            w1 = xavier_init(k, k, rng)
        return cls(w0, w1)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w0, self.w1]

    def copy(self) -> "GcnModel":
        return GcnModel(self.w0.copy(), self.w1.copy())


@dataclass
class ForwardTrace:
    z0: np.ndarray
    h0: np.ndarray  # S Z0
    p1: np.ndarray  # S Z0 W0
    z1: np.ndarray
    h1: np.ndarray  # S Z1
    p2: np.ndarray  # S Z1 W1
    z2: np.ndarray
    zhat: np.ndarray
    mask1: np.ndarray | None = None  # dropout mask applied to Z1 before layer 2


def gcn_forward(
    s: NormalizedAdjacency,
    z0: np.ndarray,
    model: GcnModel,
    h0: np.ndarray | None = None,
    masks: tuple[np.ndarray | None, np.ndarray | None] | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the skip-connected two-layer GCN.

    ``h0 = S @ z0`` may be passed precomputed since it does not depend on the
    weights.  ``masks`` are optional (inverted) dropout masks for the inputs
    of layer 1 and layer 2; the skip sum always uses the undropped values.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    k = model.w0.shape[0]
    if z0.ndim != 2 or z0.shape != (s.n, k) or model.w1.shape != (k, k):
        raise ShapeError(f"z0 {z0.shape}, w0 {model.w0.shape}, w1 {model.w1.shape} do not fit n={s.n}")
    m0, m1 = masks if masks is not None else (None, None)
    if m0 is not None:
        h0 = apply_operator(s, z0 * m0)
    elif h0 is None:
        h0 = apply_operator(s, z0)
    p1 = h0 @ model.w0
    z1 = np.maximum(p1, 0.0)
    h1 = apply_operator(s, z1 if m1 is None else z1 * m1)
    p2 = h1 @ model.w1
    z2 = np.maximum(p2, 0.0)
    zhat = z0 + z1 + z2
    return zhat, ForwardTrace(z0, h0, p1, z1, h1, p2, z2, zhat, m1)


def gcn_backward(
    s: NormalizedAdjacency,
    trace: ForwardTrace,
    model: GcnModel,
    grad_zhat: np.ndarray,
    input_grad: bool = False,
    mask0: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. ``[W0, W1]`` given ``dL/dZhat``.

    With ``input_grad`` the gradient w.r.t. ``Z0`` is appended; ``mask0`` is
    the dropout mask that was applied to ``Z0`` on its way into layer 1.
    """
    dp2 = grad_zhat * (trace.p2 > 0)
    g_w1 = trace.h1.T @ dp2
    back = apply_operator(s, dp2 @ model.w1.T)  # S is symmetric
    dz1 = grad_zhat + (back if trace.mask1 is None else back * trace.mask1)
    dp1 = dz1 * (trace.p1 > 0)
    g_w0 = trace.h0.T @ dp1
    if not input_grad:
        return [g_w0, g_w1]
    back = apply_operator(s, dp1 @ model.w0.T)
    g_z0 = grad_zhat + (back if mask0 is None else back * mask0)
    return [g_w0, g_w1, g_z0]


def _row_max(z: np.ndarray) -> np.ndarray:
    # folding over the K columns is far faster than a reduction along a short last axis
    return reduce(np.maximum, z.T)[:, None]


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - _row_max(z))
    return e / (e @ np.ones((z.shape[1], 1)))


def dmon_loss(g: Graph, zhat: np.ndarray) -> tuple[float, np.ndarray]:
    """DMoN objective on ``C = softmax(Zhat)`` and its exact gradient w.r.t. ``Zhat``.

    ``L = -Tr(C^T B C) / 2m + sqrt(K)/n * ||sum_i C_i|| - 1``

    Same quantities as :func:`modularity_forms`, inlined so ``A C`` is
    formed once for both the loss and the gradient.
    """
    g.require_edges()
    n, k = zhat.shape
    c = softmax(zhat)
    two_m = 2.0 * g.m
    deg = g.degrees.astype(np.float64)
    ac = g.adjacency_op @ c
    vc = deg @ c
    colsum = np.ones(n) @ c
    colsum_norm = np.sqrt(colsum @ colsum)
    trace_term = np.einsum("ij,ij->", c, ac) - vc @ vc / two_m
    loss = -trace_term / two_m + np.sqrt(k) / n * colsum_norm - 1.0

    grad_c = (np.outer(deg, vc) / g.m - 2.0 * ac) / two_m
    grad_c += (np.sqrt(k) / n) * (colsum / colsum_norm)
    grad_z = c * (grad_c - (grad_c * c) @ np.ones((k, 1)))
    return float(loss), grad_z


def _as_index(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise EmptyMaskError("node set is empty")
    return idx


def cross_entropy_loss(zhat: np.ndarray, y: np.ndarray, train_mask) -> tuple[float, np.ndarray]:
    """Mean negative log-softmax likelihood over the training nodes."""
    idx = _as_index(train_mask, zhat.shape[0])
    labels = np.asarray(y)[idx]
    if (labels < 0).any():
        raise ValueError("training nodes must carry labels")
    logits = zhat[idx]
    shifted = logits - _row_max(logits)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(idx.size), labels]))
    probs = np.exp(shifted - lse[:, None])
    probs[np.arange(idx.size), labels] -= 1.0
    grad = np.zeros_like(zhat)
    grad[idx] = probs / idx.size
    return loss, grad


@dataclass
class Adam:
    """Adam with bias correction over a list of parameter arrays."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None  # first and second moments, flattened over all params
    v: np.ndarray | None = None

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "Adam":
        return cls(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place."""
        # one flat buffer keeps the op count independent of the number of arrays
        g = np.concatenate([x.ravel() for x in grads])
        if self.m is None:
            self.m, self.v = np.zeros_like(g), np.zeros_like(g)
        m, v = self.m, self.v
        if m.shape != g.shape:
            raise ShapeError("parameter set changed between Adam steps")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        update = self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.epsilon)
        start = 0
        for p in params:
            p -= update[start : start + p.size].reshape(p.shape)
            start += p.size


def predict_labels(zhat: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(zhat, axis=1)


@dataclass
class TrainResult:
    labels: np.ndarray
    zhat: np.ndarray
    epochs_run: int
    best_epoch: int
    model: GcnModel
    z0: np.ndarray = field(repr=False, default=None)  # input embedding at the restored epoch
    losses: list[float] = field(default_factory=list, repr=False)
    val_accuracy: list[float] = field(default_factory=list, repr=False)


TraceSink = Callable[[int, float, float | None], None]


def _dropout_masks(shape, rate, rng):
    if rate <= 0:
        return None
    return [(rng.random(shape) >= rate) / (1.0 - rate) for _ in range(2)]


class _Trainer:
    """State shared by both training modes: weights, input embedding, optimizer."""

    def __init__(self, g: Graph, z0: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
        self.s = normalized_adjacency(g)
        self.cfg = cfg
        self.rng = rng
        self.z0 = np.array(z0, dtype=np.float64)
        if self.z0.ndim != 2 or self.z0.shape[0] != g.n:
            raise ShapeError(f"z0 has shape {self.z0.shape}, expected ({g.n}, K)")
        self.h0 = apply_operator(self.s, self.z0)
        self.model = GcnModel.init_live(self.s, self.h0, rng, cfg.weight_init)
        self.opt = Adam.from_config(cfg)
        self.best = self.snapshot()

    def snapshot(self):
        return self.model.copy(), self.z0.copy()

    def forward(self, dropout: bool = True):
        masks = _dropout_masks(self.z0.shape, self.cfg.dropout, self.rng) if dropout else None
        zhat, tr = gcn_forward(self.s, self.z0, self.model, h0=self.h0, masks=masks)
        return zhat, tr, masks

    def step(self, trace: ForwardTrace, grad: np.ndarray, masks) -> None:
        train_input = self.cfg.train_input
        grads = gcn_backward(self.s, trace, self.model, grad, train_input, None if masks is None else masks[0])
        params = self.model.params + ([self.z0] if train_input else [])
        if self.cfg.weight_decay:
            # the embedding is not decayed
            for gw, w in zip(grads, self.model.params):
                gw += self.cfg.weight_decay * w
        self.opt.step(params, grads)
        if train_input:
            self.h0 = apply_operator(self.s, self.z0)

    def finish(self, epoch: int, best_epoch: int, losses, accs=None) -> TrainResult:
        model, z0 = self.best
        zhat, _ = gcn_forward(self.s, z0, model)
        return TrainResult(predict_labels(zhat), zhat, epoch, best_epoch, model, z0, losses, accs or [])


def train_unsupervised(
    g: Graph,
    z0: np.ndarray,
    cfg: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
    sink: TraceSink | None = None,
) -> TrainResult:
    """Full-batch Adam on the DMoN loss with best-loss patience stopping.

    Each epoch evaluates the loss at the current parameters, then takes one
    step.  Training stops after ``max_epochs`` or when the best loss has not
    improved by ``loss_tolerance`` for ``patience`` epochs; the best-loss
    parameters are restored before predicting.
    """
    g.require_edges()
    cfg = TrainConfig.clustering() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    t = _Trainer(g, z0, cfg, rng)

    best_loss, best_epoch, stale = np.inf, 0, 0
    losses = []
    epoch = 0
    while epoch < cfg.max_epochs:
        epoch += 1
        zhat, tr, masks = t.forward()
        loss, grad = dmon_loss(g, zhat)
        losses.append(loss)
        if sink is not None:
            sink(epoch, loss, None)
        if loss < best_loss - cfg.loss_tolerance:
            best_loss, best_epoch, stale = loss, epoch, 0
            t.best = t.snapshot()
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        t.step(tr, grad, masks)
    return t.finish(epoch, best_epoch, losses)


def train_supervised(
    g: Graph,
    z0: np.ndarray,
    y: np.ndarray,
    train_mask,
    val_mask,
    cfg: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
    sink: TraceSink | None = None,
) -> TrainResult:
    """Full-batch Adam on cross-entropy over ``train_mask``.

    Validation accuracy is measured at the start of every epoch and the
    parameters with the highest validation accuracy are restored, the
    earliest on ties.  With ``val_tiebreak="loss"`` a tie goes to the epoch
    with lower validation loss (by at least ``loss_tolerance``), which keeps
    training going when a small validation set reaches its best accuracy by
    chance in the first epochs.
    """
    cfg = TrainConfig.classification() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    train_idx = _as_index(train_mask, g.n)
    val_idx = _as_index(val_mask, g.n)
    if np.intersect1d(train_idx, val_idx).size:
        raise ValueError("train and validation masks overlap")
    y = np.asarray(y)
    if (y[val_idx] < 0).any():
        raise ValueError("validation nodes must carry labels")
    t = _Trainer(g, z0, cfg, rng)

    by_loss = cfg.val_tiebreak == "loss"
    best_acc, best_val_loss, best_epoch, stale = -1.0, np.inf, 0, 0
    losses, accs = [], []
    epoch = 0
    while epoch < cfg.max_epochs:
        epoch += 1
        zhat, tr, _ = t.forward(dropout=False)
        acc = float(np.mean(predict_labels(zhat[val_idx]) == y[val_idx]))
        val_loss = cross_entropy_loss(zhat, y, val_idx)[0] if by_loss else 0.0
        masks = None
        if cfg.dropout > 0:
            zhat, tr, masks = t.forward()
        loss, grad = cross_entropy_loss(zhat, y, train_idx)
        losses.append(loss)
        accs.append(acc)
        if sink is not None:
            sink(epoch, loss, acc)
        if acc > best_acc or (by_loss and acc == best_acc and val_loss < best_val_loss - cfg.loss_tolerance):
            best_acc, best_val_loss, best_epoch, stale = acc, val_loss, epoch, 0
            t.best = t.snapshot()
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        t.step(tr, grad, masks)
    return t.finish(epoch, best_epoch, losses, accs)
