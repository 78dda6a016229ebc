"""Method-level compositions (GEE, GNN, GG, GG-C) and the split protocol."""
from __future__ import annotations

import time
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFitError, InfeasibleSplitError
from .gcn import TrainConfig, train_supervised, train_unsupervised, xavier_init
from .gee import supervised_gee, unsupervised_gee
from .graph import MASKED, Graph
from .heads import lda_fit, lda_predict
from .metrics import accuracy, ari

CLUSTER_METHODS = ("GEE", "GNN", "GG")
CLASSIFY_METHODS = ("GEE", "GNN", "GG", "GG-C")

# test : train+val ratios for the four standard splits
RATIO_TAGS = {5: 19, 10: 9, 20: 4, 50: 1}


def _round(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    ratio_tag: int | str

    @property
    def n(self) -> int:
        return self.train.size + self.val.size + self.test.size


def pool_fraction(ratio_tag) -> float:
    """Share of nodes in the train+val pool, e.g. ``5 -> 1/20``."""
    if ratio_tag in RATIO_TAGS:
        return 1.0 / (RATIO_TAGS[ratio_tag] + 1)
    frac = float(ratio_tag)
    frac = frac / 100.0 if frac > 1 else frac
    if not 0 < frac < 1:
        raise ValueError(f"bad ratio tag {ratio_tag!r}")
    return frac


def split_sizes(n: int, k: int, ratio_tag) -> tuple[int, int]:
    """Target ``(train, val)`` sizes after applying the per-class minimums."""
    pool = max(_round(n * pool_fraction(ratio_tag)), 3 * k)
    val = max(_round(0.1 * pool), k)
    train = max(pool - val, 2 * k)
    return train, val


def split_nodes(y: np.ndarray, ratio_tag, rng: np.random.Generator) -> SplitMasks:
    """Draw train/val/test node sets.

    Every class first gets two random train nodes and one random val node;
    the rest of the pool is filled uniformly at random.  Minimums take
    priority over the 90/10 train/val share, inflating the pool if needed.
    """
    y = np.asarray(y)
    if (y < 0).any():
        raise ValueError("split_nodes needs fully labelled nodes")
    k = int(y.max()) + 1
    counts = np.bincount(y, minlength=k)
    if counts.min() < 3:
        small = np.flatnonzero(counts < 3).tolist()
        raise InfeasibleSplitError(f"classes {small} have fewer than 3 members; 2 train + 1 val per class is impossible")
    n_train, n_val = split_sizes(y.size, k, ratio_tag)
    if n_train + n_val > y.size:
        raise InfeasibleSplitError("train/val pool larger than the graph")

    train, val = [], []
    for c in range(k):
        members = rng.permutation(np.flatnonzero(y == c))
        train.extend(members[:2])
        val.append(members[2])
    rest = rng.permutation(np.setdiff1d(np.arange(y.size), np.concatenate([train, val])))
    extra_train = n_train - len(train)
    extra_val = n_val - len(val)
    train = np.sort(np.concatenate([train, rest[:extra_train]])).astype(np.int64)
    val = np.sort(np.concatenate([val, rest[extra_train : extra_train + extra_val]])).astype(np.int64)
    test = np.sort(rest[extra_train + extra_val :]).astype(np.int64)
    return SplitMasks(train, val, test, ratio_tag)


@dataclass
class MethodResult:
    method: str
    predictions: np.ndarray
    metric: float | None
    wall_time: float
    seed: int | None = None
    epochs_run: int | None = None
    embedding: np.ndarray | None = field(default=None, repr=False)
    init_embedding: np.ndarray | None = field(default=None, repr=False)


def _stage_seeds(seed) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent seed sequences for the embedding stage and the GNN stage.

    Every GNN-based method builds a fresh generator from the same GNN-stage
    sequence, so GNN and GG share their weight initialisation.
    """
    embed, gnn = np.random.SeedSequence(seed).spawn(2)
    return embed, gnn


def cluster(
    method: str,
    g: Graph,
    k: int,
    cfg: TrainConfig | None = None,
    seed: int | None = None,
    truth: np.ndarray | None = None,
    gee_max_iter: int = 30,
    sink=None,
) -> MethodResult:
    """Cluster ``g`` into ``k`` groups with GEE, a vanilla GNN, or GG.

    ``sink`` receives the per-epoch loss of the GNN stage.
    """
    method = method.upper()
    if method not in CLUSTER_METHODS:
        raise ValueError(f"unknown clustering method {method!r}")
    g.require_edges()
    if k < 2:
        raise ValueError("k must be >= 2")
    cfg = TrainConfig.clustering() if cfg is None else cfg
    embed_seq, gnn_seq = _stage_seeds(seed)
    embed_rng = np.random.default_rng(embed_seq)
    start = time.perf_counter()
    epochs = None
    z0 = None
    if method == "GNN":
        z0 = xavier_init(g.n, k, embed_rng)
    else:
        gee = unsupervised_gee(g, k, gee_max_iter, embed_rng)
        z0 = gee.embedding
    if method == "GEE":
        pred, emb = gee.labels, gee.embedding
    else:
        res = train_unsupervised(g, z0, cfg, np.random.default_rng(gnn_seq), sink)
        pred, emb, epochs = res.labels, res.zhat, res.epochs_run
    elapsed = time.perf_counter() - start
    metric = ari(pred, truth) if truth is not None else None
    return MethodResult(method, pred, metric, elapsed, seed, epochs, emb, z0)


def method_seed(seed, method: str):
    """Resolve a per-method seed; GG-C shares the GG run and hence its seed."""
    if isinstance(seed, Mapping):
        key = "GG" if method == "GG-C" else method
        return seed.get(key, seed.get("GG-C") if key == "GG" else None)
    return seed


def masked_labels(y: np.ndarray, masks: SplitMasks) -> np.ndarray:
    """Labels with everything outside the training set hidden."""
    out = np.full(np.asarray(y).shape, MASKED, dtype=np.int64)
    out[masks.train] = np.asarray(y)[masks.train]
    return out


def _lda(features, y_train, method):
    try:
        model = lda_fit(features, y_train)
    except DegenerateFitError as exc:
        raise DegenerateFitError(f"{method}: {exc}") from exc
    return lda_predict(model, features)


def classify_all(
    methods,
    g: Graph,
    y: np.ndarray,
    masks: SplitMasks,
    cfg: TrainConfig | None = None,
    seed: int | Mapping[str, int] | None = None,
) -> dict[str, MethodResult]:
    """Run several classification methods, sharing the GG run with GG-C.

    Test labels never reach any method: GEE sees training labels only,
    the GNN stages see training labels for the loss and validation labels
    for early stopping.  ``seed`` is one seed for every method or a
    ``{method: seed}`` mapping.
    """
    methods = [m.upper() for m in methods]
    for m in methods:
        if m not in CLASSIFY_METHODS:
            raise ValueError(f"unknown classification method {m!r}")
    cfg = TrainConfig.classification() if cfg is None else cfg
    y = np.asarray(y)
    y_train = masked_labels(y, masks)
    k = int(y_train.max()) + 1
    supervision = np.full(y.shape, MASKED, dtype=np.int64)
    supervision[masks.train] = y[masks.train]
    supervision[masks.val] = y[masks.val]

    t0 = time.perf_counter()
    z_gee = supervised_gee(g, y_train, k)
    gee_time = time.perf_counter() - t0
    out: dict[str, MethodResult] = {}

    def finish(name, pred, elapsed, epochs=None, emb=None, z0=None):
        metric = accuracy(pred, y, masks.test)
        out[name] = MethodResult(name, pred, metric, elapsed, method_seed(seed, name), epochs, emb, z0)

    if "GEE" in methods:
        t0 = time.perf_counter()
        pred = _lda(z_gee, y_train, "GEE")
        finish("GEE", pred, gee_time + time.perf_counter() - t0, emb=z_gee)
    if "GNN" in methods:
        t0 = time.perf_counter()
        embed_seq, gnn_seq = _stage_seeds(method_seed(seed, "GNN"))
        x0 = xavier_init(g.n, k, np.random.default_rng(embed_seq))
        res = train_supervised(g, x0, supervision, masks.train, masks.val, cfg, np.random.default_rng(gnn_seq))
        finish("GNN", res.labels, time.perf_counter() - t0, res.epochs_run, res.zhat, x0)
    if "GG" in methods or "GG-C" in methods:
        t0 = time.perf_counter()
        _, gnn_seq = _stage_seeds(method_seed(seed, "GG"))
        res = train_supervised(g, z_gee, supervision, masks.train, masks.val, cfg, np.random.default_rng(gnn_seq))
        gg_time = gee_time + time.perf_counter() - t0
        if "GG" in methods:
            finish("GG", res.labels, gg_time, res.epochs_run, res.zhat, z_gee)
        if "GG-C" in methods:
            t0 = time.perf_counter()
            features = np.hstack([res.zhat, z_gee])
            pred = _lda(features, y_train, "GG-C")
            finish("GG-C", pred, gg_time + time.perf_counter() - t0, res.epochs_run, features, z_gee)
    return {m: out[m] for m in methods}


def classify(
    method: str,
    g: Graph,
    y: np.ndarray,
    masks: SplitMasks,
    cfg: TrainConfig | None = None,
    seed: int | None = None,
) -> MethodResult:
    return classify_all([method], g, y, masks, cfg, seed)[method.upper()]
