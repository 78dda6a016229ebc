"""SBM and degree-corrected SBM generators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, from_edge_list

# rows of the upper triangle sampled per chunk; bounds peak memory at ~CHUNK*n floats
_CHUNK = 256


def community_sizes(n: int, proportions) -> np.ndarray:
    """Largest-remainder apportionment of ``n`` nodes; ties go to the lower class."""
    p = np.asarray(proportions, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or (p <= 0).any():
        raise ValueError("proportions must be a non-empty vector of positive weights")
    quota = n * p / p.sum()
    sizes = np.floor(quota).astype(np.int64)
    short = n - int(sizes.sum())
    order = np.lexsort((np.arange(p.size), -(quota - sizes)))
    sizes[order[:short]] += 1
    return sizes


def block_matrix(k: int, intra: float, inter: float) -> np.ndarray:
    b = np.full((k, k), float(inter))
    np.fill_diagonal(b, float(intra))
    return b


@dataclass
class BlockModelConfig:
    n: int
    block_probs: np.ndarray
    community_proportions: tuple[float, ...] | None = None
    degree_correction: tuple[float, float] | None = None  # Beta(a, b)
    seed: int | None = None

    def __post_init__(self):
        self.block_probs = np.asarray(self.block_probs, dtype=np.float64)
        b = self.block_probs
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("block_probs must be square")
        if not np.allclose(b, b.T) or (b < 0).any() or (b > 1).any():
            raise ValueError("block_probs must be symmetric with entries in [0, 1]")
        if self.community_proportions is None:
            self.community_proportions = (1.0,) * b.shape[0]
        if len(self.community_proportions) != b.shape[0]:
            raise ValueError("need one proportion per block")

    @property
    def k(self) -> int:
        return self.block_probs.shape[0]

    def sizes(self) -> np.ndarray:
        return community_sizes(self.n, self.community_proportions)

    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.k), self.sizes())


@dataclass
class SweepConfig:
    intra_prob: float
    r_grid: list[float]
    trials_per_point: int = 1
    base: BlockModelConfig | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if any(r < 0 or r > self.intra_prob for r in self.r_grid):
            raise ValueError("r_grid values must lie in [0, intra_prob]")


def benchmark_dcsbm(n: int = 2000, r: float = 0.1, intra: float = 0.3, k: int = 4, seed: int | None = None) -> BlockModelConfig:
    """DC-SBM with sizes 1:2:...:k and Beta(1, 4) degree parameters."""
    return BlockModelConfig(
        n=n,
        block_probs=block_matrix(k, intra, r),
        community_proportions=tuple(float(i) for i in range(1, k + 1)),
        degree_correction=(1.0, 4.0),
        seed=seed,
    )


def _rng(cfg: BlockModelConfig, rng) -> np.random.Generator:
    if rng is not None:
        return rng
    return np.random.default_rng(cfg.seed)


def _sample_pairs(y: np.ndarray, b: np.ndarray, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = y.size
    found = []
    for start in range(0, n - 1, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, n - 1))
        u = rng.random((rows.size, n))
        p = theta[rows, None] * theta[None, :] * b[y[rows]][:, y]
        assert p.min(initial=0.0) >= 0.0 and p.max(initial=0.0) <= 1.0
        hit = (u < p) & (np.arange(n)[None, :] > rows[:, None])
        i, j = np.nonzero(hit)
        found.append(np.column_stack([rows[i], j]))
    return np.concatenate(found) if found else np.zeros((0, 2), dtype=np.int64)


def sample_sbm(cfg: BlockModelConfig, rng: np.random.Generator | None = None) -> tuple[Graph, np.ndarray]:
    """Sample ``A_ij ~ Bernoulli(B[y_i, y_j])`` for every pair ``i < j``.

    Nodes are labelled in blocks: the first ``sizes[0]`` nodes are class 0, etc.
    """
    rng = _rng(cfg, rng)
    y = cfg.labels()
    edges = _sample_pairs(y, cfg.block_probs, np.ones(cfg.n), rng)
    return from_edge_list(edges, cfg.n), y


def sample_dcsbm(
    cfg: BlockModelConfig,
    rng: np.random.Generator | None = None,
    theta: np.ndarray | None = None,
) -> tuple[Graph, np.ndarray, np.ndarray]:
    """Sample ``A_ij ~ Bernoulli(theta_i theta_j B[y_i, y_j])``.

    ``theta`` is drawn i.i.d. from ``Beta(a, b)`` unless given explicitly; an
    explicit ``theta`` consumes no random numbers, so ``theta = 1`` reproduces
    :func:`sample_sbm` under the same seed.
    """
    rng = _rng(cfg, rng)
    if theta is None:
        if cfg.degree_correction is None:
            raise ValueError("DC-SBM needs degree_correction=(a, b) or an explicit theta")
        a, b = cfg.degree_correction
        theta = rng.beta(a, b, size=cfg.n)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (cfg.n,) or (theta < 0).any() or (theta > 1).any():
        raise ValueError("theta must be a length-n vector in [0, 1]")
    y = cfg.labels()
    edges = _sample_pairs(y, cfg.block_probs, theta, rng)
    return from_edge_list(edges, cfg.n), y, theta


def expected_edge_count(y: np.ndarray, b: np.ndarray, theta: np.ndarray | None = None) -> float:
    """``sum_{i<j} theta_i theta_j B[y_i, y_j]`` computed per block pair."""
    k = b.shape[0]
    theta = np.ones(y.size) if theta is None else np.asarray(theta, dtype=np.float64)
    s1 = np.bincount(y, weights=theta, minlength=k)
    s2 = np.bincount(y, weights=theta**2, minlength=k)
    pair = np.outer(s1, s1)
    pair[np.diag_indices(k)] = (s1**2 - s2) / 2.0
    return float(np.sum(np.triu(pair * b)))
