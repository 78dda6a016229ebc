"""Dataset loading and the batch experiment runner behind the CLI."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError
from .gcn import TrainConfig
from .graph import Graph, from_edge_list, read_edge_list, read_labels
from .pipelines import CLASSIFY_METHODS, CLUSTER_METHODS, RATIO_TAGS, classify_all, cluster, method_seed, split_nodes
from .synth import BlockModelConfig, block_matrix, sample_dcsbm, sample_sbm

SCHEMA_VERSION = 1
COLUMNS = (
    "schema_version",
    "row_type",
    "dataset",
    "task",
    "method",
    "ratio",
    "r",
    "trial",
    "seed",
    "metric",
    "stderr",
    "trials",
    "epochs",
    "wall_time",
    "error",
)
FIXTURES = {
    "karate": ("karate.edges", "karate.labels"),
    "polblogs": ("polblogs.edges", "polblogs.labels"),
}
# the labelled table in the classification results calls this dataset IIP
DATASET_ALIASES = {"iip": "industry", "karateclub": "karate"}


@dataclass
class Dataset:
    name: str
    graph: Graph
    labels: np.ndarray
    k: int
    node_ids: np.ndarray  # node_ids[i] is the original id of node i
    label_values: np.ndarray  # label_values[c] is the original label of class c
    edge_lines: int = 0

    @property
    def undirected_edges(self) -> int:
        return self.graph.m

    @property
    def directed_entries(self) -> int:
        return 2 * self.graph.m


def load_dataset(edge_path, label_path, name: str | None = None) -> Dataset:
    """Load an edge list and a label file.

    The graph is symmetrised and deduplicated; self-loops are dropped and
    every component is kept.  Node ids are remapped to ``0..n-1`` in
    increasing order and labels to ``0..K-1``.
    """
    edge_path, label_path = Path(edge_path), Path(label_path)
    edges = read_edge_list(edge_path)
    ids, raw = read_labels(label_path)
    if ids is None:
        n = raw.size
        if edges.size and edges.max() >= n:
            raise DatasetFormatError(
                f"{label_path}: {n} labels but the edge list mentions node {int(edges.max())}"
            )
        node_ids = np.arange(n)
        local = edges
    else:
        if np.unique(ids).size != ids.size:
            raise DatasetFormatError(f"{label_path}: duplicate node ids")
        node_ids = np.sort(ids)
        missing = np.setdiff1d(np.unique(edges), node_ids)
        if missing.size:
            raise DatasetFormatError(f"{label_path}: no label for nodes {missing[:5].tolist()}")
        local = np.searchsorted(node_ids, edges)
        raw = raw[np.argsort(ids)]
    if (raw < 0).any():
        raise DatasetFormatError(f"{label_path}: every node needs a label")
    label_values, y = np.unique(raw, return_inverse=True)
    g = from_edge_list(local, node_ids.size)
    return Dataset(
        name=name or edge_path.stem,
        graph=g,
        labels=y.astype(np.int64),
        k=int(label_values.size),
        node_ids=node_ids,
        label_values=label_values,
        edge_lines=int(edges.shape[0]),
    )


def fixture_paths(name: str) -> tuple[Path, Path]:
    key = DATASET_ALIASES.get(name.lower(), name.lower())
    if key not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {sorted(FIXTURES)}")
    root = resources.files("gnnseed") / "data"
    edges, labels = (Path(str(root / f)) for f in FIXTURES[key])
    if not edges.exists() or not labels.exists():
        raise FileNotFoundError(
            f"fixture {key!r} is not bundled with this install; place {FIXTURES[key][0]} and "
            f"{FIXTURES[key][1]} under {root} or pass --edges/--labels"
        )
    return edges, labels


def load_fixture(name: str) -> Dataset:
    edges, labels = fixture_paths(name)
    return load_dataset(edges, labels, name=DATASET_ALIASES.get(name.lower(), name.lower()))


# --- configuration ------------------------------------------------------------


@dataclass
class SynthSource:
    model: str = "dcsbm"  # sbm | dcsbm
    n: int = 2000
    k: int = 4
    intra: float = 0.3
    r_grid: list[float] = field(default_factory=lambda: [0.1])
    theta: tuple[float, float] | None = (1.0, 4.0)
    sizes: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.model not in ("sbm", "dcsbm"):
            raise ValueError(f"unknown generator {self.model!r}")
        if self.model == "dcsbm" and self.theta is None:
            raise ValueError("dcsbm needs theta=(a, b)")
        if self.sizes is not None and len(self.sizes) != self.k:
            raise ValueError("sizes needs one weight per community")
        self.r_grid = [float(r) for r in self.r_grid]
        if not self.r_grid:
            raise ValueError("r_grid is empty")
        if self.theta is not None:
            self.theta = tuple(float(t) for t in self.theta)

    def block_config(self, r: float) -> BlockModelConfig:
        return BlockModelConfig(
            n=self.n,
            block_probs=block_matrix(self.k, self.intra, r),
            community_proportions=tuple(self.sizes) if self.sizes else None,
            degree_correction=self.theta if self.model == "dcsbm" else None,
        )


@dataclass
class ExperimentConfig:
    task: str = "cluster"
    methods: list[str] = field(default_factory=lambda: ["GEE", "GNN", "GG"])
    dataset: str | None = None  # fixture name, or a label for edges/labels
    edges: str | None = None
    labels: str | None = None
    synth: SynthSource | None = None
    ratios: list = field(default_factory=lambda: [5, 10, 20, 50])
    trials: int = 1
    base_seed: int = 0
    train: dict = field(default_factory=dict)
    gee_max_iter: int = 30
    output: str | None = None
    format: str = "csv"
    workers: int | None = None
    trace_dir: str | None = None

    def __post_init__(self):
        if self.task not in ("cluster", "classify"):
            raise ValueError(f"task must be cluster or classify, got {self.task!r}")
        self.methods = [m.upper() for m in self.methods]
        allowed = CLUSTER_METHODS if self.task == "cluster" else CLASSIFY_METHODS
        bad = [m for m in self.methods if m not in allowed]
        if bad:
            raise ValueError(f"methods {bad} are not valid for task {self.task!r}")
        if not self.methods:
            raise ValueError("no methods selected")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if isinstance(self.synth, dict):
            self.synth = SynthSource(**self.synth)
        sources = sum(x is not None for x in (self.synth, self.edges)) + (
            self.dataset is not None and self.edges is None
        )
        if sources != 1:
            raise ValueError("give exactly one source: a fixture name, edges+labels, or a synth block")
        if (self.edges is None) != (self.labels is None):
            raise ValueError("edges and labels must be given together")
        if self.task == "classify":
            for r in self.ratios:
                if r not in RATIO_TAGS and not 0 < float(r) < 100:
                    raise ValueError(f"bad ratio tag {r!r}")
        if self.synth is None and self.edges is None:
            fixture_paths(self.dataset)  # fail early on a missing fixture
        # and on unknown training keys
        self.train_config()

    def train_config(self) -> TrainConfig:
        base = TrainConfig.clustering() if self.task == "cluster" else TrainConfig.classification()
        return base.updated(**self.train)

    @property
    def dataset_name(self) -> str:
        if self.synth is not None:
            return self.synth.model
        if self.edges is not None:
            return self.dataset or Path(self.edges).stem
        return DATASET_ALIASES.get(self.dataset.lower(), self.dataset.lower())

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if isinstance(d.get("synth"), dict):
            d["synth"] = SynthSource(**d["synth"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text(encoding="utf-8")
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
        return cls.from_dict(data or {})

    def to_dict(self) -> dict:
        return asdict(self)


# --- seeds and jobs -------------------------------------------------------------


def _key(x) -> int:
    return zlib.crc32(str(x).encode("utf-8"))


def derive_seed(base_seed: int, dataset: str, method: str, point, trial: int) -> int:
    """32-bit seed that depends only on the cell coordinates."""
    ss = np.random.SeedSequence([int(base_seed), _key(dataset), _key(method), _key(point), int(trial)])
    return int(ss.generate_state(1)[0])


@dataclass
class Job:
    index: int
    dataset: str
    point: tuple  # (r value or None, ratio tag or None)
    trial: int


def plan_jobs(cfg: ExperimentConfig) -> list[Job]:
    """One job per (r value, ratio tag, trial); each job runs every method."""
    r_values = cfg.synth.r_grid if cfg.synth is not None else [None]
    ratios = cfg.ratios if cfg.task == "classify" else [None]
    jobs = []
    for r in r_values:
        for ratio in ratios:
            for trial in range(cfg.trials):
                jobs.append(Job(len(jobs), cfg.dataset_name, (r, ratio), trial))
    return jobs


def _dataset_for(cfg: ExperimentConfig, r, trial: int) -> tuple[Graph, np.ndarray, int]:
    if cfg.synth is None:
        ds = load_dataset(cfg.edges, cfg.labels, cfg.dataset) if cfg.edges else load_fixture(cfg.dataset)
        return ds.graph, ds.labels, ds.k
    syn = cfg.synth
    rng = np.random.default_rng(derive_seed(cfg.base_seed, cfg.dataset_name, "graph", r, trial))
    block = syn.block_config(r)
    if syn.model == "sbm":
        g, y = sample_sbm(block, rng)
    else:
        g, y, _ = sample_dcsbm(block, rng)
    return g, y, syn.k


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def _row(cfg, job, method, seed, metric=None, epochs=None, wall=None, error=None):
    r, ratio = job.point
    return {
        "schema_version": SCHEMA_VERSION,
        "row_type": "failed" if error else "trial",
        "dataset": job.dataset,
        "task": cfg.task,
        "method": method,
        "ratio": ratio,
        "r": r,
        "trial": job.trial,
        "seed": seed,
        "metric": None if metric is None else float(metric),
        "stderr": None,
        "trials": None,
        "epochs": epochs,
        "wall_time": wall,
        "error": error,
    }


def _trace_sink(cfg, job, method):
    if cfg.trace_dir is None:
        return None
    r, ratio = job.point
    parts = [job.dataset, method, f"r{r}" if r is not None else "", f"ratio{ratio}" if ratio is not None else "", f"t{job.trial}"]
    path = Path(cfg.trace_dir) / ("_".join(p for p in parts if p) + ".csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", encoding="utf-8")
    fh.write("epoch,loss,val_accuracy\n")

    def sink(epoch, loss, acc):
        fh.write(f"{epoch},{loss!r},{'' if acc is None else repr(acc)}\n")

    sink.close = fh.close
    return sink


def run_job(cfg: ExperimentConfig, job: Job) -> list[dict]:
    """Run every method of one (dataset point, trial) cell group."""
    r, ratio = job.point
    names = set(cfg.methods) | ({"GG"} if "GG-C" in cfg.methods else set())
    seeds = {m: derive_seed(cfg.base_seed, job.dataset, m, job.point, job.trial) for m in names}
    try:
        g, y, k = _dataset_for(cfg, r, job.trial)
    except Exception as exc:  # noqa: BLE001 - recorded as failed rows
        return [_row(cfg, job, m, method_seed(seeds, m), error=f"{type(exc).__name__}: {exc}") for m in cfg.methods]
    tcfg = cfg.train_config()
    rows = []
    if cfg.task == "cluster":
        for m in cfg.methods:
            try:
                res = _cluster_traced(cfg, job, m, g, y, k, tcfg, seeds[m])
                rows.append(_row(cfg, job, m, seeds[m], res.metric, res.epochs_run, res.wall_time))
            except Exception as exc:  # noqa: BLE001
                rows.append(_row(cfg, job, m, seeds[m], error=f"{type(exc).__name__}: {exc}"))
        return rows
    split_seed = derive_seed(cfg.base_seed, job.dataset, "split", job.point, job.trial)
    try:
        masks = split_nodes(y, ratio, np.random.default_rng(split_seed))
        results = classify_all(cfg.methods, g, y, masks, tcfg, seeds)
    except Exception as exc:  # noqa: BLE001
        return [_row(cfg, job, m, method_seed(seeds, m), error=f"{type(exc).__name__}: {exc}") for m in cfg.methods]
    for m in cfg.methods:
        res = results[m]
        # GG-C reuses the GG run, so it reports the GG seed
        rows.append(_row(cfg, job, m, res.seed, res.metric, res.epochs_run, res.wall_time))
    return rows


def _cluster_traced(cfg, job, method, g, y, k, tcfg, seed):
    sink = _trace_sink(cfg, job, method) if method != "GEE" else None
    try:
        return cluster(method, g, k, tcfg, seed, truth=y, gee_max_iter=cfg.gee_max_iter, sink=sink)
    finally:
        if sink is not None:
            sink.close()


# --- report -------------------------------------------------------------------------


def _sort_key(row: dict):
    def num(x):
        return (x is None, x if x is not None else 0)

    return (
        {"trial": 0, "failed": 0, "aggregate": 1}[row["row_type"]],
        row["dataset"],
        num(row["r"]),
        num(row["ratio"]),
        row["method"],
        num(row["trial"]),
    )


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and standard error (sample sd / sqrt(trials)) per method and point."""
    groups: dict = {}
    for row in rows:
        if row["row_type"] != "trial":
            continue
        key = (row["dataset"], row["task"], row["method"], row["ratio"], row["r"])
        groups.setdefault(key, []).append(row)
    out = []
    for (dataset, task, method, ratio, r), members in groups.items():
        vals = np.array([m["metric"] for m in members], dtype=np.float64)
        sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        out.append(
            {
                "schema_version": SCHEMA_VERSION,
                "row_type": "aggregate",
                "dataset": dataset,
                "task": task,
                "method": method,
                "ratio": ratio,
                "r": r,
                "trial": None,
                "seed": None,
                "metric": float(np.mean(vals)),
                "stderr": sd / math.sqrt(vals.size),
                "trials": int(vals.size),
                "epochs": None,
                "wall_time": float(np.mean([m["wall_time"] for m in members])),
                "error": None,
            }
        )
    return out


@dataclass
class RunReport:
    rows: list[dict]
    aggregates: list[dict]

    @property
    def failed(self) -> list[dict]:
        return [r for r in self.rows if r["row_type"] == "failed"]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0

    def all_rows(self) -> list[dict]:
        return sorted(self.rows, key=_sort_key) + sorted(self.aggregates, key=_sort_key)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in self.all_rows():
            w.writerow([_fmt(row[c]) for c in COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"schema_version": SCHEMA_VERSION, "rows": self.all_rows()}, indent=1) + "\n"

    def write(self, path, fmt: str = "csv") -> None:
        text = self.to_csv() if fmt == "csv" else self.to_json()
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)


def pool_size(requested: int | None = None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get("GNNSEED_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _append_partial(fh, rows: list[dict]) -> None:
    for row in rows:
        fh.write(json.dumps(row) + "\n")
    fh.flush()
    os.fsync(fh.fileno())


def run_experiment(cfg: ExperimentConfig, progress=None) -> RunReport:
    """Run every cell of ``cfg`` and return the report.

    When ``cfg.output`` is set, finished rows are appended to
    ``<output>.partial`` (one JSON object per line) as they arrive, and the
    canonically ordered report replaces it at the end.
    """
    jobs = plan_jobs(cfg)
    workers = min(pool_size(cfg.workers), len(jobs))
    partial = open(str(cfg.output) + ".partial", "w", encoding="utf-8") if cfg.output else None
    rows: list[dict] = []
    t0 = time.monotonic()

    def collect(job_rows):
        rows.extend(job_rows)
        if partial is not None:
            _append_partial(partial, job_rows)
        if progress is not None:
            progress(len(rows), len(jobs) * len(cfg.methods), time.monotonic() - t0)

    try:
        if workers <= 1:
            for job in jobs:
                collect(run_job(cfg, job))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for job_rows in pool.map(run_job, [cfg] * len(jobs), jobs):
                    collect(job_rows)
    finally:
        if partial is not None:
            partial.close()

    report = RunReport(rows, aggregate(rows))
    if cfg.output:
        report.write(cfg.output, cfg.format)
        os.remove(str(cfg.output) + ".partial")
    return report
