"""End-to-end experiment harness: data generation, cross-validated
training, scoring, thresholding, and the labeled-anomaly sweep /
training-source ablation studies.

Per seed the protocol is:

1. regenerate the synthetic plant (twin + biased real stream),
2. window both streams into feature vectors,
3. split the twin windows into contiguous-block folds; the validation
   fold index is ``seed mod n_folds``, the rest train,
4. split the real windows into a validation part (source of the labeled
   anomalies) and a held-out test part,
5. train every requested model once, score the test part, flag the top
   quarter by score, and write one result row per model.

Result CSVs contain no timing or host-dependent fields, so identical
configurations produce byte-identical files; wall-clock timings go to a
separate sidecar.
"""

from __future__ import annotations

import dataclasses
import json
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from twinguard.autoencoders import (
    SaeConfig,
    ffae_config,
    model_score,
    sae_config,
    train_sae,
)
from twinguard.clustering import (
    DEFAULT_ETA,
    DEFAULT_ZETA,
    ClusterModel,
    cc_score,
    fit_kmeans,
    knn_score,
)
from twinguard.baselines import fit_pca, pca_score
from twinguard.features import FeatureConfig, extract_windows, fit_standardizer
from twinguard.metrics import (
    RESULTS_CSV_HEADER,
    EvalReport,
    average_precision,
    evaluate_scores,
)
from twinguard.neuralcore import TrainConfig
from twinguard.synthgen import PlantConfig, benchmark_config, generate_real, generate_twin

ALL_MODELS = ("sae", "cc_ws", "ffae", "cc_unsup", "knn", "pca", "mae")
# mae has no training set, so it is identical under both training sources
# and is left out of the source ablation
ABLATION_MODELS = ("sae", "cc_ws", "ffae", "cc_unsup", "knn", "pca")


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple = ALL_MODELS
    seeds: tuple = tuple(range(10))
    n_folds: int = 10
    real_val_fraction: float = 0.2
    n_labeled_anomalies: int = 10
    training_source: str = "twin"  # "twin" | "real"
    flagged_fraction: float = 0.25
    n_clusters: int = 64
    eta: float = DEFAULT_ETA
    zeta: float = DEFAULT_ZETA
    knn_k: int = 5
    pca_variance: float = 0.95
    features: FeatureConfig = field(default_factory=FeatureConfig)
    sae: SaeConfig = field(default_factory=sae_config)
    ffae: SaeConfig = field(default_factory=ffae_config)
    plant: PlantConfig | None = None  # None -> benchmark_config(seed)

    def __post_init__(self):
        unknown = set(self.models) - set(ALL_MODELS)
        if unknown:
            raise ValueError(f"unknown models: {sorted(unknown)}")
        if self.training_source not in ("twin", "real"):
            raise ValueError("training_source must be 'twin' or 'real'")
        if not 0.0 < self.real_val_fraction < 1.0:
            raise ValueError("real_val_fraction must be in (0, 1)")
        if self.n_folds < 2:
            raise ValueError("need at least two folds")

    def to_json(self) -> str:
        doc = dataclasses.asdict(self)
        doc["plant"] = None if self.plant is None else json.loads(self.plant.to_json())
        return json.dumps(doc, indent=2, sort_keys=True, default=str)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        doc["models"] = tuple(doc["models"])
        doc["seeds"] = tuple(doc["seeds"])
        feats = doc["features"]
        for key in ("variables", "statistics"):
            feats[key] = tuple(feats[key])
        doc["features"] = FeatureConfig(**feats)
        for key in ("sae", "ffae"):
            sae = doc[key]
            sae["hidden"] = tuple(sae["hidden"])
            sae["train"] = TrainConfig(**sae["train"])
            doc[key] = SaeConfig(**sae)
        plant = doc["plant"]
        doc["plant"] = None if plant is None else PlantConfig.from_json(json.dumps(plant))
        return cls(**doc)


def contiguous_folds(n: int, n_folds: int) -> list[np.ndarray]:
    """Index blocks of near-equal size preserving temporal order."""
    bounds = np.linspace(0, n, n_folds + 1).astype(int)
    return [np.arange(lo, hi) for lo, hi in zip(bounds, bounds[1:])]


def _standardize(matrix: np.ndarray, scaler) -> np.ndarray:
    return (matrix - scaler.mean) / scaler.sd


@dataclass
class SeedData:
    """Everything one seed's models need, prepared once."""

    seed: int
    train_normals: np.ndarray  # standardized windows used as the normal set
    labeled_anomalies: np.ndarray  # standardized, from the real validation part
    test_matrix: np.ndarray  # standardized real test windows
    test_labels: np.ndarray
    fold: int
    mae_scores: np.ndarray | None  # precomputed raw-series scores for the test part
    val_matrix: np.ndarray | None = None  # standardized real validation windows
    val_labels: np.ndarray | None = None
    test_window_starts: np.ndarray | None = None  # minute offsets of test windows


def label_coverage_order(X, n_clusters: int = 8, seed: int = 0) -> np.ndarray:
    """Coverage ordering of a labeled-anomaly pool.

    Clusters the pool with k-means, then interleaves the clusters in
    proportion to their population, emitting each cluster's medoid first
    and greedy coverage picks after it.  Every prefix of the result is a
    nested, representative label subset: dense anomaly modes receive
    labels early and no mode is starved, which is how an operator would
    label "typical examples of each known failure".  Deterministic.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(X)
    if n <= 1:
        return np.arange(n)
    centers = fit_kmeans(X, min(n_clusters, n), seed=seed)
    assign = ((X[:, None] - centers[None]) ** 2).sum(-1).argmin(1)
    inner, sizes = {}, {}
    for c in np.unique(assign):
        members = np.flatnonzero(assign == c)
        D = np.sqrt(((X[members][:, None] - X[members][None]) ** 2).sum(-1))
        order = [int(np.argmin(D.sum(1)))]
        dmin = D[order[0]].copy()
        remaining = set(range(len(members))) - {order[0]}
        while remaining:
            cand = np.fromiter(remaining, int)
            costs = np.minimum(dmin[None, :], D[cand]).sum(1)
            pick = int(cand[np.argmin(costs)])
            order.append(pick)
            remaining.discard(pick)
            dmin = np.minimum(dmin, D[pick])
        inner[int(c)] = members[order]
        sizes[int(c)] = len(members)
    picked = {c: 0 for c in inner}
    out = []
    for t in range(1, n + 1):
        avail = [c for c in inner if picked[c] < sizes[c]]
        c = max(avail, key=lambda c: (sizes[c] / n * t - picked[c], sizes[c], -c))
        out.append(int(inner[c][picked[c]]))
        picked[c] += 1
    return np.array(out)


def _mae_window_scores(plant: PlantConfig, real_frame, starts, window: int) -> np.ndarray:
    """Mean absolute raw-series deviation between the real stream and a
    twin simulated over the same horizon, per window, via a cumulative sum."""
    twin_long = generate_twin(replace(plant, duration_minutes=plant.real_minutes))
    diff = np.abs(twin_long.matrix() - real_frame.matrix()).mean(axis=1)
    csum = np.concatenate([[0.0], np.cumsum(diff)])
    starts = np.asarray(starts)
    return (csum[starts + window] - csum[starts]) / window


def prepare_seed(config: ExperimentConfig, seed: int, need_mae: bool = False) -> SeedData:
    plant = config.plant if config.plant is not None else benchmark_config(seed)
    twin = generate_twin(plant)
    real = generate_real(plant, twin)
    twin_ds = extract_windows(twin, config.features)
    real_ds = extract_windows(real, config.features)

    fold = seed % config.n_folds
    folds = contiguous_folds(len(twin_ds.labels), config.n_folds)
    train_idx = np.concatenate([f for i, f in enumerate(folds) if i != fold])

    split_rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    order = split_rng.permutation(len(real_ds.labels))
    n_val = int(config.real_val_fraction * len(order))
    val_idx, test_idx = order[:n_val], order[n_val:]

    if config.training_source == "twin":
        train_ds = twin_ds.subset(train_idx)
    else:
        # contaminated real-only training: the validation part, labels ignored
        train_ds = real_ds.subset(val_idx)
    scaler = fit_standardizer(train_ds)
    train_normals = _standardize(train_ds.matrix, scaler)

    anomalous_val = val_idx[real_ds.labels[val_idx] == 1]
    n_pick = min(config.n_labeled_anomalies, len(anomalous_val))
    candidates = _standardize(real_ds.matrix[anomalous_val], scaler)
    picked = anomalous_val[label_coverage_order(candidates, seed=seed)[:n_pick]]
    labeled = _standardize(real_ds.matrix[picked], scaler)

    mae_scores = None
    if need_mae:
        starts = np.asarray(real_ds.window_start_indices)[test_idx]
        mae_scores = _mae_window_scores(
            plant, real, starts, config.features.window_length_minutes
        )

    return SeedData(
        seed=seed,
        train_normals=train_normals,
        labeled_anomalies=labeled,
        test_matrix=_standardize(real_ds.matrix[test_idx], scaler),
        test_labels=real_ds.labels[test_idx],
        fold=fold,
        mae_scores=mae_scores,
        val_matrix=_standardize(real_ds.matrix[val_idx], scaler),
        val_labels=real_ds.labels[val_idx],
        test_window_starts=np.asarray(real_ds.window_start_indices)[test_idx],
    )


def score_model(name: str, config: ExperimentConfig, data: SeedData,
                X: np.ndarray | None = None) -> np.ndarray:
    """Train one model on the seed's normal set and score the test part.

    `X` overrides the matrix being scored (the test part by default); the
    fitted parameters never depend on it, which the leakage tests probe.
    """
    if X is None:
        X = data.test_matrix
    if name == "sae":
        cfg = replace(config.sae, train=replace(config.sae.train, seed=data.seed))
        model = train_sae(data.train_normals, data.labeled_anomalies, cfg)
        return model_score(model, X)
    if name == "ffae":
        cfg = replace(config.ffae, train=replace(config.ffae.train, seed=data.seed))
        model = train_sae(data.train_normals, None, cfg)
        return model_score(model, X)
    if name in ("cc_ws", "cc_unsup"):
        centers = fit_kmeans(data.train_normals, config.n_clusters, seed=data.seed)
        if name == "cc_ws":
            model = ClusterModel(centers=centers, eta=config.eta, zeta=config.zeta,
                                 anomaly_set=data.labeled_anomalies)
        else:
            model = ClusterModel(centers=centers, eta=0.0, zeta=config.zeta)
        return cc_score(model, X)
    if name == "knn":
        return knn_score(data.train_normals, X, k=config.knn_k)
    if name == "pca":
        model = fit_pca(data.train_normals, variance_fraction=config.pca_variance)
        return pca_score(model, X)
    if name == "mae":
        if data.mae_scores is None:
            raise ValueError("seed data prepared without raw-series scores")
        return data.mae_scores
    raise ValueError(f"unknown model {name!r}")


def run_experiment(config: ExperimentConfig, out_dir=None):
    """Train and evaluate every configured model on every seed.

    Returns (reports, timings); when `out_dir` is given, writes
    results.csv, timings.json and manifest.json there.
    """
    reports: list[EvalReport] = []
    timings: dict[str, float] = {}
    for seed in config.seeds:
        data = prepare_seed(config, seed, need_mae="mae" in config.models)
        for name in config.models:
            t0 = time.perf_counter()
            scores = score_model(name, config, data)
            timings[f"{name}/{seed}"] = time.perf_counter() - t0
            report = evaluate_scores(scores, data.test_labels, config.flagged_fraction,
                                     model=name, seed=seed, fold=data.fold)
            reports.append(report)
    if out_dir is not None:
        write_results(reports, timings, config, out_dir)
    return reports, timings


def write_results(reports, timings, config: ExperimentConfig, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [RESULTS_CSV_HEADER] + [r.csv_row() for r in reports]
    (out_dir / "results.csv").write_text("\n".join(lines) + "\n")
    (out_dir / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True))
    (out_dir / "manifest.json").write_text(config.to_json())


def read_results_csv(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def mean_ap_by_model(reports) -> dict[str, float]:
    by_model: dict[str, list[float]] = {}
    for r in reports:
        by_model.setdefault(r.model, []).append(r.ap)
    return {m: float(np.mean(v)) for m, v in by_model.items()}


AGGREGATE_METRICS = ("ap", "auc_roc", "f2")


def aggregate_reports(reports) -> dict[str, dict[str, dict[str, float]]]:
    """Per-model mean and population sd of each headline metric."""
    by_model: dict[str, list] = {}
    for r in reports:
        by_model.setdefault(r.model, []).append(r)
    out = {}
    for model, rows in by_model.items():
        out[model] = {}
        for metric in AGGREGATE_METRICS:
            values = np.array([getattr(r, metric) for r in rows], dtype=np.float64)
            out[model][metric] = {"mean": float(values.mean()),
                                  "sd": float(values.std())}
    return out


# ------------------------------------------------------------------ search
def validation_ap(config: ExperimentConfig, model: str | None = None,
                  seeds=None) -> float:
    """Mean average precision on the real validation split.

    The hyperparameter-search objective: the held-out test part is never
    touched.  `model` defaults to the first configured model.
    """
    model = config.models[0] if model is None else model
    seeds = config.seeds if seeds is None else seeds
    aps = []
    for seed in seeds:
        data = prepare_seed(config, seed)
        scores = score_model(model, config, data, X=data.val_matrix)
        aps.append(average_precision(scores, data.val_labels))
    return float(np.mean(aps))


@dataclass(frozen=True)
class SearchSpace:
    """Ordered hyperparameter dimensions for the iterated line search.

    `dimensions` is a tuple of (name, candidates) pairs; names may be
    dotted paths into nested config dataclasses ("sae.train.learning_rate").
    """

    dimensions: tuple

    def __post_init__(self):
        if not self.dimensions:
            raise ValueError("search space needs at least one dimension")
        for name, candidates in self.dimensions:
            if not len(candidates):
                raise ValueError(f"dimension {name!r} has no candidates")


def set_config_field(config, dotted: str, value):
    """Return a copy of a (possibly nested) frozen dataclass with one
    dotted field replaced."""
    head, _, rest = dotted.partition(".")
    if not hasattr(config, head):
        raise AttributeError(f"config has no field {dotted!r}")
    inner = getattr(config, head) if rest else value
    if rest:
        inner = set_config_field(inner, rest, value)
    return replace(config, **{head: inner})


def line_search(space: SearchSpace, base_config, evaluate, passes: int = 1):
    """Iterated line search: one dimension free at a time, the rest fixed.

    Walks the dimensions in declared order; for each, evaluates every
    candidate with `evaluate(config) -> validation score`, adopts the
    argmax (earliest candidate on ties) and proceeds.  One full pass by
    default.  Candidates that raise are recorded in the trace and
    skipped; a dimension where every candidate fails keeps its current
    value.  Returns (best_config, trace).
    """
    if passes < 1:
        raise ValueError("need at least one pass")
    config = base_config
    trace = []
    any_scored = False
    for pass_index in range(passes):
        for name, candidates in space.dimensions:
            best_cfg, best_score = None, -np.inf
            for value in candidates:
                candidate = set_config_field(config, name, value)
                entry = {"pass": pass_index, "dimension": name, "value": value}
                try:
                    score = float(evaluate(candidate))
                except Exception as exc:  # record and move on
                    entry["error"] = f"{type(exc).__name__}: {exc}"
                    trace.append(entry)
                    continue
                entry["score"] = score
                trace.append(entry)
                any_scored = True
                if score > best_score:
                    best_cfg, best_score = candidate, score
            if best_cfg is not None:
                config = best_cfg
    if not any_scored:
        raise RuntimeError("every candidate in the search failed")
    return config, trace


# ------------------------------------------------------------------ sweep
SWEEP_COUNTS = (5, 10, 50, 100, 500, 1000)


def anomaly_sweep(config: ExperimentConfig, counts=SWEEP_COUNTS,
                  models=("sae", "cc_ws"), seeds=None):
    """Average precision as a function of the labeled-anomaly budget.

    Per seed one pool of `max(counts)` anomalous windows is drawn and
    put in coverage order (`label_coverage_order`); each smaller budget
    uses a nested prefix of the same pool, and the whole pool is
    excluded from the scored set so no budget ever trains on a tested
    window.  Returns rows {model, seed, n_labeled, ap}.
    """
    counts = sorted(set(int(c) for c in counts))
    seeds = config.seeds if seeds is None else seeds
    rows = []
    for seed in seeds:
        plant = config.plant if config.plant is not None else benchmark_config(seed)
        twin = generate_twin(plant)
        twin_ds = extract_windows(twin, config.features)
        real_ds = extract_windows(generate_real(plant, twin), config.features)

        fold = seed % config.n_folds
        folds = contiguous_folds(len(twin_ds.labels), config.n_folds)
        train_idx = np.concatenate([f for i, f in enumerate(folds) if i != fold])
        scaler = fit_standardizer(twin_ds.subset(train_idx))
        train_normals = _standardize(twin_ds.matrix[train_idx], scaler)

        anomalous = np.flatnonzero(real_ds.labels == 1)
        pool_size = max(counts)
        # the pool is excluded from the scored set, so keep at least half
        # of the anomalous windows out of it
        cap = max(1, len(anomalous) // 2)
        if pool_size > cap:
            warnings.warn(
                f"only {len(anomalous)} anomalous windows available; "
                f"budgets above {cap} are truncated"
            )
            pool_size = cap
        pool_rng = np.random.default_rng(np.random.SeedSequence([seed, 9]))
        pool = pool_rng.choice(anomalous, size=pool_size, replace=False)
        pool = pool[label_coverage_order(_standardize(real_ds.matrix[pool], scaler), seed=seed)]

        keep = np.setdiff1d(np.arange(len(real_ds.labels)), pool)
        test_matrix = _standardize(real_ds.matrix[keep], scaler)
        test_labels = real_ds.labels[keep]

        centers = fit_kmeans(train_normals, config.n_clusters, seed=seed)
        for count in counts:
            budget = min(count, pool_size)
            labeled = _standardize(real_ds.matrix[pool[:budget]], scaler)
            for name in models:
                if name == "cc_ws":
                    model = ClusterModel(centers=centers, eta=config.eta,
                                         zeta=config.zeta, anomaly_set=labeled)
                    scores = cc_score(model, test_matrix)
                elif name == "sae":
                    cfg = replace(config.sae, train=replace(config.sae.train, seed=seed))
                    sae = train_sae(train_normals, labeled, cfg)
                    scores = model_score(sae, test_matrix)
                else:
                    raise ValueError(f"sweep supports sae/cc_ws, not {name!r}")
                report = evaluate_scores(scores, test_labels, config.flagged_fraction)
                rows.append({"model": name, "seed": seed, "n_labeled": count,
                             "ap": report.ap})
    return rows


# ------------------------------------------------------------------ ablation
def ablation_training_source(config: ExperimentConfig, models=ABLATION_MODELS,
                             seeds=None):
    """Mean AP per model when trained on the clean twin versus on the
    contaminated real stream, plus the relative change in percent."""
    seeds = config.seeds if seeds is None else seeds
    results = {}
    for source in ("twin", "real"):
        cfg = replace(config, training_source=source, models=tuple(models), seeds=tuple(seeds))
        reports, _ = run_experiment(cfg)
        results[source] = mean_ap_by_model(reports)
    table = []
    for name in models:
        twin_ap = results["twin"][name]
        real_ap = results["real"][name]
        table.append({
            "model": name,
            "twin_ap": twin_ap,
            "real_ap": real_ap,
            "delta_pct": 100.0 * (real_ap - twin_ap) / twin_ap,
        })
    return table
