"""Command-line interface.

Subcommands cover the full pipeline: `generate` synthetic plant data,
`featurize` raw frames into window statistics, `train`/`score` individual
models, and the harness entry points `evaluate`, `search`, `sweep` and
`ablation`.  All configs are JSON; experiment outputs land in a run
directory together with a manifest describing the exact configuration.
The process exits 0 only when every requested run completed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

import twinguard
from twinguard.autoencoders import (
    SaeConfig,
    ffae_config,
    load_model,
    model_score,
    sae_config,
    save_model,
    train_sae,
)
from twinguard.baselines import PcaModel, fit_pca, pca_score
from twinguard.clustering import ClusterModel, cc_score, fit_kmeans, knn_score
from twinguard.features import (
    FeatureConfig,
    FeatureDataset,
    Standardization,
    apply_standardizer,
    extract_windows,
    fit_standardizer,
)
from twinguard.harness import (
    ExperimentConfig,
    SearchSpace,
    _mae_window_scores,
    ablation_training_source,
    aggregate_reports,
    anomaly_sweep,
    line_search,
    run_experiment,
    validation_ap,
    write_results,
)
from twinguard.metrics import evaluate_scores, pr_curve_points, roc_curve_points
from twinguard.neuralcore import TrainConfig
from twinguard.synthgen import (
    PlantConfig,
    TimeSeriesFrame,
    benchmark_config,
    generate_real,
    generate_twin,
)

SCORES_CSV_HEADER = "index,score"


# ------------------------------------------------------------------ helpers
def _read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _write_manifest(out_dir: Path, command: str, config_doc) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": twinguard.__version__,
        "config": config_doc,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _write_scores(path, scores) -> None:
    lines = [SCORES_CSV_HEADER]
    lines += [f"{i},{s:.12g}" for i, s in enumerate(scores)]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_scores(path) -> np.ndarray:
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != SCORES_CSV_HEADER:
        raise ValueError(f"expected header {SCORES_CSV_HEADER!r}")
    return np.array([float(line.split(",")[1]) for line in lines[1:]])


def _sae_config_from_doc(doc: dict, base: SaeConfig) -> SaeConfig:
    doc = dict(doc)
    train = doc.pop("train", None)
    if "hidden" in doc:
        doc["hidden"] = tuple(doc["hidden"])
    cfg = replace(base, **doc)
    if train is not None:
        cfg = replace(cfg, train=replace(cfg.train, **train))
    return cfg


def _experiment_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return ExperimentConfig.from_json(Path(path).read_text())


# ------------------------------------------------------------------ generate
def cmd_generate(args) -> int:
    if args.config is not None:
        plant = PlantConfig.from_json(Path(args.config).read_text())
    else:
        plant = benchmark_config(seed=args.benchmark_seed)
    twin = generate_twin(plant)
    twin.to_csv(args.out_twin)
    if args.out_real is not None:
        generate_real(plant, twin).to_csv(args.out_real)
    return 0


# ------------------------------------------------------------------ featurize
def cmd_featurize(args) -> int:
    config = (
        FeatureConfig.from_json(Path(args.config).read_text())
        if args.config is not None
        else FeatureConfig()
    )
    frame = TimeSeriesFrame.from_csv(args.infile, source=args.source)
    dataset = extract_windows(frame, config)

    params = None
    if args.standardize is not None:
        sidecar = _read_json(args.standardize)
        if sidecar.get("standardization") is None:
            raise ValueError(f"{args.standardize} holds no standardization params")
        params = Standardization(
            mean=np.array(sidecar["standardization"]["mean"]),
            sd=np.array(sidecar["standardization"]["sd"]),
        )
    elif args.fit_standardizer:
        params = fit_standardizer(dataset)
    if params is not None:
        dataset = apply_standardizer(dataset, params)

    dataset.to_csv(args.out)
    sidecar = {
        "feature_config": json.loads(config.to_json()),
        "feature_names": list(dataset.feature_names),
        "window_start_indices": np.asarray(dataset.window_start_indices).tolist(),
        "standardization": None
        if params is None
        else {"mean": params.mean.tolist(), "sd": params.sd.tolist()},
    }
    Path(args.out).with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return 0


# ------------------------------------------------------------------ train
def cmd_train(args) -> int:
    doc = _read_json(args.config) if args.config is not None else {}
    out = Path(args.out)

    if args.model == "mae":
        # no fitting: the checkpoint is the plant + windowing description
        if "plant" not in doc:
            raise ValueError("mae needs a config with a 'plant' section")
        ckpt = {
            "kind": "mae",
            "plant": doc["plant"],
            "window_length_minutes": doc.get("window_length_minutes", 1440),
            "window_stride_minutes": doc.get("window_stride_minutes", 60),
        }
        out.write_text(json.dumps(ckpt, indent=2))
        return 0

    normals = FeatureDataset.from_csv(args.normals).matrix
    anomalies = None
    if args.anomalies is not None:
        anomalies = FeatureDataset.from_csv(args.anomalies).matrix

    if args.model in ("sae", "ffae"):
        base = sae_config() if args.model == "sae" else ffae_config()
        cfg = _sae_config_from_doc(doc, base)
        model = train_sae(normals, anomalies if args.model == "sae" else None, cfg)
        save_model(model, out)
    elif args.model == "cc":
        centers = fit_kmeans(normals, int(doc.get("n_clusters", 64)),
                             seed=int(doc.get("seed", 0)))
        model = ClusterModel(
            centers=centers,
            eta=float(doc.get("eta", 0.15)) if anomalies is not None else 0.0,
            zeta=float(doc.get("zeta", 0.001)),
            anomaly_set=anomalies,
        )
        out.write_text(json.dumps({"kind": "cc", "model": json.loads(model.to_json())}))
    elif args.model == "pca":
        model = fit_pca(normals, q=doc.get("q"),
                        variance_fraction=float(doc.get("variance_fraction", 0.95)))
        out.write_text(json.dumps({"kind": "pca", "model": json.loads(model.to_json())}))
    elif args.model == "knn":
        ckpt = {"kind": "knn", "k": int(doc.get("k", 5)), "normals": normals.tolist()}
        out.write_text(json.dumps(ckpt))
    else:
        raise ValueError(f"unknown model {args.model!r}")
    return 0


# ------------------------------------------------------------------ score
def cmd_score(args) -> int:
    path = Path(args.model)
    if path.is_dir():  # sae / ffae checkpoint directory
        model = load_model(path)
        X = FeatureDataset.from_csv(args.infile).matrix
        scores = model_score(model, X)
    else:
        ckpt = _read_json(path)
        kind = ckpt["kind"]
        if kind == "cc":
            model = ClusterModel.from_json(json.dumps(ckpt["model"]))
            scores = cc_score(model, FeatureDataset.from_csv(args.infile).matrix)
        elif kind == "pca":
            model = PcaModel.from_json(json.dumps(ckpt["model"]))
            scores = pca_score(model, FeatureDataset.from_csv(args.infile).matrix)
        elif kind == "knn":
            normals = np.asarray(ckpt["normals"], dtype=np.float64)
            scores = knn_score(normals, FeatureDataset.from_csv(args.infile).matrix,
                               k=ckpt["k"])
        elif kind == "mae":
            # scores a raw frame CSV against a freshly simulated twin
            plant = PlantConfig.from_json(json.dumps(ckpt["plant"]))
            frame = TimeSeriesFrame.from_csv(args.infile, source="real")
            window = ckpt["window_length_minutes"]
            stride = ckpt["window_stride_minutes"]
            starts = np.arange(0, len(frame) - window + 1, stride)
            plant = replace(plant, duration_minutes=len(frame),
                            real_duration_minutes=len(frame), anomaly_spec=())
            scores = _mae_window_scores(plant, frame, starts, window)
        else:
            raise ValueError(f"unknown checkpoint kind {kind!r}")
    _write_scores(args.out, scores)
    return 0


# ------------------------------------------------------------------ evaluate
def _write_curves(out_dir: Path, scores, labels) -> None:
    precision, recall, thr = pr_curve_points(scores, labels)
    lines = ["precision,recall,threshold"]
    lines += [f"{p:.12g},{r:.12g},{t:.12g}" for p, r, t in zip(precision, recall, thr)]
    (out_dir / "prc.csv").write_text("\n".join(lines) + "\n")
    fpr, tpr, thr = roc_curve_points(scores, labels)
    lines = ["fpr,tpr,threshold"]
    lines += [f"{f:.12g},{t:.12g},{x:.12g}" for f, t, x in zip(fpr, tpr, thr)]
    (out_dir / "roc.csv").write_text("\n".join(lines) + "\n")


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out_dir)
    if args.scores is not None:
        if args.labels is None:
            raise ValueError("--scores needs --labels")
        scores = _read_scores(args.scores)
        labels = FeatureDataset.from_csv(args.labels).labels
        report = evaluate_scores(scores, labels, fraction=args.fraction)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(report.to_json())
        _write_curves(out_dir, scores, labels)
        _write_manifest(out_dir, "evaluate",
                        {"scores": str(args.scores), "labels": str(args.labels),
                         "fraction": args.fraction})
        return 0

    config = _experiment_config(args.experiment)
    reports, timings = run_experiment(config)
    write_results(reports, timings, config, out_dir)
    (out_dir / "summary.json").write_text(
        json.dumps(aggregate_reports(reports), indent=2, sort_keys=True)
    )
    return 0


# ------------------------------------------------------------------ search
def cmd_search(args) -> int:
    config = _experiment_config(args.experiment)
    space_doc = _read_json(args.space)
    space = SearchSpace(
        tuple((name, tuple(candidates)) for name, candidates in space_doc["dimensions"])
    )

    def evaluate(candidate: ExperimentConfig) -> float:
        return validation_ap(candidate)

    best, trace = line_search(space, config, evaluate, passes=args.passes)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "best_config.json").write_text(best.to_json())
    (out_dir / "trace.json").write_text(json.dumps(trace, indent=2, default=str))
    _write_manifest(out_dir, "search",
                    {"experiment": json.loads(config.to_json()),
                     "space": space_doc, "passes": args.passes})
    return 0


# ------------------------------------------------------------------ sweep
def cmd_sweep(args) -> int:
    config = _experiment_config(args.experiment)
    counts = tuple(int(c) for c in args.counts.split(","))
    models = tuple(args.models.split(","))
    seeds = None if args.seeds is None else tuple(int(s) for s in args.seeds.split(","))
    rows = anomaly_sweep(config, counts=counts, models=models, seeds=seeds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["model,seed,n_labeled,ap"]
    lines += [f"{r['model']},{r['seed']},{r['n_labeled']},{r['ap']:.12g}" for r in rows]
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out_dir, "sweep",
                    {"experiment": json.loads(config.to_json()),
                     "counts": list(counts), "models": list(models),
                     "seeds": None if seeds is None else list(seeds)})
    return 0


# ------------------------------------------------------------------ ablation
def cmd_ablation(args) -> int:
    config = _experiment_config(args.experiment)
    kwargs = {}
    if args.models is not None:
        kwargs["models"] = tuple(args.models.split(","))
    if args.seeds is not None:
        kwargs["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    table = ablation_training_source(config, **kwargs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["model,twin_ap,real_ap,delta_pct"]
    lines += [
        f"{r['model']},{r['twin_ap']:.12g},{r['real_ap']:.12g},{r['delta_pct']:.12g}"
        for r in table
    ]
    (out_dir / "ablation.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out_dir, "ablation", {"experiment": json.loads(config.to_json())})
    return 0


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twinguard",
        description="Weakly-supervised anomaly detection for sensor time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate twin and real plant streams")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--config", help="PlantConfig JSON file")
    g.add_argument("--benchmark-seed", type=int, default=0,
                   help="use the built-in benchmark plant with this seed")
    p.add_argument("--out-twin", required=True)
    p.add_argument("--out-real")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("featurize", help="extract window statistics from a frame CSV")
    p.add_argument("--config", help="FeatureConfig JSON file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--source", choices=("twin", "real"), default="real")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fit-standardizer", action="store_true",
                   help="fit z-score params on this data and apply them")
    g.add_argument("--standardize", metavar="SIDECAR",
                   help="apply params from a previous featurize sidecar")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit one model and write a checkpoint")
    p.add_argument("--model", required=True,
                   choices=("sae", "ffae", "cc", "pca", "mae", "knn"))
    p.add_argument("--normals", help="featurized CSV of normal windows")
    p.add_argument("--anomalies", help="featurized CSV of labeled anomalous windows")
    p.add_argument("--config", help="model hyperparameter JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score windows with a trained checkpoint")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="evaluate scores or run the full benchmark")
    p.add_argument("--scores", help="scores CSV from `twinguard score`")
    p.add_argument("--labels", help="featurized CSV providing the label column")
    p.add_argument("--fraction", type=float, default=0.25)
    p.add_argument("--experiment", help="ExperimentConfig JSON (default benchmark)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="iterated line search over hyperparameters")
    p.add_argument("--experiment", help="base ExperimentConfig JSON")
    p.add_argument("--space", required=True,
                   help='JSON {"dimensions": [["name", [v1, v2]], ...]}')
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("sweep", help="vary the labeled-anomaly budget")
    p.add_argument("--experiment")
    p.add_argument("--counts", default="5,10,50,100,500,1000")
    p.add_argument("--models", default="sae,cc_ws")
    p.add_argument("--seeds")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablation", help="twin-trained versus real-trained models")
    p.add_argument("--experiment")
    p.add_argument("--models")
    p.add_argument("--seeds")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ablation)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
