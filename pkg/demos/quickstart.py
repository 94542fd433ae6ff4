"""End-to-end walkthrough on a small synthetic plant.

Simulates eight weeks of twin and real operation with injected anomalies,
extracts daily window statistics, trains the cluster-centers detector and
the Siamese autoencoder with ten labeled anomalies, and compares them
against unsupervised baselines on the held-out real stream.

Run:  python3 demos/quickstart.py
"""

import numpy as np

from twinguard.autoencoders import SaeConfig, model_score, train_sae
from twinguard.clustering import ClusterModel, cc_score, fit_kmeans, knn_score
from twinguard.features import (
    FeatureConfig,
    apply_standardizer,
    extract_windows,
    fit_standardizer,
)
from twinguard.metrics import evaluate_scores
from twinguard.neuralcore import TrainConfig
from twinguard.synthgen import (
    BENCHMARK_BIAS,
    BENCHMARK_NOISE_SD,
    FLATLINE,
    SEMANTIC,
    AnomalyEvent,
    PlantConfig,
    generate_real,
    generate_twin,
)


def build_plant(seed=0, n_weeks=12):
    """A small plant: one multi-day fault every other week, alternating a
    partial production loss (semantic) with a full sensor freeze."""
    events = []
    for i in range(n_weeks // 2):
        base = i * 14 * 1440
        kind = SEMANTIC if i % 2 == 0 else FLATLINE
        events.append(AnomalyEvent(kind, base + 3000, 5760))
    return PlantConfig(
        seed=seed,
        duration_minutes=n_weeks * 7 * 1440,
        sensor_noise_sd=dict(BENCHMARK_NOISE_SD),
        twin_bias=dict(BENCHMARK_BIAS),
        anomaly_spec=tuple(events),
        semantic_power_factor=0.95,
    )


def main():
    plant = build_plant()
    twin = generate_twin(plant)
    real = generate_real(plant, twin)
    print(f"simulated {len(twin)} twin minutes, {len(real)} real minutes "
          f"({real.labels.mean():.1%} anomalous)")

    features = FeatureConfig()  # daily windows, hourly stride, mean+std
    twin_ds = extract_windows(twin, features)
    real_ds = extract_windows(real, features)
    scaler = fit_standardizer(twin_ds)
    train = apply_standardizer(twin_ds, scaler).matrix
    test = apply_standardizer(real_ds, scaler)

    # ten labeled anomalies, sampled from the real stream
    rng = np.random.default_rng(0)
    anomalous = np.flatnonzero(test.labels == 1)
    picked = rng.choice(anomalous, size=10, replace=False)
    labeled = test.matrix[picked]
    held_out = np.setdiff1d(np.arange(len(test.labels)), picked)
    X, y = test.matrix[held_out], test.labels[held_out]

    print(f"{len(train)} training windows, {len(X)} test windows, "
          f"10 labeled anomalies\n")

    scores = {}
    centers = fit_kmeans(train, 32, seed=0)
    scores["cc (weak sup.)"] = cc_score(
        ClusterModel(centers=centers, eta=0.15, anomaly_set=labeled), X)
    scores["cc (unsup.)"] = cc_score(
        ClusterModel(centers=centers, eta=0.0), X)
    scores["knn"] = knn_score(train, X, k=5)

    sae_cfg = SaeConfig(hidden=(32, 16), n_pairs=4096,
                        train=TrainConfig(batch_size=64, learning_rate=1e-2,
                                          max_epochs=40, seed=0))
    sae = train_sae(train, labeled, sae_cfg)
    scores["sae"] = model_score(sae, X)

    print(f"{'model':16s} {'AP':>7s} {'AUC':>7s} {'F2@25%':>7s}")
    for name, s in scores.items():
        r = evaluate_scores(s, y)
        print(f"{name:16s} {r.ap:7.3f} {r.auc_roc:7.3f} {r.f2:7.3f}")


if __name__ == "__main__":
    main()
