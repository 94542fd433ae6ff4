"""Siamese autoencoder and plain feedforward autoencoder baseline.

The Siamese model trains on sample pairs whose left element always comes
from the normal (twin) set; the right element is normal or a labeled
anomaly.  The training loss is the unweighted sum of three parts:

* reconstruction: mean squared reconstruction error of the left element,
* contrastive: pulls same-class embedding pairs together and pushes
  cross-class pairs apart up to a margin,
* partial contrastive: an unsquared hinge on the cross-class embedding
  distance.

The anomaly score of a sample is its squared reconstruction error plus
the mean embedding distance to a stored set of normal reference
embeddings.  Training with an empty anomaly set degenerates to a plain
autoencoder (reconstruction loss only), which doubles as the FF-AE
baseline scored by reconstruction error alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from twinguard.neuralcore import (
    DenseNet,
    TrainConfig,
    backward,
    build_net,
    forward,
    load_net,
    make_dropout_masks,
    save_net,
    train_loop,
)

DEFAULT_MARGIN = 1.0
DEFAULT_N_REFERENCE = 256

# labeled-anomaly augmentation: synthetic anomalies are affine mixes of
# labeled pairs closer than this radius (standardized units), thickened
# with Gaussian noise; mixes may extrapolate slightly beyond the pair
AUGMENT_PAIR_RADIUS = 3.0
AUGMENT_MIX_RANGE = (-0.5, 1.5)


@dataclass(frozen=True)
class SaeConfig:
    """Architecture + pair-construction settings.

    Defaults are the winning Siamese configuration (hidden 128-64-32-16,
    relu, 2-D embedding, batch 128, lr 1e-3); `ffae_config()` returns the
    plain-autoencoder counterpart (64-32-16, tanh, 3-D embedding).
    """

    hidden: tuple = (128, 64, 32, 16)
    embedding_dim: int = 2
    activation: str = "relu"
    margin: float = DEFAULT_MARGIN
    n_reference: int = DEFAULT_N_REFERENCE
    n_pairs: int = 16_384
    anomaly_pair_fraction: float = 0.5
    validation_fraction: float = 0.2
    n_restarts: int = 1
    n_augment: int = 0
    augment_jitter_sd: float = 0.15
    train: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=128, learning_rate=1e-3, max_epochs=150))

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if not 0.0 <= self.anomaly_pair_fraction <= 1.0:
            raise ValueError("anomaly_pair_fraction must be in [0, 1]")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        if self.n_augment < 0:
            raise ValueError("n_augment must be nonnegative")
        if self.augment_jitter_sd < 0:
            raise ValueError("augment_jitter_sd must be nonnegative")


def ffae_config(seed: int = 0, **overrides) -> SaeConfig:
    train = TrainConfig(batch_size=64, learning_rate=1e-4, max_epochs=150, seed=seed)
    return SaeConfig(
        hidden=(64, 32, 16), embedding_dim=3, activation="tanh", train=train, **overrides
    )


def sae_config(seed: int = 0, **overrides) -> SaeConfig:
    train = TrainConfig(batch_size=128, learning_rate=1e-3, max_epochs=150,
                        early_stopping_patience=20, seed=seed)
    overrides.setdefault("n_restarts", 3)
    overrides.setdefault("n_augment", 500)
    return SaeConfig(train=train, **overrides)


@dataclass
class PairBatch:
    left: np.ndarray  # always normal (twin) samples
    right: np.ndarray  # normal or anomalous
    y: np.ndarray  # 0 = right normal, 1 = right anomalous

    def __post_init__(self):
        if not (len(self.left) == len(self.right) == len(self.y)):
            raise ValueError("pair arrays must share length")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "PairBatch":
        return PairBatch(self.left[idx], self.right[idx], self.y[idx])


def make_pairs(normals, anomalies, n_pairs: int, anomaly_pair_fraction: float, seed: int) -> PairBatch:
    """Random pairs: left uniform from normals; right from anomalies with
    probability `anomaly_pair_fraction`, otherwise from normals."""
    normals = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    if len(normals) == 0:
        raise ValueError("empty normal set")
    anomalies = (
        np.atleast_2d(np.asarray(anomalies, dtype=np.float64))
        if anomalies is not None and len(anomalies)
        else None
    )
    rng = np.random.default_rng(seed)
    left = normals[rng.integers(len(normals), size=n_pairs)]
    if anomalies is None or anomaly_pair_fraction == 0.0:
        y = np.zeros(n_pairs, dtype=np.int8)
    else:
        y = (rng.random(n_pairs) < anomaly_pair_fraction).astype(np.int8)
    right = np.empty_like(left)
    normal_rows = y == 0
    right[normal_rows] = normals[rng.integers(len(normals), size=int(normal_rows.sum()))]
    if (~normal_rows).any():
        right[~normal_rows] = anomalies[rng.integers(len(anomalies), size=int((~normal_rows).sum()))]
    return PairBatch(left=left, right=right, y=y)


def augment_anomalies(anomalies, n_augment: int, jitter_sd: float, rng) -> np.ndarray:
    """Expand a small labeled anomaly set with synthetic neighbors.

    Synthetic samples are affine combinations of labeled pairs that lie
    within AUGMENT_PAIR_RADIUS of each other (so distinct anomaly modes
    are never blended), plus Gaussian jitter of scale `jitter_sd`.  With
    a handful of labels this fills in the span of each anomaly mode,
    which is what lets the contrastive loss generalize beyond the exact
    labeled windows.  Returns the labels followed by the synthetics.
    """
    anomalies = np.atleast_2d(np.asarray(anomalies, dtype=np.float64))
    if n_augment == 0 or len(anomalies) == 0:
        return anomalies
    if len(anomalies) >= 2:
        dist = np.sqrt(((anomalies[:, None] - anomalies[None]) ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        pairs = np.argwhere(dist < AUGMENT_PAIR_RADIUS)
    else:
        pairs = np.empty((0, 2), dtype=int)
    if len(pairs):
        pick = rng.integers(len(pairs), size=n_augment)
        lo, hi = AUGMENT_MIX_RANGE
        lam = rng.uniform(lo, hi, size=(n_augment, 1))
        a, b = anomalies[pairs[pick, 0]], anomalies[pairs[pick, 1]]
        synth = a + lam * (b - a)
    else:  # isolated labels: fall back to plain jittered copies
        synth = anomalies[rng.integers(len(anomalies), size=n_augment)]
    if jitter_sd > 0:
        synth = synth + rng.normal(0.0, jitter_sd, synth.shape)
    return np.vstack([anomalies, synth])


@dataclass
class SiameseModel:
    encoder: DenseNet
    decoder: DenseNet
    margin: float
    reference_embeddings: np.ndarray | None
    config: SaeConfig
    kind: str = "sae"  # "sae" | "ffae"

    def __post_init__(self):
        if self.encoder.output_dim != self.decoder.input_dim:
            raise ValueError("encoder output width must match decoder input width")
        if self.margin <= 0:
            raise ValueError("margin must be positive")

    def encode(self, X) -> np.ndarray:
        return forward(self.encoder, X)[0]

    def reconstruct(self, X) -> np.ndarray:
        return forward(self.decoder, self.encode(X))[0]


# ------------------------------------------------------------------ losses
def _embedding_distance(enc_left, enc_right):
    delta = enc_left - enc_right
    return delta, np.sqrt(np.einsum("ij,ij->i", delta, delta))


def loss_rec(pairs: PairBatch, model: SiameseModel) -> float:
    """Mean squared reconstruction error of the left (normal) elements."""
    diff = model.reconstruct(pairs.left) - pairs.left
    return float(np.mean(np.sum(diff * diff, axis=1)))


def loss_cl(pairs: PairBatch, model: SiameseModel, margin: float | None = None) -> float:
    """Contrastive loss on embedding distances.

    (1/2N) sum of d^2 for same-class pairs and hinge(margin - d)^2 for
    cross-class pairs.
    """
    m = model.margin if margin is None else margin
    _, d = _embedding_distance(model.encode(pairs.left), model.encode(pairs.right))
    same = pairs.y == 0
    terms = np.where(same, d * d, np.maximum(0.0, m - d) ** 2)
    return float(terms.sum() / (2 * len(pairs)))


def loss_pcl(pairs: PairBatch, model: SiameseModel, margin: float | None = None) -> float:
    """Unsquared hinge on cross-class embedding distances only."""
    m = model.margin if margin is None else margin
    _, d = _embedding_distance(model.encode(pairs.left), model.encode(pairs.right))
    terms = np.where(pairs.y == 1, np.maximum(0.0, m - d), 0.0)
    return float(terms.sum() / (2 * len(pairs)))


def loss_total(pairs: PairBatch, model: SiameseModel) -> float:
    return loss_rec(pairs, model) + loss_cl(pairs, model) + loss_pcl(pairs, model)


LOSS_TERMS = ("rec", "cl", "pcl")


def siamese_loss_and_grads(encoder, decoder, pairs: PairBatch, margin: float,
                           contrastive: bool = True, dropout_rate: float = 0.0,
                           rng=None, terms=None):
    """Loss and exact gradients for one pair batch.

    Returns (loss, grads) with grads matching encoder.parameters() +
    decoder.parameters().  With contrastive=False only the reconstruction
    path runs (plain-autoencoder mode).  `terms` selects a subset of
    ("rec", "cl", "pcl"); by default all active terms are summed.
    """
    if terms is None:
        terms = LOSS_TERMS if contrastive else ("rec",)
    unknown = set(terms) - set(LOSS_TERMS)
    if unknown:
        raise ValueError(f"unknown loss terms: {sorted(unknown)}")
    n = len(pairs)
    enc_masks = dec_masks = None
    if dropout_rate > 0.0 and rng is not None:
        enc_masks = make_dropout_masks(encoder, n, dropout_rate, rng)
        dec_masks = make_dropout_masks(decoder, n, dropout_rate, rng)
    h_left, cache_enc_left = forward(encoder, pairs.left, enc_masks)
    recon, cache_dec = forward(decoder, h_left, dec_masks)

    diff = recon - pairs.left
    loss = 0.0
    grad_recon = np.zeros_like(recon)
    if "rec" in terms:
        loss += float(np.mean(np.sum(diff * diff, axis=1)))
        grad_recon = 2.0 * diff / n

    grad_h_left = np.zeros_like(h_left)
    enc_grads_right = None
    if contrastive and (("cl" in terms) or ("pcl" in terms)):
        # fresh masks for the right branch keep the two passes independent
        right_masks = None
        if dropout_rate > 0.0 and rng is not None:
            right_masks = make_dropout_masks(encoder, n, dropout_rate, rng)
        h_right, cache_enc_right = forward(encoder, pairs.right, right_masks)
        delta, d = _embedding_distance(h_left, h_right)
        same = pairs.y == 0
        hinge = (~same) & (d < margin) & (d > 0.0)

        grad_pairwise = np.zeros_like(delta)
        if "cl" in terms:
            loss += float(
                (np.where(same, d * d, np.maximum(0.0, margin - d) ** 2)).sum() / (2 * n)
            )
            grad_pairwise[same] = delta[same] / n
        if "pcl" in terms:
            loss += float(np.where(~same, np.maximum(0.0, margin - d), 0.0).sum() / (2 * n))
        if hinge.any():
            # d/dh of (1/2N) hinge^2 and (1/2N) hinge, both via dd/dh = delta/d
            coef = np.zeros(int(hinge.sum()))
            if "cl" in terms:
                coef += -(margin - d[hinge]) / n
            if "pcl" in terms:
                coef += -1.0 / (2 * n)
            grad_pairwise[hinge] = (coef / d[hinge])[:, None] * delta[hinge]
        grad_h_left = grad_pairwise
        enc_grads_right, _ = backward(encoder, cache_enc_right, -grad_pairwise)

    dec_grads, grad_h_from_dec = backward(decoder, cache_dec, grad_recon)
    enc_grads, _ = backward(encoder, cache_enc_left, grad_h_from_dec + grad_h_left)
    if enc_grads_right is not None:
        enc_grads = [a + b for a, b in zip(enc_grads, enc_grads_right)]
    return loss, enc_grads + dec_grads


# ------------------------------------------------------------------ training
def _build_autoencoder(n_features: int, config: SaeConfig, rng):
    enc_widths = (n_features, *config.hidden, config.embedding_dim)
    dec_widths = tuple(reversed(enc_widths))
    n_hidden = len(config.hidden)
    enc_acts = (config.activation,) * n_hidden + ("linear",)
    dec_acts = (config.activation,) * n_hidden + ("linear",)
    return build_net(enc_widths, enc_acts, rng), build_net(dec_widths, dec_acts, rng)


def train_sae(normals, anomalies, config: SaeConfig | None = None) -> SiameseModel:
    """Train the Siamese autoencoder on twin normals plus a (possibly
    tiny) labeled anomaly set.

    With `anomalies` empty or None the model degenerates to the FF-AE
    baseline: it trains on single normal samples with the reconstruction
    loss only, bit-identical to a plain autoencoder.

    With `config.n_augment > 0` the labeled anomaly set is expanded with
    synthetic neighbors (see `augment_anomalies`) before pairing, so a
    handful of labels can pin down a whole anomaly mode.

    With `config.n_restarts > 1` the run is repeated from independent
    weight initializations (the data split, pair sampling, and reference
    selection stay fixed) and the restart with the lowest validation
    loss wins; the contrastive embedding occasionally lands in a poor
    basin, and restarts make the toolkit default robust to that.
    """
    config = config or sae_config()
    normals = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    if len(normals) == 0:
        raise ValueError("empty normal set")
    anomalies = (
        np.atleast_2d(np.asarray(anomalies, dtype=np.float64))
        if anomalies is not None and len(anomalies)
        else None
    )
    siamese = anomalies is not None
    if siamese and config.n_augment > 0:
        anomalies = augment_anomalies(
            anomalies, config.n_augment, config.augment_jitter_sd,
            np.random.default_rng(config.train.seed + 6),
        )

    split_rng = np.random.default_rng(config.train.seed + 2)
    order = split_rng.permutation(len(normals))
    n_val = max(1, int(config.validation_fraction * len(normals)))
    val_normals = normals[order[:n_val]]
    train_normals = normals[order[n_val:]] if len(normals) > n_val else normals

    if siamese:
        train_pairs = make_pairs(
            train_normals, anomalies, config.n_pairs,
            config.anomaly_pair_fraction, seed=config.train.seed + 3,
        )
        val_pairs = make_pairs(
            val_normals, anomalies, max(256, config.n_pairs // 5),
            config.anomaly_pair_fraction, seed=config.train.seed + 4,
        )
    else:
        n = len(train_normals)
        train_pairs = PairBatch(train_normals, train_normals, np.zeros(n, dtype=np.int8))
        val_pairs = PairBatch(val_normals, val_normals, np.zeros(len(val_normals), dtype=np.int8))
    n_train = len(train_pairs)

    def fit_once(restart: int):
        init_rng = np.random.default_rng(config.train.seed + 7919 * restart)
        encoder, decoder = _build_autoencoder(normals.shape[1], config, init_rng)
        dropout_rng = np.random.default_rng(config.train.seed + 1 + 7919 * restart)

        def batch_fn(idx):
            return siamese_loss_and_grads(
                encoder, decoder, train_pairs.subset(idx), config.margin,
                contrastive=siamese, dropout_rate=config.train.dropout, rng=dropout_rng,
            )

        def val_loss_fn():
            loss, _ = siamese_loss_and_grads(
                encoder, decoder, val_pairs, config.margin, contrastive=siamese
            )
            return loss

        return train_loop([encoder, decoder], n_train, batch_fn, val_loss_fn, config.train)

    best = None
    for restart in range(config.n_restarts):
        (encoder, decoder), history = fit_once(restart)
        best_val = history.val_loss[history.best_epoch]
        if best is None or best_val < best[0]:  # strict <: earliest restart wins ties
            best = (best_val, encoder, decoder, history)
    _, encoder, decoder, history = best

    ref_rng = np.random.default_rng(config.train.seed + 5)
    n_ref = min(config.n_reference, len(train_normals))
    ref_idx = ref_rng.choice(len(train_normals), size=n_ref, replace=False)
    model = SiameseModel(
        encoder=encoder,
        decoder=decoder,
        margin=config.margin,
        reference_embeddings=None,
        config=config,
        kind="sae" if siamese else "ffae",
    )
    model.reference_embeddings = model.encode(train_normals[ref_idx])
    model.history = history
    return model


def train_ffae(normals, config: SaeConfig | None = None) -> SiameseModel:
    """Plain feedforward autoencoder baseline (reconstruction loss only)."""
    return train_sae(normals, None, config or ffae_config())


# ------------------------------------------------------------------ scoring
def reconstruction_error(model: SiameseModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    diff = model.reconstruct(X) - X
    return np.einsum("ij,ij->i", diff, diff)


def anomaly_score_sae(model: SiameseModel, X) -> np.ndarray:
    """Squared reconstruction error plus mean Euclidean embedding distance
    to the stored normal references."""
    if model.reference_embeddings is None or len(model.reference_embeddings) == 0:
        raise ValueError("model has no reference embeddings (untrained?)")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    h = model.encode(X)
    recon = reconstruction_error(model, X)
    diff = h[:, None, :] - model.reference_embeddings[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return recon + dist.mean(axis=1)


def model_score(model: SiameseModel, X) -> np.ndarray:
    """Scoring rule per model kind: full score for the Siamese model,
    reconstruction error only for the FF-AE baseline."""
    if model.kind == "ffae":
        return reconstruction_error(model, X)
    return anomaly_score_sae(model, X)


# ------------------------------------------------------------------ checkpoints
def save_model(model: SiameseModel, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_net(model.encoder, directory / "encoder.json", directory / "encoder.bin")
    save_net(model.decoder, directory / "decoder.json", directory / "decoder.bin")
    refs = model.reference_embeddings
    np.ascontiguousarray(refs, dtype="<f8").tofile(directory / "references.bin")
    manifest = {
        "kind": model.kind,
        "margin": model.margin,
        "n_reference": 0 if refs is None else len(refs),
        "embedding_dim": model.encoder.output_dim,
    }
    (directory / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_model(directory) -> SiameseModel:
    directory = Path(directory)
    manifest = json.loads((directory / "model.json").read_text())
    encoder = load_net(directory / "encoder.json", directory / "encoder.bin")
    decoder = load_net(directory / "decoder.json", directory / "decoder.bin")
    refs = np.fromfile(directory / "references.bin", dtype="<f8").reshape(
        manifest["n_reference"], manifest["embedding_dim"]
    )
    model = SiameseModel(
        encoder=encoder,
        decoder=decoder,
        margin=manifest["margin"],
        reference_embeddings=refs.astype(np.float64),
        config=SaeConfig(),
        kind=manifest["kind"],
    )
    return model
