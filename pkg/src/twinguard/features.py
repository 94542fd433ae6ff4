"""Sliding-window feature extraction and z-score standardization.

Feature order is variables-major, statistics-minor: for variables
(Ta, P_Th) and statistics (mean, std) the columns are
Ta_mean, Ta_std, P_Th_mean, P_Th_std.  A window is labeled anomalous as
soon as it contains one anomalous sample.  The standard deviation is the
population (1/N) convention everywhere, and skewness/kurtosis of a
constant window are defined as 0 to keep matrices finite.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from twinguard.synthgen import CHANNELS, TimeSeriesFrame

STATISTICS = ("mean", "std", "skewness", "kurtosis", "sum", "rms")

#: channels holding cumulative meters; first-differenced per window before
#: statistics so z-scores are not swamped by the running total
CUMULATIVE_CHANNELS = ("E_Th", "E_El")

SEASONS = ("winter", "spring", "summer", "fall")

DEFAULT_VARIABLES = ("Ta", "P_Th", "P_El")
DEFAULT_STATISTICS = ("mean", "std")


@dataclass(frozen=True)
class FeatureConfig:
    window_length_minutes: int = 1440
    window_stride_minutes: int = 60
    variables: tuple = DEFAULT_VARIABLES
    statistics: tuple = DEFAULT_STATISTICS
    include_time_features: bool = False
    include_contextual_features: bool = False

    def __post_init__(self):
        if not self.window_length_minutes >= self.window_stride_minutes >= 1:
            raise ValueError("need window_length >= stride >= 1")
        if not self.variables:
            raise ValueError("variables must be nonempty")
        if not self.statistics:
            raise ValueError("statistics must be nonempty")
        for v in self.variables:
            if v not in CHANNELS:
                raise ValueError(f"unknown variable {v!r}")
        for s in self.statistics:
            if s not in STATISTICS:
                raise ValueError(f"unknown statistic {s!r}")

    def to_json(self) -> str:
        doc = asdict(self)
        doc["variables"] = list(self.variables)
        doc["statistics"] = list(self.statistics)
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeatureConfig":
        doc = json.loads(text)
        doc["variables"] = tuple(doc["variables"])
        doc["statistics"] = tuple(doc["statistics"])
        return cls(**doc)


@dataclass
class Standardization:
    mean: np.ndarray
    sd: np.ndarray


@dataclass
class FeatureDataset:
    matrix: np.ndarray  # (n_windows, n_features)
    labels: np.ndarray  # (n_windows,) int8
    window_start_indices: np.ndarray
    feature_names: list
    standardization: Standardization | None = None

    def __post_init__(self):
        if len(self.labels) != len(self.matrix):
            raise ValueError("labels / matrix length mismatch")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("feature matrix contains NaN/Inf")

    def __len__(self) -> int:
        return len(self.matrix)

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def subset(self, indices) -> "FeatureDataset":
        return FeatureDataset(
            matrix=self.matrix[indices],
            labels=self.labels[indices],
            window_start_indices=self.window_start_indices[indices],
            feature_names=self.feature_names,
            standardization=self.standardization,
        )

    def to_csv(self, path=None) -> str | None:
        buf = io.StringIO()
        buf.write(",".join(self.feature_names) + ",label\n")
        for row, label in zip(self.matrix, self.labels):
            buf.write(",".join(f"{v:.12g}" for v in row) + f",{label}\n")
        text = buf.getvalue()
        if path is None:
            return text
        Path(path).write_text(text)
        return None

    @classmethod
    def from_csv(cls, path_or_text) -> "FeatureDataset":
        text = (
            path_or_text
            if "\n" in str(path_or_text)
            else Path(path_or_text).read_text()
        )
        lines = text.strip().split("\n")
        names = lines[0].split(",")[:-1]
        rows, labels = [], []
        for line in lines[1:]:
            parts = line.split(",")
            rows.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
        return cls(
            matrix=np.asarray(rows, dtype=np.float64),
            labels=np.asarray(labels, dtype=np.int8),
            window_start_indices=np.arange(len(rows)),
            feature_names=names,
        )


def _window_view(values: np.ndarray, length: int, stride: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(values, length)
    return view[::stride]


def _window_stat(windows: np.ndarray, stat: str) -> np.ndarray:
    if stat == "mean":
        return windows.mean(axis=1)
    if stat == "std":
        return windows.std(axis=1)  # population sd
    if stat == "sum":
        return windows.sum(axis=1)
    if stat == "rms":
        return np.sqrt(np.mean(windows * windows, axis=1))
    centered = windows - windows.mean(axis=1, keepdims=True)
    m2 = np.mean(centered**2, axis=1)
    safe = np.where(m2 > 0, m2, 1.0)
    if stat == "skewness":
        out = np.mean(centered**3, axis=1) / safe**1.5
    elif stat == "kurtosis":
        out = np.mean(centered**4, axis=1) / safe**2 - 3.0  # excess kurtosis
    else:
        raise ValueError(f"unknown statistic {stat!r}")
    return np.where(m2 > 0, out, 0.0)  # constant window -> 0


def n_windows(frame_length: int, window: int, stride: int) -> int:
    return (frame_length - window) // stride + 1


def extract_windows(frame: TimeSeriesFrame, config: FeatureConfig) -> FeatureDataset:
    """Unstandardized per-window statistics plus optional time/contextual
    features; window label = any in-window sample label."""
    length = config.window_length_minutes
    stride = config.window_stride_minutes
    if len(frame) < length:
        raise ValueError("frame shorter than one window")

    columns, names = [], []
    for var in config.variables:
        values = frame.channels[var]
        if var in CUMULATIVE_CHANNELS:
            values = np.diff(values, prepend=values[0])
        windows = _window_view(values, length, stride)
        for stat in config.statistics:
            columns.append(_window_stat(windows, stat))
            names.append(f"{var}_{stat}")

    label_windows = _window_view(frame.labels.astype(np.int8), length, stride)
    labels = (label_windows.max(axis=1) > 0).astype(np.int8)
    starts = np.arange(0, len(frame) - length + 1, stride)

    if config.include_time_features or config.include_contextual_features:
        extra, extra_names = encode_time_context(frame, config, starts)
        columns.extend(extra)
        names.extend(extra_names)

    return FeatureDataset(
        matrix=np.column_stack(columns).astype(np.float64),
        labels=labels,
        window_start_indices=starts,
        feature_names=names,
    )


def encode_time_context(frame: TimeSeriesFrame, config: FeatureConfig, starts=None):
    """Optional appended columns.

    Time features: one-hot working-day flag (2 cols) and season of year
    (4 cols), both from the window-start timestamp.  Contextual features:
    machine shutdown count (on->off transitions of the thermal power
    channel) and total working minutes within the window.
    """
    if starts is None:
        starts = np.arange(
            0,
            len(frame) - config.window_length_minutes + 1,
            config.window_stride_minutes,
        )
    columns, names = [], []
    if config.include_time_features:
        stamps = frame.timestamps[starts]
        day = stamps.astype("datetime64[D]")
        weekday = (day.astype(int) + 3) % 7  # 1970-01-01 was a Thursday
        working = (weekday < 5).astype(np.float64)
        columns.extend([working, 1.0 - working])
        names.extend(["time_working_day", "time_weekend"])
        month = stamps.astype("datetime64[M]").astype(int) % 12 + 1
        season_idx = (month % 12) // 3  # Dec-Feb=0, Mar-May=1, ...
        for i, season in enumerate(SEASONS):
            columns.append((season_idx == i).astype(np.float64))
            names.append(f"time_season_{season}")
    if config.include_contextual_features:
        on = (frame.channels["P_Th"] > 1e-9).astype(np.int8)
        shutdown = np.concatenate([[0], (np.diff(on) == -1).astype(np.int8)])
        length, stride = config.window_length_minutes, config.window_stride_minutes
        columns.append(_window_view(shutdown, length, stride).sum(axis=1).astype(np.float64))
        columns.append(_window_view(on, length, stride).sum(axis=1).astype(np.float64))
        names.extend(["ctx_shutdown_count", "ctx_working_minutes"])
    return columns, names


def fit_standardizer(dataset: FeatureDataset) -> Standardization:
    """Per-column mean and population sd from training data only.

    Zero-variance columns get sd = 1 and a warning so downstream z-scores
    stay finite.
    """
    mean = dataset.matrix.mean(axis=0)
    sd = dataset.matrix.std(axis=0)
    degenerate = sd == 0.0
    if degenerate.any():
        bad = [dataset.feature_names[i] for i in np.nonzero(degenerate)[0]]
        warnings.warn(f"zero-variance feature columns {bad}; sd set to 1")
        sd = np.where(degenerate, 1.0, sd)
    return Standardization(mean=mean, sd=sd)


def apply_standardizer(dataset: FeatureDataset, params: Standardization) -> FeatureDataset:
    """z = (x - mean) / sd columnwise; params must come from training data."""
    if dataset.matrix.shape[1] != len(params.mean):
        raise ValueError("column count does not match standardization params")
    return FeatureDataset(
        matrix=(dataset.matrix - params.mean) / params.sd,
        labels=dataset.labels,
        window_start_indices=dataset.window_start_indices,
        feature_names=dataset.feature_names,
        standardization=params,
    )


def invert_standardizer(dataset: FeatureDataset, params: Standardization) -> FeatureDataset:
    return FeatureDataset(
        matrix=dataset.matrix * params.sd + params.mean,
        labels=dataset.labels,
        window_start_indices=dataset.window_start_indices,
        feature_names=dataset.feature_names,
    )


def save_sidecar(path, config: FeatureConfig, params: Standardization | None):
    doc = {"feature_config": json.loads(config.to_json())}
    if params is not None:
        doc["standardization"] = {
            "mean": params.mean.tolist(),
            "sd": params.sd.tolist(),
        }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_sidecar(path):
    doc = json.loads(Path(path).read_text())
    config = FeatureConfig.from_json(json.dumps(doc["feature_config"]))
    params = None
    if "standardization" in doc:
        params = Standardization(
            mean=np.asarray(doc["standardization"]["mean"]),
            sd=np.asarray(doc["standardization"]["sd"]),
        )
    return config, params
