"""Synthetic CHP plant data: a clean "digital twin" stream and a noisy
"real plant" stream with labeled anomalies.

The plant model is a hysteresis-controlled combined heat and power unit:
the machine switches on when the ambient temperature drops below
``on_threshold_degC`` and off once it climbs above ``off_threshold_degC``.
Power channels are rated values while on, energy channels are running
integrals of the recorded power, and the water-loop temperatures follow
the machine state.  The real stream shares the twin's deterministic
dynamics but adds per-channel systematic bias, its own sensor noise and
injected anomaly events.

Bias convention: additive for temperature channels (Ta, T_Flow,
T_Return), relative (fractional) for power/flux channels (P_Th, P_El,
Flux) so that an off machine still reads zero.  T_Diff is always derived
as T_Flow - T_Return and ignores any bias/noise entry of its own.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

CHANNELS = ("Ta", "P_Th", "E_Th", "P_El", "E_El", "Flux", "T_Flow", "T_Return", "T_Diff")

FLATLINE = "flatline"
SEMANTIC = "semantic"

MINUTES_PER_YEAR = 525_600
MINUTES_PER_DAY = 1_440

# fixed ambient-temperature model: seasonal + diurnal sinusoid (degC)
TA_MEAN = 10.0
TA_SEASONAL_AMP = 9.0
TA_DIURNAL_AMP = 4.0

FLUX_RATED = 2.0  # m^3/h while running
T_FLOW_ON, T_RETURN_ON = 75.0, 60.0
T_LOOP_OFF = 30.0  # idle loop temperature


@dataclass(frozen=True)
class AnomalyEvent:
    kind: str  # FLATLINE or SEMANTIC
    start_index: int
    length_minutes: int
    affected_channels: tuple = CHANNELS
    # per-event production factor for SEMANTIC events; None falls back to
    # the config-wide semantic_power_factor
    power_factor: float | None = None

    def __post_init__(self):
        if self.kind not in (FLATLINE, SEMANTIC):
            raise ValueError(f"unknown anomaly kind {self.kind!r}")
        if self.length_minutes < 1:
            raise ValueError("anomaly length must be >= 1 minute")
        if self.start_index < 0:
            raise ValueError("anomaly start_index must be >= 0")
        if self.power_factor is not None and not 0.0 <= self.power_factor < 1.0:
            raise ValueError("power_factor must be in [0, 1)")
        for ch in self.affected_channels:
            if ch not in CHANNELS:
                raise ValueError(f"unknown channel {ch!r}")

    @property
    def stop_index(self) -> int:
        return self.start_index + self.length_minutes


@dataclass(frozen=True)
class PlantConfig:
    seed: int = 0
    start_time: str = "2018-01-01T00:00"
    duration_minutes: int = 20_160  # two weeks by default
    sample_period_minutes: int = 1
    real_duration_minutes: int | None = None  # defaults to duration_minutes
    on_threshold_degC: float = 8.0
    off_threshold_degC: float = 12.0
    rated_thermal_kW: float = 50.0
    rated_electrical_kW: float = 25.0
    sensor_noise_sd: dict = field(default_factory=dict)
    twin_bias: dict = field(default_factory=dict)
    anomaly_spec: tuple = ()
    # 0 -> semantic events mimic a full outage (machine reads "off");
    # in (0, 1) -> the machine keeps running but produces at this fraction
    # of its rated power, a much subtler failure
    semantic_power_factor: float = 0.0

    def __post_init__(self):
        if self.duration_minutes <= 0:
            raise ValueError("duration_minutes must be positive")
        if self.sample_period_minutes != 1:
            raise ValueError("only 1-minute sampling is supported")
        if self.on_threshold_degC > self.off_threshold_degC:
            raise ValueError("hysteresis requires on_threshold <= off_threshold")
        for ch, sd in self.sensor_noise_sd.items():
            if ch not in CHANNELS:
                raise ValueError(f"unknown channel {ch!r} in sensor_noise_sd")
            if sd < 0:
                raise ValueError("sensor noise sd must be >= 0")
        for ch in self.twin_bias:
            if ch not in CHANNELS:
                raise ValueError(f"unknown channel {ch!r} in twin_bias")
        if not 0.0 <= self.semantic_power_factor < 1.0:
            raise ValueError("semantic_power_factor must be in [0, 1)")
        n_real = self.real_minutes
        events = sorted(self.anomaly_spec, key=lambda e: e.start_index)
        for ev in events:
            if ev.stop_index > n_real:
                raise ValueError("anomaly event extends past end of real stream")
        for a, b in zip(events, events[1:]):
            if b.start_index < a.stop_index:
                raise ValueError("anomaly events must not overlap")

    @property
    def real_minutes(self) -> int:
        return self.real_duration_minutes or self.duration_minutes

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "start_time": self.start_time,
            "duration_minutes": self.duration_minutes,
            "sample_period_minutes": self.sample_period_minutes,
            "real_duration_minutes": self.real_duration_minutes,
            "on_threshold_degC": self.on_threshold_degC,
            "off_threshold_degC": self.off_threshold_degC,
            "rated_thermal_kW": self.rated_thermal_kW,
            "rated_electrical_kW": self.rated_electrical_kW,
            "sensor_noise_sd": self.sensor_noise_sd,
            "twin_bias": self.twin_bias,
            "semantic_power_factor": self.semantic_power_factor,
            "anomaly_spec": [
                {
                    "kind": ev.kind,
                    "start_index": ev.start_index,
                    "length_minutes": ev.length_minutes,
                    "affected_channels": list(ev.affected_channels),
                    "power_factor": ev.power_factor,
                }
                for ev in self.anomaly_spec
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PlantConfig":
        doc = json.loads(text)
        events = tuple(
            AnomalyEvent(
                kind=e["kind"],
                start_index=e["start_index"],
                length_minutes=e["length_minutes"],
                affected_channels=tuple(e["affected_channels"]),
                power_factor=e.get("power_factor"),
            )
            for e in doc.pop("anomaly_spec", [])
        )
        return cls(anomaly_spec=events, **doc)


@dataclass
class TimeSeriesFrame:
    timestamps: np.ndarray  # datetime64[m]
    channels: dict  # name -> float64 array
    labels: np.ndarray  # int8, 0 normal / 1 anomalous
    source: str  # "twin" | "real"

    def __post_init__(self):
        n = len(self.timestamps)
        for name, values in self.channels.items():
            if len(values) != n:
                raise ValueError(f"channel {name} length mismatch")
        if len(self.labels) != n:
            raise ValueError("labels length mismatch")

    def __len__(self) -> int:
        return len(self.timestamps)

    def matrix(self, variables=CHANNELS) -> np.ndarray:
        return np.column_stack([self.channels[v] for v in variables])

    def to_csv(self, path=None) -> str | None:
        buf = io.StringIO()
        buf.write("timestamp," + ",".join(CHANNELS) + ",label\n")
        stamps = np.datetime_as_string(self.timestamps, unit="m")
        cols = [self.channels[c] for c in CHANNELS]
        for i in range(len(self)):
            row = ",".join(f"{col[i]:.10g}" for col in cols)
            buf.write(f"{stamps[i]},{row},{self.labels[i]}\n")
        text = buf.getvalue()
        if path is None:
            return text
        Path(path).write_text(text)
        return None

    @classmethod
    def from_csv(cls, path_or_text, source="real") -> "TimeSeriesFrame":
        text = (
            path_or_text
            if "\n" in str(path_or_text)
            else Path(path_or_text).read_text()
        )
        lines = text.strip().split("\n")
        header = lines[0].split(",")
        expected = ["timestamp", *CHANNELS, "label"]
        if header != expected:
            raise ValueError("unexpected CSV header")
        stamps, rows, labels = [], [], []
        for line in lines[1:]:
            parts = line.split(",")
            stamps.append(np.datetime64(parts[0], "m"))
            rows.append([float(v) for v in parts[1:-1]])
            labels.append(int(parts[-1]))
        data = np.asarray(rows, dtype=np.float64)
        return cls(
            timestamps=np.asarray(stamps, dtype="datetime64[m]"),
            channels={c: data[:, i].copy() for i, c in enumerate(CHANNELS)},
            labels=np.asarray(labels, dtype=np.int8),
            source=source,
        )


# --------------------------------------------------------------- simulation
def ambient_seasonal(config: PlantConfig, n_minutes: int) -> np.ndarray:
    """Deterministic ambient-temperature curve (no noise)."""
    start = np.datetime64(config.start_time, "m")
    year_start = np.datetime64(str(start.astype("datetime64[Y]")), "m")
    offset = int((start - year_start) / np.timedelta64(1, "m"))
    moy = offset + np.arange(n_minutes)
    seasonal = -TA_SEASONAL_AMP * np.cos(2 * np.pi * moy / MINUTES_PER_YEAR)
    diurnal = -TA_DIURNAL_AMP * np.cos(2 * np.pi * (moy % MINUTES_PER_DAY) / MINUTES_PER_DAY)
    return TA_MEAN + seasonal + diurnal


def hysteresis_state(ta: np.ndarray, on_threshold: float, off_threshold: float) -> np.ndarray:
    """Machine on/off per sample: on below on_threshold, off above
    off_threshold, previous state inside the band."""
    decided = np.where(ta < on_threshold, 1, np.where(ta > off_threshold, 0, -1))
    known = decided >= 0
    idx = np.where(known, np.arange(len(ta)), -1)
    last = np.maximum.accumulate(idx)
    initial = 1 if ta[0] <= 0.5 * (on_threshold + off_threshold) else 0
    state = np.where(last >= 0, decided[np.maximum(last, 0)], initial)
    return state.astype(np.int8)


def _noise(rng, sd_map, channel, n):
    sd = sd_map.get(channel, 0.0)
    if sd == 0.0:
        return np.zeros(n)
    return rng.normal(0.0, sd, size=n)


def _simulate(config: PlantConfig, n_minutes: int, rng, bias: dict):
    """Recorded channel dict for one stream (twin or real)."""
    add_bias = lambda ch: bias.get(ch, 0.0)
    rel_bias = lambda ch: 1.0 + bias.get(ch, 0.0)
    sd = config.sensor_noise_sd

    ta = ambient_seasonal(config, n_minutes) + add_bias("Ta") + _noise(rng, sd, "Ta", n_minutes)
    state = hysteresis_state(ta, config.on_threshold_degC, config.off_threshold_degC)
    on = state == 1

    def power_channel(rated, name):
        p = np.zeros(n_minutes)
        p[on] = rated * rel_bias(name) + _noise(rng, sd, name, int(on.sum()))
        return np.maximum(p, 0.0)

    p_th = power_channel(config.rated_thermal_kW, "P_Th")
    p_el = power_channel(config.rated_electrical_kW, "P_El")
    flux = power_channel(FLUX_RATED, "Flux")

    t_flow = np.where(on, T_FLOW_ON, T_LOOP_OFF) + add_bias("T_Flow")
    t_flow = t_flow + _noise(rng, sd, "T_Flow", n_minutes)
    t_return = np.where(on, T_RETURN_ON, T_LOOP_OFF) + add_bias("T_Return")
    t_return = t_return + _noise(rng, sd, "T_Return", n_minutes)

    return {
        "Ta": ta,
        "P_Th": p_th,
        "P_El": p_el,
        "Flux": flux,
        "T_Flow": t_flow,
        "T_Return": t_return,
    }


def _finalize(channels: dict) -> dict:
    """Derive integral and difference channels from the recorded ones."""
    channels["E_Th"] = np.cumsum(channels["P_Th"]) / 60.0
    channels["E_El"] = np.cumsum(channels["P_El"]) / 60.0
    channels["T_Diff"] = channels["T_Flow"] - channels["T_Return"]
    return {c: channels[c] for c in CHANNELS}


def _timestamps(config: PlantConfig, n_minutes: int) -> np.ndarray:
    start = np.datetime64(config.start_time, "m")
    return start + np.arange(n_minutes).astype("timedelta64[m]")


def generate_twin(config: PlantConfig) -> TimeSeriesFrame:
    """Clean normal-operation stream; deterministic per (config, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    channels = _finalize(_simulate(config, config.duration_minutes, rng, {}))
    return TimeSeriesFrame(
        timestamps=_timestamps(config, config.duration_minutes),
        channels=channels,
        labels=np.zeros(config.duration_minutes, dtype=np.int8),
        source="twin",
    )


def generate_real(config: PlantConfig, twin: TimeSeriesFrame) -> TimeSeriesFrame:
    """Real-plant stream: twin dynamics + bias + fresh noise + anomalies."""
    if twin.source != "twin" or len(twin) != config.duration_minutes:
        raise ValueError("twin frame does not match config")
    n = config.real_minutes
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    channels = _simulate(config, n, rng, config.twin_bias)
    labels = np.zeros(n, dtype=np.int8)

    # semantic inconsistency: either a silent full outage (every channel
    # reads like a valid "off" state despite the cold ambient) or, with
    # semantic_power_factor set, a subtler partial production loss
    sd = config.sensor_noise_sd
    for ev in config.anomaly_spec:
        if ev.kind == SEMANTIC:
            sl = slice(ev.start_index, ev.stop_index)
            factor = (
                ev.power_factor
                if ev.power_factor is not None
                else config.semantic_power_factor
            )
            if factor > 0.0:
                for ch in ("P_Th", "P_El", "Flux"):
                    channels[ch][sl] = channels[ch][sl] * factor
            else:
                for ch in ("P_Th", "P_El", "Flux"):
                    channels[ch][sl] = 0.0
                m = ev.length_minutes
                channels["T_Flow"][sl] = T_LOOP_OFF + _noise(rng, sd, "T_Flow", m)
                channels["T_Return"][sl] = T_LOOP_OFF + _noise(rng, sd, "T_Return", m)
            labels[sl] = 1

    channels = _finalize(channels)

    # flat lines: sensors freeze at the last pre-event reading
    for ev in config.anomaly_spec:
        if ev.kind == FLATLINE:
            sl = slice(ev.start_index, ev.stop_index)
            hold = max(ev.start_index - 1, 0)
            for ch in ev.affected_channels:
                channels[ch][sl] = channels[ch][hold]
            labels[sl] = 1

    return TimeSeriesFrame(
        timestamps=_timestamps(config, n),
        channels=channels,
        labels=labels,
        source="real",
    )


# ---------------------------------------------------------------- benchmark
#: fraction of real-stream samples that is anomalous in the benchmark
BENCHMARK_ANOMALY_FRACTION = 0.242
BENCHMARK_N_EVENTS = 20
#: benchmark semantic events are partial production losses, not outages;
#: a coherent severity across events keeps the anomaly class compact, the
#: regime in which a handful of labels carries real information
BENCHMARK_SEMANTIC_POWER_FACTOR = 0.95
BENCHMARK_SEMANTIC_FACTOR_RANGE = (0.95, 0.95)

BENCHMARK_NOISE_SD = {
    "Ta": 0.3,
    "P_Th": 1.0,
    "P_El": 0.5,
    "Flux": 0.05,
    "T_Flow": 0.5,
    "T_Return": 0.5,
}

# real-vs-twin systematic offsets; power biases are relative and sized for
# an energy-production mismatch of about 2.2%
BENCHMARK_BIAS = {
    "Ta": 0.8,
    "P_Th": 0.022,
    "P_El": 0.022,
    "Flux": 0.01,
    "T_Flow": 1.0,
    "T_Return": 0.5,
}


def _benchmark_events(rng, n_real, seasonal_ta, on_threshold):
    """Non-overlapping anomaly events totalling the target sample fraction.

    Half of the events are full sensor freezes (flat lines on every
    channel), half are semantic inconsistencies placed in cold periods
    where the machine ought to run.
    """
    total_target = round(BENCHMARK_ANOMALY_FRACTION * n_real)
    raw = rng.uniform(0.5, 1.5, size=BENCHMARK_N_EVENTS)
    lengths = np.maximum((raw / raw.sum() * total_target).astype(int), 1)
    lengths[-1] += total_target - int(lengths.sum())

    cold = seasonal_ta < on_threshold - 1.0
    taken = np.zeros(n_real, dtype=bool)

    def place(length, require_cold):
        for _ in range(10_000):
            start = int(rng.integers(1, n_real - length))
            span = slice(start, start + length)
            if taken[span].any():
                continue
            if require_cold and not cold[span].mean() > 0.8:
                continue
            taken[span] = True
            return start
        raise RuntimeError("could not place benchmark anomaly events")

    lo, hi = BENCHMARK_SEMANTIC_FACTOR_RANGE
    events = []
    for i, length in enumerate(lengths):
        if i % 2 == 0:
            start = place(int(length), require_cold=True)
            factor = float(rng.uniform(lo, hi))
            events.append(AnomalyEvent(SEMANTIC, start, int(length), power_factor=factor))
        else:
            start = place(int(length), require_cold=False)
            events.append(AnomalyEvent(FLATLINE, start, int(length), CHANNELS))
    return tuple(sorted(events, key=lambda e: e.start_index))


def benchmark_config(seed: int = 0) -> PlantConfig:
    """Frozen benchmark: one simulated twin year plus a 457-day real stream
    whose featurized datasets land near the reference sample counts
    (about 8.7k twin windows, 11k real windows, 24.2% anomalous samples)."""
    duration = MINUTES_PER_YEAR
    real_duration = 658_080
    base = PlantConfig(
        seed=seed,
        start_time="2018-01-01T00:00",
        duration_minutes=duration,
        real_duration_minutes=real_duration,
        sensor_noise_sd=dict(BENCHMARK_NOISE_SD),
        twin_bias=dict(BENCHMARK_BIAS),
        semantic_power_factor=BENCHMARK_SEMANTIC_POWER_FACTOR,
    )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    events = _benchmark_events(
        rng, real_duration, ambient_seasonal(base, real_duration), base.on_threshold_degC
    )
    return replace(base, anomaly_spec=events)
