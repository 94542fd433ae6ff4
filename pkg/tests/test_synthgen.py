import numpy as np
import pytest

from twinguard.synthgen import (
    CHANNELS,
    FLATLINE,
    SEMANTIC,
    AnomalyEvent,
    PlantConfig,
    TimeSeriesFrame,
    ambient_seasonal,
    benchmark_config,
    generate_real,
    generate_twin,
    hysteresis_state,
)


def quiet_config(**kwargs):
    """Small noise-free config for exact checks."""
    defaults = dict(seed=7, duration_minutes=4320, sensor_noise_sd={}, twin_bias={})
    defaults.update(kwargs)
    return PlantConfig(**defaults)


# ------------------------------------------------------------- config
def test_rejects_nonpositive_duration():
    with pytest.raises(ValueError):
        PlantConfig(duration_minutes=0)


def test_rejects_non_minute_sampling():
    with pytest.raises(ValueError):
        PlantConfig(sample_period_minutes=5)


def test_rejects_inverted_hysteresis():
    with pytest.raises(ValueError):
        PlantConfig(on_threshold_degC=15.0, off_threshold_degC=10.0)


def test_rejects_negative_noise():
    with pytest.raises(ValueError):
        PlantConfig(sensor_noise_sd={"Ta": -0.1})


def test_rejects_overlapping_events():
    events = (
        AnomalyEvent(FLATLINE, 100, 50),
        AnomalyEvent(FLATLINE, 120, 50),
    )
    with pytest.raises(ValueError):
        PlantConfig(duration_minutes=4320, anomaly_spec=events)


def test_rejects_event_past_end():
    with pytest.raises(ValueError):
        PlantConfig(duration_minutes=4320, anomaly_spec=(AnomalyEvent(FLATLINE, 4300, 100),))


def test_config_json_roundtrip():
    cfg = benchmark_config(seed=3)
    again = PlantConfig.from_json(cfg.to_json())
    assert again == cfg


# ------------------------------------------------------------- twin
def test_twin_never_on_when_warm():
    # thresholds far below any ambient temperature -> machine never starts
    cfg = quiet_config(on_threshold_degC=-100.0, off_threshold_degC=-90.0)
    twin = generate_twin(cfg)
    assert np.all(twin.channels["P_Th"] == 0.0)
    assert np.all(twin.channels["P_El"] == 0.0)
    assert np.all(twin.channels["E_Th"] == 0.0)


def test_twin_year_length():
    cfg = quiet_config(duration_minutes=525_600)
    assert len(generate_twin(cfg)) == 525_600


def test_twin_deterministic():
    cfg = benchmark_config(seed=5)
    a, b = generate_twin(cfg), generate_twin(cfg)
    for ch in CHANNELS:
        assert np.array_equal(a.channels[ch], b.channels[ch])
    assert np.array_equal(a.timestamps, b.timestamps)


def test_twin_purity_and_source():
    twin = generate_twin(quiet_config())
    assert twin.source == "twin"
    assert not twin.labels.any()


def test_twin_energy_is_power_integral():
    cfg = PlantConfig(seed=1, duration_minutes=4320, sensor_noise_sd={"P_Th": 1.0})
    twin = generate_twin(cfg)
    assert np.allclose(np.diff(twin.channels["E_Th"]) * 60.0, twin.channels["P_Th"][1:])
    assert np.all(np.diff(twin.channels["E_Th"]) >= 0)


def test_twin_temperature_difference_identity():
    twin = generate_twin(PlantConfig(seed=2, duration_minutes=4320, sensor_noise_sd={"T_Flow": 0.5}))
    assert np.allclose(
        twin.channels["T_Diff"],
        twin.channels["T_Flow"] - twin.channels["T_Return"],
        atol=1e-9,
    )


def test_physical_coupling_noise_free():
    twin = generate_twin(quiet_config())
    on_el = twin.channels["P_El"] > 0
    on_th = twin.channels["P_Th"] > 0
    assert np.array_equal(on_el, on_th)
    state = hysteresis_state(
        twin.channels["Ta"], 8.0, 12.0
    )
    assert np.array_equal(on_th, state == 1)


def test_hysteresis_band_keeps_previous_state():
    ta = np.array([5.0, 9.0, 13.0, 9.0, 7.0, 10.0])
    state = hysteresis_state(ta, 8.0, 12.0)
    assert state.tolist() == [1, 1, 0, 0, 1, 1]


# ------------------------------------------------------------- real
def test_real_identity_without_bias_noise_events():
    cfg = quiet_config()
    twin = generate_twin(cfg)
    real = generate_real(cfg, twin)
    assert not real.labels.any()
    for ch in CHANNELS:
        assert np.allclose(real.channels[ch], twin.channels[ch], atol=1e-12)


def test_real_flatline_event_exact_labels():
    ev = AnomalyEvent(FLATLINE, 1000, 120, ("P_Th",))
    cfg = PlantConfig(
        seed=9,
        duration_minutes=4320,
        sensor_noise_sd={"P_Th": 1.0},
        anomaly_spec=(ev,),
    )
    twin = generate_twin(cfg)
    real = generate_real(cfg, twin)
    assert int(real.labels.sum()) == 120
    assert np.all(real.labels[1000:1120] == 1)
    segment = real.channels["P_Th"][1000:1120]
    assert segment.min() == segment.max()
    assert segment[0] == real.channels["P_Th"][999]


def test_real_semantic_outage_forces_zero_power():
    # factor 0 (default): the event mimics a valid machine-off state
    events = (AnomalyEvent(SEMANTIC, 1000, 120),)
    cfg = quiet_config(anomaly_spec=events)
    real = generate_real(cfg, generate_twin(cfg))
    assert np.all(real.channels["P_Th"][1000:1120] == 0.0)
    assert np.all(real.channels["P_El"][1000:1120] == 0.0)
    assert np.all(real.labels[1000:1120] == 1)


def test_real_semantic_degradation_scales_power():
    events = (AnomalyEvent(SEMANTIC, 1000, 120),)
    base = quiet_config(anomaly_spec=events)
    degraded = quiet_config(anomaly_spec=events, semantic_power_factor=0.9)
    clean = generate_real(quiet_config(), generate_twin(quiet_config()))
    real = generate_real(degraded, generate_twin(degraded))
    sl = slice(1000, 1120)
    assert np.allclose(real.channels["P_Th"][sl], 0.9 * clean.channels["P_Th"][sl])
    assert np.allclose(real.channels["P_El"][sl], 0.9 * clean.channels["P_El"][sl])
    assert np.all(real.labels[sl] == 1)
    # outside the event the streams agree
    assert np.array_equal(real.channels["P_Th"][:1000], clean.channels["P_Th"][:1000])


def test_benchmark_semantic_events_in_cold_weather():
    cfg = benchmark_config(seed=1)
    twin = generate_twin(cfg)
    real = generate_real(cfg, twin)
    semantic = [e for e in cfg.anomaly_spec if e.kind == SEMANTIC]
    assert semantic
    assert cfg.semantic_power_factor > 0.0
    for ev in semantic:
        sl = slice(ev.start_index, ev.stop_index)
        assert np.all(real.labels[sl] == 1)
        # machine runs through the event, just below rated output
        on = real.channels["P_Th"][sl] > 0.0
        assert on.mean() > 0.7
        produced = real.channels["P_Th"][sl][on].mean()
        assert produced < 0.99 * cfg.rated_thermal_kW
        # placement targets cold stretches where the machine ought to run
        cold = real.channels["Ta"][sl] < cfg.on_threshold_degC
        assert cold.mean() > 0.7


def test_label_soundness():
    cfg = benchmark_config(seed=2)
    real = generate_real(cfg, generate_twin(cfg))
    inside = np.zeros(len(real), dtype=bool)
    for ev in cfg.anomaly_spec:
        inside[ev.start_index : ev.stop_index] = True
    assert np.array_equal(real.labels == 1, inside)


def test_real_deterministic():
    cfg = benchmark_config(seed=4)
    twin = generate_twin(cfg)
    a, b = generate_real(cfg, twin), generate_real(cfg, twin)
    for ch in CHANNELS:
        assert np.array_equal(a.channels[ch], b.channels[ch])


def test_real_rejects_mismatched_twin():
    cfg = quiet_config()
    other = generate_twin(quiet_config(duration_minutes=2880))
    with pytest.raises(ValueError):
        generate_real(cfg, other)


# ------------------------------------------------------------- benchmark
def test_benchmark_anomalous_sample_fraction():
    cfg = benchmark_config()
    real = generate_real(cfg, generate_twin(cfg))
    assert real.labels.mean() == pytest.approx(0.242, abs=0.05)


def test_benchmark_seed_changes_values_not_shapes():
    a = benchmark_config(seed=0)
    b = benchmark_config(seed=1)
    assert a.duration_minutes == b.duration_minutes
    assert len(a.anomaly_spec) == len(b.anomaly_spec)
    assert a.anomaly_spec != b.anomaly_spec


def test_benchmark_energy_mismatch_calibration():
    # twin-vs-real systematic production discrepancy around 2%
    cfg = benchmark_config()
    twin = generate_twin(cfg)
    real = generate_real(cfg, twin)
    normal = real.labels == 0
    twin_rate = twin.channels["P_Th"].mean()
    real_rate = real.channels["P_Th"][normal].mean()
    assert 0.005 <= abs(real_rate - twin_rate) / twin_rate <= 0.05


def test_ambient_seasonal_winter_cold_summer_warm():
    cfg = quiet_config(duration_minutes=525_600)
    ta = ambient_seasonal(cfg, 525_600)
    january = ta[: 31 * 1440].mean()
    july = ta[181 * 1440 : 212 * 1440].mean()
    assert january < 5.0 < 15.0 < july


# ------------------------------------------------------------- CSV
def test_frame_csv_roundtrip():
    cfg = PlantConfig(seed=11, duration_minutes=1500, sensor_noise_sd={"Ta": 0.3})
    twin = generate_twin(cfg)
    text = twin.to_csv()
    back = TimeSeriesFrame.from_csv(text, source="twin")
    assert np.array_equal(back.timestamps, twin.timestamps)
    assert np.array_equal(back.labels, twin.labels)
    for ch in CHANNELS:
        assert np.allclose(back.channels[ch], twin.channels[ch], rtol=1e-9, atol=1e-6)


def test_frame_csv_header():
    twin = generate_twin(quiet_config(duration_minutes=1440))
    first = twin.to_csv().split("\n", 1)[0]
    assert first == "timestamp,Ta,P_Th,E_Th,P_El,E_El,Flux,T_Flow,T_Return,T_Diff,label"
