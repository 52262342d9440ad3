import io
import json

import numpy as np
import pytest

from detector._shared.errors import LengthMismatch, ModelNotFound, SamplerFailed, ShapeMismatch, SinkError
from detector.baselines import KnnConfig
from detector.engine.monitor import (
    AlertRecord,
    AlertSink,
    DetectionVerdict,
    Monitor,
    MonitorConfig,
    Verdict,
    emit_alert,
    run_monitor,
)
from detector.models import save_classifier, train_baseline
from detector.sensor import ReplaySource, SyntheticSource
from detector.traceio import EnergyTrace, write_trace

WINDOW = 120


@pytest.fixture
def replay_file(tmp_path, small_dataset):
    """10 benign windows followed by 5 attack windows."""
    benign = [t for t in small_dataset.traces if not t.label.is_attack][:10]
    attacks = [t for t in small_dataset.traces if t.label.is_attack][::8][:5]
    path = tmp_path / "session.csv"
    write_trace(EnergyTrace(deltas=np.concatenate([t.deltas[:WINDOW] for t in benign + attacks])), path)
    return path, [t.label.name for t in attacks]


def _run(knn_models, path, threshold=0.5, sink=None):
    ad_path, ar_path = knn_models
    config = MonitorConfig(ad_model=str(ad_path), ar_model=str(ar_path), threshold=threshold)
    monitor = Monitor(config, ReplaySource(path=str(path)), sink=sink or AlertSink(io.StringIO()))
    return monitor, list(monitor.run())


def test_monitor_gates_ar_on_anomalies(knn_models, replay_file):
    path, attack_names = replay_file
    monitor, verdicts = _run(knn_models, path)
    assert [v.window_id for v in verdicts] == list(range(15))
    assert [v.verdict for v in verdicts] == [Verdict.BENIGN] * 10 + [Verdict.ANOMALY] * 5
    assert monitor.ar_invocations == monitor.anomalies == 5
    assert all(v.attack is None for v in verdicts[:10])
    assert [v.attack.name for v in verdicts[10:]] == attack_names


def test_monitor_replay_is_deterministic(knn_models, replay_file):
    path, _ = replay_file
    _, first = _run(knn_models, path)
    _, second = _run(knn_models, path)
    strip = lambda verdicts: [(v.window_id, v.verdict, v.ad_score, v.attack) for v in verdicts]
    assert strip(first) == strip(second)


def test_windows_are_consecutive(knn_models, replay_file):
    path, _ = replay_file
    _, verdicts = _run(knn_models, path)
    spans = [(v.window_start_ns, v.window_end_ns) for v in verdicts]
    step = spans[0][1] - spans[0][0]
    assert step == (WINDOW - 1) * 500_000
    assert all(b[0] - a[1] == 500_000 for a, b in zip(spans, spans[1:]))


def test_threshold_above_one_never_alarms(knn_models, replay_file):
    path, _ = replay_file
    monitor, verdicts = _run(knn_models, path, threshold=1.01)
    assert all(v.verdict is Verdict.BENIGN for v in verdicts)
    assert monitor.ar_invocations == 0


def test_alert_lines_match_verdicts(knn_models, replay_file, tmp_path):
    path, _ = replay_file
    alerts = tmp_path / "alerts.jsonl"
    sink = AlertSink(alerts)
    try:
        _, verdicts = _run(knn_models, path, sink=sink)
    finally:
        sink.close()
    records = [AlertRecord.model_validate_json(line) for line in alerts.read_text().splitlines()]
    assert len(records) == len(verdicts) == 15
    assert [r.window_id for r in records] == list(range(15))
    assert [r.verdict for r in records] == [v.verdict for v in verdicts]
    assert records[-1].attack == verdicts[-1].attack.name


def test_alert_record_round_trip():
    buffer = io.StringIO()
    sink = AlertSink(buffer)
    verdicts = [
        DetectionVerdict(window_id=i, verdict=Verdict.BENIGN, ad_score=0.0, window_start_ns=i, window_end_ns=i + 1)
        for i in range(3)
    ]
    records = [AlertRecord.from_verdict(v) for v in verdicts]
    for record in records:
        emit_alert(record, sink)
    lines = buffer.getvalue().splitlines()
    assert len(lines) == 3 == sink.records
    assert [AlertRecord.model_validate_json(line) for line in lines] == records
    assert "attack" not in json.loads(lines[0])


def test_unwritable_sink(tmp_path):
    with pytest.raises(SinkError):
        AlertSink(tmp_path / "missing-dir" / "alerts.jsonl")


def test_closed_sink_fails_on_write():
    buffer = io.StringIO()
    sink = AlertSink(buffer)
    buffer.close()
    record = AlertRecord(kind="verdict", window_id=0, timestamp="t", verdict=Verdict.BENIGN, ad_score=0.0)
    with pytest.raises(SinkError):
        emit_alert(record, sink)


def test_sink_write_appends_one_line():
    buffer = io.StringIO()
    sink = AlertSink(buffer)
    record = AlertRecord(kind="verdict", window_id=4, timestamp="t", verdict=Verdict.ANOMALY, ad_score=0.75)
    sink.write(record)
    assert sink.records == 1
    assert json.loads(buffer.getvalue()) == {
        "kind": "verdict",
        "window_id": 4,
        "timestamp": "t",
        "verdict": "anomaly",
        "ad_score": 0.75,
    }


class _FailingStream:
    realtime = False

    def __init__(self, deltas):
        self.deltas = deltas
        self.calls = 0

    def take(self, n):
        self.calls += 1
        if self.calls > 1:
            raise RuntimeError("counter read failed")
        return self.deltas[:n], np.arange(n, dtype=np.int64) * 500_000

    def close(self):
        pass


def test_sampler_crash_reaches_consumer(knn_models, small_dataset, monkeypatch):
    benign = next(t for t in small_dataset.traces if not t.label.is_attack)
    monkeypatch.setattr("detector.engine.monitor.open_stream", lambda source, collector: _FailingStream(benign.deltas))
    ad_path, ar_path = knn_models
    config = MonitorConfig(ad_model=str(ad_path), ar_model=str(ar_path))
    monitor = Monitor(config, SyntheticSource(generator="benign-noise"), sink=AlertSink(io.StringIO()))
    verdicts = []
    with pytest.raises(SamplerFailed) as info:
        for verdict in monitor.run():
            verdicts.append(verdict)
    assert [v.window_id for v in verdicts] == [0]
    assert info.value.details["error"] == "RuntimeError"


def test_missing_model_aborts_startup(tmp_path):
    config = MonitorConfig(ad_model=str(tmp_path / "missing.bin"))
    with pytest.raises(ModelNotFound):
        Monitor(config, SyntheticSource(generator="benign-noise"), sink=AlertSink(io.StringIO()))


def test_models_are_checked_at_startup(knn_models, tmp_path):
    ad_path, ar_path = knn_models
    with pytest.raises(ShapeMismatch):
        Monitor(MonitorConfig(ad_model=str(ar_path)), SyntheticSource(generator="benign-noise"), sink=AlertSink(io.StringIO()))
    with pytest.raises(LengthMismatch):
        Monitor(
            MonitorConfig(ad_model=str(ad_path), n_samples=200),
            SyntheticSource(generator="benign-noise"),
            sink=AlertSink(io.StringIO()),
        )


def test_ar_length_must_match_ad(knn_models, small_dataset, tmp_path):
    ad_path, _ = knn_models
    short_ar = tmp_path / "ar-100.bin"
    save_classifier(train_baseline("knn", "ar", small_dataset, 100, knn=KnnConfig(k=1)).model, short_ar)
    with pytest.raises(LengthMismatch):
        Monitor(
            MonitorConfig(ad_model=str(ad_path), ar_model=str(short_ar)),
            SyntheticSource(generator="benign-noise"),
            sink=AlertSink(io.StringIO()),
        )


def test_run_monitor_on_synthetic_source(knn_models, tmp_path):
    ad_path, _ = knn_models
    config = MonitorConfig(ad_model=str(ad_path), alert_sink=str(tmp_path / "alerts.jsonl"))
    source = SyntheticSource(generator="attack-burst", seed=1, params={"mu": 950.0, "amplitude": 900.0, "period": 28.0, "width": 14.0})
    verdicts = list(run_monitor(config, source, max_windows=4))
    assert len(verdicts) == 4
    assert all(v.attack is None for v in verdicts)
    assert len((tmp_path / "alerts.jsonl").read_text().splitlines()) == 4
