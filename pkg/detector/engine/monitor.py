"""Online detection loop: sample windows, run AD, run AR on anomalies, emit alerts.

A producer thread fills a bounded queue with consecutive windows while the
caller's thread scores them in order. Live sources never wait on inference:
when the queue is full the oldest pending window is dropped. Replay and
synthetic sources have no deadline, so the producer blocks instead and
replays stay deterministic.
"""

from __future__ import annotations

import logging
import queue
import sys
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Literal, TextIO

import numpy as np
from fastapi import APIRouter
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, StrictInt, ValidationError

from detector._shared.config import served_model_paths
from detector._shared.errors import (
    DetectorError,
    InputInvalid,
    LengthMismatch,
    ModelNotFound,
    ShapeMismatch,
    SamplerFailed,
    SinkError,
    SourceExhausted,
)
from detector.models import AD_CLASSES, N_ATTACKS, Classifier, infer_ad, infer_ar, load_classifier, model_task
from detector.sensor import CollectorConfig, LiveSource, ReplaySource, SyntheticSource, open_stream
from detector.traceio import ATTACK_NAMES

logger = logging.getLogger("detector.engine")

router = APIRouter()

@dataclass(frozen=True)
class _Halt:
    """Last queue item; carries the exception that ended sampling, if any."""

    failure: Exception | None = None


class Verdict(str, Enum):
    BENIGN = "benign"
    ANOMALY = "anomaly"


class AttackGuess(BaseModel):
    name: str
    attack_index: StrictInt
    confidence: float


class DetectionVerdict(BaseModel):
    window_id: StrictInt
    verdict: Verdict
    ad_score: float = Field(ge=0.0, le=1.0)
    attack: AttackGuess | None = None
    window_start_ns: StrictInt
    window_end_ns: StrictInt


class AlertRecord(BaseModel):
    kind: Literal["verdict", "error"]
    window_id: StrictInt
    timestamp: str
    verdict: Verdict | None = None
    ad_score: float | None = None
    attack: str | None = None
    confidence: float | None = None
    error: dict[str, Any] | None = None

    class Config:
        extra = "forbid"

    @classmethod
    def from_verdict(cls, verdict: DetectionVerdict) -> "AlertRecord":
        return cls(
            kind="verdict",
            window_id=verdict.window_id,
            timestamp=datetime.now(timezone.utc).isoformat(),
            verdict=verdict.verdict,
            ad_score=verdict.ad_score,
            attack=verdict.attack.name if verdict.attack else None,
            confidence=verdict.attack.confidence if verdict.attack else None,
        )


class MonitorConfig(BaseModel):
    ad_model: str
    ar_model: str | None = None
    n_samples: StrictInt | None = Field(default=None, ge=1)
    interval_us: StrictInt = Field(default=500, ge=1)
    threshold: float = 0.5
    alert_sink: str = "-"
    queue_size: StrictInt = Field(default=4, ge=1)

    class Config:
        extra = "forbid"


class AlertSink:
    """Line-delimited JSON alert file (``-`` for stdout), flushed per record."""

    def __init__(self, target: str | Path | TextIO = "-") -> None:
        self._owned = False
        if hasattr(target, "write"):
            self._handle = target
        elif str(target) == "-":
            self._handle = sys.stdout
        else:
            try:
                self._handle = open(target, "a", encoding="utf-8")
            except OSError as exc:
                raise SinkError(f"Cannot open alert sink {target}: {exc.strerror}.", path=str(target)) from exc
            self._owned = True
        self.records = 0

    def write(self, record: AlertRecord) -> None:
        try:
            self._handle.write(record.model_dump_json(exclude_none=True) + "\n")
            self._handle.flush()
        except (OSError, ValueError) as exc:
            raise SinkError(f"Alert sink write failed: {exc}.") from exc
        self.records += 1

    def close(self) -> None:
        if self._owned:
            self._handle.close()


def emit_alert(record: AlertRecord, sink: AlertSink) -> None:
    sink.write(record)


def _load(path: str, role: str) -> Classifier:
    model = load_classifier(path)
    task = model_task(model)
    if task and task != role:
        raise ShapeMismatch(f"{path} is a {task} model; the monitor needs an {role} model here.", path=path)
    return model


def _check_outputs(model: Classifier, expected: int, role: str) -> None:
    blank = np.zeros((1, model.input_length))
    outputs = model.predict_proba(blank).shape[1]
    if outputs != expected:
        raise ShapeMismatch(f"The {role} model has {outputs} outputs, expected {expected}.", outputs=outputs)


class Monitor:
    """Holds loaded models and session counters.

    ``ar_invocations`` counts AR inferences; it equals the number of anomaly
    verdicts whenever an AR model is loaded.
    """

    def __init__(self, config: MonitorConfig, source: LiveSource | ReplaySource | SyntheticSource, sink: AlertSink | None = None) -> None:
        self.config = config
        self.source = source
        self.ad = _load(config.ad_model, "ad")
        _check_outputs(self.ad, len(AD_CLASSES), "AD")
        self.ar = _load(config.ar_model, "ar") if config.ar_model else None
        self.n_samples = config.n_samples or self.ad.input_length
        if self.ad.input_length != self.n_samples:
            raise LengthMismatch(
                f"AD model expects {self.ad.input_length} samples per window, configured {self.n_samples}.",
                expected=self.ad.input_length,
                got=self.n_samples,
            )
        if self.ar is not None:
            _check_outputs(self.ar, N_ATTACKS, "AR")
            if self.ar.input_length != self.n_samples:
                raise LengthMismatch(
                    f"AR model expects {self.ar.input_length} samples per window, AD model {self.n_samples}.",
                    expected=self.ar.input_length,
                    got=self.n_samples,
                )
        self.sink = sink if sink is not None else AlertSink(config.alert_sink)
        self.windows = 0
        self.anomalies = 0
        self.ar_invocations = 0
        self.errors = 0
        self.dropped_windows = 0

    def _produce(self, stream: Any, windows: queue.Queue, stop: threading.Event, max_windows: int | None) -> None:
        window_id = 0
        failure: Exception | None = None
        try:
            while not stop.is_set() and (max_windows is None or window_id < max_windows):
                try:
                    deltas, stamps = stream.take(self.n_samples)
                    item: Any = (window_id, deltas, stamps, None)
                except SourceExhausted:
                    logger.info("engine source_exhausted windows=%s", window_id)
                    break
                except DetectorError as exc:
                    item = (window_id, None, None, exc)
                window_id += 1
                if stream.realtime:
                    while True:
                        try:
                            windows.put_nowait(item)
                            break
                        except queue.Full:
                            try:
                                dropped = windows.get_nowait()
                                self.dropped_windows += 1
                                logger.warning("engine window_dropped window_id=%s queue_size=%s", dropped[0], windows.maxsize)
                            except queue.Empty:
                                pass
                else:
                    while not stop.is_set():
                        try:
                            windows.put(item, timeout=0.1)
                            break
                        except queue.Full:
                            continue
        except Exception as exc:
            failure = exc
            logger.error("engine sampler_failed window_id=%s error=%r", window_id, exc)
        finally:
            windows.put(_Halt(failure))

    def score(self, window_id: int, deltas: np.ndarray, stamps: np.ndarray) -> DetectionVerdict:
        ad_score = infer_ad(self.ad, deltas)
        attack = None
        anomalous = ad_score >= self.config.threshold
        if anomalous and self.ar is not None:
            distribution = infer_ar(self.ar, deltas)
            self.ar_invocations += 1
            index = int(np.argmax(distribution))
            attack = AttackGuess(name=ATTACK_NAMES[index], attack_index=index, confidence=float(distribution[index]))
        return DetectionVerdict(
            window_id=window_id,
            verdict=Verdict.ANOMALY if anomalous else Verdict.BENIGN,
            ad_score=min(max(ad_score, 0.0), 1.0),
            attack=attack,
            window_start_ns=int(stamps[0]),
            window_end_ns=int(stamps[-1]),
        )

    def run(self, stop_event: threading.Event | None = None, max_windows: int | None = None) -> Iterator[DetectionVerdict]:
        stop = stop_event or threading.Event()
        collector = CollectorConfig(interval_us=self.config.interval_us, samples_per_trace=self.n_samples)
        stream = open_stream(self.source, collector)
        windows: queue.Queue = queue.Queue(maxsize=self.config.queue_size)
        producer = threading.Thread(
            target=self._produce, args=(stream, windows, stop, max_windows), name="detector-sampler", daemon=True
        )
        producer.start()
        logger.info(
            "engine monitor_started source=%s n_samples=%s threshold=%s ar=%s",
            self.source.kind,
            self.n_samples,
            self.config.threshold,
            self.ar is not None,
        )
        try:
            while True:
                item = windows.get()
                if isinstance(item, _Halt):
                    if item.failure is not None:
                        raise SamplerFailed(
                            f"Sampling stopped after {self.windows} windows: {item.failure!r}.",
                            error=type(item.failure).__name__,
                        ) from item.failure
                    break
                window_id, deltas, stamps, failure = item
                if failure is not None:
                    self.errors += 1
                    logger.error("engine window_failed window_id=%s code=%s message=%s", window_id, failure.code, failure.message)
                    emit_alert(
                        AlertRecord(
                            kind="error",
                            window_id=window_id,
                            timestamp=datetime.now(timezone.utc).isoformat(),
                            error={"code": failure.code, "message": failure.message},
                        ),
                        self.sink,
                    )
                    continue
                started = time.perf_counter()
                verdict = self.score(window_id, deltas, stamps)
                self.windows += 1
                if verdict.verdict is Verdict.ANOMALY:
                    self.anomalies += 1
                emit_alert(AlertRecord.from_verdict(verdict), self.sink)
                logger.debug(
                    "engine verdict window_id=%s verdict=%s ad_score=%.4f ms=%.2f",
                    window_id,
                    verdict.verdict.value,
                    verdict.ad_score,
                    (time.perf_counter() - started) * 1000,
                )
                yield verdict
        finally:
            stop.set()
            while producer.is_alive():
                try:
                    windows.get_nowait()
                except queue.Empty:
                    producer.join(timeout=0.05)
            stream.close()
            logger.info(
                "engine monitor_stopped windows=%s anomalies=%s ar_invocations=%s dropped=%s errors=%s",
                self.windows,
                self.anomalies,
                self.ar_invocations,
                self.dropped_windows,
                self.errors,
            )


def run_monitor(
    config: MonitorConfig,
    source: LiveSource | ReplaySource | SyntheticSource,
    stop_event: threading.Event | None = None,
    max_windows: int | None = None,
) -> Iterator[DetectionVerdict]:
    monitor = Monitor(config, source)
    try:
        yield from monitor.run(stop_event, max_windows)
    finally:
        monitor.sink.close()


# --- HTTP capability ---------------------------------------------------------------

_SERVED: dict[str, tuple[str, Classifier]] = {}


def _served_model(role: str, path: str) -> Classifier | None:
    if not path:
        return None
    cached = _SERVED.get(role)
    if cached is None or cached[0] != path:
        _SERVED[role] = (path, _load(path, role))
    return _SERVED[role][1]


class DetectInput(BaseModel):
    deltas: list[float] = Field(min_length=1)
    threshold: float = 0.5

    class Config:
        extra = "forbid"


def _detect_failure(error: DetectorError, stage: str, path: str = "") -> JSONResponse:
    return JSONResponse(
        status_code=error.http_status,
        content={
            "ok": False,
            "tool": "detect_trace",
            "version": "1.0",
            "result": None,
            "error": error.to_structured("detect_trace", stage, path),
        },
    )


@router.post("/tools/detect_trace")
def detect_trace(payload: dict[str, Any]):
    try:
        data = DetectInput.model_validate(payload)
    except ValidationError:
        return _detect_failure(InputInvalid("Input must match the detect_trace schema."), "validate")
    ad_path, ar_path = served_model_paths()
    try:
        ad = _served_model("ad", ad_path)
        if ad is None:
            raise ModelNotFound("No AD model configured; set DETECTOR_AD_MODEL.")
        ar = _served_model("ar", ar_path)
        deltas = np.asarray(data.deltas, dtype=np.float64)
        ad_score = infer_ad(ad, deltas)
        result: dict[str, Any] = {
            "verdict": Verdict.ANOMALY.value if ad_score >= data.threshold else Verdict.BENIGN.value,
            "ad_score": ad_score,
            "attack": None,
        }
        if ad_score >= data.threshold and ar is not None:
            distribution = infer_ar(ar, deltas)
            index = int(np.argmax(distribution))
            result["attack"] = {"name": ATTACK_NAMES[index], "attack_index": index, "confidence": float(distribution[index])}
    except DetectorError as error:
        return _detect_failure(error, "infer", "deltas")
    return {"ok": True, "tool": "detect_trace", "version": "1.0", "result": result, "error": None}


CONTRACT = {
    "name": "detect_trace",
    "version": "1.0.0",
    "path": "/tools/detect_trace",
    "description": "Score one window of energy deltas with the served AD model and, on anomaly, the AR model.",
    "determinism": {"same_input_same_output": True, "side_effects": False, "network": False, "storage": True},
    "inputs": {
        "content_type": "application/json",
        "json_schema": {
            "type": "object",
            "properties": {
                "deltas": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "threshold": {"type": "number"},
            },
            "required": ["deltas"],
            "additionalProperties": False,
        },
    },
    "outputs": {
        "content_type": "application/json",
        "json_schema": {
            "type": "object",
            "properties": {
                "ok": {"type": "boolean"},
                "tool": {"type": "string"},
                "version": {"type": "string"},
                "result": {
                    "type": ["object", "null"],
                    "properties": {
                        "verdict": {"type": "string", "enum": ["benign", "anomaly"]},
                        "ad_score": {"type": "number"},
                        "attack": {"type": ["object", "null"]},
                    },
                },
                "error": {"type": ["object", "null"]},
            },
            "required": ["ok", "tool", "version", "result", "error"],
        },
    },
    "errors": {
        "codes": [
            {"code": "INPUT_INVALID", "when": "request body invalid"},
            {"code": "MODEL_NOT_FOUND", "when": "no AD model configured or the file is missing"},
            {"code": "LENGTH_MISMATCH", "when": "window length differs from the model input length"},
        ],
    },
    "non_goals": ["no live sampling over HTTP", "no alert transport"],
    "examples": [
        {
            "input": {"deltas": [1000.0, 1012.0, 987.0]},
            "output": {"ok": False, "tool": "detect_trace", "version": "1.0", "result": None, "error": {"code": "LENGTH_MISMATCH"}},
        }
    ],
}
