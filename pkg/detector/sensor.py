"""RAPL zone discovery, wrap-safe energy sampling and trace recording.

Every consumer reads samples through a stream (live zone, replayed trace file
or seeded synthetic generator), so nothing downstream needs root or Intel
hardware to be exercised.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal, Protocol, Union

import numpy as np
from fastapi import APIRouter
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, StrictBool, StrictInt, StrictStr, ValidationError

from detector._shared.config import powercap_root
from detector._shared.errors import (
    DetectorError,
    HookFailed,
    InputInvalid,
    InvalidConfig,
    IoError,
    ParseError,
    PermissionDenied,
    SourceExhausted,
    UnknownGenerator,
)
from detector.traceio import (
    ATTACK_NAMES,
    UNLABELED,
    ClassLabel,
    Dataset,
    EnergyTrace,
    TraceMeta,
    read_deltas,
    trace_filename,
    write_trace,
)

logger = logging.getLogger("detector.sensor")

router = APIRouter()

_SPIN_NS = 200_000
_SUBZONE_DOMAINS = {"core": "pp0", "uncore": "pp1", "dram": "dram"}


class PowerDomain(str, Enum):
    PACKAGE = "package"
    PP0 = "pp0"
    PP1 = "pp1"
    DRAM = "dram"


class RaplZone(BaseModel):
    zone_id: StrictStr
    name: StrictStr
    energy_path: StrictStr
    max_energy_range_uj: StrictInt = Field(gt=0)
    domain: PowerDomain
    package: StrictInt = 0

    class Config:
        extra = "forbid"
        frozen = True


class CollectorConfig(BaseModel):
    interval_us: StrictInt = Field(default=500, ge=1)
    samples_per_trace: StrictInt = Field(default=3000, ge=1)
    measurements: StrictInt = Field(default=50, ge=1)
    domain: PowerDomain = PowerDomain.PP0
    package: StrictInt = Field(default=0, ge=0)
    inter_measurement_sleep_s: float = Field(default=1.0, ge=0)

    class Config:
        extra = "forbid"


@dataclass(frozen=True, slots=True)
class EnergySample:
    seq: int
    e1_uj: int
    e2_uj: int
    delta_uj: int
    t_monotonic_ns: int


class LiveSource(BaseModel):
    kind: Literal["live"] = "live"
    zone: RaplZone

    class Config:
        extra = "forbid"


class ReplaySource(BaseModel):
    kind: Literal["replay"] = "replay"
    path: StrictStr
    loop: StrictBool = False

    class Config:
        extra = "forbid"


class SyntheticSource(BaseModel):
    kind: Literal["synthetic"] = "synthetic"
    generator: StrictStr
    seed: StrictInt = 0
    params: dict[str, float] = Field(default_factory=dict)

    class Config:
        extra = "forbid"


TraceSource = Annotated[Union[LiveSource, ReplaySource, SyntheticSource], Field(discriminator="kind")]


# --- zones ---------------------------------------------------------------


def _read_text(path: Path) -> str:
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read()
    except PermissionError as exc:
        raise PermissionDenied(
            f"Cannot read {path}: RAPL energy counters need admin privilege. "
            f"Run as root or grant read access, e.g. 'sudo chmod o+r {path}'.",
            path=str(path),
        ) from exc
    except OSError as exc:
        raise IoError(f"Cannot read {path}: {exc.strerror}.", path=str(path)) from exc


def _parse_counter(text: str, path: Path | str) -> int:
    stripped = text.strip()
    if not stripped.isdigit():
        raise ParseError(f"{path}: expected a decimal counter, got {stripped[:32]!r}.", path=str(path))
    return int(stripped)


def _zone_from_dir(directory: Path, domain: PowerDomain, package: int) -> RaplZone:
    energy_path = directory / "energy_uj"
    _read_text(energy_path)
    max_range = _parse_counter(_read_text(directory / "max_energy_range_uj"), directory / "max_energy_range_uj")
    name = _read_text(directory / "name").strip() if (directory / "name").exists() else directory.name
    return RaplZone(
        zone_id=directory.name,
        name=name,
        energy_path=str(energy_path),
        max_energy_range_uj=max_range,
        domain=domain,
        package=package,
    )


def _parent_domain(name: str) -> PowerDomain | None:
    if name == "dram":
        return PowerDomain.DRAM
    if name.startswith("package-"):
        return PowerDomain.PACKAGE
    return None


def _package_number(zone_dir: Path) -> int:
    return int(zone_dir.name.split(":")[1])


def discover_zones(root: str | Path | None = None) -> list[RaplZone]:
    """Enumerate readable RAPL zones under the powercap root.

    Parent zones (``intel-rapl:P``) named ``package-N`` or ``dram`` and
    sub-zones (``intel-rapl:P:S``) named ``core``, ``uncore`` or ``dram`` are
    kept; others such as ``psys`` are skipped.
    """
    base = Path(root) if root is not None else powercap_root()
    if not base.is_dir():
        logger.info("sensor zones_discovered root=%s count=0 reason=absent", base)
        return []
    zones: list[RaplZone] = []
    parents = sorted((p for p in base.glob("intel-rapl:*") if p.name.count(":") == 1), key=_package_number)
    for parent in parents:
        package = _package_number(parent)
        parent_name = _read_text(parent / "name").strip() if (parent / "name").exists() else ""
        domain = _parent_domain(parent_name)
        if domain is None:
            logger.debug("sensor zone_skipped zone=%s name=%s", parent.name, parent_name)
            continue
        zones.append(_zone_from_dir(parent, domain, package))
        for child in sorted(parent.glob(f"intel-rapl:{package}:*"), key=lambda p: int(p.name.split(":")[2])):
            child_name = _read_text(child / "name").strip() if (child / "name").exists() else ""
            mapped = _SUBZONE_DOMAINS.get(child_name)
            if mapped is None:
                logger.warning("sensor zone_skipped zone=%s name=%s", child.name, child_name)
                continue
            zones.append(_zone_from_dir(child, PowerDomain(mapped), package))
    logger.info("sensor zones_discovered root=%s count=%s", base, len(zones))
    return zones


def select_zone(zones: list[RaplZone], domain: PowerDomain = PowerDomain.PP0, package: int = 0) -> RaplZone:
    for zone in zones:
        if zone.domain is domain and zone.package == package:
            return zone
    raise InvalidConfig(
        f"No {domain.value} zone on package {package}.",
        available=[f"{z.zone_id}:{z.domain.value}" for z in zones],
    )


# --- reading -------------------------------------------------------------


def _zone_counter(text: str, zone: RaplZone) -> int:
    value = _parse_counter(text, zone.energy_path)
    if value >= zone.max_energy_range_uj:
        raise ParseError(
            f"{zone.energy_path}: counter {value} exceeds max_energy_range_uj {zone.max_energy_range_uj}.",
            path=zone.energy_path,
        )
    return value


def read_energy_uj(zone: RaplZone) -> int:
    return _zone_counter(_read_text(Path(zone.energy_path)), zone)


class ZoneReader:
    """Keeps the energy attribute open and re-reads it by seeking."""

    def __init__(self, zone: RaplZone) -> None:
        self.zone = zone
        self._handle = None

    def __enter__(self) -> "ZoneReader":
        try:
            self._handle = open(self.zone.energy_path, "rb", buffering=0)
        except PermissionError as exc:
            raise PermissionDenied(
                f"Cannot open {self.zone.energy_path}: RAPL energy counters need admin privilege.",
                path=self.zone.energy_path,
            ) from exc
        except OSError as exc:
            raise IoError(f"Cannot open {self.zone.energy_path}: {exc.strerror}.", path=self.zone.energy_path) from exc
        return self

    def __exit__(self, *exc_info: Any) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def read(self) -> int:
        if self._handle is None:
            return read_energy_uj(self.zone)
        try:
            self._handle.seek(0)
            raw = self._handle.read(64)
        except OSError as exc:
            raise IoError(f"Read of {self.zone.energy_path} failed: {exc.strerror}.", path=self.zone.energy_path) from exc
        return _zone_counter(raw.decode("ascii", errors="replace"), self.zone)


def wrap_delta(e1: int, e2: int, max_range: int) -> int:
    if e2 >= e1:
        return e2 - e1
    return (max_range - e1) + e2


def sleep_until(deadline_ns: int) -> None:
    while True:
        remaining = deadline_ns - time.monotonic_ns()
        if remaining <= 0:
            return
        if remaining > _SPIN_NS:
            time.sleep((remaining - _SPIN_NS / 2) / 1e9)


def sample_delta(
    zone: RaplZone,
    interval_us: int,
    reader: ZoneReader | None = None,
    deadline_ns: int | None = None,
    seq: int = 0,
) -> EnergySample:
    read = reader.read if reader is not None else (lambda: read_energy_uj(zone))
    t_ns = time.monotonic_ns()
    e1 = read()
    sleep_until(deadline_ns if deadline_ns is not None else t_ns + interval_us * 1000)
    e2 = read()
    return EnergySample(
        seq=seq,
        e1_uj=e1,
        e2_uj=e2,
        delta_uj=wrap_delta(e1, e2, zone.max_energy_range_uj),
        t_monotonic_ns=t_ns,
    )


# --- streams -------------------------------------------------------------


class SampleStream(Protocol):
    domain: PowerDomain
    interval_us: int
    realtime: bool

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``n`` deltas and their monotonic timestamps (ns)."""
        ...

    def close(self) -> None: ...


class LiveStream:
    realtime = True

    def __init__(self, zone: RaplZone, interval_us: int) -> None:
        self.zone = zone
        self.domain = zone.domain
        self.interval_us = interval_us
        self._reader = ZoneReader(zone).__enter__()
        self._seq = 0
        self.overruns = 0

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        interval_ns = self.interval_us * 1000
        deltas = np.empty(n, dtype=np.float64)
        stamps = np.empty(n, dtype=np.int64)
        deadline = time.monotonic_ns()
        for j in range(n):
            deadline += interval_ns
            now = time.monotonic_ns()
            if deadline <= now:
                self.overruns += 1
                deadline = now + interval_ns
            sample = sample_delta(self.zone, self.interval_us, reader=self._reader, deadline_ns=deadline, seq=self._seq)
            self._seq += 1
            deltas[j] = sample.delta_uj
            stamps[j] = sample.t_monotonic_ns
        return deltas, stamps

    def close(self) -> None:
        self._reader.__exit__(None, None, None)


class ReplayStream:
    realtime = False

    def __init__(self, path: str | Path, loop: bool, interval_us: int, domain: PowerDomain) -> None:
        self.path = str(path)
        self.values = read_deltas(path)
        self.loop = loop
        self.interval_us = interval_us
        self.domain = domain
        self._cursor = 0
        self._emitted = 0
        self._origin_ns = time.monotonic_ns()

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        size = self.values.size
        if self._cursor + n > size and not self.loop:
            raise SourceExhausted(
                f"Replay {self.path} has {size - self._cursor} samples left, {n} requested.",
                path=self.path,
                remaining=size - self._cursor,
                requested=n,
            )
        positions = (self._cursor + np.arange(n)) % size
        self._cursor = int((self._cursor + n) % size) if self.loop else self._cursor + n
        stamps = self._origin_ns + (self._emitted + np.arange(n, dtype=np.int64)) * self.interval_us * 1000
        self._emitted += n
        return self.values[positions].copy(), stamps

    def close(self) -> None:
        return None


class SyntheticStream:
    realtime = False

    def __init__(self, generator: str, seed: int, params: dict[str, float], interval_us: int, domain: PowerDomain) -> None:
        if generator not in GENERATORS:
            raise UnknownGenerator(f"Unknown generator: {generator}.", generator=generator, known=sorted(GENERATORS))
        self.generator = generator
        self.seed = seed
        self.params = dict(params)
        self.interval_us = interval_us
        self.domain = domain
        self._count = 0
        self._emitted = 0
        self._origin_ns = time.monotonic_ns()

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        trace = synth_trace(self.generator, self.seed + self._count, n, self.params)
        self._count += 1
        stamps = self._origin_ns + (self._emitted + np.arange(n, dtype=np.int64)) * self.interval_us * 1000
        self._emitted += n
        return np.array(trace.deltas), stamps

    def close(self) -> None:
        return None


def open_stream(source: LiveSource | ReplaySource | SyntheticSource, config: CollectorConfig) -> SampleStream:
    if isinstance(source, LiveSource):
        return LiveStream(source.zone, config.interval_us)
    if isinstance(source, ReplaySource):
        return ReplayStream(source.path, source.loop, config.interval_us, config.domain)
    return SyntheticStream(source.generator, source.seed, source.params, config.interval_us, config.domain)


# --- recording -----------------------------------------------------------


def collect_trace(
    source: LiveSource | ReplaySource | SyntheticSource | SampleStream,
    config: CollectorConfig,
    label: ClassLabel | None = None,
    trace_id: str = "",
) -> EnergyTrace:
    owned = isinstance(source, (LiveSource, ReplaySource, SyntheticSource))
    stream = open_stream(source, config) if owned else source
    try:
        captured_at = datetime.now(timezone.utc).isoformat()
        started = time.perf_counter()
        deltas, stamps = stream.take(config.samples_per_trace)
        duration = time.perf_counter() - started
    finally:
        if owned:
            stream.close()
    if deltas.size != config.samples_per_trace:
        raise SourceExhausted(
            f"Source produced {deltas.size} samples, {config.samples_per_trace} required.",
            produced=int(deltas.size),
        )
    achieved = float(np.diff(stamps).mean()) / 1000 if stamps.size > 1 else float(config.interval_us)
    meta = TraceMeta(
        domain=stream.domain.value,
        nominal_interval_us=config.interval_us,
        captured_at=captured_at,
        achieved_period_us=achieved,
        duration_s=duration,
    )
    logger.debug(
        "sensor trace_collected samples=%s achieved_period_us=%.1f ms=%.2f",
        deltas.size,
        achieved,
        duration * 1000,
    )
    return EnergyTrace(deltas=deltas, label=label or UNLABELED, meta=meta, trace_id=trace_id)


def _run_hook(command: str, index: int, stage: str, partial: list[EnergyTrace]) -> None:
    if not command:
        return
    result = subprocess.run(command, shell=True, capture_output=True, text=True)
    if result.returncode != 0:
        logger.error(
            "sensor hook_failed stage=%s index=%s returncode=%s stderr=%s",
            stage,
            index,
            result.returncode,
            result.stderr.strip()[:200],
        )
        raise HookFailed(
            f"{stage} hook exited {result.returncode} at measurement {index}.",
            index=index,
            partial=partial,
            stage=stage,
            returncode=result.returncode,
        )


def _spawn_workload(command: str | None) -> subprocess.Popen | None:
    if not command:
        return None
    return subprocess.Popen(shlex.split(command), stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)


def _stop_workload(process: subprocess.Popen | None) -> None:
    if process is None or process.poll() is not None:
        return
    process.terminate()
    try:
        process.wait(timeout=5)
    except subprocess.TimeoutExpired:
        process.kill()
        process.wait()


def collect_campaign(
    source: LiveSource | ReplaySource | SyntheticSource,
    config: CollectorConfig,
    label: str | ClassLabel,
    start_hook: str = "",
    stop_hook: str = "",
    workload: str | None = None,
    output_dir: str | Path | None = None,
) -> list[EnergyTrace]:
    """Record ``config.measurements`` labeled traces.

    Per measurement: start hook, spawn workload, one trace, stop workload,
    stop hook, then the inter-measurement pause. Traces already recorded when
    a hook fails travel on ``HookFailed.partial`` (and are on disk when
    ``output_dir`` is set).
    """
    class_label = label if isinstance(label, ClassLabel) else ClassLabel.parse(label)
    traces: list[EnergyTrace] = []
    stream = open_stream(source, config)
    try:
        for index in range(1, config.measurements + 1):
            _run_hook(start_hook, index, "start", traces)
            process = _spawn_workload(workload)
            try:
                trace = collect_trace(stream, config, label=class_label, trace_id=f"{class_label.name}/{trace_filename(index - 1)[:-4]}")
            finally:
                _stop_workload(process)
            _run_hook(stop_hook, index, "stop", traces)
            traces.append(trace)
            if output_dir is not None:
                write_trace(trace, Path(output_dir) / class_label.family.value / class_label.name / trace_filename(index - 1))
            logger.info("sensor measurement_done label=%s index=%s of=%s", class_label.name, index, config.measurements)
            if index < config.measurements and config.inter_measurement_sleep_s:
                time.sleep(config.inter_measurement_sleep_s)
    finally:
        stream.close()
    return traces


# --- synthetic traces ------------------------------------------------------

GENERATORS: dict[str, dict[str, float]] = {
    "benign-noise": {"mu": 1000.0, "sigma": 100.0},
    "attack-burst": {"mu": 1000.0, "sigma": 100.0, "amplitude": 800.0, "period": 50.0, "width": 12.0},
}


def synth_trace(
    generator: str,
    seed: int,
    n_samples: int,
    params: dict[str, float] | None = None,
    label: ClassLabel | None = None,
) -> EnergyTrace:
    """Deterministic stand-in workload trace.

    ``benign-noise`` is Gaussian around ``mu``; ``attack-burst`` adds
    ``amplitude`` for ``width`` samples of every ``period`` (random phase).
    Values are rounded to whole µJ and clipped at zero like real counters.
    """
    if generator not in GENERATORS:
        raise UnknownGenerator(f"Unknown generator: {generator}.", generator=generator, known=sorted(GENERATORS))
    if n_samples < 1:
        raise InvalidConfig("n_samples must be at least 1.", n_samples=n_samples)
    unknown = set(params or {}) - set(GENERATORS[generator])
    if unknown:
        raise InvalidConfig(f"Unknown parameters for {generator}: {sorted(unknown)}.", generator=generator)
    p = {**GENERATORS[generator], **(params or {})}
    rng = np.random.default_rng(seed)
    values = rng.normal(p["mu"], p["sigma"], n_samples)
    if generator == "attack-burst":
        period = max(1, int(p["period"]))
        width = min(period, max(1, int(p["width"])))
        phase = int(rng.integers(period))
        on = ((np.arange(n_samples) + phase) % period) < width
        values = values + p["amplitude"] * on
    deltas = np.clip(np.rint(values), 0, None)
    return EnergyTrace(deltas=deltas, label=label or UNLABELED, meta=TraceMeta(achieved_period_us=500.0))


def synthetic_class_params(is_attack: bool, index: int) -> tuple[str, dict[str, float]]:
    """Generator and parameters for the synthetic stand-in of a class.

    Benign classes differ in base level; attack classes differ in burst
    amplitude and period, and every attack class sits above every benign one.
    """
    if is_attack:
        period = 16 + 6 * index
        return "attack-burst", {
            "mu": 900.0 + 10 * index,
            "sigma": 80.0,
            "amplitude": 500.0 + 120 * index,
            "period": float(period),
            "width": float(period // 2),
        }
    return "benign-noise", {"mu": 600.0 + 12 * index, "sigma": 60.0 + 2 * (index % 10)}


def _trace_seed(seed: int, family: int, index: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, family, index, k]).generate_state(1)[0])


def synth_dataset(
    n_benign: int = 35,
    n_attack: int = 15,
    traces_per_class: int = 50,
    n_samples: int = 3000,
    seed: int = 0,
) -> Dataset:
    if not 0 <= n_attack <= len(ATTACK_NAMES):
        raise InvalidConfig(f"n_attack must be within [0, {len(ATTACK_NAMES)}].", n_attack=n_attack)
    traces: list[EnergyTrace] = []
    for index in range(n_benign):
        label = ClassLabel.benign(f"synthetic-benign-{index:02d}")
        generator, params = synthetic_class_params(False, index)
        for k in range(traces_per_class):
            trace = synth_trace(generator, _trace_seed(seed, 0, index, k), n_samples, params, label)
            traces.append(EnergyTrace(deltas=trace.deltas, label=label, meta=trace.meta, trace_id=f"{label.name}/{k:03d}"))
    for index in range(n_attack):
        label = ClassLabel.attack(ATTACK_NAMES[index])
        generator, params = synthetic_class_params(True, index)
        for k in range(traces_per_class):
            trace = synth_trace(generator, _trace_seed(seed, 1, index, k), n_samples, params, label)
            traces.append(EnergyTrace(deltas=trace.deltas, label=label, meta=trace.meta, trace_id=f"{label.name}/{k:03d}"))
    return Dataset(traces)


# --- HTTP capabilities -----------------------------------------------------


class ZonesInput(BaseModel):
    root: StrictStr | None = None

    class Config:
        extra = "forbid"


class SynthInput(BaseModel):
    generator: StrictStr
    seed: StrictInt = 0
    n_samples: StrictInt = Field(default=3000, ge=1, le=100_000)
    params: dict[str, float] = Field(default_factory=dict)

    class Config:
        extra = "forbid"


def _failure(tool: str, error: DetectorError, stage: str = "validate", path: str = "") -> JSONResponse:
    return JSONResponse(
        status_code=error.http_status,
        content={"ok": False, "tool": tool, "version": "1.0", "result": None, "error": error.to_structured(tool, stage, path)},
    )


def _invalid_input(tool: str) -> JSONResponse:
    return _failure(tool, InputInvalid(f"Input must match the {tool} schema."), "validate")


@router.post("/tools/rapl_zones")
def rapl_zones(payload: dict[str, Any]):
    try:
        data = ZonesInput.model_validate(payload)
    except ValidationError:
        return _invalid_input("rapl_zones")
    try:
        zones = discover_zones(data.root)
    except DetectorError as error:
        return _failure("rapl_zones", error, stage="discover")
    return {
        "ok": True,
        "tool": "rapl_zones",
        "version": "1.0",
        "result": {"zones": [zone.model_dump(mode="json") for zone in zones]},
        "error": None,
    }


@router.post("/tools/synth_trace")
def synth_trace_tool(payload: dict[str, Any]):
    try:
        data = SynthInput.model_validate(payload)
    except ValidationError:
        return _invalid_input("synth_trace")
    try:
        trace = synth_trace(data.generator, data.seed, data.n_samples, data.params)
    except DetectorError as error:
        return _failure("synth_trace", error, stage="generate", path="generator")
    return {
        "ok": True,
        "tool": "synth_trace",
        "version": "1.0",
        "result": {"deltas": trace.deltas.tolist(), "mean": float(trace.deltas.mean()), "n_samples": len(trace)},
        "error": None,
    }


_ENVELOPE_ERROR = {
    "type": ["object", "null"],
    "properties": {
        "class": {"type": "string"},
        "code": {"type": "string"},
        "message": {"type": "string"},
        "retryable": {"type": "boolean"},
        "severity": {"type": "string"},
        "where": {"type": "object"},
        "http_status": {"type": "integer"},
        "fingerprint": {"type": "string"},
    },
}

ZONES_CONTRACT = {
    "name": "rapl_zones",
    "version": "1.0.0",
    "path": "/tools/rapl_zones",
    "description": "List readable RAPL power zones with their domain and counter range.",
    "determinism": {"same_input_same_output": True, "side_effects": False, "network": False, "storage": False},
    "inputs": {
        "content_type": "application/json",
        "json_schema": {
            "type": "object",
            "properties": {"root": {"type": "string"}},
            "required": [],
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
                "result": {"type": ["object", "null"], "properties": {"zones": {"type": "array", "items": {"type": "object"}}}},
                "error": _ENVELOPE_ERROR,
            },
            "required": ["ok", "tool", "version", "result", "error"],
        },
    },
    "errors": {
        "codes": [
            {"code": "RAPL_PERMISSION_DENIED", "when": "energy attribute unreadable"},
            {"code": "RAPL_READ_FAILED", "when": "zone attribute read failed"},
            {"code": "RAPL_PARSE_FAILED", "when": "zone attribute malformed"},
            {"code": "INPUT_INVALID", "when": "request body invalid"},
        ],
    },
    "non_goals": ["no power limiting", "no per-process attribution"],
    "examples": [{"input": {}, "output": {"ok": True, "tool": "rapl_zones", "version": "1.0", "result": {"zones": []}, "error": None}}],
}

SYNTH_CONTRACT = {
    "name": "synth_trace",
    "version": "1.0.0",
    "path": "/tools/synth_trace",
    "description": "Generate a deterministic synthetic energy-delta trace.",
    "determinism": {"same_input_same_output": True, "side_effects": False, "network": False, "storage": False},
    "inputs": {
        "content_type": "application/json",
        "json_schema": {
            "type": "object",
            "properties": {
                "generator": {"type": "string", "enum": sorted(GENERATORS)},
                "seed": {"type": "integer"},
                "n_samples": {"type": "integer"},
                "params": {"type": "object"},
            },
            "required": ["generator"],
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
                        "deltas": {"type": "array", "items": {"type": "number"}},
                        "mean": {"type": "number"},
                        "n_samples": {"type": "integer"},
                    },
                },
                "error": _ENVELOPE_ERROR,
            },
            "required": ["ok", "tool", "version", "result", "error"],
        },
    },
    "errors": {
        "codes": [
            {"code": "UNKNOWN_GENERATOR", "when": "generator not known"},
            {"code": "INPUT_INVALID", "when": "request body invalid"},
            {"code": "CONFIG_INVALID", "when": "n_samples or params invalid for the generator"},
        ],
    },
    "non_goals": ["no real workload execution"],
    "examples": [
        {
            "input": {"generator": "benign-noise", "seed": 7, "n_samples": 3},
            "output": {"ok": True, "tool": "synth_trace", "version": "1.0", "result": {"n_samples": 3}, "error": None},
        }
    ],
}
