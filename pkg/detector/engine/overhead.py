"""Self-overhead benchmark: a command's median runtime alone vs. with the sampler running."""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import threading
import time
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, StrictInt

from detector._shared.errors import CommandFailed, DetectorError, InvalidConfig
from detector.sensor import CollectorConfig, LiveSource, ReplaySource, SyntheticSource, open_stream, sleep_until

logger = logging.getLogger("detector.engine")

MIN_REPETITIONS = 3


class BenchConfig(BaseModel):
    command: str
    repetitions: StrictInt = Field(default=5, ge=1)
    interval_us: StrictInt = Field(default=500, ge=1)
    pin_cpu: StrictInt | None = Field(default=None, ge=0)

    class Config:
        extra = "forbid"


class OverheadReport(BaseModel):
    command: str
    runtime_alone_s: float
    runtime_with_sampling_s: float
    overhead_pct: float
    repetitions: StrictInt
    samples_taken: StrictInt
    pinned_cpu: StrictInt | None = None


def _pin(cpu: int | None) -> None:
    if cpu is not None and hasattr(os, "sched_setaffinity"):
        os.sched_setaffinity(0, {cpu})


class _Sampler(threading.Thread):
    """Pulls one delta per interval until stopped; live streams pace themselves."""

    def __init__(self, stream: Any, interval_us: int, cpu: int | None) -> None:
        super().__init__(name="detector-bench-sampler", daemon=True)
        self.stream = stream
        self.interval_ns = interval_us * 1000
        self.cpu = cpu
        self.samples = 0
        self.stopping = threading.Event()

    def run(self) -> None:
        _pin(self.cpu)
        deadline = time.monotonic_ns()
        while not self.stopping.is_set():
            deadline += self.interval_ns
            try:
                self.stream.take(1)
            except DetectorError as exc:
                logger.error("engine sampler_failed code=%s message=%s", exc.code, exc.message)
                return
            self.samples += 1
            if not self.stream.realtime:
                sleep_until(deadline)


def _time_command(argv: list[str], cpu: int | None) -> float:
    started = time.perf_counter()
    try:
        result = subprocess.run(
            argv,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.PIPE,
            text=True,
            preexec_fn=(lambda: _pin(cpu)) if cpu is not None else None,
        )
    except OSError as exc:
        raise CommandFailed(f"Cannot run {argv[0]}: {exc.strerror}.", command=argv) from exc
    elapsed = time.perf_counter() - started
    if result.returncode != 0:
        raise CommandFailed(
            f"Benchmark command exited {result.returncode}.",
            command=argv,
            returncode=result.returncode,
            stderr=result.stderr.strip()[:200],
        )
    return elapsed


def bench_overhead(
    config: BenchConfig,
    source: LiveSource | ReplaySource | SyntheticSource,
) -> OverheadReport:
    """Alternate plain and sampled runs; overhead is computed from the medians."""
    if config.repetitions < MIN_REPETITIONS:
        raise InvalidConfig(
            f"Overhead needs at least {MIN_REPETITIONS} repetitions, got {config.repetitions}.",
            repetitions=config.repetitions,
        )
    argv = shlex.split(config.command)
    if not argv:
        raise InvalidConfig("Benchmark command is empty.")
    alone, sampled = [], []
    samples = 0
    for repetition in range(config.repetitions):
        alone.append(_time_command(argv, config.pin_cpu))
        stream = open_stream(source, CollectorConfig(interval_us=config.interval_us, samples_per_trace=1))
        sampler = _Sampler(stream, config.interval_us, config.pin_cpu)
        sampler.start()
        try:
            sampled.append(_time_command(argv, config.pin_cpu))
        finally:
            sampler.stopping.set()
            sampler.join()
            stream.close()
        samples += sampler.samples
        logger.info(
            "engine overhead_repetition index=%s alone_s=%.4f with_sampling_s=%.4f samples=%s",
            repetition,
            alone[-1],
            sampled[-1],
            sampler.samples,
        )
    median_alone = float(np.median(alone))
    median_sampled = float(np.median(sampled))
    overhead = (median_sampled - median_alone) / median_alone * 100 if median_alone > 0 else 0.0
    return OverheadReport(
        command=config.command,
        runtime_alone_s=median_alone,
        runtime_with_sampling_s=median_sampled,
        overhead_pct=overhead,
        repetitions=config.repetitions,
        samples_taken=samples,
        pinned_cpu=config.pin_cpu,
    )
