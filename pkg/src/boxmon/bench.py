"""Throughput benchmark for the nearest-box query path.

Builds a randomized monitor of the requested shape and times individual
distance queries. A configurable fraction of queries is guaranteed to be
contained in some box, exercising the first-containing-box short circuit;
the remainder are drawn from the surrounding value range. Numbers are
reported, not asserted (hardware-dependent); the acceptance suite pins
only a coarse ceiling.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceLimitError
from .monitor import ClassMonitor, _nearest_box

_WARMUP_QUERIES = 3


@dataclass(frozen=True)
class BenchReport:
    boxes: int
    dimension: int
    queries: int
    inside_fraction: float
    threads: int
    total_seconds: float
    mean_ms: float
    median_ms: float
    p99_ms: float
    queries_per_second: float
    warmup_queries: int = _WARMUP_QUERIES
    per_thread: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "boxes": self.boxes,
            "dimension": self.dimension,
            "queries": self.queries,
            "inside_fraction": self.inside_fraction,
            "threads": self.threads,
            "total_seconds": self.total_seconds,
            "mean_ms": self.mean_ms,
            "median_ms": self.median_ms,
            "p99_ms": self.p99_ms,
            "queries_per_second": self.queries_per_second,
            "warmup_queries": self.warmup_queries,
            "per_thread": self.per_thread,
        }


def _random_monitor(rng: np.random.Generator, boxes: int, dimension: int) -> ClassMonitor:
    try:
        lower = rng.uniform(0.0, 10.0, size=(boxes, dimension))
        upper = lower + rng.uniform(0.1, 1.0, size=(boxes, dimension))
    except MemoryError as exc:
        raise ResourceLimitError(
            f"cannot allocate a {boxes}x{dimension} monitor on this host"
        ) from exc
    return ClassMonitor("bench", lower, upper)


def _make_queries(
    rng: np.random.Generator,
    monitor: ClassMonitor,
    queries: int,
    inside_fraction: float,
) -> np.ndarray:
    n_inside = int(round(inside_fraction * queries))
    try:
        out = rng.uniform(0.0, 11.0, size=(queries, monitor.dimension))
    except MemoryError as exc:
        raise ResourceLimitError(
            f"cannot allocate {queries} query vectors of dimension "
            f"{monitor.dimension}"
        ) from exc
    for i in range(n_inside):
        j = int(rng.integers(monitor.box_count))
        out[i] = rng.uniform(monitor.lower[j], monitor.upper[j])
    return out[rng.permutation(queries)]


def _timed_run(monitor: ClassMonitor, queries: np.ndarray) -> np.ndarray:
    lower, upper = monitor.lower, monitor.upper
    latencies = np.empty(queries.shape[0], dtype=np.float64)
    for i in range(queries.shape[0]):
        t0 = time.perf_counter_ns()
        _nearest_box(lower, upper, queries[i])
        latencies[i] = time.perf_counter_ns() - t0
    return latencies


def bench_throughput(
    boxes: int,
    dimension: int,
    queries: int,
    inside_fraction: float,
    seed: int = 0,
    threads: int = 1,
) -> BenchReport:
    """Time distance queries against a random monitor of the given shape.

    Single-threaded by default; with ``threads > 1`` the query stream is
    split evenly and per-thread figures are reported alongside the
    aggregate (the compiled kernel releases the GIL). A few warmup
    queries run untimed so JIT compilation never lands in the numbers.
    """
    if boxes < 1 or dimension < 1 or queries < 1:
        raise ValueError("boxes, dimension and queries must all be at least 1")
    if not (0.0 <= inside_fraction <= 1.0):
        raise ValueError("inside_fraction must lie in [0, 1]")
    if threads < 1:
        raise ValueError("threads must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    monitor = _random_monitor(rng, boxes, dimension)
    probe = _make_queries(rng, monitor, queries, inside_fraction)
    for i in range(min(_WARMUP_QUERIES, probe.shape[0])):
        _nearest_box(monitor.lower, monitor.upper, probe[i])
    wall0 = time.perf_counter()
    per_thread: list[dict] = []
    if threads == 1:
        latencies = _timed_run(monitor, probe)
    else:
        chunks = np.array_split(probe, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _timed_run(monitor, c), chunks))
        for t, lat in enumerate(results):
            per_thread.append(
                {
                    "thread": t,
                    "queries": int(lat.size),
                    "mean_ms": float(lat.mean() / 1e6) if lat.size else 0.0,
                }
            )
        latencies = np.concatenate([lat for lat in results if lat.size])
    total = time.perf_counter() - wall0
    return BenchReport(
        boxes=boxes,
        dimension=dimension,
        queries=queries,
        inside_fraction=inside_fraction,
        threads=threads,
        total_seconds=total,
        mean_ms=float(latencies.mean() / 1e6),
        median_ms=float(np.median(latencies) / 1e6),
        p99_ms=float(np.percentile(latencies, 99) / 1e6),
        queries_per_second=float(latencies.size / total) if total > 0 else float("inf"),
        per_thread=per_thread,
    )
