"""Per-iteration timing of the closed loop with and without plasticity.

The measured section runs one full ``run_iteration`` per sample. The
no-plasticity mode skips trace accumulation and the weight update and is
otherwise identical, so the two modes differ only by the learning work.
"""
from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ExperimentConfig
from .exceptions import ConfigurationError
from .experiment import initial_weights, make_population, run_iteration
from .plasticity import init_baseline

MODES = ("no-plasticity", "with-plasticity")


@dataclass(frozen=True)
class BenchConfig:
    n_iterations: int = 200
    warmup: int = 20
    sizes: tuple[tuple[int, int], ...] = ((32, 32), (64, 64), (128, 128))
    modes: tuple[str, ...] = MODES
    seed: int = 0

    def __post_init__(self):
        if self.n_iterations - self.warmup <= 0 or self.warmup < 0:
            raise ConfigurationError("bench: need 0 <= warmup < n_iterations")
        if not self.sizes:
            raise ConfigurationError("bench.sizes: must be non-empty")
        for n_in, n_out in self.sizes:
            if n_in < 2 or n_out < 2:
                raise ConfigurationError(f"bench.sizes: bad size {n_in}x{n_out}")
        if not self.modes or any(m not in MODES for m in self.modes):
            raise ConfigurationError(f"bench.modes: must be a non-empty subset of {MODES}")

    @property
    def measured(self) -> int:
        return self.n_iterations - self.warmup


def parse_sizes(text: str) -> tuple[tuple[int, int], ...]:
    """``"32x32,64x64"`` -> ``((32, 32), (64, 64))``."""
    sizes = []
    for item in text.split(","):
        item = item.strip()
        parts = item.lower().split("x")
        if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
            raise ConfigurationError(f"bench.sizes: cannot parse {item!r}, expected NxM")
        sizes.append((int(parts[0]), int(parts[1])))
    if not sizes:
        raise ConfigurationError("bench.sizes: must be non-empty")
    return tuple(sizes)


def parse_modes(text: str) -> tuple[str, ...]:
    return tuple(m.strip() for m in text.split(",") if m.strip())


def bench_config(cfg: ExperimentConfig) -> BenchConfig:
    b = cfg.bench
    return BenchConfig(b.n_iterations, b.warmup, parse_sizes(b.sizes), parse_modes(b.modes), cfg.seed)


@dataclass
class BenchRow:
    mode: str
    n_input: int
    n_output: int
    median_s: float
    p10_s: float
    p90_s: float
    n_samples: int


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    samples: dict[tuple[str, int, int], np.ndarray] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def row(self, mode: str, n_input: int, n_output: int) -> BenchRow:
        for r in self.rows:
            if (r.mode, r.n_input, r.n_output) == (mode, n_input, n_output):
                return r
        raise KeyError((mode, n_input, n_output))


def quantiles(samples) -> tuple[float, float, float]:
    """``(median, p10, p90)`` with numpy's default linear interpolation."""
    p10, med, p90 = np.percentile(np.asarray(samples, dtype=np.float64), [10, 50, 90])
    return float(med), float(p10), float(p90)


def timer_resolution() -> float:
    return time.get_clock_info("perf_counter").resolution


def _pin_to_one_cpu():
    # keep the measured loop on one logical CPU; not available everywhere
    if not hasattr(os, "sched_getaffinity"):
        return None
    old = os.sched_getaffinity(0)
    try:
        os.sched_setaffinity(0, {min(old)})
    except OSError:
        return None
    return old


def _time_mode(cfg: ExperimentConfig, bcfg: BenchConfig, size, plastic: bool) -> np.ndarray:
    n_in, n_out = size
    rng = np.random.default_rng(bcfg.seed)
    weights = initial_weights(cfg, rng, shape=(n_in, n_out))
    population = make_population(cfg, n_out, seed=bcfg.seed)
    baseline = init_baseline(cfg.plasticity.rstdp(), n_in)
    states = rng.integers(0, n_in, size=bcfg.n_iterations)
    samples = np.empty(bcfg.measured)
    for k, s in enumerate(states):
        t0 = time.perf_counter()
        weights, baseline, _ = run_iteration(weights, population, baseline, int(s), cfg, rng,
                                             iteration=k + 1, plastic=plastic)
        elapsed = time.perf_counter() - t0
        if k >= bcfg.warmup:
            samples[k - bcfg.warmup] = elapsed
    return samples


def run_bench(cfg: ExperimentConfig, bcfg: BenchConfig | None = None) -> BenchReport:
    """Time every (mode, size) pair; each pair starts from the same seed."""
    bcfg = bcfg or bench_config(cfg)
    cfg = replace(cfg, record_wall_time=False)
    report = BenchReport()
    old_affinity = _pin_to_one_cpu()
    try:
        for size in bcfg.sizes:
            for mode in bcfg.modes:
                samples = _time_mode(cfg, bcfg, size, plastic=(mode == "with-plasticity"))
                med, p10, p90 = quantiles(samples)
                report.rows.append(BenchRow(mode, size[0], size[1], med, p10, p90, samples.size))
                report.samples[(mode, size[0], size[1])] = samples
    finally:
        if old_affinity is not None:
            os.sched_setaffinity(0, old_affinity)
    res = timer_resolution()
    for r in report.rows:
        if res >= r.median_s:
            report.warnings.append(
                f"timer resolution {res:g}s is not finer than the {r.mode} "
                f"{r.n_input}x{r.n_output} median {r.median_s:g}s")
    return report


REPORT_COLUMNS = ["mode", "n_input", "n_output", "median_s", "p10_s", "p90_s", "n_samples"]
SAMPLE_COLUMNS = ["mode", "n_input", "n_output", "sample", "seconds"]


def write_report(report: BenchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            w.writerow([r.mode, r.n_input, r.n_output, repr(r.median_s), repr(r.p10_s),
                        repr(r.p90_s), r.n_samples])


def write_samples(report: BenchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for (mode, n_in, n_out), samples in report.samples.items():
            for k, s in enumerate(samples):
                w.writerow([mode, n_in, n_out, k, repr(float(s))])


def read_samples(path) -> dict[tuple[str, int, int], np.ndarray]:
    out: dict[tuple[str, int, int], list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["mode"], int(row["n_input"]), int(row["n_output"]))
            out.setdefault(key, []).append(float(row["seconds"]))
    return {k: np.array(v) for k, v in out.items()}
