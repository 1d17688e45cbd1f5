"""Closed-loop learning runner and the performance metrics.

One iteration presents a ball column to the network, reads the action as
the most active output neuron, scores it with the graded aiming reward and
applies the reward-modulated STDP update. Learning progress is measured
separately with noise-free greedy evaluations played out in the full game.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .config import ExperimentConfig
from .exceptions import ParameterError, UndefinedCorrelationError
from .plasticity import (SynapseMatrix, accumulate_traces, baseline_value, digitize,
                         init_baseline, rstdp_update, update_baseline)
from .pong import compute_reward, evaluate_catch_fraction
from .snn import (Population, firing_rates, poisson_encode, run_trial, simulate_batch)

_SEED_MAX = 2**63


@dataclass
class IterationLog:
    iteration: int
    state: int
    action: int
    reward: float
    baseline: float
    rate_vector: np.ndarray
    weight_delta_norm: float
    wall_time: float


@dataclass
class Metrics:
    catch_fraction_curve: list[tuple[int, float]] = field(default_factory=list)
    mean_reward_curve: list[tuple[int, float]] = field(default_factory=list)
    initial_catch_fraction: float = 0.0
    diagonal_dominance: float = 0.0
    weight_excitability_correlation: float | None = None
    correlation_p_value: float | None = None
    final_policy: list[int] = field(default_factory=list)

    @property
    def final_catch_fraction(self) -> float:
        return self.catch_fraction_curve[-1][1]


@dataclass
class ExperimentResult:
    weights: SynapseMatrix
    logs: list[IterationLog]
    metrics: Metrics
    population: Population
    initial_weights: SynapseMatrix
    config: ExperimentConfig


@dataclass
class Streams:
    """Independent random streams so that, e.g., evaluation never perturbs training.

    Every evaluation restarts from ``evaluate_seed``: identical weights are
    always scored on identical input trains and tie-breaks.
    """

    init: np.random.Generator
    train: np.random.Generator
    evaluate_seed: int
    analysis: np.random.Generator
    fixed_pattern_seed: int

    def evaluation_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.evaluate_seed)

    @classmethod
    def from_seed(cls, seed: int) -> "Streams":
        ss = np.random.SeedSequence(seed)
        init, train, evaluate, analysis, fp = ss.spawn(5)
        return cls(np.random.default_rng(init), np.random.default_rng(train),
                   int(evaluate.generate_state(1)[0]), np.random.default_rng(analysis),
                   int(fp.generate_state(1)[0]))


def argmax_action(rates: np.ndarray, rng: np.random.Generator) -> int:
    """Index of the highest rate; ties broken uniformly at random."""
    best = np.flatnonzero(rates == rates.max())
    return int(best[0] if best.size == 1 else rng.choice(best))


def initial_weights(cfg: ExperimentConfig, rng: np.random.Generator,
                    shape: tuple[int, int] | None = None) -> SynapseMatrix:
    """Uniform draw over the lowest ``init_fraction`` of the weight range."""
    p = cfg.plasticity
    n = cfg.env.n_columns
    shape = shape or (n, n)
    if p.weight_levels:
        # draw level indices so that snapping cannot push a weight past the bound
        top = int(np.floor(p.init_fraction * (p.weight_levels - 1) + 1e-9))
        idx = rng.integers(0, top + 1, size=shape)
        return SynapseMatrix(idx * (p.w_max / (p.weight_levels - 1)), 0.0, p.w_max, p.weight_levels)
    w = rng.uniform(0.0, p.init_fraction * p.w_max, size=shape)
    return SynapseMatrix(w, 0.0, p.w_max, None)


def make_population(cfg: ExperimentConfig, n: int | None = None, seed: int = 0) -> Population:
    return Population.create(n or cfg.env.n_columns, cfg.snn.neuron_params(),
                             cfg.noise.fixed_pattern_sigma, seed)


def run_iteration(weights: SynapseMatrix, population: Population, baseline, state: int,
                  cfg: ExperimentConfig, rng: np.random.Generator, iteration: int = 0,
                  plastic: bool = True):
    """One closed-loop step. Returns ``(weights, baseline, IterationLog)``.

    The weight update uses the baseline as it was before this iteration's
    own moving-average step.
    """
    t0 = time.perf_counter()
    snn, pl = cfg.snn, cfg.plasticity
    n_in, n_out = weights.shape
    seed_in, seed_noise = (int(s) for s in rng.integers(0, _SEED_MAX, size=2))
    inp = poisson_encode(state, n_in, snn.rate_hi, snn.rate_lo, snn.duration, seed_in)
    out, _ = run_trial(weights, population, inp, snn.duration, snn.dt,
                       cfg.noise.noise(cfg.seed), seed_noise, snn.weight_scale)
    rates = firing_rates(out, n_out, snn.duration)
    action = argmax_action(rates, rng)
    reward = compute_reward(state, action, cfg.env.reward())
    r_bar = baseline_value(baseline, state)
    new_weights = weights
    if plastic:
        rcfg = pl.rstdp()
        traces = digitize(accumulate_traces(inp, out, pl.kernel(), weights.shape,
                                            pl.trace_saturation, pl.adc_levels))
        baseline = update_baseline(baseline, reward, state, rcfg)
        new_weights = rstdp_update(weights, traces, reward, r_bar, rcfg, rng)
    delta = float(np.linalg.norm(new_weights.w - weights.w))
    wall = time.perf_counter() - t0 if cfg.record_wall_time else 0.0
    log = IterationLog(iteration, state, action, reward, r_bar, rates, delta, wall)
    return new_weights, baseline, log


def greedy_rates(weights: SynapseMatrix, population: Population, cfg: ExperimentConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """Noise-free output rates per input state, averaged over ``eval_repeats`` inputs."""
    snn = cfg.snn
    n_in, n_out = weights.shape
    repeats = cfg.eval_repeats
    inputs = [poisson_encode(s, n_in, snn.rate_hi, snn.rate_lo, snn.duration,
                             int(rng.integers(0, _SEED_MAX)))
              for s in range(n_in) for _ in range(repeats)]
    spikes, _ = simulate_batch(weights, population, inputs, snn.duration, snn.dt, 0.0,
                               rng, snn.weight_scale)
    counts = spikes.sum(axis=0).reshape(n_in, repeats, n_out).mean(axis=1)
    return counts * (1000.0 / snn.duration)


def greedy_policy(weights: SynapseMatrix, population: Population, cfg: ExperimentConfig,
                  rng: np.random.Generator) -> list[int]:
    rates = greedy_rates(weights, population, cfg, rng)
    return [argmax_action(r, rng) for r in rates]


def evaluate(weights, population, cfg, rng) -> tuple[float, list[int]]:
    policy = greedy_policy(weights, population, cfg, rng)
    return evaluate_catch_fraction(policy, cfg.env.field()), policy


def diagonal_dominance(weights) -> float:
    """Fraction of rows whose diagonal entry is the strict row maximum."""
    w = np.asarray(getattr(weights, "w", weights))
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ParameterError(f"diagonal dominance needs a square matrix, got {w.shape}")
    n = w.shape[0]
    diag = np.diag(w)
    off = w.copy()
    off[np.arange(n), np.arange(n)] = -np.inf
    return float(np.mean(diag > off.max(axis=1)))


def weight_excitability_correlation(weights, population: Population) -> float:
    """Spearman correlation of ``v_thresh - v_rest`` with the diagonal weight."""
    w = np.asarray(getattr(weights, "w", weights))
    gap = population.excitability_gap()
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] != gap.size:
        raise ParameterError("weights must be square and match the population size")
    diag = np.diag(w)
    if np.ptp(gap) == 0 or np.ptp(diag) == 0:
        raise UndefinedCorrelationError("correlation undefined for zero-variance input")
    return float(stats.spearmanr(gap, diag).statistic)


def correlation_permutation_test(weights, population: Population, n_shuffles: int = 1000,
                                 rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Observed correlation and one-sided (positive) permutation p-value."""
    rng = rng or np.random.default_rng(0)
    rho = weight_excitability_correlation(weights, population)
    gap = stats.rankdata(population.excitability_gap())
    diag = stats.rankdata(np.diag(np.asarray(getattr(weights, "w", weights))))
    hits = 0
    for _ in range(n_shuffles):
        hits += stats.pearsonr(gap, rng.permutation(diag)).statistic >= rho - 1e-12
    return rho, (hits + 1) / (n_shuffles + 1)


def state_sequence(cfg: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.env.n_columns
    if cfg.state_schedule == "cyclic":
        return np.arange(cfg.n_iterations) % n
    return rng.integers(0, n, size=cfg.n_iterations)


def mean_reward_curve(logs: Sequence[IterationLog], eval_every: int) -> list[tuple[int, float]]:
    rewards = np.array([g.reward for g in logs])
    curve = []
    for end in range(eval_every, len(rewards) + 1, eval_every):
        curve.append((end, float(rewards[end - eval_every:end].mean())))
    return curve


def run_experiment(cfg: ExperimentConfig, on_iteration=None, on_evaluation=None) -> ExperimentResult:
    """Train from scratch and evaluate every ``eval_every`` iterations.

    ``on_iteration(log)`` and ``on_evaluation(iteration, fraction)`` are
    optional callbacks for streaming output.
    """
    cfg.validate()
    streams = Streams.from_seed(cfg.seed)
    population = make_population(cfg, seed=streams.fixed_pattern_seed)
    w0 = initial_weights(cfg, streams.init)
    n = cfg.env.n_columns
    baseline = init_baseline(cfg.plasticity.rstdp(), n, cfg.plasticity.baseline_init)
    states = state_sequence(cfg, streams.train)

    metrics = Metrics()
    metrics.initial_catch_fraction, _ = evaluate(w0, population, cfg, streams.evaluation_rng())
    w = w0
    logs = []
    for k, state in enumerate(states, start=1):
        w, baseline, log = run_iteration(w, population, baseline, int(state), cfg,
                                         streams.train, iteration=k)
        logs.append(log)
        if on_iteration:
            on_iteration(log)
        if k % cfg.eval_every == 0:
            frac, policy = evaluate(w, population, cfg, streams.evaluation_rng())
            metrics.catch_fraction_curve.append((k, frac))
            metrics.final_policy = policy
            if on_evaluation:
                on_evaluation(k, frac)
    if not metrics.catch_fraction_curve:
        frac, metrics.final_policy = evaluate(w, population, cfg, streams.evaluation_rng())
        metrics.catch_fraction_curve.append((len(logs), frac))
    metrics.mean_reward_curve = mean_reward_curve(logs, cfg.eval_every)
    metrics.diagonal_dominance = diagonal_dominance(w)
    try:
        rho, p = correlation_permutation_test(w, population, rng=streams.analysis)
        metrics.weight_excitability_correlation, metrics.correlation_p_value = rho, p
    except UndefinedCorrelationError:
        pass
    return ExperimentResult(w, logs, metrics, population, w0, cfg)


def _run_seed(args):
    cfg, seed = args
    return run_experiment(replace(cfg, seed=seed))


def run_sweep(cfg: ExperimentConfig, seeds: Sequence[int], workers: int = 1) -> list[ExperimentResult]:
    """Independent runs per seed; results do not depend on ``workers``."""
    if not seeds:
        raise ParameterError("seed list must be non-empty")
    jobs = [(cfg, int(s)) for s in seeds]
    if workers <= 1:
        return [_run_seed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_seed, jobs))


def aggregate_curves(curves: Sequence[Sequence[tuple[int, float]]]) -> list[tuple[int, float, float, float, int]]:
    """Per-iteration ``(iteration, median, q25, q75, n)`` across runs."""
    iters = [it for it, _ in curves[0]]
    for c in curves:
        if [it for it, _ in c] != iters:
            raise ParameterError("curves have mismatched iteration grids")
    values = np.array([[v for _, v in c] for c in curves])
    rows = []
    for col, it in enumerate(iters):
        q25, med, q75 = np.percentile(values[:, col], [25, 50, 75])
        rows.append((it, float(med), float(q25), float(q75), len(curves)))
    return rows
