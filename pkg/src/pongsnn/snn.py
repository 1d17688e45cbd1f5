"""Clocked simulation of a two-layer leaky integrate-and-fire network.

Input units are not simulated as neurons: they are Poisson spike sources
(one-hot rate code of the ball column) that project through a weight matrix
onto a population of current-based LIF neurons.

Membrane and synaptic current follow an exponential-Euler scheme::

    i_syn <- i_syn * exp(-dt / tau_syn) + injected + noise
    v     <- v_rest + (v - v_rest) * exp(-dt / tau_m) + i_syn * (1 - exp(-dt / tau_m))

``i_syn`` is expressed in mV (it is the steady-state depolarisation it would
produce), so a constant ``i_syn = I`` drives ``v`` toward ``v_rest + I``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numba
import numpy as np

from .exceptions import ConfigurationError, ParameterError

DEFAULT_DT = 0.1
DEFAULT_DURATION = 50.0
DEFAULT_RATE_HI = 70.0
DEFAULT_RATE_LO = 0.0
# Current jump (mV) per input spike at weight 1.0; with 70 Hz input this
# drives a nominal neuron at roughly 100 Hz.
DEFAULT_WEIGHT_SCALE = 95.0
DEFAULT_TRIAL_NOISE = 1.5

_REFRAC_EPS = 0.5


@dataclass(frozen=True)
class NeuronParams:
    """LIF constants. Times in ms, potentials in mV."""

    tau_m: float = 10.0
    v_rest: float = -65.0
    v_reset: float = -70.0
    v_thresh: float = -55.0
    tau_refrac: float = 2.0
    tau_syn: float = 5.0

    def __post_init__(self):
        if not (self.tau_m > 0 and self.tau_syn > 0):
            raise ParameterError(f"time constants must be positive: {self}")
        if self.tau_refrac < 0:
            raise ParameterError(f"tau_refrac must be >= 0: {self}")
        if not (self.v_reset <= self.v_rest < self.v_thresh):
            raise ParameterError(f"need v_reset <= v_rest < v_thresh: {self}")


@dataclass
class NeuronState:
    v: float
    i_syn: float = 0.0
    refrac_remaining: float = 0.0

    @classmethod
    def at_rest(cls, params: NeuronParams) -> "NeuronState":
        return cls(v=params.v_rest)


@dataclass
class Population:
    """Output neurons with per-neuron (possibly mismatched) parameters."""

    params: list[NeuronParams]
    states: list[NeuronState]
    nominal_params: NeuronParams = field(default_factory=NeuronParams)

    def __post_init__(self):
        if len(self.params) != len(self.states):
            raise ParameterError("params and states must have equal length")

    @classmethod
    def create(cls, n: int = 32, nominal: NeuronParams | None = None,
               fixed_pattern_sigma: float = 0.0, seed: int = 0) -> "Population":
        nominal = nominal or NeuronParams()
        params = apply_fixed_pattern_noise(nominal, n, fixed_pattern_sigma, seed)
        return cls(params, [NeuronState.at_rest(p) for p in params], nominal)

    def __len__(self) -> int:
        return len(self.params)

    def reset(self) -> None:
        self.states = [NeuronState.at_rest(p) for p in self.params]

    def param_array(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.params], dtype=np.float64)

    def excitability_gap(self) -> np.ndarray:
        """v_thresh - v_rest per neuron; smaller means more excitable."""
        return self.param_array("v_thresh") - self.param_array("v_rest")


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    """Time-ordered spike events. ``times`` in ms, ``units`` are indices."""

    times: np.ndarray
    units: np.ndarray
    n_units: int
    duration: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        units = np.asarray(self.units, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "units", units)
        if times.shape != units.shape:
            raise ParameterError("times and units must have equal length")
        if times.size:
            if np.any(np.diff(times) < 0):
                raise ParameterError("spike times must be non-decreasing")
            if times[0] < 0 or times[-1] > self.duration:
                raise ParameterError("spike times outside [0, duration]")
            if units.min() < 0 or units.max() >= self.n_units:
                raise ParameterError("unit index out of range")

    @classmethod
    def empty(cls, n_units: int, duration: float) -> "SpikeTrain":
        return cls(np.empty(0), np.empty(0, dtype=np.int64), n_units, duration)

    def __len__(self) -> int:
        return int(self.times.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return (self.n_units == other.n_units and self.duration == other.duration
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.units, other.units))

    def counts(self) -> np.ndarray:
        return np.bincount(self.units, minlength=self.n_units)

    def unit_times(self, unit: int) -> np.ndarray:
        return self.times[self.units == unit]

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.units.tolist()))


@dataclass(frozen=True)
class NoiseConfig:
    fixed_pattern_sigma: float = 0.0
    trial_noise_current_sigma: float = DEFAULT_TRIAL_NOISE
    seed: int = 0
    trial_offset_sigma: float = 0.0

    def __post_init__(self):
        if min(self.fixed_pattern_sigma, self.trial_noise_current_sigma, self.trial_offset_sigma) < 0:
            raise ParameterError("noise sigmas must be >= 0")


def poisson_encode(active_unit: int, n_units: int, rate_hi: float = DEFAULT_RATE_HI,
                   rate_lo: float = DEFAULT_RATE_LO, duration: float = DEFAULT_DURATION,
                   rng_seed: int = 0) -> SpikeTrain:
    """One-hot Poisson rate code: ``active_unit`` fires at ``rate_hi`` Hz, the rest at ``rate_lo``."""
    if not 0 <= active_unit < n_units:
        raise ParameterError(f"active_unit {active_unit} not in [0, {n_units})")
    if rate_lo < 0 or rate_hi <= rate_lo:
        raise ParameterError("need rate_hi > rate_lo >= 0")
    if duration <= 0:
        raise ParameterError("duration must be positive")
    rng = np.random.default_rng(rng_seed)
    rates = np.full(n_units, float(rate_lo))
    rates[active_unit] = rate_hi
    counts = rng.poisson(rates * duration / 1000.0)
    units = np.repeat(np.arange(n_units), counts)
    times = rng.uniform(0.0, duration, size=units.size)
    order = np.lexsort((units, times))
    return SpikeTrain(times[order], units[order], n_units, duration)


def check_timestep(params: NeuronParams, dt: float) -> None:
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    limit = min(params.tau_m, params.tau_syn) / 5.0
    if dt > limit:
        raise ConfigurationError(f"dt={dt} ms exceeds stability limit {limit} ms")


def lif_step(state: NeuronState, params: NeuronParams, input_current: float,
             noise_current: float, dt: float) -> tuple[NeuronState, bool]:
    """Advance one neuron by one step. ``input_current`` is added to ``i_syn``."""
    check_timestep(params, dt)
    i_syn = state.i_syn * math.exp(-dt / params.tau_syn) + input_current + noise_current
    if state.refrac_remaining > 0:
        left = state.refrac_remaining - dt
        if left < _REFRAC_EPS * dt:
            left = 0.0
        return NeuronState(params.v_reset, i_syn, left), False
    decay = math.exp(-dt / params.tau_m)
    v = params.v_rest + (state.v - params.v_rest) * decay + i_syn * (1.0 - decay)
    if v >= params.v_thresh:
        return NeuronState(params.v_reset, i_syn, params.tau_refrac), True
    return NeuronState(v, i_syn, 0.0), False


@numba.njit(cache=True)
def _integrate(inj, noise, offset, v_rest, v_reset, v_thresh, tau_refrac, decay_m, decay_s,
               dt, v, i_syn, refrac, spikes):
    # Same arithmetic as lif_step, vectorised over (batch, neuron).
    n_steps, n_batch, n = inj.shape
    for t in range(n_steps):
        for b in range(n_batch):
            for j in range(n):
                i = i_syn[b, j] * decay_s[j] + inj[t, b, j] + noise[t, b, j]
                i_syn[b, j] = i
                r = refrac[b, j]
                if r > 0.0:
                    v[b, j] = v_reset[j]
                    r -= dt
                    if r < 0.5 * dt:
                        r = 0.0
                    refrac[b, j] = r
                    continue
                vv = v_rest[j] + (v[b, j] - v_rest[j]) * decay_m[j] + (i + offset[b, j]) * (1.0 - decay_m[j])
                if vv >= v_thresh[j]:
                    vv = v_reset[j]
                    refrac[b, j] = tau_refrac[j]
                    spikes[t, b, j] = True
                v[b, j] = vv


def _weight_array(weights) -> np.ndarray:
    return np.asarray(getattr(weights, "w", weights), dtype=np.float64)


def simulate_batch(weights, population: Population, inputs: Sequence[SpikeTrain],
                   duration: float, dt: float, noise_sigma: float,
                   rng: np.random.Generator, weight_scale: float = DEFAULT_WEIGHT_SCALE,
                   offset_sigma: float = 0.0):
    """Run independent trials from rest, one per input train.

    Returns ``(spikes, final_state)`` where ``spikes`` is a boolean array
    ``(n_steps, batch, n_out)`` and ``final_state`` is ``(v, i_syn, refrac)``.
    """
    w = _weight_array(weights)
    n_out = len(population)
    if w.ndim != 2 or w.shape[1] != n_out:
        raise ParameterError(f"weights shape {w.shape} incompatible with {n_out} neurons")
    if duration <= 0:
        raise ParameterError("duration must be positive")
    for p in population.params:
        check_timestep(p, dt)
    n_steps = int(round(duration / dt))
    n_batch = len(inputs)
    counts = np.zeros((n_steps, n_batch, w.shape[0]))
    for b, train in enumerate(inputs):
        if train.n_units != w.shape[0]:
            raise ParameterError(
                f"input has {train.n_units} units, weights expect {w.shape[0]}")
        steps = np.minimum((train.times / dt).astype(np.int64), n_steps - 1)
        np.add.at(counts[:, b, :], (steps, train.units), 1.0)
    inj = counts @ (w * weight_scale)
    if noise_sigma > 0:
        noise = rng.normal(0.0, noise_sigma, size=inj.shape)
    else:
        noise = np.zeros_like(inj)
    if offset_sigma > 0:
        offset = rng.normal(0.0, offset_sigma, size=(n_batch, n_out))
    else:
        offset = np.zeros((n_batch, n_out))

    v_rest = population.param_array("v_rest")
    v = np.tile(v_rest, (n_batch, 1))
    i_syn = np.zeros((n_batch, n_out))
    refrac = np.zeros((n_batch, n_out))
    spikes = np.zeros(inj.shape, dtype=np.bool_)
    _integrate(inj, noise, offset, v_rest, population.param_array("v_reset"),
               population.param_array("v_thresh"), population.param_array("tau_refrac"),
               np.exp(-dt / population.param_array("tau_m")),
               np.exp(-dt / population.param_array("tau_syn")),
               float(dt), v, i_syn, refrac, spikes)
    return spikes, (v, i_syn, refrac)


def _train_from_spikes(spikes: np.ndarray, dt: float, duration: float) -> SpikeTrain:
    t_idx, unit = np.nonzero(spikes)
    times = np.minimum((t_idx + 1) * dt, duration)
    return SpikeTrain(times, unit, spikes.shape[1], duration)


def run_trial(weights, population: Population, input: SpikeTrain,
              duration: float = DEFAULT_DURATION, dt: float = DEFAULT_DT,
              noise: NoiseConfig | None = None, rng_seed: int = 0,
              weight_scale: float = DEFAULT_WEIGHT_SCALE) -> tuple[SpikeTrain, SpikeTrain]:
    """Simulate one trial from rest and return ``(output, input_echo)``.

    Each input spike on unit ``i`` adds ``weights[i, j] * weight_scale`` to
    neuron ``j``'s synaptic current. Output spikes are stamped at the end of
    the step in which threshold was crossed. The population's states are left
    at their end-of-trial values.
    """
    sigma = noise.trial_noise_current_sigma if noise is not None else 0.0
    offset = noise.trial_offset_sigma if noise is not None else 0.0
    rng = np.random.default_rng(rng_seed)
    spikes, (v, i_syn, refrac) = simulate_batch(
        weights, population, [input], duration, dt, sigma, rng, weight_scale, offset)
    population.states = [NeuronState(float(v[0, j]), float(i_syn[0, j]), float(refrac[0, j]))
                         for j in range(len(population))]
    return _train_from_spikes(spikes[:, 0, :], dt, duration), input


def firing_rates(output: SpikeTrain, n_neurons: int, duration: float) -> np.ndarray:
    """Spike count per neuron divided by ``duration`` (ms), in Hz."""
    if duration <= 0:
        raise ParameterError("duration must be positive")
    counts = np.bincount(output.units, minlength=n_neurons)[:n_neurons]
    return counts * (1000.0 / duration)


def apply_fixed_pattern_noise(nominal: NeuronParams, n: int, sigma: float,
                              seed: int = 0) -> list[NeuronParams]:
    """Draw per-neuron ``v_thresh`` and ``tau_m`` as ``nominal * (1 + eps)``.

    ``eps ~ Normal(0, sigma)`` is redrawn wherever the result would violate
    the NeuronParams invariants. Draws happen once; the result is meant to
    stay fixed for a whole experiment.
    """
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    if sigma == 0:
        return [nominal] * n
    rng = np.random.default_rng(seed)

    def draw(base, valid):
        eps = rng.normal(0.0, sigma, size=n)
        bad = ~valid(base * (1 + eps))
        while bad.any():
            eps[bad] = rng.normal(0.0, sigma, size=int(bad.sum()))
            bad = ~valid(base * (1 + eps))
        return base * (1 + eps)

    thresh = draw(nominal.v_thresh, lambda x: x > nominal.v_rest)
    tau_m = draw(nominal.tau_m, lambda x: x > 0)
    return [replace(nominal, v_thresh=float(a), tau_m=float(b)) for a, b in zip(thresh, tau_m)]


def analytic_lif_rate(params: NeuronParams, drive: float) -> float:
    """Closed-form rate (Hz) for constant ``i_syn = drive`` (mV)."""
    v_inf = params.v_rest + drive
    if v_inf <= params.v_thresh:
        return 0.0
    isi = params.tau_refrac + params.tau_m * math.log(
        (v_inf - params.v_reset) / (v_inf - params.v_thresh))
    return 1000.0 / isi
