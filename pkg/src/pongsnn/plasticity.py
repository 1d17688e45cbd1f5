"""Eligibility traces and the reward-modulated weight update.

Each synapse accumulates an all-pairs STDP-shaped trace during a trial. The
trace is stored with a hard saturation and read out through a uniform ADC,
then converted into a weight change by the reward prediction error::

    dw[i, j] = eta * (R - R_bar) * e[i, j]
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ParameterError
from .snn import SpikeTrain

DEFAULT_SATURATION = 16.0
DEFAULT_ADC_LEVELS = 255
DEFAULT_WEIGHT_LEVELS = 64
DEFAULT_ETA = 8.0 / (DEFAULT_WEIGHT_LEVELS - 1)

BASELINE_MODES = ("global", "per-state")


@dataclass(frozen=True)
class StdpKernel:
    a_plus: float = 1.0
    a_minus: float = 1.0
    tau_plus: float = 20.0
    tau_minus: float = 20.0

    def __post_init__(self):
        if self.tau_plus <= 0 or self.tau_minus <= 0:
            raise ParameterError("STDP time constants must be positive")
        if self.a_plus < 0 or self.a_minus < 0:
            raise ParameterError("STDP amplitudes must be >= 0")

    def __call__(self, delta_t):
        """Pair contribution for ``delta_t = t_post - t_pre``; zero for coincident spikes."""
        delta_t = np.asarray(delta_t, dtype=np.float64)
        return np.where(
            delta_t > 0, self.a_plus * np.exp(-np.abs(delta_t) / self.tau_plus),
            np.where(delta_t < 0, -self.a_minus * np.exp(-np.abs(delta_t) / self.tau_minus), 0.0))


@dataclass(frozen=True, eq=False)
class EligibilityMatrix:
    e: np.ndarray
    saturation: float = DEFAULT_SATURATION
    adc_levels: int = DEFAULT_ADC_LEVELS

    def __post_init__(self):
        if self.saturation <= 0:
            raise ParameterError("saturation must be positive")
        if self.adc_levels < 2:
            raise ParameterError("adc_levels must be >= 2")
        object.__setattr__(self, "e", np.clip(np.asarray(self.e, dtype=np.float64),
                                              -self.saturation, self.saturation))

    @property
    def step(self) -> float:
        return 2.0 * self.saturation / (self.adc_levels - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.e.shape


@dataclass(frozen=True, eq=False)
class SynapseMatrix:
    """Weights bounded to ``[w_min, w_max]``.

    With ``levels`` set, weights live on ``levels`` uniformly spaced values;
    ``levels=None`` gives continuous weights.
    """

    w: np.ndarray
    w_min: float = 0.0
    w_max: float = 1.0
    levels: int | None = DEFAULT_WEIGHT_LEVELS

    def __post_init__(self):
        if not self.w_max > self.w_min:
            raise ParameterError("need w_max > w_min")
        if self.levels is not None and self.levels < 2:
            raise ParameterError("levels must be >= 2 or None")
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 2:
            raise ParameterError("weights must be a 2-D array")
        object.__setattr__(self, "w", self._snap(np.clip(w, self.w_min, self.w_max)))

    @property
    def step(self) -> float | None:
        if self.levels is None:
            return None
        return (self.w_max - self.w_min) / (self.levels - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape

    def _snap(self, w, rng=None):
        if self.levels is None:
            return w
        x = (w - self.w_min) / self.step
        if rng is None:
            idx = np.rint(x)
        else:
            lo = np.floor(x)
            idx = lo + (rng.random(x.shape) < (x - lo))
        return self.w_min + np.clip(idx, 0, self.levels - 1) * self.step

    def level_indices(self) -> np.ndarray:
        """Integer level of every weight (requires quantized weights)."""
        if self.levels is None:
            raise ParameterError("continuous weights have no level indices")
        return np.rint((self.w - self.w_min) / self.step).astype(np.int64)

    def with_weights(self, w, rng=None) -> "SynapseMatrix":
        w = np.clip(np.asarray(w, dtype=np.float64), self.w_min, self.w_max)
        return replace(self, w=self._snap(w, rng))

    @classmethod
    def from_levels(cls, idx, w_min=0.0, w_max=1.0, levels=DEFAULT_WEIGHT_LEVELS) -> "SynapseMatrix":
        idx = np.asarray(idx)
        return cls(w_min + idx * (w_max - w_min) / (levels - 1), w_min, w_max, levels)


@dataclass(frozen=True)
class RstdpConfig:
    eta: float = DEFAULT_ETA
    baseline_gamma: float = 0.2
    baseline_mode: str = "per-state"
    stochastic_rounding: bool = False

    def __post_init__(self):
        if self.eta < 0:
            raise ParameterError("eta must be >= 0")
        if not 0 < self.baseline_gamma <= 1:
            raise ParameterError("baseline_gamma must lie in (0, 1]")
        if self.baseline_mode not in BASELINE_MODES:
            raise ParameterError(f"baseline_mode must be one of {BASELINE_MODES}")


def accumulate_traces(pre: SpikeTrain, post: SpikeTrain, kernel: StdpKernel,
                      shape: tuple[int, int], saturation: float = DEFAULT_SATURATION,
                      adc_levels: int = DEFAULT_ADC_LEVELS) -> EligibilityMatrix:
    """All-pairs STDP trace accumulated online in one pass over the merged events.

    Presynaptic and postsynaptic traces are kept per unit; a post spike reads
    the presynaptic traces (potentiation), a pre spike reads the postsynaptic
    traces (depression). Spikes sharing a timestamp do not pair.
    """
    n_in, n_out = shape
    for train in (pre, post):
        if train.times.size and np.any(np.diff(train.times) < 0):
            raise ParameterError("spike trains must be time-sorted")
    if pre.n_units > n_in or post.n_units > n_out:
        raise ParameterError("spike train units exceed trace matrix shape")

    e = np.zeros(shape)
    x_pre = np.zeros(n_in)
    y_post = np.zeros(n_out)
    times = np.union1d(pre.times, post.times)
    ip = iq = 0
    t_last = 0.0
    for t in times:
        x_pre *= np.exp(-(t - t_last) / kernel.tau_plus)
        y_post *= np.exp(-(t - t_last) / kernel.tau_minus)
        t_last = t
        jp = ip
        while jp < pre.times.size and pre.times[jp] == t:
            jp += 1
        jq = iq
        while jq < post.times.size and post.times[jq] == t:
            jq += 1
        pre_units = pre.units[ip:jp]
        post_units = post.units[iq:jq]
        # read traces before this timestamp's own spikes are added
        for j in post_units:
            e[:, j] += kernel.a_plus * x_pre
        for i in pre_units:
            e[i, :] -= kernel.a_minus * y_post
        np.add.at(x_pre, pre_units, 1.0)
        np.add.at(y_post, post_units, 1.0)
        ip, iq = jp, jq
    return EligibilityMatrix(e, saturation, adc_levels)


def digitize(e: EligibilityMatrix) -> EligibilityMatrix:
    """Round every trace to the nearest ADC level over ``[-saturation, saturation]``."""
    idx = np.rint((e.e + e.saturation) / e.step)
    idx = np.clip(idx, 0, e.adc_levels - 1)
    return replace(e, e=idx * e.step - e.saturation)


def rstdp_update(w: SynapseMatrix, e: EligibilityMatrix, reward: float, baseline: float,
                 cfg: RstdpConfig, rng: np.random.Generator | None = None) -> SynapseMatrix:
    """Apply ``eta * (reward - baseline) * e`` then clip and quantize.

    ``rng`` is only used when ``cfg.stochastic_rounding`` is set.
    """
    if w.shape != e.shape:
        raise ParameterError(f"weight shape {w.shape} != trace shape {e.shape}")
    factor = cfg.eta * (reward - baseline)
    if factor == 0:
        return w
    if cfg.stochastic_rounding and rng is None:
        raise ParameterError("stochastic rounding needs an rng")
    return w.with_weights(w.w + factor * e.e, rng if cfg.stochastic_rounding else None)


def init_baseline(cfg: RstdpConfig, n_states: int, value: float = 0.0):
    if cfg.baseline_mode == "global":
        return float(value)
    return np.full(n_states, float(value))


def baseline_value(baseline, state: int) -> float:
    if np.ndim(baseline) == 0:
        return float(baseline)
    return float(baseline[state])


def update_baseline(baseline, reward: float, state: int, cfg: RstdpConfig):
    """Exponential moving average of reward, globally or for one state only."""
    if not 0 <= reward <= 1:
        raise ParameterError(f"reward {reward} outside [0, 1]")
    g = cfg.baseline_gamma
    if cfg.baseline_mode == "global":
        return (1 - g) * float(baseline) + g * reward
    baseline = np.array(baseline, dtype=np.float64)
    if not 0 <= state < baseline.size:
        raise ParameterError(f"state {state} out of range for {baseline.size} baselines")
    baseline[state] = (1 - g) * baseline[state] + g * reward
    return baseline
