"""Experiment configuration: typed sections and a strict INI reader/writer.

Every key has a default. Files are INI with one section per module
(``[experiment]``, ``[snn]``, ``[plasticity]``, ``[env]``, ``[noise]``,
``[bench]``); unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .exceptions import ConfigurationError, ParameterError
from .plasticity import (DEFAULT_ADC_LEVELS, DEFAULT_ETA, DEFAULT_SATURATION,
                         DEFAULT_WEIGHT_LEVELS, BASELINE_MODES, RstdpConfig, StdpKernel)
from .pong import FieldConfig, RewardSchedule
from .snn import (DEFAULT_DT, DEFAULT_DURATION, DEFAULT_RATE_HI, DEFAULT_RATE_LO,
                  DEFAULT_TRIAL_NOISE, DEFAULT_WEIGHT_SCALE, NeuronParams, NoiseConfig)

STATE_SCHEDULES = ("uniform-random", "cyclic")


@dataclass(frozen=True)
class SnnSection:
    duration: float = DEFAULT_DURATION
    dt: float = DEFAULT_DT
    rate_hi: float = DEFAULT_RATE_HI
    rate_lo: float = DEFAULT_RATE_LO
    weight_scale: float = DEFAULT_WEIGHT_SCALE
    tau_m: float = 10.0
    v_rest: float = -65.0
    v_reset: float = -70.0
    v_thresh: float = -55.0
    tau_refrac: float = 2.0
    tau_syn: float = 5.0

    def neuron_params(self) -> NeuronParams:
        return NeuronParams(self.tau_m, self.v_rest, self.v_reset, self.v_thresh,
                            self.tau_refrac, self.tau_syn)


@dataclass(frozen=True)
class PlasticitySection:
    eta: float = DEFAULT_ETA
    baseline_gamma: float = 0.2
    baseline_mode: str = "per-state"
    baseline_init: float = 0.0
    stochastic_rounding: bool = False
    a_plus: float = 1.0
    a_minus: float = 1.0
    tau_plus: float = 20.0
    tau_minus: float = 20.0
    trace_saturation: float = DEFAULT_SATURATION
    adc_levels: int = DEFAULT_ADC_LEVELS
    w_max: float = 1.0
    # 0 selects continuous weights
    weight_levels: int = DEFAULT_WEIGHT_LEVELS
    init_fraction: float = 0.25

    def rstdp(self) -> RstdpConfig:
        return RstdpConfig(self.eta, self.baseline_gamma, self.baseline_mode,
                           self.stochastic_rounding)

    def kernel(self) -> StdpKernel:
        return StdpKernel(self.a_plus, self.a_minus, self.tau_plus, self.tau_minus)


@dataclass(frozen=True)
class EnvSection:
    n_columns: int = 32
    field_height: float = 32.0
    ball_speed: float = 1.0
    paddle_speed: float = 1.0
    paddle_halfwidth: float = 1.0
    launch_slope: float = 1.0
    reward_halfwidth: int = 1

    def field(self) -> FieldConfig:
        return FieldConfig(self.n_columns, self.field_height, self.ball_speed,
                           self.paddle_speed, self.paddle_halfwidth, self.launch_slope)

    def reward(self) -> RewardSchedule:
        return RewardSchedule(self.reward_halfwidth)


@dataclass(frozen=True)
class NoiseSection:
    fixed_pattern_sigma: float = 0.0
    trial_noise_current_sigma: float = DEFAULT_TRIAL_NOISE
    trial_offset_sigma: float = 0.0

    def noise(self, seed: int) -> NoiseConfig:
        return NoiseConfig(self.fixed_pattern_sigma, self.trial_noise_current_sigma, seed,
                           self.trial_offset_sigma)


@dataclass(frozen=True)
class BenchSection:
    n_iterations: int = 200
    warmup: int = 20
    sizes: str = "32x32,64x64,128x128"
    modes: str = "no-plasticity,with-plasticity"


@dataclass(frozen=True)
class ExperimentConfig:
    n_iterations: int = 2000
    state_schedule: str = "uniform-random"
    seed: int = 0
    eval_every: int = 100
    eval_repeats: int = 5
    record_wall_time: bool = False
    snn: SnnSection = field(default_factory=SnnSection)
    plasticity: PlasticitySection = field(default_factory=PlasticitySection)
    env: EnvSection = field(default_factory=EnvSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def validate(self) -> "ExperimentConfig":
        """Raise ConfigurationError naming the offending field."""
        def need(ok, key, msg):
            if not ok:
                raise ConfigurationError(f"{key}: {msg}")

        need(self.n_iterations > 0, "experiment.n_iterations", "must be > 0")
        need(self.eval_every > 0, "experiment.eval_every", "must be > 0")
        need(self.eval_repeats > 0, "experiment.eval_repeats", "must be > 0")
        need(self.state_schedule in STATE_SCHEDULES, "experiment.state_schedule",
             f"must be one of {STATE_SCHEDULES}")
        need(self.plasticity.baseline_mode in BASELINE_MODES, "plasticity.baseline_mode",
             f"must be one of {BASELINE_MODES}")
        need(self.plasticity.weight_levels == 0 or self.plasticity.weight_levels >= 2,
             "plasticity.weight_levels", "must be 0 (continuous) or >= 2")
        need(0 <= self.plasticity.baseline_init <= 1, "plasticity.baseline_init",
             "must lie in [0, 1]")
        need(0 <= self.plasticity.init_fraction <= 1, "plasticity.init_fraction",
             "must lie in [0, 1]")
        need(self.snn.rate_hi > self.snn.rate_lo >= 0, "snn.rate_hi", "need rate_hi > rate_lo >= 0")
        need(self.snn.duration > 0, "snn.duration", "must be > 0")
        for section, build in (("snn", lambda: self.snn.neuron_params()),
                               ("plasticity", lambda: (self.plasticity.rstdp(), self.plasticity.kernel())),
                               ("env", lambda: (self.env.field(), self.env.reward())),
                               ("noise", lambda: self.noise.noise(self.seed))):
            try:
                build()
            except ParameterError as exc:
                raise ConfigurationError(f"{section}: {exc}") from None
        p = self.snn.neuron_params()
        limit = min(p.tau_m, p.tau_syn) / 5.0
        need(0 < self.snn.dt <= limit, "snn.dt", f"must lie in (0, {limit}] for stability")
        return self


SECTIONS = ("snn", "plasticity", "env", "noise", "bench")


def to_dict(cfg: ExperimentConfig) -> dict[str, dict[str, Any]]:
    out = {"experiment": {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name not in SECTIONS}}
    for name in SECTIONS:
        out[name] = dataclasses.asdict(getattr(cfg, name))
    return out


def _coerce(value: Any, typ, key: str):
    if isinstance(typ, str):
        typ = {"int": int, "float": float, "str": str, "bool": bool}[typ]
    try:
        if typ is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "yes", "1", "on"):
                return True
            if text in ("false", "no", "0", "off"):
                return False
            raise ValueError(value)
        if typ is int and isinstance(value, str):
            return int(value.strip())
        if typ is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return typ(value.strip() if isinstance(value, str) else value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: expected {typ.__name__}, got {value!r}") from None


def from_dict(data: dict[str, dict[str, Any]], lines: dict[str, int] | None = None) -> ExperimentConfig:
    """Build a validated config; unknown sections and keys raise ConfigurationError."""
    lines = lines or {}

    def where(key):
        return f" (line {lines[key]})" if key in lines else ""

    unknown = set(data) - {"experiment", *SECTIONS}
    if unknown:
        raise ConfigurationError(f"unknown section(s): {', '.join(sorted(unknown))}")
    top = {}
    base = ExperimentConfig()
    for name in ("experiment", *SECTIONS):
        values = data.get(name, {})
        target = base if name == "experiment" else getattr(base, name)
        known = {f.name: f for f in fields(target) if f.name not in SECTIONS}
        kwargs = {}
        for key, value in values.items():
            dotted = f"{name}.{key}"
            if key not in known:
                raise ConfigurationError(f"unknown key {dotted}{where(dotted)}")
            try:
                kwargs[key] = _coerce(value, known[key].type, dotted)
            except ConfigurationError as exc:
                raise ConfigurationError(f"{exc}{where(dotted)}") from None
        if name == "experiment":
            top.update(kwargs)
        else:
            top[name] = dataclasses.replace(target, **kwargs)
    try:
        cfg = dataclasses.replace(base, **top)
        return cfg.validate()
    except ConfigurationError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigurationError(f"{exc}{where(key)}") from None


def load(path) -> ExperimentConfig:
    """Read an INI file. Diagnostics carry the dotted key and its line number."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    data = {s: dict(parser[s]) for s in parser.sections()}
    return from_dict(data, _key_lines(text))


def _key_lines(text: str) -> dict[str, int]:
    lines, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and section:
            lines.setdefault(f"{section}.{m.group(1)}", n)
    return lines


def dumps(cfg: ExperimentConfig) -> str:
    out = []
    for section, values in to_dict(cfg).items():
        out.append(f"[{section}]")
        out.extend(f"{k} = {_format(v)}" for k, v in values.items())
        out.append("")
    return "\n".join(out)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Apply ``{"section.key": "value"}`` overrides (``experiment.`` may be omitted)."""
    data = to_dict(cfg)
    for dotted, value in overrides.items():
        section, _, key = dotted.rpartition(".")
        section = section or "experiment"
        if section not in data:
            raise ConfigurationError(f"unknown section in override --{dotted}")
        data[section][key] = value
    return from_dict(data)
