"""Closed-loop spiking-network Pong learner with reward-modulated STDP.

A two-layer network of leaky integrate-and-fire neurons sees the ball's
column as a one-hot Poisson input and aims a paddle with its most active
output neuron. Reward-gated eligibility traces teach it to track the ball.
"""
from .config import ExperimentConfig
from .exceptions import ConfigurationError, ParameterError, UndefinedCorrelationError
from .experiment import run_experiment, run_sweep
from .pong import FieldConfig, evaluate_catch_fraction
from .plasticity import SynapseMatrix

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ExperimentConfig", "FieldConfig", "ParameterError",
    "SynapseMatrix", "UndefinedCorrelationError", "evaluate_catch_fraction",
    "run_experiment", "run_sweep", "__version__",
]
