"""Drift-plus-penalty control of finite stochastic queueing networks."""

from .controller import DppConfig, OmegaOnlyPolicy, compute_B, dpp_score, select_action_dpp, select_action_policy
from .dynamics import (
    LyapunovWeights,
    SystemState,
    empirical_drift,
    lyapunov_norm,
    lyapunov_value,
    queue_update,
    virtual_queue_update,
)
from .errors import ConfigurationError, DomainError
from .model import (
    Action,
    NetworkModel,
    NetworkState,
    SlotOutcome,
    builtin_scenario,
    estimate_moment_bounds,
    evaluate,
    load_scenario,
    make_rng,
    sample_omega,
)
from .simulator import RunSummary, SlotRecord, Trace, run, sweep_V

__version__ = "0.1.0"
