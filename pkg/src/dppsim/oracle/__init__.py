"""Exact event-only policy oracle for finite models."""

from .bruteforce import brute_force_epsilon_max, brute_force_y0_opt, deterministic_policies
from .cache import cache_path, load_or_compute, oracle_report
from .lp import (
    OracleSolution,
    OracleValues,
    PolicyLP,
    compute_epsilon_max,
    compute_y0_opt,
    oracle_values,
    policy_expectations,
    y0_opt_curve,
)
from .simplex import LPResult, linprog
