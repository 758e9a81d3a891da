"""Per-slot decision rules: drift-plus-penalty and stationary randomized policies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .dynamics import LyapunovWeights, SystemState
from .errors import ConfigurationError, DomainError
from .model import Action, NetworkModel, NetworkState, SlotOutcome, evaluate

TIE_BREAK_RULES = ("lowest-index",)
ROW_TOL = 1e-9


@dataclass(frozen=True)
class DppConfig:
    """Drift-plus-penalty parameters.

    ``C > 0`` turns the exact minimizer into a deliberately poor C-additive
    approximation: it picks the worst action whose score is within ``C`` of
    the minimum.
    """

    V: float
    C: float = 0.0
    weights: LyapunovWeights | None = None
    tie_break: str = "lowest-index"

    def __post_init__(self) -> None:
        object.__setattr__(self, "V", float(self.V))
        object.__setattr__(self, "C", float(self.C))
        if not math.isfinite(self.V) or self.V < 0:
            raise ConfigurationError(f"V must be finite and >= 0, got {self.V}")
        if not math.isfinite(self.C) or self.C < 0:
            raise ConfigurationError(f"C must be finite and >= 0, got {self.C}")
        if self.tie_break not in TIE_BREAK_RULES:
            raise ConfigurationError(f"unknown tie-break rule {self.tie_break!r}")

    def weight_vector(self, K: int, M: int) -> tuple[float, ...]:
        if self.weights is None:
            return (1.0,) * (K + M)
        if len(self.weights) != K + M:
            raise ConfigurationError(f"{len(self.weights)} Lyapunov weights for K+M={K + M} queues")
        return self.weights.w


@dataclass(frozen=True)
class OmegaOnlyPolicy:
    """Stationary randomized rule: a distribution over actions per event id."""

    dist: Mapping[str, tuple[tuple[str, float], ...]]

    def __post_init__(self) -> None:
        clean = {}
        for sid, entries in self.dist.items():
            entries = tuple((str(aid), float(p)) for aid, p in entries)
            probs = [p for _, p in entries]
            if not entries or any(not math.isfinite(p) or p < 0 for p in probs):
                raise ConfigurationError(f"invalid action distribution for state {sid!r}")
            if abs(math.fsum(probs) - 1.0) > 1e-12:
                raise ConfigurationError(f"action distribution for state {sid!r} sums to {math.fsum(probs)}")
            clean[str(sid)] = entries
        object.__setattr__(self, "dist", clean)

    @classmethod
    def point_mass(cls, model: NetworkModel, action_id: str | Mapping[str, str]) -> "OmegaOnlyPolicy":
        """Deterministic rule; a single id is applied in every state."""
        dist = {}
        for s in model.states:
            aid = action_id if isinstance(action_id, str) else action_id[s.id]
            if aid not in {a.id for a in model.actions(s)}:
                raise ConfigurationError(f"action {aid!r} is not available in state {s.id!r}")
            dist[s.id] = ((aid, 1.0),)
        return cls(dist)

    @classmethod
    def from_matrix(cls, model: NetworkModel, probs: Sequence[Sequence[float]]) -> "OmegaOnlyPolicy":
        """Build from rows of probabilities in the model's action order.

        Round-off up to ``ROW_TOL`` (as left by an LP solver) is cleaned up;
        anything larger is a configuration error.
        """
        if len(probs) != len(model.states):
            raise ConfigurationError(f"expected {len(model.states)} rows, got {len(probs)}")
        dist = {}
        for s, row in zip(model.states, probs):
            acts = model.actions(s)
            if len(row) != len(acts):
                raise ConfigurationError(f"state {s.id!r} has {len(acts)} actions, row has {len(row)}")
            row = [float(p) for p in row]
            if any(not math.isfinite(p) or p < -ROW_TOL for p in row):
                raise ConfigurationError(f"invalid probabilities for state {s.id!r}: {row}")
            row = [max(p, 0.0) for p in row]
            total = math.fsum(row)
            if abs(total - 1.0) > ROW_TOL:
                raise ConfigurationError(f"row for state {s.id!r} sums to {total}")
            row = [p / total for p in row]
            dist[s.id] = tuple((a.id, p) for a, p in zip(acts, row))
        return cls(dist)

    def probability(self, omega_id: str, action_id: str) -> float:
        return math.fsum(p for aid, p in self.dist.get(omega_id, ()) if aid == action_id)

    def to_dict(self) -> dict[str, dict[str, float]]:
        return {sid: {aid: p for aid, p in entries} for sid, entries in self.dist.items()}

    def tables(self, model: NetworkModel) -> tuple[np.ndarray, np.ndarray]:
        """Padded (action index, cumulative probability) arrays for the kernel."""
        n = len(model.states)
        width = max(len(e) for e in self.dist.values())
        idx = np.zeros((n, width), dtype=np.int64)
        cum = np.ones((n, width))
        for i, s in enumerate(model.states):
            if s.id not in self.dist:
                raise ConfigurationError(f"policy has no distribution for state {s.id!r}")
            order = [a.id for a in model.actions(s)]
            entries = self.dist[s.id]
            c = np.cumsum([p for _, p in entries])
            c[-1] = 1.0
            for j, (aid, _) in enumerate(entries):
                if aid not in order:
                    raise ConfigurationError(f"policy action {aid!r} not available in state {s.id!r}")
                idx[i, j] = order.index(aid)
                cum[i, j] = c[j]
            idx[i, len(entries):] = idx[i, len(entries) - 1]
        return idx, cum


Controller = Union[DppConfig, OmegaOnlyPolicy]


def dpp_score(
    outcome: SlotOutcome,
    state: SystemState,
    V: float,
    weights: LyapunovWeights | Sequence[float] | None = None,
) -> float:
    """V*y0 + sum_k w_k Q_k (a_k - b_k) + sum_m w_m Z_m y_m."""
    K, M = len(state.Q), len(state.Z)
    if len(outcome.a) != K or len(outcome.b) != K or len(outcome.y) != M + 1:
        raise DomainError("outcome and state dimensions differ")
    if weights is None:
        w = (1.0,) * (K + M)
    else:
        w = weights.w if isinstance(weights, LyapunovWeights) else tuple(weights)
        if len(w) != K + M:
            raise DomainError("weight vector length differs from K+M")
    # Evaluation order is shared with the compiled kernel; keep them in sync.
    s = V * outcome.y[0]
    for k in range(K):
        s += (w[k] * state.Q[k]) * (outcome.a[k] - outcome.b[k])
    for m in range(M):
        s += (w[K + m] * state.Z[m]) * outcome.y[m + 1]
    return s


def select_action_dpp(
    model: NetworkModel,
    omega: NetworkState | str,
    state: SystemState,
    config: DppConfig,
) -> Action:
    acts = model.actions(omega)
    if not acts:
        raise DomainError("empty action set")
    w = config.weight_vector(model.K, model.M)
    scores = [dpp_score(evaluate(model, a, omega), state, config.V, w) for a in acts]
    best = 0
    for j in range(1, len(scores)):
        if scores[j] < scores[best]:
            best = j
    if config.C > 0:
        limit = scores[best] + config.C
        worst = best
        for j in range(len(scores)):
            if scores[j] <= limit and scores[j] > scores[worst]:
                worst = j
        best = worst
    return acts[best]


def select_action_policy(
    policy: OmegaOnlyPolicy,
    omega: NetworkState | str,
    rng: np.random.Generator,
) -> Action:
    sid = omega.id if isinstance(omega, NetworkState) else omega
    try:
        entries = policy.dist[sid]
    except KeyError:
        raise DomainError(f"policy has no distribution for state {sid!r}") from None
    u = rng.random()
    acc = 0.0
    for j, (aid, p) in enumerate(entries):
        acc += p
        if u < acc or j == len(entries) - 1:
            return Action(aid)
    raise AssertionError("unreachable")


def compute_B(model: NetworkModel, weights: LyapunovWeights | None = None) -> float:
    """Uniform constant bounding the second-order terms of the one-slot drift."""
    w = weights.w if weights is not None else (1.0,) * (model.K + model.M)
    if len(w) != model.K + model.M:
        raise DomainError("weight vector length differs from K+M")
    outcomes = [o for *_, o in model.pairs()]
    terms = [w[k] * max((o.a[k] - o.b[k]) ** 2 for o in outcomes) for k in range(model.K)]
    terms += [w[model.K + m] * max(o.y[m + 1] ** 2 for o in outcomes) for m in range(model.M)]
    return 0.5 * math.fsum(terms)
