"""Linear programs over stationary randomized (event-only) policies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..controller import OmegaOnlyPolicy
from ..errors import DomainError
from ..model import NetworkModel
from .simplex import linprog

RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class PolicyLP:
    """Variables p(action | event), flattened event-major in model order.

    ``f`` holds the expected objective penalty per unit of each variable and
    ``G`` one row per constraint family (queue drifts, then penalties m>=1):
    a policy with slack eps satisfies ``G @ p <= -eps``.
    """

    model: NetworkModel = field(repr=False)
    index: tuple[tuple[int, int], ...]
    f: np.ndarray
    G: np.ndarray
    A_eq: np.ndarray

    @classmethod
    def build(cls, model: NetworkModel) -> "PolicyLP":
        A, Bs, Y, n_act = model.tables()
        probs = model.probabilities
        index = tuple((i, j) for i in range(len(probs)) for j in range(int(n_act[i])))
        n = len(index)
        f = np.empty(n)
        G = np.empty((model.K + model.M, n))
        A_eq = np.zeros((len(probs), n))
        for v, (i, j) in enumerate(index):
            f[v] = probs[i] * Y[i, j, 0]
            G[: model.K, v] = probs[i] * (A[i, j] - Bs[i, j])
            G[model.K:, v] = probs[i] * Y[i, j, 1:]
            A_eq[i, v] = 1.0
        return cls(model, index, f, G, A_eq)

    @property
    def n_vars(self) -> int:
        return len(self.index)

    def policy(self, x: np.ndarray) -> OmegaOnlyPolicy:
        n_act = self.model.tables()[3]
        rows = [np.zeros(int(k)) for k in n_act]
        for v, (i, j) in enumerate(self.index):
            rows[i][j] = x[v]
        return OmegaOnlyPolicy.from_matrix(self.model, rows)

    def residual(self, x: np.ndarray, eps: float) -> float:
        """Largest violation of normalization, sign or slack constraints."""
        viol = [
            np.abs(self.A_eq @ x - 1.0).max(initial=0.0),
            np.maximum(-x, 0.0).max(initial=0.0),
            np.maximum(self.G @ x + eps, 0.0).max(initial=0.0),
        ]
        return float(max(viol))


@dataclass(frozen=True)
class OracleSolution:
    """Result of an oracle LP; ``value`` is None when the LP is infeasible."""

    epsilon: float | None
    value: float | None
    policy: OmegaOnlyPolicy | None = None
    residual: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "y0_opt": self.value,
            "feasible": self.feasible,
            "policy": self.policy.to_dict() if self.policy else None,
        }


def policy_expectations(model: NetworkModel, policy: OmegaOnlyPolicy) -> np.ndarray:
    """E[y0], E[a_k - b_k], E[y_m] under ``policy``, by direct enumeration."""
    out = []
    for idx in range(1 + model.K + model.M):
        terms = []
        for s, p, act, o in model.pairs():
            q = policy.probability(s.id, act.id)
            if idx == 0:
                v = o.y[0]
            elif idx <= model.K:
                v = o.a[idx - 1] - o.b[idx - 1]
            else:
                v = o.y[idx - model.K]
            terms.append(p * q * v)
        out.append(math.fsum(terms))
    return np.array(out)


def compute_y0_opt(model: NetworkModel, epsilon: float = 0.0, lp: PolicyLP | None = None) -> OracleSolution:
    """Least expected objective penalty among event-only policies with slack ``epsilon``."""
    if not math.isfinite(epsilon) or epsilon < 0:
        raise DomainError(f"epsilon must be finite and >= 0, got {epsilon}")
    lp = lp or PolicyLP.build(model)
    res = linprog(lp.f, A_ub=lp.G, b_ub=np.full(lp.G.shape[0], -epsilon), A_eq=lp.A_eq, b_eq=np.ones(lp.A_eq.shape[0]))
    if not res.ok:
        return OracleSolution(epsilon, None)
    return OracleSolution(epsilon, float(lp.f @ res.x), lp.policy(res.x), lp.residual(res.x, epsilon))


def compute_epsilon_max(model: NetworkModel, lp: PolicyLP | None = None) -> OracleSolution:
    """Largest common slack achievable on every queue drift and constraint penalty.

    ``value`` is None when no event-only policy reaches zero slack.
    """
    lp = lp or PolicyLP.build(model)
    n = lp.n_vars
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([lp.G, np.ones((lp.G.shape[0], 1))])
    A_eq = np.hstack([lp.A_eq, np.zeros((lp.A_eq.shape[0], 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(A_ub.shape[0]), A_eq=A_eq, b_eq=np.ones(A_eq.shape[0]))
    if not res.ok:
        return OracleSolution(None, None)
    x, eps = res.x[:n], float(res.x[-1])
    return OracleSolution(eps, eps, lp.policy(x), lp.residual(x, eps))


def y0_opt_curve(model: NetworkModel, grid: Sequence[float]) -> list[tuple[float, float | None]]:
    lp = PolicyLP.build(model)
    return [(float(e), compute_y0_opt(model, e, lp).value) for e in grid]


@dataclass(frozen=True)
class OracleValues:
    """Constants the performance bounds need for one scenario."""

    y0_opt: float | None
    epsilon_max: float | None
    y0_opt_at_eps_max: float | None
    policy: OmegaOnlyPolicy | None = field(default=None, repr=False)

    @property
    def feasible(self) -> bool:
        return self.y0_opt is not None


def oracle_values(model: NetworkModel) -> OracleValues:
    lp = PolicyLP.build(model)
    base = compute_y0_opt(model, 0.0, lp)
    em = compute_epsilon_max(model, lp)
    at_max = compute_y0_opt(model, em.value, lp).value if em.feasible else None
    return OracleValues(base.value, em.value, at_max, base.policy)
