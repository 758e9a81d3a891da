"""Exhaustive cross-check for the policy LPs.

Every event-only randomized policy's expectation vector is a convex mixture
of deterministic policies' vectors.  With ``c`` slack constraints an optimal
mixture needs at most ``c + 1`` deterministic policies, and its weights solve
a square system built from the normalization row plus active constraints.
Enumerating all such supports and active sets finds the optimum without any
pivoting, so it shares no code path with the simplex solver.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..model import NetworkModel

DET_TOL = 1e-12
FEAS_TOL = 1e-9


def deterministic_policies(model: NetworkModel) -> tuple[list[tuple[int, ...]], np.ndarray, np.ndarray]:
    """All deterministic policies with their expected objective and constraint rows.

    Returns ``(choices, f, G)`` where ``f[i]`` is E[y0] and ``G[:, i]`` stacks
    E[a_k - b_k] and E[y_m] for policy ``choices[i]``.
    """
    A, Bs, Y, n_act = model.tables()
    probs = model.probabilities
    choices = list(itertools.product(*(range(int(k)) for k in n_act)))
    f = np.empty(len(choices))
    G = np.empty((model.K + model.M, len(choices)))
    rows = np.arange(len(probs))
    for c, choice in enumerate(choices):
        cols = np.asarray(choice)
        f[c] = probs @ Y[rows, cols, 0]
        G[: model.K, c] = probs @ (A[rows, cols] - Bs[rows, cols])
        G[model.K:, c] = probs @ Y[rows, cols, 1:]
    return choices, f, G


def _solve_batch(mats: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    det = np.linalg.det(mats)
    ok = np.abs(det) > DET_TOL
    sol = np.full(rhs.shape, np.nan)
    if ok.any():
        sol[ok] = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    return ok, sol


def brute_force_y0_opt(model: NetworkModel, epsilon: float = 0.0) -> float | None:
    _, f, G = deterministic_policies(model)
    c, N = G.shape
    best = np.inf
    for r in range(1, min(c + 1, N) + 1):
        supports = np.array(list(itertools.combinations(range(N), r)))
        for active in itertools.combinations(range(c), r - 1):
            mats = np.empty((len(supports), r, r))
            mats[:, 0, :] = 1.0
            if r > 1:
                mats[:, 1:, :] = G[list(active)][:, supports].transpose(1, 0, 2)
            rhs = np.full((len(supports), r), -epsilon)
            rhs[:, 0] = 1.0
            ok, lam = _solve_batch(mats, rhs)
            lam = lam[ok]
            sup = supports[ok]
            if not len(lam):
                continue
            nonneg = (lam >= -FEAS_TOL).all(axis=1)
            slack = np.einsum("cnr,nr->nc", G[:, sup], lam)
            feas = nonneg & (slack <= -epsilon + FEAS_TOL).all(axis=1)
            if feas.any():
                vals = np.einsum("nr,nr->n", f[sup[feas]], lam[feas])
                best = min(best, float(vals.min()))
    return None if best == np.inf else best


def brute_force_epsilon_max(model: NetworkModel) -> float | None:
    _, _, G = deterministic_policies(model)
    c, N = G.shape
    best = -np.inf
    for r in range(1, min(c, N) + 1):
        supports = np.array(list(itertools.combinations(range(N), r)))
        for active in itertools.combinations(range(c), r):
            mats = np.zeros((len(supports), r + 1, r + 1))
            mats[:, 0, :r] = 1.0
            mats[:, 1:, :r] = G[list(active)][:, supports].transpose(1, 0, 2)
            mats[:, 1:, r] = 1.0
            rhs = np.zeros((len(supports), r + 1))
            rhs[:, 0] = 1.0
            ok, sol = _solve_batch(mats, rhs)
            sol = sol[ok]
            sup = supports[ok]
            if not len(sol):
                continue
            lam, eps = sol[:, :r], sol[:, r]
            slack = np.einsum("cnr,nr->nc", G[:, sup], lam) + eps[:, None]
            feas = (lam >= -FEAS_TOL).all(axis=1) & (slack <= FEAS_TOL).all(axis=1)
            if feas.any():
                best = max(best, float(eps[feas].max()))
    if best < -FEAS_TOL:
        return None
    return max(best, 0.0)
