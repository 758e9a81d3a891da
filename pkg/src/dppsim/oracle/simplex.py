"""Dense two-phase tableau simplex for small LPs.

    minimize    c @ x
    subject to  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  x >= 0

Bland's rule picks both the entering and the leaving column, so the method
terminates on degenerate problems.  Sizes here are tens of variables; no
attempt is made at sparsity or numerical refactorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-12
FEAS_TOL = 1e-10


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    for r in range(tab.shape[0]):
        if r != row and tab[r, col] != 0.0:
            tab[r] -= tab[r, col] * tab[row]
    tab[:, col] = 0.0
    tab[row, col] = 1.0


def _iterate(tab: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int) -> tuple[str, int]:
    """Run simplex pivots on ``tab`` whose last row holds reduced costs."""
    m = tab.shape[0] - 1
    for it in range(max_iter):
        cost = tab[-1, :-1]
        entering = -1
        for j in np.flatnonzero(allowed):
            if cost[j] < -PIVOT_TOL:
                entering = int(j)
                break
        if entering < 0:
            return "optimal", it
        col = tab[:m, entering]
        best_row = -1
        best_ratio = np.inf
        for r in range(m):
            if col[r] > PIVOT_TOL:
                ratio = tab[r, -1] / col[r]
                if ratio < best_ratio - 1e-15 or (
                    abs(ratio - best_ratio) <= 1e-15 and basis[r] < basis[best_row]
                ):
                    best_ratio = ratio
                    best_row = r
        if best_row < 0:
            return "unbounded", it
        _pivot(tab, best_row, entering)
        basis[best_row] = entering
    raise RuntimeError("simplex iteration limit reached")


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_iter: int = 10_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # Standard form: structural | slacks | artificials | rhs.
    n_slack = m_ub
    A = np.zeros((m, n + n_slack))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b = np.where(neg, -b, b)

    n_std = n + n_slack
    tab = np.zeros((m + 1, n_std + m + 1))
    tab[:m, :n_std] = A
    tab[:m, n_std:n_std + m] = np.eye(m)
    tab[:m, -1] = b
    basis = list(range(n_std, n_std + m))

    # Phase 1: minimize the sum of artificials.
    tab[-1, :] = 0.0
    tab[-1, n_std:n_std + m] = 1.0
    for r in range(m):
        tab[-1] -= tab[r]
    allowed = np.ones(n_std + m, dtype=bool)
    status, it1 = _iterate(tab, basis, allowed, max_iter)
    if -tab[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult("infeasible", iterations=it1)

    # Drive artificials out of the basis where possible; drop redundant rows.
    keep = []
    for r in range(m):
        if basis[r] >= n_std:
            row = tab[r, :n_std]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            if cand.size:
                _pivot(tab, r, int(cand[0]))
                basis[r] = int(cand[0])
                keep.append(r)
        else:
            keep.append(r)
    tab = np.vstack([tab[keep], tab[-1:]])
    basis = [basis[r] for r in keep]
    m = len(keep)

    # Phase 2 on the original objective; artificials may not re-enter.
    tab[-1, :] = 0.0
    tab[-1, :n] = c
    for r, j in enumerate(basis):
        if tab[-1, j] != 0.0:
            tab[-1] -= tab[-1, j] * tab[r]
    allowed = np.zeros(n_std + (tab.shape[1] - 1 - n_std), dtype=bool)
    allowed[:n_std] = True
    status, it2 = _iterate(tab, basis, allowed, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", iterations=it1 + it2)
    x = np.zeros(tab.shape[1] - 1)
    for r, j in enumerate(basis):
        x[j] = tab[r, -1]
    x = np.maximum(x[:n], 0.0)
    return LPResult("optimal", x=x, objective=float(c @ x), iterations=it1 + it2)
