"""Compiled slot loop.

Arithmetic mirrors ``dynamics.queue_update``, ``dynamics.virtual_queue_update``
and ``controller.dpp_score`` operation for operation, so replaying a trace
through the pure-Python functions reproduces it bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

KIND_DPP = 0
KIND_POLICY = 1


@njit(cache=True, nogil=True)
def _neumaier(sums, comps, i, x):
    s = sums[i]
    t = s + x
    if abs(s) >= abs(x):
        comps[i] += (s - t) + x
    else:
        comps[i] += (x - t) + s
    sums[i] = t


@njit(cache=True, nogil=True)
def run_chunk(
    t0, T, omega_idx, u_act,
    A, Bs, Y, n_act,
    kind, V, C, w, pol_idx, pol_cum,
    Q, Z, sums, comps, batch_sums, n_batches,
    store, rec_action, rec_Q, rec_Z,
    ckpt_every, ckpt_n, ckpt_Q, ckpt_Z, ckpt_sums, ckpt_count,
):
    """Advance the state through ``len(omega_idx)`` slots starting at slot ``t0``.

    ``sums`` layout: y_0..y_M, Q_1..Q_K, Z_1..Z_M, total backlog; queue
    entries accumulate the pre-update values Q(t), Z(t).
    """
    K = Q.shape[0]
    M = Z.shape[0]
    n = omega_idx.shape[0]
    scores = np.empty(A.shape[1])
    for i in range(n):
        t = t0 + i
        om = omega_idx[i]
        na = n_act[om]
        if kind == KIND_DPP:
            best = 0
            for j in range(na):
                s = V * Y[om, j, 0]
                for k in range(K):
                    s += (w[k] * Q[k]) * (A[om, j, k] - Bs[om, j, k])
                for m in range(M):
                    s += (w[K + m] * Z[m]) * Y[om, j, m + 1]
                scores[j] = s
                if s < scores[best]:
                    best = j
            if C > 0.0:
                limit = scores[best] + C
                worst = best
                for j in range(na):
                    if scores[j] <= limit and scores[j] > scores[worst]:
                        worst = j
                best = worst
            act = best
        else:
            u = u_act[i]
            width = pol_cum.shape[1]
            act = pol_idx[om, width - 1]
            for j in range(width):
                if u < pol_cum[om, j]:
                    act = pol_idx[om, j]
                    break

        backlog = 0.0
        for k in range(K):
            backlog += Q[k]
        for m in range(M):
            backlog += Z[m]
        for m in range(M + 1):
            _neumaier(sums, comps, m, Y[om, act, m])
        for k in range(K):
            _neumaier(sums, comps, M + 1 + k, abs(Q[k]))
        for m in range(M):
            _neumaier(sums, comps, M + 1 + K + m, Z[m])
        _neumaier(sums, comps, 2 * M + 1 + K, backlog)
        b = (t * n_batches) // T
        batch_sums[b, 0] += Y[om, act, 0]
        batch_sums[b, 1] += backlog

        for k in range(K):
            Q[k] = max(Q[k] - Bs[om, act, k] + A[om, act, k], 0.0)
        for m in range(M):
            Z[m] = max(Z[m] + Y[om, act, m + 1], 0.0)

        if store:
            rec_action[t] = act
            for k in range(K):
                rec_Q[t, k] = Q[k]
            for m in range(M):
                rec_Z[t, m] = Z[m]

        done = t + 1
        if done % ckpt_every == 0 or done == T:
            c = ckpt_count[0]
            ckpt_n[c] = done
            for k in range(K):
                ckpt_Q[c, k] = Q[k]
            for m in range(M):
                ckpt_Z[c, m] = Z[m]
            for j in range(sums.shape[0]):
                ckpt_sums[c, j] = sums[j] + comps[j]
            ckpt_count[0] = c + 1
