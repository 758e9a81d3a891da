"""Queue recursions and the quadratic Lyapunov function."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .errors import DomainError

if TYPE_CHECKING:
    from .simulator import Trace


@dataclass(frozen=True)
class SystemState:
    """Actual queues ``Q``, virtual queues ``Z`` and the slot index ``t``."""

    Q: tuple[float, ...]
    Z: tuple[float, ...] = ()
    t: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "Q", tuple(float(q) for q in self.Q))
        object.__setattr__(self, "Z", tuple(float(z) for z in self.Z))

    @classmethod
    def zeros(cls, K: int, M: int = 0) -> "SystemState":
        return cls((0.0,) * K, (0.0,) * M, 0)

    @property
    def theta(self) -> tuple[float, ...]:
        return self.Q + self.Z

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.theta)

    def step(self, a: Sequence[float], b: Sequence[float], y: Sequence[float]) -> "SystemState":
        """Apply one slot of the queue and virtual-queue recursions."""
        if len(a) != len(self.Q) or len(b) != len(self.Q) or len(y) != len(self.Z) + 1:
            raise DomainError("outcome dimensions do not match the state")
        Q = tuple(queue_update(q, ak, bk) for q, ak, bk in zip(self.Q, a, b))
        Z = tuple(virtual_queue_update(z, ym) for z, ym in zip(self.Z, y[1:]))
        return SystemState(Q, Z, self.t + 1)


@dataclass(frozen=True)
class LyapunovWeights:
    w: tuple[float, ...]

    def __post_init__(self) -> None:
        w = tuple(float(x) for x in self.w)
        if not all(math.isfinite(x) and x > 0 for x in w):
            raise DomainError("Lyapunov weights must be positive and finite")
        object.__setattr__(self, "w", w)

    @classmethod
    def ones(cls, n: int) -> "LyapunovWeights":
        return cls((1.0,) * n)

    def __len__(self) -> int:
        return len(self.w)


def queue_update(Q_k: float, a_k: float, b_k: float) -> float:
    if not all(math.isfinite(v) and v >= 0 for v in (Q_k, a_k, b_k)):
        raise DomainError(f"queue_update needs finite non-negative inputs, got {(Q_k, a_k, b_k)}")
    return max(Q_k - b_k + a_k, 0.0)


def virtual_queue_update(Z_m: float, y_m: float) -> float:
    if not (math.isfinite(Z_m) and math.isfinite(y_m)) or Z_m < 0:
        raise DomainError(f"virtual_queue_update needs finite Z >= 0 and finite y, got {(Z_m, y_m)}")
    return max(Z_m + y_m, 0.0)


def _weights_for(state: SystemState, weights: LyapunovWeights | None) -> tuple[float, ...]:
    n = len(state.Q) + len(state.Z)
    if weights is None:
        return (1.0,) * n
    if len(weights.w) != n:
        raise DomainError(f"{len(weights.w)} weights for a state with {n} components")
    return weights.w


def lyapunov_value(state: SystemState, weights: LyapunovWeights | None = None) -> float:
    w = _weights_for(state, weights)
    return 0.5 * math.fsum(wi * x * x for wi, x in zip(w, state.theta))


def lyapunov_norm(state: SystemState, weights: LyapunovWeights | None = None) -> float:
    return math.sqrt(lyapunov_value(state, weights))


def empirical_drift(trace: "Trace", weights: LyapunovWeights | None, t: int) -> float:
    """Realized one-slot Lyapunov difference L(Theta(t+1)) - L(Theta(t))."""
    if not 0 <= t < trace.T:
        raise DomainError(f"slot {t} outside trace of length {trace.T}")
    return lyapunov_value(trace.state_at(t + 1), weights) - lyapunov_value(trace.state_at(t), weights)


def replay(trace: "Trace") -> list[SystemState]:
    """Rebuild Theta(0..T) from the recorded outcomes using the scalar updates."""
    state = trace.initial_state
    states = [state]
    for a, b, y in zip(trace.a.tolist(), trace.b.tolist(), trace.y.tolist()):
        state = state.step(a, b, y)
        states.append(state)
    return states
