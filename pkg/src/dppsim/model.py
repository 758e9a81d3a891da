"""Finite stochastic network models.

A model is a finite event space (the random network state observed at the
start of each slot), a finite action menu per event, and a table of slot
outcomes: arrivals ``a``, services ``b`` and penalties ``y`` for every
(event, action) pair.  ``y[0]`` is the objective penalty, ``y[1:]`` are the
constraint penalties whose time averages must be non-positive.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

PROB_TOL = 1e-12


@dataclass(frozen=True)
class NetworkState:
    id: str
    payload: tuple[float, ...] = ()


@dataclass(frozen=True)
class Action:
    id: str


@dataclass(frozen=True)
class SlotOutcome:
    """Arrivals, services and penalties produced by one slot's decision."""

    a: tuple[float, ...]
    b: tuple[float, ...]
    y: tuple[float, ...]


EvalFn = Callable[[Action, NetworkState], SlotOutcome]


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Immutable finite network model.

    ``omega_space`` pairs every event with its probability; ``action_sets``
    maps event ids to their (ordered) action menus.  Action order matters:
    it is the tie-break order used by the controllers.
    """

    K: int
    M: int
    omega_space: tuple[tuple[NetworkState, float], ...]
    action_sets: Mapping[str, tuple[Action, ...]]
    eval_fn: EvalFn
    y0_min: float = 0.0
    name: str = "unnamed"
    _table: dict = field(init=False, repr=False)
    _arrays: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.K, int) or self.K < 1:
            raise ConfigurationError(f"K must be a positive integer, got {self.K!r}")
        if not isinstance(self.M, int) or self.M < 0:
            raise ConfigurationError(f"M must be a non-negative integer, got {self.M!r}")
        if not math.isfinite(self.y0_min):
            raise ConfigurationError("y0_min must be finite")
        omega_space = tuple((s, float(p)) for s, p in self.omega_space)
        object.__setattr__(self, "omega_space", omega_space)
        _check_probabilities([p for _, p in omega_space])
        ids = [s.id for s, _ in omega_space]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("network state ids must be unique")
        sets = {}
        for sid in ids:
            acts = tuple(self.action_sets.get(sid, ()))
            if not acts:
                raise ConfigurationError(f"state {sid!r} has no feasible action")
            act_ids = [a.id for a in acts]
            if len(set(act_ids)) != len(act_ids):
                raise ConfigurationError(f"duplicate action ids for state {sid!r}")
            sets[sid] = acts
        extra = set(self.action_sets) - set(ids)
        if extra:
            raise ConfigurationError(f"action sets given for unknown states {sorted(extra)}")
        object.__setattr__(self, "action_sets", sets)

        table = {}
        for state, _ in omega_space:
            for act in sets[state.id]:
                out = self.eval_fn(act, state)
                out = SlotOutcome(
                    tuple(float(v) for v in out.a),
                    tuple(float(v) for v in out.b),
                    tuple(float(v) for v in out.y),
                )
                self._check_outcome(out, state.id, act.id)
                table[state.id, act.id] = out
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_arrays", self._build_arrays())

    def _check_outcome(self, out: SlotOutcome, sid: str, aid: str) -> None:
        where = f"(state {sid!r}, action {aid!r})"
        if len(out.a) != self.K or len(out.b) != self.K or len(out.y) != self.M + 1:
            raise ConfigurationError(f"outcome dimensions do not match K={self.K}, M={self.M} at {where}")
        vals = out.a + out.b + out.y
        if not all(math.isfinite(v) for v in vals):
            raise ConfigurationError(f"non-finite outcome at {where}")
        if min(out.a) < 0 or min(out.b) < 0:
            raise ConfigurationError(f"negative arrival or service at {where}")
        if out.y[0] < self.y0_min:
            raise ConfigurationError(f"y0={out.y[0]} below y0_min={self.y0_min} at {where}")

    def _build_arrays(self):
        n_omega = len(self.omega_space)
        width = max(len(a) for a in self.action_sets.values())
        A = np.zeros((n_omega, width, self.K))
        Bs = np.zeros((n_omega, width, self.K))
        Y = np.zeros((n_omega, width, self.M + 1))
        n_act = np.zeros(n_omega, dtype=np.int64)
        for i, (state, _) in enumerate(self.omega_space):
            acts = self.action_sets[state.id]
            n_act[i] = len(acts)
            for j, act in enumerate(acts):
                out = self._table[state.id, act.id]
                A[i, j], Bs[i, j], Y[i, j] = out.a, out.b, out.y
        probs = np.array([p for _, p in self.omega_space])
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        for arr in (A, Bs, Y, n_act, probs, cum):
            arr.setflags(write=False)
        return A, Bs, Y, n_act, probs, cum

    # -- accessors -----------------------------------------------------

    @property
    def states(self) -> tuple[NetworkState, ...]:
        return tuple(s for s, _ in self.omega_space)

    @property
    def probabilities(self) -> np.ndarray:
        return self._arrays[4]

    @property
    def cumulative(self) -> np.ndarray:
        return self._arrays[5]

    def tables(self):
        """Padded outcome arrays ``(A, B, Y, n_actions)`` indexed [omega, action, :]."""
        return self._arrays[:4]

    def state(self, omega: NetworkState | str | int) -> NetworkState:
        if isinstance(omega, NetworkState):
            return omega
        if isinstance(omega, (int, np.integer)):
            return self.omega_space[int(omega)][0]
        for s, _ in self.omega_space:
            if s.id == omega:
                return s
        raise DomainError(f"unknown network state {omega!r}")

    def state_index(self, omega: NetworkState | str) -> int:
        sid = omega.id if isinstance(omega, NetworkState) else omega
        for i, (s, _) in enumerate(self.omega_space):
            if s.id == sid:
                return i
        raise DomainError(f"unknown network state {sid!r}")

    def actions(self, omega: NetworkState | str) -> tuple[Action, ...]:
        sid = omega.id if isinstance(omega, NetworkState) else omega
        try:
            return self.action_sets[sid]
        except KeyError:
            raise DomainError(f"unknown network state {sid!r}") from None

    def pairs(self):
        """Yield ``(state, prob, action, outcome)`` over the whole finite grid."""
        for state, prob in self.omega_space:
            for act in self.action_sets[state.id]:
                yield state, prob, act, self._table[state.id, act.id]

    def with_action(self, omega_id: str, action: Action, outcome: SlotOutcome) -> "NetworkModel":
        """Copy of the model with one extra action appended to ``omega_id``'s menu."""
        data = scenario_to_dict(self)
        data["actions"][omega_id].append(
            {"id": action.id, "a": list(outcome.a), "b": list(outcome.b), "y": list(outcome.y)}
        )
        return model_from_dict(data)


def _check_probabilities(probs: Sequence[float]) -> None:
    if not probs:
        raise ConfigurationError("omega space is empty")
    if any(not math.isfinite(p) or p < 0 for p in probs):
        raise ConfigurationError("omega probabilities must be finite and non-negative")
    if abs(math.fsum(probs) - 1.0) > PROB_TOL:
        raise ConfigurationError(f"omega probabilities sum to {math.fsum(probs)!r}, not 1")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based random stream for one run."""
    return np.random.Generator(np.random.Philox(seed))


def omega_indices(model: NetworkModel, u: np.ndarray) -> np.ndarray:
    """Map uniforms in [0, 1) to event indices by inversion of the CDF."""
    idx = np.searchsorted(model.cumulative, u, side="right")
    return np.minimum(idx, len(model.omega_space) - 1)


def sample_omega(model: NetworkModel, rng: np.random.Generator) -> NetworkState:
    u = rng.random()
    return model.omega_space[int(omega_indices(model, np.array([u]))[0])][0]


def evaluate(model: NetworkModel, action: Action | str, omega: NetworkState | str) -> SlotOutcome:
    sid = omega.id if isinstance(omega, NetworkState) else omega
    aid = action.id if isinstance(action, Action) else action
    try:
        return model._table[sid, aid]
    except KeyError:
        raise DomainError(f"action {aid!r} is not feasible in state {sid!r}") from None


@dataclass(frozen=True)
class MomentBounds:
    """Worst-case moments over all (possibly randomized) decision rules."""

    a4: tuple[float, ...]
    b4: tuple[float, ...]
    y4: tuple[float, ...]
    y0_sq: float

    @property
    def D(self) -> float:
        return max((*self.a4, *self.b4, *self.y4, self.y0_sq), default=0.0)


def estimate_moment_bounds(model: NetworkModel) -> MomentBounds:
    # A linear functional of the per-event action distribution is maximized
    # by a point mass on each event's best action.
    def worst(f) -> float:
        return math.fsum(
            p * max(f(model._table[s.id, a.id]) for a in model.action_sets[s.id])
            for s, p in model.omega_space
        )

    return MomentBounds(
        a4=tuple(worst(lambda o, k=k: o.a[k] ** 4) for k in range(model.K)),
        b4=tuple(worst(lambda o, k=k: o.b[k] ** 4) for k in range(model.K)),
        y4=tuple(worst(lambda o, m=m: o.y[m] ** 4) for m in range(1, model.M + 1)),
        y0_sq=worst(lambda o: o.y[0] ** 2),
    )


# -- scenario files ------------------------------------------------------


def model_from_dict(data: Mapping[str, Any], name: str | None = None) -> NetworkModel:
    try:
        K = data["K"]
        M = data["M"]
        y0_min = float(data.get("y0_min", 0.0))
        omega = data["omega"]
        actions = data["actions"]
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"scenario is missing field {exc}") from None
    if not isinstance(K, int) or not isinstance(M, int):
        raise ConfigurationError("K and M must be integers")
    states = []
    for entry in omega:
        try:
            st = NetworkState(str(entry["id"]), tuple(float(v) for v in entry.get("payload", ())))
            states.append((st, float(entry["prob"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad omega entry {entry!r}: {exc}") from None
    table: dict[tuple[str, str], SlotOutcome] = {}
    sets: dict[str, tuple[Action, ...]] = {}
    for sid, menu in actions.items():
        acts = []
        for entry in menu:
            try:
                act = Action(str(entry["id"]))
                out = SlotOutcome(tuple(entry["a"]), tuple(entry["b"]), tuple(entry["y"]))
            except (KeyError, TypeError) as exc:
                raise ConfigurationError(f"bad action entry for state {sid!r}: {exc}") from None
            acts.append(act)
            table[str(sid), act.id] = out
        sets[str(sid)] = tuple(acts)

    def lookup(action: Action, state: NetworkState) -> SlotOutcome:
        return table[state.id, action.id]

    return NetworkModel(
        K=K,
        M=M,
        omega_space=tuple(states),
        action_sets=sets,
        eval_fn=lookup,
        y0_min=y0_min,
        name=name or str(data.get("name", "unnamed")),
    )


def scenario_to_dict(model: NetworkModel) -> dict[str, Any]:
    return {
        "name": model.name,
        "K": model.K,
        "M": model.M,
        "y0_min": model.y0_min,
        "omega": [{"id": s.id, "prob": p, "payload": list(s.payload)} for s, p in model.omega_space],
        "actions": {
            s.id: [
                {"id": a.id, "a": list(o.a), "b": list(o.b), "y": list(o.y)}
                for a in model.action_sets[s.id]
                for o in (model._table[s.id, a.id],)
            ]
            for s, _ in model.omega_space
        },
    }


def scenario_hash(model: NetworkModel) -> str:
    """sha256 of the canonical JSON form; the name is excluded."""
    data = scenario_to_dict(model)
    data.pop("name")
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_scenario(path: str | Path) -> NetworkModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"scenario file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from None
    return model_from_dict(data, name=data.get("name", path.stem))


def save_scenario(model: NetworkModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(model), indent=2) + "\n")


BUILTIN_SCENARIOS = ("power-min", "constrained-2q", "bursty-1q")


def builtin_scenario(name: str) -> NetworkModel:
    if name not in BUILTIN_SCENARIOS:
        raise ConfigurationError(f"unknown built-in scenario {name!r}")
    text = resources.files("dppsim.scenarios").joinpath(f"{name}.json").read_text()
    return model_from_dict(json.loads(text), name=name)


def resolve_scenario(ref: str | Path) -> NetworkModel:
    """Load a scenario from a path, or by built-in name if no such file exists."""
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        return load_scenario(p)
    return builtin_scenario(str(ref))
