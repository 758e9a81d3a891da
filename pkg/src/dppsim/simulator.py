"""Slotted-time simulation: traces, run summaries and V sweeps."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import _kernel
from .controller import Controller, DppConfig, OmegaOnlyPolicy, compute_B
from .dynamics import LyapunovWeights, SystemState
from .errors import ConfigurationError
from .model import NetworkModel, SlotOutcome, make_rng, omega_indices, scenario_hash

log = logging.getLogger(__name__)

CHUNK = 1 << 16
N_BATCHES = 20
FULL_TRACE_LIMIT = 10**6


@dataclass(frozen=True)
class SlotRecord:
    t: int
    omega_id: str
    action_id: str
    outcome: SlotOutcome
    Q_after: tuple[float, ...]
    Z_after: tuple[float, ...]


@dataclass(frozen=True)
class Checkpoints:
    """Snapshots every ``every`` slots: slot count, Q, Z and the running sums."""

    every: int
    n: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    sums: np.ndarray


@dataclass(frozen=True)
class RunSummary:
    scenario: str
    scenario_hash: str
    seed: int
    T: int
    V: float | None
    C: float
    B: float
    y_bar: tuple[float, ...]
    Q_bar: tuple[float, ...]
    Z_bar: tuple[float, ...]
    backlog_bar: float
    Q_ratio: tuple[float, ...]
    Z_ratio: tuple[float, ...]
    y0_batch_means: tuple[float, ...] = field(default=(), repr=False)
    backlog_batch_means: tuple[float, ...] = field(default=(), repr=False)

    @property
    def se_y0(self) -> float:
        return batch_se(self.y0_batch_means)

    @property
    def se_backlog(self) -> float:
        return batch_se(self.backlog_batch_means)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["se_y0"] = self.se_y0
        d["se_backlog"] = self.se_backlog
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        d = {k: v for k, v in d.items() if k not in ("se_y0", "se_backlog")}
        for k in ("y_bar", "Q_bar", "Z_bar", "Q_ratio", "Z_ratio", "y0_batch_means", "backlog_batch_means"):
            d[k] = tuple(d.get(k, ()))
        return cls(**d)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def batch_se(means: Sequence[float]) -> float:
    """Standard error of the grand mean from (approximately independent) batch means."""
    n = len(means)
    if n < 2:
        return 0.0
    return float(np.std(np.asarray(means), ddof=1) / math.sqrt(n))


def pooled_se(summaries: Sequence[RunSummary], attr: str = "y0_batch_means") -> float:
    """Batch-means standard error of the across-run mean, pooling all batches."""
    means = [m for s in summaries for m in getattr(s, attr)]
    return batch_se(means)


class Trace:
    """Outcome of one simulation run.

    Per-slot records are held column-wise (``omega_idx``, ``action_idx``,
    ``Q_after``, ``Z_after``) when retained; ``a``, ``b``, ``y`` are looked up
    from the model tables.  Running sums and checkpoints are always present.
    """

    def __init__(
        self,
        model: NetworkModel,
        controller: Controller,
        seed: int,
        initial_state: SystemState,
        T: int,
        sums: np.ndarray,
        batch_sums: np.ndarray,
        checkpoints: Checkpoints,
        final_state: SystemState,
        omega_idx: np.ndarray | None = None,
        action_idx: np.ndarray | None = None,
        Q_after: np.ndarray | None = None,
        Z_after: np.ndarray | None = None,
    ) -> None:
        self.model = model
        self.controller = controller
        self.seed = seed
        self.initial_state = initial_state
        self.T = T
        self.sums = sums
        self.batch_sums = batch_sums
        self.checkpoints = checkpoints
        self.final_state = final_state
        self.omega_idx = omega_idx
        self.action_idx = action_idx
        self.Q_after = Q_after
        self.Z_after = Z_after
        self.scenario = model.name
        self.scenario_hash = scenario_hash(model)
        w = controller.weights if isinstance(controller, DppConfig) else None
        self.B = compute_B(model, w)

    # -- record access -----------------------------------------------

    @property
    def has_records(self) -> bool:
        return self.omega_idx is not None

    def _need_records(self) -> None:
        if not self.has_records:
            raise ConfigurationError("trace was run in streaming mode; per-slot records are unavailable")

    @property
    def a(self) -> np.ndarray:
        self._need_records()
        return self.model.tables()[0][self.omega_idx, self.action_idx]

    @property
    def b(self) -> np.ndarray:
        self._need_records()
        return self.model.tables()[1][self.omega_idx, self.action_idx]

    @property
    def y(self) -> np.ndarray:
        self._need_records()
        return self.model.tables()[2][self.omega_idx, self.action_idx]

    @property
    def Q_path(self) -> np.ndarray:
        """Q(0..T), shape (T+1, K)."""
        self._need_records()
        return np.vstack([np.asarray(self.initial_state.Q)[None, :], self.Q_after])

    @property
    def Z_path(self) -> np.ndarray:
        self._need_records()
        return np.vstack([np.asarray(self.initial_state.Z).reshape(1, -1), self.Z_after])

    def state_at(self, t: int) -> SystemState:
        if t == 0:
            return self.initial_state
        if t == self.T:
            return self.final_state
        self._need_records()
        return SystemState(tuple(self.Q_after[t - 1]), tuple(self.Z_after[t - 1]), t)

    def record(self, t: int) -> SlotRecord:
        self._need_records()
        state, _ = self.model.omega_space[self.omega_idx[t]]
        act = self.model.actions(state)[self.action_idx[t]]
        return SlotRecord(
            t=t,
            omega_id=state.id,
            action_id=act.id,
            outcome=SlotOutcome(tuple(self.a[t]), tuple(self.b[t]), tuple(self.y[t])),
            Q_after=tuple(self.Q_after[t]),
            Z_after=tuple(self.Z_after[t]),
        )

    def __iter__(self) -> Iterator[SlotRecord]:
        return (self.record(t) for t in range(self.T))

    def __len__(self) -> int:
        return self.T

    # -- summaries -----------------------------------------------------

    def running_sum(self, name: str, index: int = 0) -> float:
        K, M = self.model.K, self.model.M
        offsets = {"y": 0, "Q": M + 1, "Z": M + 1 + K, "backlog": 2 * M + 1 + K}
        return float(self.sums[offsets[name] + index])

    def summary(self) -> RunSummary:
        K, M, T = self.model.K, self.model.M, self.T
        counts = np.bincount((np.arange(T, dtype=np.int64) * N_BATCHES) // T, minlength=N_BATCHES)
        keep = counts > 0
        bm = self.batch_sums[keep] / counts[keep, None]
        V = self.controller.V if isinstance(self.controller, DppConfig) else None
        C = self.controller.C if isinstance(self.controller, DppConfig) else 0.0
        return RunSummary(
            scenario=self.scenario,
            scenario_hash=self.scenario_hash,
            seed=self.seed,
            T=T,
            V=V,
            C=C,
            B=self.B,
            y_bar=tuple(self.running_sum("y", m) / T for m in range(M + 1)),
            Q_bar=tuple(self.running_sum("Q", k) / T for k in range(K)),
            Z_bar=tuple(self.running_sum("Z", m) / T for m in range(M)),
            backlog_bar=self.running_sum("backlog") / T,
            Q_ratio=tuple(abs(q) / T for q in self.final_state.Q),
            Z_ratio=tuple(z / T for z in self.final_state.Z),
            y0_batch_means=tuple(bm[:, 0].tolist()),
            backlog_batch_means=tuple(bm[:, 1].tolist()),
        )

    # -- export ----------------------------------------------------------

    def csv_header(self) -> list[str]:
        return self.csv_header_for(self.model.K, self.model.M)

    def metadata(self) -> dict:
        return {
            "scenario": self.scenario,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "T": self.T,
            "controller": controller_to_dict(self.controller),
            "initial_state": {"Q": list(self.initial_state.Q), "Z": list(self.initial_state.Z)},
        }

    def to_csv(self, path: str | Path) -> None:
        """Write the per-slot CSV plus a ``.meta.json`` sidecar with provenance."""
        self._need_records()
        path = Path(path)
        states = [s.id for s in self.model.states]
        acts = [[a.id for a in self.model.actions(s)] for s in self.model.states]
        cols = np.hstack([self.a, self.b, self.y, self.Q_after, self.Z_after])
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.csv_header())
            for t, (o, j, row) in enumerate(zip(self.omega_idx.tolist(), self.action_idx.tolist(), cols.tolist())):
                wr.writerow([t, states[o], acts[o][j], *map(repr, row)])
        meta_path(path).write_text(json.dumps(self.metadata(), indent=2) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path, model: NetworkModel) -> "Trace":
        """Reload a trace written by :meth:`to_csv` and rebuild its running sums."""
        path = Path(path)
        meta = {}
        if meta_path(path).exists():
            meta = json.loads(meta_path(path).read_text())
        K, M = model.K, model.M
        init = meta.get("initial_state", {"Q": [0.0] * K, "Z": [0.0] * M})
        initial = SystemState(tuple(init["Q"]), tuple(init["Z"]), 0)
        controller = controller_from_dict(meta["controller"]) if "controller" in meta else DppConfig(V=0.0)
        states = [s.id for s in model.states]
        acts = [[a.id for a in model.actions(s)] for s in model.states]
        om, ac, Qs, Zs = [], [], [], []
        with path.open(newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            expected = cls.csv_header_for(K, M)
            if header != expected:
                raise ConfigurationError(f"trace header {header} does not match scenario (expected {expected})")
            for row in rd:
                o = states.index(row[1])
                om.append(o)
                ac.append(acts[o].index(row[2]))
                vals = [float(v) for v in row[3:]]
                Qs.append(vals[2 * K + M + 1: 3 * K + M + 1])
                Zs.append(vals[3 * K + M + 1:])
        T = len(om)
        if T == 0:
            raise ConfigurationError(f"trace {path} is empty")
        omega_idx = np.array(om, dtype=np.int64)
        action_idx = np.array(ac, dtype=np.int64)
        Q_after = np.array(Qs, dtype=float).reshape(T, K)
        Z_after = np.array(Zs, dtype=float).reshape(T, M)
        return _trace_from_records(model, controller, int(meta.get("seed", 0)), initial, omega_idx, action_idx, Q_after, Z_after)

    @staticmethod
    def csv_header_for(K: int, M: int) -> list[str]:
        return (
            ["t", "omega_id", "action_id"]
            + [f"a_{k}" for k in range(1, K + 1)]
            + [f"b_{k}" for k in range(1, K + 1)]
            + [f"y_{m}" for m in range(M + 1)]
            + [f"Q_{k}" for k in range(1, K + 1)]
            + [f"Z_{m}" for m in range(1, M + 1)]
        )


def meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def controller_to_dict(controller: Controller) -> dict:
    if isinstance(controller, DppConfig):
        return {
            "kind": "dpp",
            "V": controller.V,
            "C": controller.C,
            "weights": list(controller.weights.w) if controller.weights else None,
            "tie_break": controller.tie_break,
        }
    return {"kind": "omega-only", "policy": controller.to_dict()}


def controller_from_dict(d: dict) -> Controller:
    if d["kind"] == "dpp":
        w = LyapunovWeights(tuple(d["weights"])) if d.get("weights") else None
        return DppConfig(V=d["V"], C=d.get("C", 0.0), weights=w, tie_break=d.get("tie_break", "lowest-index"))
    return OmegaOnlyPolicy({sid: tuple(m.items()) for sid, m in d["policy"].items()})


def _empty_accumulators(model: NetworkModel, T: int, every: int):
    K, M = model.K, model.M
    n_ck = -(-T // every)
    return (
        np.zeros(2 * M + 2 + K),
        np.zeros(2 * M + 2 + K),
        np.zeros((N_BATCHES, 2)),
        np.zeros(n_ck, dtype=np.int64),
        np.zeros((n_ck, K)),
        np.zeros((n_ck, M)),
        np.zeros((n_ck, 2 * M + 2 + K)),
        np.zeros(1, dtype=np.int64),
    )


def _trace_from_records(model, controller, seed, initial, omega_idx, action_idx, Q_after, Z_after) -> "Trace":
    """Recompute running sums from stored records (used for reloaded traces)."""
    T = len(omega_idx)
    A, Bs, Y, n_act = model.tables()
    y = Y[omega_idx, action_idx]
    Qp = np.vstack([np.asarray(initial.Q)[None, :], Q_after])[:-1]
    Zp = np.vstack([np.asarray(initial.Z).reshape(1, -1), Z_after])[:-1]
    backlog = Qp.sum(axis=1) + Zp.sum(axis=1)
    cols = [y[:, m] for m in range(model.M + 1)] + [np.abs(Qp[:, k]) for k in range(model.K)]
    cols += [Zp[:, m] for m in range(model.M)] + [backlog]
    sums = np.array([math.fsum(c.tolist()) for c in cols])
    idx = (np.arange(T, dtype=np.int64) * N_BATCHES) // T
    batch = np.zeros((N_BATCHES, 2))
    np.add.at(batch[:, 0], idx, y[:, 0])
    np.add.at(batch[:, 1], idx, backlog)
    final = SystemState(tuple(Q_after[-1]), tuple(Z_after[-1]), T)
    ck = Checkpoints(every=T, n=np.array([T]), Q=Q_after[-1:].copy(), Z=Z_after[-1:].copy(), sums=sums[None, :])
    return Trace(model, controller, seed, initial, T, sums, batch, ck, final, omega_idx, action_idx, Q_after, Z_after)


def run(
    model: NetworkModel,
    controller: Controller,
    T: int,
    seed: int,
    initial_state: SystemState | None = None,
    store_trace: bool | None = None,
    checkpoint_every: int | None = None,
) -> Trace:
    """Simulate ``T`` slots.

    Every slot draws two uniforms from one Philox stream (event, then policy
    randomization), whatever the controller, so runs with the same seed see
    the same event sequence.
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ConfigurationError(f"horizon T must be a positive integer, got {T!r}")
    T = int(T)
    K, M = model.K, model.M
    if initial_state is None:
        initial_state = SystemState.zeros(K, M)
    if len(initial_state.Q) != K or len(initial_state.Z) != M:
        raise ConfigurationError("initial state dimensions do not match the model")
    if not initial_state.is_finite() or min(initial_state.theta, default=0.0) < 0:
        raise ConfigurationError("initial state must be finite and non-negative")
    if store_trace is None:
        store_trace = T <= FULL_TRACE_LIMIT
    every = checkpoint_every or max(1, -(-T // 1000))

    A, Bs, Y, n_act = model.tables()
    if isinstance(controller, DppConfig):
        kind = _kernel.KIND_DPP
        w = np.array(controller.weight_vector(K, M), dtype=float)
        pol_idx = np.zeros((1, 1), dtype=np.int64)
        pol_cum = np.ones((1, 1))
        V, C = controller.V, controller.C
    elif isinstance(controller, OmegaOnlyPolicy):
        kind = _kernel.KIND_POLICY
        w = np.ones(K + M)
        pol_idx, pol_cum = controller.tables(model)
        V, C = 0.0, 0.0
    else:
        raise ConfigurationError(f"unsupported controller {controller!r}")

    Q = np.array(initial_state.Q, dtype=float)
    Z = np.array(initial_state.Z, dtype=float).reshape(M)
    sums, comps, batch, ck_n, ck_Q, ck_Z, ck_sums, ck_count = _empty_accumulators(model, T, every)
    if store_trace:
        rec_omega = np.empty(T, dtype=np.int64)
        rec_action = np.empty(T, dtype=np.int64)
        rec_Q = np.empty((T, K))
        rec_Z = np.empty((T, M))
    else:
        rec_omega = None
        rec_action = np.empty(1, dtype=np.int64)
        rec_Q = np.empty((1, K))
        rec_Z = np.empty((1, M))

    rng = make_rng(seed)
    for start in range(0, T, CHUNK):
        n = min(CHUNK, T - start)
        u_omega = rng.random(n)
        u_act = rng.random(n)
        oidx = omega_indices(model, u_omega).astype(np.int64)
        if store_trace:
            rec_omega[start:start + n] = oidx
        _kernel.run_chunk(
            start, T, oidx, u_act,
            A, Bs, Y, n_act,
            kind, V, C, w, pol_idx, pol_cum,
            Q, Z, sums, comps, batch, N_BATCHES,
            store_trace, rec_action, rec_Q, rec_Z,
            every, ck_n, ck_Q, ck_Z, ck_sums, ck_count,
        )

    final = SystemState(tuple(Q.tolist()), tuple(Z.tolist()), T)
    checkpoints = Checkpoints(every=every, n=ck_n, Q=ck_Q, Z=ck_Z, sums=ck_sums)
    return Trace(
        model, controller, int(seed), initial_state, T, sums + comps, batch, checkpoints, final,
        rec_omega if store_trace else None,
        rec_action if store_trace else None,
        rec_Q if store_trace else None,
        rec_Z if store_trace else None,
    )


def derive_seed(root: int, index: int) -> int:
    """Independent child seed for run ``index`` of an experiment rooted at ``root``."""
    return int(np.random.SeedSequence([int(root), int(index)]).generate_state(1, np.uint64)[0])


def run_ensemble(
    model: NetworkModel,
    controller: Controller,
    T: int,
    seeds: Sequence[int],
    store_trace: bool | None = None,
    n_jobs: int = 1,
) -> list[Trace]:
    def one(seed: int) -> Trace:
        return run(model, controller, T, seed, store_trace=store_trace)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return list(pool.map(one, seeds))
    return [one(s) for s in seeds]


def sweep_V(
    model: NetworkModel,
    V_list: Sequence[float],
    T: int,
    seed: int,
    C: float = 0.0,
    weights: LyapunovWeights | None = None,
    common_random_numbers: bool = False,
    n_jobs: int = 1,
) -> list[RunSummary]:
    """One independent run per V, summaries returned in input order."""
    if len(V_list) == 0:
        raise ConfigurationError("V list is empty")
    configs = [DppConfig(V=v, C=C, weights=weights) for v in V_list]
    seeds = [seed if common_random_numbers else derive_seed(seed, i) for i in range(len(configs))]

    def one(i: int) -> RunSummary:
        return run(model, configs[i], T, seeds[i], store_trace=False).summary()

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return list(pool.map(one, range(len(configs))))
    return [one(i) for i in range(len(configs))]
