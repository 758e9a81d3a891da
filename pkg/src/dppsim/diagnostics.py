"""Sample-path verdicts on traces: stability, performance bounds, moments, LLN checks."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .controller import DppConfig, compute_B, select_action_dpp
from .dynamics import LyapunovWeights, SystemState, lyapunov_value
from .errors import DomainError
from .model import NetworkModel, estimate_moment_bounds, evaluate
from .oracle.lp import OracleValues, compute_y0_opt, oracle_values
from .simulator import RunSummary, Trace, pooled_se

RATE_THRESHOLD = 1e-2
CONSTRAINT_THRESHOLD = 1e-2
ENSEMBLE_SEEDS = 32


def time_average(series: Sequence[float] | np.ndarray, t: int | None = None) -> float:
    """(1/t) * sum of the first ``t`` entries, correctly rounded."""
    x = np.asarray(series, dtype=float).ravel()
    if t is None:
        t = x.size
    if t < 1 or t > x.size:
        raise DomainError(f"t={t} outside 1..{x.size}")
    return math.fsum(x[:t].tolist()) / t


def _tail_fractions(x: np.ndarray, q_grid: np.ndarray) -> np.ndarray:
    s = np.sort(np.abs(x))
    return (s.size - np.searchsorted(s, q_grid, side="right")) / s.size


def _write_csv(path: str | Path, columns: dict[str, Sequence[float]]) -> None:
    names = list(columns)
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(names)
        for row in zip(*(columns[n] for n in names)):
            wr.writerow([repr(float(v)) for v in row])


# -- stability -------------------------------------------------------------


@dataclass
class StabilityReport:
    """Per-queue stability metrics; virtual queues are listed after actual ones.

    ``time_avg`` (strong stability, sample path), ``tail`` (fraction of slots
    above each q in ``q_grid``) and ``terminal_ratio`` (|Q(T)|/T) are means
    over the supplied traces; the ``ens_*`` fields are the expectation-form
    analogues computed across seeds at matched slots.
    """

    labels: list[str]
    T: int
    n_seeds: int
    time_avg: list[float]
    terminal_ratio: list[float]
    q_grid: list[float]
    tail: list[list[float]]
    backlog_time_avg: float
    horizons: dict[int, dict[str, list[float]]] = field(default_factory=dict)
    per_seed_time_avg: list[list[float]] = field(default_factory=list)
    ens_time_avg: list[float] | None = None
    ens_tail: list[list[float]] | None = None
    ens_terminal_ratio: list[float] | None = None
    rate_threshold: float = RATE_THRESHOLD

    @property
    def rate_stable(self) -> bool:
        return all(r <= self.rate_threshold for r in self.terminal_ratio)

    @property
    def passed(self) -> bool:
        return self.rate_stable

    def tail_at(self, queue: int, q: float) -> float:
        """Tail fraction of queue ``queue`` at the grid point equal to ``q``."""
        j = int(np.argmin(np.abs(np.asarray(self.q_grid) - q)))
        return self.tail[queue][j]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["horizons"] = {str(k): v for k, v in self.horizons.items()}
        d["rate_stable"] = self.rate_stable
        return d

    def text(self) -> str:
        lines = [f"stability over T={self.T} ({self.n_seeds} seed(s)); backlog avg {self.backlog_time_avg:.6g}"]
        for i, lab in enumerate(self.labels):
            lines.append(
                f"  {lab}: time-avg {self.time_avg[i]:.6g}  |X(T)|/T {self.terminal_ratio[i]:.3g}"
                + (f"  ens-avg {self.ens_time_avg[i]:.6g}" if self.ens_time_avg else "")
            )
        lines.append(f"  rate stable (<= {self.rate_threshold:g}): {'PASS' if self.rate_stable else 'FAIL'}")
        return "\n".join(lines)

    def write_tail_csv(self, path: str | Path) -> None:
        cols = {"q": self.q_grid}
        for lab, curve in zip(self.labels, self.tail):
            cols[lab] = curve
        _write_csv(path, cols)


def _queue_paths(trace: Trace) -> tuple[list[str], np.ndarray]:
    """Labels and an array of shape (T+1, K+M) holding Q(0..T) and Z(0..T)."""
    K, M = trace.model.K, trace.model.M
    labels = [f"Q_{k}" for k in range(1, K + 1)] + [f"Z_{m}" for m in range(1, M + 1)]
    return labels, np.hstack([trace.Q_path, trace.Z_path])


def _paths_from(traces) -> tuple[list[str], np.ndarray, list[float]]:
    """Labels, paths of shape (seeds, T+1, n) and per-seed time-average backlog."""
    if isinstance(traces, np.ndarray):
        paths = np.asarray(traces, dtype=float)
        if paths.ndim == 1:
            paths = paths[None, :, None]
        elif paths.ndim == 2:
            paths = paths[None]
        if paths.ndim != 3 or paths.shape[1] < 2:
            raise DomainError("queue paths need shape (T+1,), (T+1, n) or (seeds, T+1, n) with T >= 1")
        T = paths.shape[1] - 1
        labels = [f"X_{i}" for i in range(1, paths.shape[2] + 1)]
        backlog = [time_average(np.abs(p[:T]).sum(axis=1)) for p in paths]
        return labels, paths, backlog
    if isinstance(traces, Trace):
        traces = [traces]
    traces = list(traces)
    if not traces:
        raise DomainError("no traces supplied")
    T = traces[0].T
    if any(tr.T != T for tr in traces):
        raise DomainError("ensemble traces must share the horizon")
    labels, _ = _queue_paths(traces[0])
    paths = np.stack([_queue_paths(tr)[1] for tr in traces])
    return labels, paths, [tr.running_sum("backlog") / T for tr in traces]


def stability_metrics(
    traces: Trace | Sequence[Trace] | np.ndarray,
    q_grid: Sequence[float] | None = None,
    rate_threshold: float = RATE_THRESHOLD,
) -> StabilityReport:
    """Stability metrics from traces, or from raw queue paths X(0..T)."""
    labels, paths, backlog = _paths_from(traces)
    n_seeds, T = paths.shape[0], paths.shape[1] - 1
    n = paths.shape[2]
    body = np.abs(paths[:, :T, :])
    if q_grid is None:
        top = float(body.max()) if body.size else 0.0
        q_grid = np.linspace(0.0, top, 51)
    q_grid = np.asarray(sorted(set(float(q) for q in q_grid)))

    per_seed = [[time_average(body[s, :, i]) for i in range(n)] for s in range(n_seeds)]
    time_avg = [math.fsum(p[i] for p in per_seed) / n_seeds for i in range(n)]
    ratios = np.abs(paths[:, T, :]) / T
    tail = [
        np.mean([_tail_fractions(body[s, :, i], q_grid) for s in range(n_seeds)], axis=0).tolist()
        for i in range(n)
    ]
    horizons = {}
    for h in sorted({max(1, T // 10), max(1, T // 2), T}):
        horizons[h] = {
            "time_avg": [float(body[:, :h, i].mean()) for i in range(n)],
            "ratio": [float(np.abs(paths[:, h, i]).mean() / h) for i in range(n)],
        }
    report = StabilityReport(
        labels=labels,
        T=T,
        n_seeds=n_seeds,
        time_avg=time_avg,
        terminal_ratio=ratios.mean(axis=0).tolist(),
        q_grid=q_grid.tolist(),
        tail=tail,
        backlog_time_avg=math.fsum(backlog) / len(backlog),
        horizons=horizons,
        per_seed_time_avg=per_seed,
        rate_threshold=rate_threshold,
    )
    if n_seeds > 1:
        mean_path = body.mean(axis=0)  # E|Q(t)| estimated across seeds, per slot
        report.ens_time_avg = [time_average(mean_path[:, i]) for i in range(n)]
        report.ens_tail = [
            [float((body[:, :, i] > q).mean(axis=0).mean()) for q in q_grid] for i in range(n)
        ]
        report.ens_terminal_ratio = (np.abs(paths[:, T, :]).mean(axis=0) / T).tolist()
    return report


# -- performance bounds -----------------------------------------------------


@dataclass
class BoundReport:
    V: float
    B: float
    C: float
    y0_opt: float | None
    epsilon_max: float | None
    y0_opt_at_eps_max: float | None
    y0_min: float
    y0_bar: float
    penalty_cap: float | None
    penalty_tolerance: float
    backlog_bar: float
    backlog_cap: float | None
    sharper_backlog_cap: float | None
    backlog_tolerance: float

    @property
    def penalty_gap(self) -> float | None:
        return None if self.y0_opt is None else self.y0_bar - self.y0_opt

    @property
    def penalty_pass(self) -> bool | None:
        if self.penalty_cap is None:
            return None
        return self.y0_bar <= self.penalty_cap + self.penalty_tolerance

    @property
    def backlog_pass(self) -> bool | None:
        if self.backlog_cap is None:
            return None
        return self.backlog_bar <= self.backlog_cap + self.backlog_tolerance

    @property
    def sharper_pass(self) -> bool | None:
        if self.sharper_backlog_cap is None:
            return None
        return self.backlog_bar <= self.sharper_backlog_cap + self.backlog_tolerance

    @property
    def passed(self) -> bool:
        return all(v is not False for v in (self.penalty_pass, self.backlog_pass, self.sharper_pass))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(
            penalty_gap=self.penalty_gap,
            penalty_pass=self.penalty_pass,
            backlog_pass=self.backlog_pass,
            sharper_pass=self.sharper_pass,
            passed=self.passed,
        )
        return d

    def text(self) -> str:
        def verdict(v):
            return "n/a" if v is None else ("PASS" if v else "FAIL")

        pc = "not asserted" if self.penalty_cap is None else f"{self.penalty_cap:.6g} (+{self.penalty_tolerance:.3g})"
        bc = "n/a" if self.backlog_cap is None else f"{self.backlog_cap:.6g} (+{self.backlog_tolerance:.3g})"
        sc = "n/a" if self.sharper_backlog_cap is None else f"{self.sharper_backlog_cap:.6g}"
        return "\n".join(
            [
                f"bounds at V={self.V:g}, B={self.B:g}, C={self.C:g}",
                f"  penalty  y0_bar={self.y0_bar:.6g}  cap={pc}  {verdict(self.penalty_pass)}",
                f"  backlog  avg={self.backlog_bar:.6g}  cap={bc}  {verdict(self.backlog_pass)}",
                f"  backlog  sharper cap={sc}  {verdict(self.sharper_pass)}",
            ]
        )


def verify_bounds(
    summary: RunSummary | Sequence[RunSummary],
    oracle: OracleValues,
    B: float | None = None,
    C: float | None = None,
    y0_min: float = 0.0,
    penalty_tolerance: float | None = None,
    backlog_tolerance: float | None = None,
    n_se: float = 3.0,
) -> BoundReport:
    """Compare empirical time averages with the drift-plus-penalty guarantees.

    Several summaries (same V, different seeds) are averaged; tolerances
    default to ``n_se`` pooled batch-means standard errors.
    """
    runs = [summary] if isinstance(summary, RunSummary) else list(summary)
    if not runs:
        raise DomainError("no summaries supplied")
    if oracle is None or not oracle.feasible:
        raise DomainError("oracle values are missing or the scenario is infeasible")
    V = runs[0].V
    if V is None or any(r.V != V for r in runs):
        raise DomainError("summaries must come from drift-plus-penalty runs with one V")
    B = runs[0].B if B is None else B
    C = runs[0].C if C is None else C
    y0_bar = math.fsum(r.y_bar[0] for r in runs) / len(runs)
    backlog_bar = math.fsum(r.backlog_bar for r in runs) / len(runs)
    if penalty_tolerance is None:
        penalty_tolerance = n_se * pooled_se(runs, "y0_batch_means")
    if backlog_tolerance is None:
        backlog_tolerance = n_se * pooled_se(runs, "backlog_batch_means")

    penalty_cap = oracle.y0_opt + (B + C) / V if V > 0 else None
    eps = oracle.epsilon_max
    backlog_cap = sharper = None
    if eps is not None and eps > 0:
        backlog_cap = (B + C + V * (oracle.y0_opt_at_eps_max - y0_min)) / eps
        sharper = (B + C + V * (oracle.y0_opt_at_eps_max - y0_bar)) / eps
    return BoundReport(
        V=V,
        B=B,
        C=C,
        y0_opt=oracle.y0_opt,
        epsilon_max=eps,
        y0_opt_at_eps_max=oracle.y0_opt_at_eps_max,
        y0_min=y0_min,
        y0_bar=y0_bar,
        penalty_cap=penalty_cap,
        penalty_tolerance=penalty_tolerance,
        backlog_bar=backlog_bar,
        backlog_cap=backlog_cap,
        sharper_backlog_cap=sharper,
        backlog_tolerance=backlog_tolerance,
    )


# -- constraints and moments ----------------------------------------------------


@dataclass(frozen=True)
class ConstraintVerdict:
    m: int
    z_ratio: float
    y_bar: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.z_ratio <= self.threshold


def constraint_satisfaction(
    run: Trace | RunSummary, threshold: float = CONSTRAINT_THRESHOLD
) -> list[ConstraintVerdict]:
    s = run.summary() if isinstance(run, Trace) else run
    return [
        ConstraintVerdict(m + 1, s.Z_ratio[m], s.y_bar[m + 1], threshold) for m in range(len(s.Z_ratio))
    ]


@dataclass(frozen=True)
class MomentReport:
    max_dq4: tuple[float, ...]
    mean_dq4: tuple[float, ...]
    max_y0_sq: float
    mean_y0_sq: float
    pointwise_dq4: tuple[float, ...]
    pointwise_y0_sq: float
    expected_dq4_bound: tuple[float, ...]
    expected_y0_sq_bound: float

    @property
    def passed(self) -> bool:
        return all(m <= b for m, b in zip(self.max_dq4, self.pointwise_dq4)) and (
            self.max_y0_sq <= self.pointwise_y0_sq
        )


def moment_checks(trace: Trace) -> MomentReport:
    """Empirical fourth moments of queue changes and second moments of y0.

    Pointwise caps use |Q(t+1) - Q(t)| <= max(a, b); the expectation caps are
    E[a^4] + E[b^4] and E[y0^2] maximized over decision rules.
    """
    if trace.T < 1000:
        raise DomainError("moment checks need at least 1000 slots")
    model = trace.model
    dq4 = np.diff(trace.Q_path, axis=0) ** 4
    y0 = trace.y[:, 0] ** 2
    grid = [o for *_, o in model.pairs()]
    mb = estimate_moment_bounds(model)
    return MomentReport(
        max_dq4=tuple(dq4.max(axis=0).tolist()),
        mean_dq4=tuple(time_average(dq4[:, k]) for k in range(model.K)),
        max_y0_sq=float(y0.max()),
        mean_y0_sq=time_average(y0),
        pointwise_dq4=tuple(max(max(o.a[k], o.b[k]) ** 4 for o in grid) for k in range(model.K)),
        pointwise_y0_sq=max(o.y[0] ** 2 for o in grid),
        expected_dq4_bound=tuple(a + b for a, b in zip(mb.a4, mb.b4)),
        expected_y0_sq_bound=mb.y0_sq,
    )


# -- strong law ------------------------------------------------------------------


@dataclass
class LlnVerdict:
    N: int
    mean: float
    bound: float
    tolerance: float
    mean_zero: bool
    checkpoints: list[int] = field(repr=False)
    partial_means: list[float] = field(repr=False)

    @property
    def margin(self) -> float:
        """Distance inside the bound before the tolerance is applied."""
        return -abs(self.mean) if self.mean_zero else self.bound - self.mean

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tolerance

    def write_csv(self, path: str | Path) -> None:
        _write_csv(path, {"t": self.checkpoints, "partial_mean": self.partial_means})


def lln_check(
    source: Iterable[float] | np.ndarray | Callable[[int], Sequence[float]],
    N: int,
    bound: float = 0.0,
    tolerance: float | None = None,
    mean_zero: bool = False,
    n_points: int = 1000,
) -> LlnVerdict:
    """Check the running mean of a martingale-difference (or conditionally
    bounded) series against its limit.

    With ``mean_zero`` the verdict is |mean| <= tolerance; otherwise
    mean <= bound + tolerance.  The default tolerance is five standard errors.
    """
    if N < 1000:
        raise DomainError("lln_check needs N >= 1000")
    if callable(source):
        x = np.asarray(source(N), dtype=float)
    elif isinstance(source, np.ndarray):
        x = source.astype(float)
    else:
        x = np.fromiter(source, dtype=float, count=N)
    x = x[:N]
    if x.size < N:
        raise DomainError(f"source produced {x.size} values, need {N}")
    mean = math.fsum(x.tolist()) / N
    if tolerance is None:
        tolerance = 5.0 * float(np.std(x)) / math.sqrt(N)
    pts = np.unique(np.geomspace(1, N, num=min(n_points, N)).astype(np.int64))
    csum = np.cumsum(x)
    return LlnVerdict(
        N=N,
        mean=mean,
        bound=bound,
        tolerance=tolerance,
        mean_zero=mean_zero,
        checkpoints=pts.tolist(),
        partial_means=(csum[pts - 1] / pts).tolist(),
    )


# -- sparse subsequence ---------------------------------------------------------


def sparse_times(delta: float, horizon: int) -> np.ndarray:
    """Sample times ceil(n^(1+delta)) for n = 1, 2, ... not exceeding ``horizon``."""
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    out = []
    n = 1
    while True:
        x = n ** (1.0 + delta)
        r = round(x)
        t = r if abs(x - r) <= 1e-9 * x else math.ceil(x)
        if t > horizon:
            break
        out.append(t)
        n += 1
    return np.asarray(out, dtype=np.int64)


@dataclass
class SparseRateVerdict:
    delta: float
    times: list[int]
    ratios: list[float]
    threshold: float

    @property
    def final_ratio(self) -> float:
        return self.ratios[-1]

    @property
    def passed(self) -> bool:
        return self.final_ratio <= self.threshold

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.ratios, self.ratios[1:]))


def sparse_rate_check(
    series: Trace | Sequence[float] | np.ndarray, delta: float, threshold: float = RATE_THRESHOLD
) -> SparseRateVerdict | list[SparseRateVerdict]:
    """|X(t_n)|/t_n along t_n = ceil(n^(1+delta)); ``series[t]`` is X(t), t = 0..T.

    A trace yields one verdict per queue (actual then virtual).
    """
    if isinstance(series, Trace):
        _, paths = _queue_paths(series)
        return [sparse_rate_check(paths[:, i], delta, threshold) for i in range(paths.shape[1])]
    x = np.asarray(series, dtype=float)
    times = sparse_times(delta, x.size - 1)
    return SparseRateVerdict(delta, times.tolist(), (np.abs(x[times]) / times).tolist(), threshold)


# -- conditional drift -------------------------------------------------------------


@dataclass
class DriftCheck:
    epsilon: float
    y0_opt_eps: float
    B: float
    C: float
    V: float
    lhs: list[float] = field(repr=False)
    rhs: list[float] = field(repr=False)
    tolerance: float = 1e-9

    @property
    def slack(self) -> np.ndarray:
        return np.asarray(self.rhs) - np.asarray(self.lhs)

    @property
    def violations(self) -> int:
        scale = np.maximum(1.0, np.abs(self.rhs))
        return int((self.slack < -self.tolerance * scale).sum())

    @property
    def passed(self) -> bool:
        return self.violations == 0


def expected_drift_plus_penalty(model: NetworkModel, config: DppConfig, state: SystemState) -> float:
    """E[L(Theta(t+1)) - L(Theta(t)) + V*y0(t) | Theta(t)] under the DPP rule, by enumeration."""
    w = LyapunovWeights(config.weight_vector(model.K, model.M))
    L0 = lyapunov_value(state, w)
    terms = []
    for s, p in model.omega_space:
        act = select_action_dpp(model, s, state, config)
        out = evaluate(model, act, s)
        nxt = state.step(out.a, out.b, out.y)
        terms.append(p * (lyapunov_value(nxt, w) - L0 + config.V * out.y[0]))
    return math.fsum(terms)


def dpp_condition_check(
    model: NetworkModel,
    config: DppConfig,
    states: Sequence[SystemState],
    epsilon: float | None = None,
    y0_opt_eps: float | None = None,
    B: float | None = None,
) -> DriftCheck:
    """Verify E[delta + V*y0 | Theta] <= B + C + V*y0_opt(eps) - eps * sum_i w_i theta_i.

    ``epsilon`` defaults to the largest feasible slack.  With ``epsilon = 0``
    and ``V = 0`` this is the plain bounded-drift condition E[delta] <= B + C.
    """
    if epsilon is None:
        ov = oracle_values(model)
        if ov.epsilon_max is None:
            raise DomainError("scenario admits no feasible event-only policy")
        epsilon, y0_opt_eps = ov.epsilon_max, ov.y0_opt_at_eps_max
    if y0_opt_eps is None:
        y0_opt_eps = compute_y0_opt(model, epsilon).value
    if y0_opt_eps is None:
        raise DomainError(f"epsilon={epsilon} is not feasible for this scenario")
    w = config.weight_vector(model.K, model.M)
    if B is None:
        B = compute_B(model, config.weights)
    lhs, rhs = [], []
    for st in states:
        lhs.append(expected_drift_plus_penalty(model, config, st))
        weighted = math.fsum(wi * abs(x) for wi, x in zip(w, st.theta))
        rhs.append(B + config.C + config.V * y0_opt_eps - epsilon * weighted)
    return DriftCheck(epsilon, y0_opt_eps, B, config.C, config.V, lhs, rhs)


def sample_states(model: NetworkModel, n: int, rng: np.random.Generator, scale: float = 50.0) -> list[SystemState]:
    """Random non-negative states spanning several magnitudes, some with empty queues."""
    out = []
    for _ in range(n):
        mag = scale * 10.0 ** rng.uniform(-2, 1)
        theta = rng.uniform(0, mag, size=model.K + model.M)
        theta[rng.random(theta.size) < 0.2] = 0.0
        out.append(SystemState(tuple(theta[: model.K]), tuple(theta[model.K:]), 0))
    return out
