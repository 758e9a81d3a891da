"""Command-line entry point.

Exit status: 0 when every verdict passes, 1 when a bound, stability or
constraint check fails, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import diagnostics as diag
from .controller import DppConfig, OmegaOnlyPolicy
from .errors import ConfigurationError, DomainError
from .model import BUILTIN_SCENARIOS, NetworkModel, builtin_scenario, resolve_scenario, save_scenario, scenario_hash
from .oracle import OracleValues, compute_y0_opt, load_or_compute
from .simulator import FULL_TRACE_LIMIT, RunSummary, Trace, derive_seed, run

log = logging.getLogger("dppsim")

CONTROLLERS = ("dpp", "omega-only", "fixed-action")


@dataclass
class ExperimentConfig:
    scenario: str
    controller: str = "dpp"
    V: list[float] = field(default_factory=lambda: [1.0])
    C: float = 0.0
    T: int = 100_000
    seed: int = 1
    ensemble: int = 1
    out: str = "out"
    action: str | None = None
    epsilon: float = 0.0
    trace_csv: bool = False
    diagnostics: bool = True
    checkpoint_every: int | None = None
    n_se: float = 3.0
    threshold: float = diag.RATE_THRESHOLD
    common_random_numbers: bool = False

    def validate(self) -> NetworkModel:
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"controller: expected one of {CONTROLLERS}, got {self.controller!r}")
        if not self.V or any(not math.isfinite(v) or v < 0 for v in self.V):
            raise ConfigurationError(f"V: values must be finite and >= 0, got {self.V}")
        if not math.isfinite(self.C) or self.C < 0:
            raise ConfigurationError(f"C: must be >= 0, got {self.C}")
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigurationError(f"T: must be a positive integer, got {self.T!r}")
        if self.ensemble < 1:
            raise ConfigurationError("ensemble: must be >= 1")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ConfigurationError("checkpoint_every: must be >= 1")
        if self.controller == "fixed-action" and not self.action:
            raise ConfigurationError("action: required for the fixed-action controller")
        return resolve_scenario(self.scenario)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config fields {sorted(unknown)}")
        d = dict(d)
        if "V" in d and not isinstance(d["V"], list):
            d["V"] = [d["V"]]
        if "scenario" not in d:
            raise ConfigurationError("scenario: missing")
        return cls(**d)

    def seeds(self) -> list[int]:
        if self.ensemble == 1:
            return [self.seed]
        return [derive_seed(self.seed, j) for j in range(self.ensemble)]


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dppsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def experiment_flags(sp):
        sp.add_argument("--config", help="JSON experiment config; flags override its fields")
        sp.add_argument("--scenario", help="scenario JSON path or built-in name")
        sp.add_argument("--controller", choices=CONTROLLERS)
        sp.add_argument("--V", help="V value (comma-separated list for sweep)")
        sp.add_argument("--C", type=float)
        sp.add_argument("--T", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--ensemble", type=int, help="number of seeds")
        sp.add_argument("--out")
        sp.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
        sp.add_argument("--action", help="action id for the fixed-action controller")
        sp.add_argument("--epsilon", type=float, help="slack of the LP policy used by omega-only")
        sp.add_argument("--trace-csv", action="store_true", default=None, dest="trace_csv")
        sp.add_argument("--no-diagnostics", action="store_false", default=None, dest="diagnostics")
        sp.add_argument("--common-random-numbers", action="store_true", default=None, dest="common_random_numbers")

    experiment_flags(sub.add_parser("run", help="simulate one configuration"))
    experiment_flags(sub.add_parser("sweep", help="simulate a list of V values"))

    o = sub.add_parser("oracle", help="exact event-only policy optimum")
    o.add_argument("--scenario", required=True)
    o.add_argument("--eps-grid", default="", dest="eps_grid")
    o.add_argument("--out", default="out")

    v = sub.add_parser("verify", help="re-run diagnostics on a trace CSV")
    v.add_argument("--trace", required=True)
    v.add_argument("--scenario", required=True)
    v.add_argument("--out", default="out")

    f = sub.add_parser("fixtures", help="write the built-in scenario corpus")
    f.add_argument("--out", default="fixtures")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        path = Path(args.config)
        try:
            base = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"config: file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config: invalid JSON: {exc}") from None
    for name in (
        "scenario", "controller", "C", "T", "seed", "ensemble", "out", "checkpoint_every",
        "action", "epsilon", "trace_csv", "diagnostics", "common_random_numbers",
    ):
        val = getattr(args, name, None)
        if val is not None:
            base[name] = val
    if args.V is not None:
        base["V"] = _parse_floats(args.V)
    return ExperimentConfig.from_dict(base)


def _controller(cfg: ExperimentConfig, model: NetworkModel, V: float):
    if cfg.controller == "dpp":
        return DppConfig(V=V, C=cfg.C)
    if cfg.controller == "fixed-action":
        return OmegaOnlyPolicy.point_mass(model, cfg.action)
    sol = compute_y0_opt(model, cfg.epsilon)
    if not sol.feasible:
        raise ConfigurationError(f"epsilon: no event-only policy has slack {cfg.epsilon}")
    return sol.policy


def _oracle(model: NetworkModel, out: Path) -> OracleValues:
    rep = load_or_compute(model, out)
    return OracleValues(rep["y0_opt"], rep["epsilon_max"], rep["y0_opt_at_eps_max"])


def _write(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _diagnose(
    model: NetworkModel,
    traces: Sequence[Trace],
    summaries: Sequence[RunSummary],
    cfg: ExperimentConfig,
    out: Path,
    tag: str = "",
) -> tuple[bool, list[str]]:
    """Write stability, bound and constraint reports; return (all passed, text lines)."""
    ok = True
    lines = []
    prov = {"scenario": model.name, "scenario_hash": scenario_hash(model), "seeds": [s.seed for s in summaries]}
    if traces and all(t.has_records for t in traces):
        stab = diag.stability_metrics(traces, rate_threshold=cfg.threshold)
        _write(out / f"stability{tag}.json", {**prov, **stab.to_dict()})
        (out / f"stability{tag}.txt").write_text(stab.text() + "\n")
        stab.write_tail_csv(out / f"tail{tag}.csv")
        lines.append(stab.text())
        ok &= stab.passed
    else:
        ratios = [r for s in summaries for r in (*s.Q_ratio, *s.Z_ratio)]
        rate_ok = all(r <= cfg.threshold for r in ratios)
        lines.append(f"rate stability from summaries (<= {cfg.threshold:g}): {'PASS' if rate_ok else 'FAIL'}")
        ok &= rate_ok
    if cfg.controller == "dpp" and summaries[0].V is not None:
        ov = _oracle(model, out)
        if ov.feasible:
            rep = diag.verify_bounds(list(summaries), ov, y0_min=model.y0_min, n_se=cfg.n_se)
            _write(out / f"bounds{tag}.json", {**prov, **rep.to_dict()})
            (out / f"bounds{tag}.txt").write_text(rep.text() + "\n")
            lines.append(rep.text())
            ok &= rep.passed
        else:
            lines.append("bounds: scenario infeasible, caps not asserted")
            ok = False
    if model.M:
        verdicts = [v for s in summaries for v in diag.constraint_satisfaction(s, cfg.threshold)]
        _write(out / f"constraints{tag}.json", {**prov, "verdicts": [dataclasses.asdict(v) | {"passed": v.passed} for v in verdicts]})
        c_ok = all(v.passed for v in verdicts)
        lines.append(f"constraints Z_m(T)/T <= {cfg.threshold:g}: {'PASS' if c_ok else 'FAIL'}")
        ok &= c_ok
    return ok, lines


def cmd_run(cfg: ExperimentConfig) -> int:
    model = cfg.validate()
    if len(cfg.V) != 1 and cfg.controller == "dpp":
        raise ConfigurationError("V: run takes a single value; use sweep for lists")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    controller = _controller(cfg, model, cfg.V[0])
    store = cfg.trace_csv or (cfg.diagnostics and cfg.T <= FULL_TRACE_LIMIT)
    traces = [
        run(model, controller, cfg.T, s, store_trace=store, checkpoint_every=cfg.checkpoint_every)
        for s in cfg.seeds()
    ]
    summaries = [t.summary() for t in traces]
    _write(
        out / "summary.json",
        {
            "scenario": model.name,
            "scenario_hash": scenario_hash(model),
            "config": cfg.to_dict(),
            "runs": [s.to_dict() for s in summaries],
        },
    )
    if cfg.trace_csv:
        for t in traces:
            t.to_csv(out / f"trace-{t.seed}.csv")
    ok = True
    if cfg.diagnostics:
        ok, lines = _diagnose(model, traces, summaries, cfg, out)
        print("\n".join(lines))
    for s in summaries:
        print(f"seed {s.seed}: y_bar={list(s.y_bar)} backlog_bar={s.backlog_bar:.6g}")
    return 0 if ok else 1


def cmd_sweep(cfg: ExperimentConfig) -> int:
    model = cfg.validate()
    if cfg.controller != "dpp":
        raise ConfigurationError("controller: sweep requires the dpp controller")
    Vs = list(dict.fromkeys(cfg.V))
    if len(Vs) < len(cfg.V):
        log.warning("duplicate V values removed: %s -> %s", cfg.V, Vs)
    if len(Vs) < 2:
        raise ConfigurationError("V: sweep needs at least two distinct values")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ov = _oracle(model, out)
    rows, all_ok, per_v = [], True, []
    for i, V in enumerate(Vs):
        if cfg.common_random_numbers:
            seeds = cfg.seeds()
        else:
            seeds = [derive_seed(cfg.seed, i * cfg.ensemble + j) for j in range(cfg.ensemble)]
        sums = [
            run(model, DppConfig(V=V, C=cfg.C), cfg.T, s, store_trace=False, checkpoint_every=cfg.checkpoint_every).summary()
            for s in seeds
        ]
        per_v.append({"V": V, "runs": [s.to_dict() for s in sums]})
        ok = True
        row = {"V": V, "y0_bar": math.fsum(s.y_bar[0] for s in sums) / len(sums),
               "backlog_bar": math.fsum(s.backlog_bar for s in sums) / len(sums)}
        if ov.feasible:
            rep = diag.verify_bounds(sums, ov, y0_min=model.y0_min, n_se=cfg.n_se)
            row.update(
                gap=rep.penalty_gap,
                gap_cap=None if V == 0 else (rep.B + rep.C) / V,
                backlog_cap=rep.backlog_cap,
                sharper_backlog_cap=rep.sharper_backlog_cap,
                passed=rep.passed,
            )
            ok = rep.passed
        if model.M:
            ok &= all(v.passed for s in sums for v in diag.constraint_satisfaction(s, cfg.threshold))
        all_ok &= ok
        rows.append(row)
    fields = ["V", "y0_bar", "gap", "gap_cap", "backlog_bar", "backlog_cap", "sharper_backlog_cap", "passed"]
    with (out / "sweep.csv").open("w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        wr.writeheader()
        wr.writerows(rows)
    _write(
        out / "sweep.json",
        {"scenario": model.name, "scenario_hash": scenario_hash(model), "seed": cfg.seed,
         "config": cfg.to_dict(), "table": rows, "runs": per_v},
    )
    for r in rows:
        print("  ".join(f"{k}={r.get(k)}" for k in fields))
    return 0 if all_ok else 1


def cmd_oracle(scenario: str, grid: list[float], out: str) -> int:
    model = resolve_scenario(scenario)
    if any(e < 0 for e in grid):
        raise ConfigurationError("eps-grid: values must be >= 0")
    rep = load_or_compute(model, out, grid)
    print(json.dumps(rep, indent=2))
    if not rep["feasible"]:
        print("infeasible", file=sys.stderr)
    return 0


def cmd_verify(trace_path: str, scenario: str, out: str) -> int:
    model = resolve_scenario(scenario)
    if not Path(trace_path).exists():
        raise ConfigurationError(f"trace: file not found: {trace_path}")
    trace = Trace.from_csv(trace_path, model)
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    is_dpp = isinstance(trace.controller, DppConfig)
    cfg = ExperimentConfig(scenario=scenario, controller="dpp" if is_dpp else "omega-only", T=trace.T, out=out)
    ok, lines = _diagnose(model, [trace], [trace.summary()], cfg, outp)
    if trace.T >= 1000:
        mom = diag.moment_checks(trace)
        _write(outp / "moments.json", dataclasses.asdict(mom) | {"passed": mom.passed})
        lines.append(f"moments: {'PASS' if mom.passed else 'FAIL'}")
        ok &= mom.passed
    print("\n".join(lines))
    return 0 if ok else 1


def cmd_fixtures(out: str) -> int:
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    golden = {}
    for name in BUILTIN_SCENARIOS:
        model = builtin_scenario(name)
        save_scenario(model, outp / f"{name}.json")
        rep = load_or_compute(model, outp / "oracle")
        golden[name] = {k: rep[k] for k in ("scenario_hash", "y0_opt", "epsilon_max", "y0_opt_at_eps_max")}
    _write(outp / "golden.json", golden)
    print(f"wrote {len(golden)} scenarios to {outp}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(config_from_args(args))
        if args.command == "sweep":
            return cmd_sweep(config_from_args(args))
        if args.command == "oracle":
            return cmd_oracle(args.scenario, _parse_floats(args.eps_grid), args.out)
        if args.command == "verify":
            return cmd_verify(args.trace, args.scenario, args.out)
        return cmd_fixtures(args.out)
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
