"""On-disk cache of oracle results keyed by scenario content hash."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from ..model import NetworkModel, scenario_hash
from .lp import PolicyLP, compute_epsilon_max, compute_y0_opt


def oracle_report(model: NetworkModel, grid: Sequence[float] = ()) -> dict:
    """epsilon_max, y0_opt and the y0_opt(eps) curve with optimal policies."""
    lp = PolicyLP.build(model)
    em = compute_epsilon_max(model, lp)
    points = [0.0, *sorted(set(float(e) for e in grid) - {0.0})]
    if em.feasible and em.value not in points:
        points.append(em.value)
    curve = [compute_y0_opt(model, e, lp).to_dict() for e in points]
    base = curve[0]
    return {
        "scenario": model.name,
        "scenario_hash": scenario_hash(model),
        "feasible": base["feasible"],
        "epsilon_max": em.value,
        "y0_opt": base["y0_opt"],
        "y0_opt_at_eps_max": compute_y0_opt(model, em.value, lp).value if em.feasible else None,
        "curve": curve,
    }


def cache_path(cache_dir: str | Path, model: NetworkModel) -> Path:
    return Path(cache_dir) / f"oracle-{scenario_hash(model)[:16]}.json"


def load_or_compute(model: NetworkModel, cache_dir: str | Path, grid: Sequence[float] = ()) -> dict:
    path = cache_path(cache_dir, model)
    if path.exists():
        cached = json.loads(path.read_text())
        have = {p["epsilon"] for p in cached.get("curve", [])}
        if cached.get("scenario_hash") == scenario_hash(model) and set(map(float, grid)) <= have:
            return cached
    report = oracle_report(model, grid)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2) + "\n")
    return report
