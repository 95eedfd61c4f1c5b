"""Desk-scale studies: router pruning economy, beam quality, beam size."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import EngineState
from .metrics import sweep
from .predictor import OracleRouter, build_chains, exhaustive_viable_set, predict_viable_set
from .scheduler import Request, beam_schedule, brute_force_schedule, greedy_schedule
from .workflow import ConfigSpace
from .workload import DEFAULT_MIX, generate_accuracy_table

FIGURES = ("pruning-reduction", "beam-quality", "beam-size")


def pruning_instances(n: int = 500, seed: int = 0, max_agents: int = 4, max_models: int = 3):
    """Random (space, table) pairs cycling through every (N, M) shape."""
    shapes = [(a, m) for a in range(1, max_agents + 1) for m in range(2, max_models + 1)]
    for i in range(n):
        n_agents, n_models = shapes[i % len(shapes)]
        space = ConfigSpace.of_size(n_agents, n_models)
        table = generate_accuracy_table(space, 1, DEFAULT_MIX, 0.0, seed=seed * 100003 + i)
        yield i, space, table


def pruning_study(n: int = 500, seed: int = 0) -> list[dict]:
    rows = []
    chains_for: dict = {}
    for i, space, table in pruning_instances(n, seed):
        key = (space.n, space.m)
        if key not in chains_for:
            chains_for[key] = build_chains(space)
        chains = chains_for[key]
        router = OracleRouter(table, latency=1.0)
        pred = predict_viable_set(0, space, router, None, chains=chains)
        full = exhaustive_viable_set(0, space, router)
        interior = any(0 < b < len(ch) - 1 for b, ch in zip(pred.boundaries, chains))
        rows.append({
            "instance": i,
            "agents": space.n,
            "models": space.m,
            "exhaustive_evals": full.evaluations,
            "pruned_evals": pred.evaluations,
            "reduction_pct": 100.0 * (1 - pred.evaluations / full.evaluations),
            "interior_boundary": int(interior),
            "match": int(pred.viable.configs == full.viable.configs),
        })
    return rows


def random_snapshot(rng: np.random.Generator, max_requests: int = 6, max_engines: int = 4,
                    max_slots: int = 4, n_agents: int = 3):
    """Random queue and engine state for comparing schedulers.

    Requests sit at random stages of a chain workflow with random viable
    sets; each engine has a random number of free slots.
    """
    n_eng = int(rng.integers(2, max_engines + 1))
    space = ConfigSpace.of_size(n_agents, n_eng)
    weights = sorted(rng.uniform(0.5, 4.0, size=n_eng), reverse=True)
    engines = []
    for m in range(n_eng):
        free = int(rng.integers(0, max_slots + 1))
        engines.append(EngineState.snapshot(m, max_slots, float(weights[m]), occupied=max_slots - free))
    configs = list(space)
    queue = []
    for rid in range(int(rng.integers(1, max_requests + 1))):
        k = int(rng.integers(1, min(12, len(configs))))
        picks = rng.choice(len(configs), size=k, replace=False)
        viable = {configs[j] for j in picks} | {space.top}
        stage = int(rng.integers(0, n_agents))
        chosen = sorted(viable)[int(rng.integers(len(viable)))]
        r = Request(rid, float(rid), space.graph, frozenset(viable))
        for a in range(stage):
            r.prefix[a] = chosen[a]
            r.completed.add(a)
        r.viable = frozenset(c for c in r.viable if all(c[a] == chosen[a] for a in range(stage)))
        queue.append(r)
    return queue, engines


def beam_quality_study(n: int = 1000, seed: int = 0, width: int = 4) -> list[dict]:
    rng = np.random.default_rng([seed, 0xBEA])
    rows = []
    for i in range(n):
        queue, engines = random_snapshot(rng)
        beam = beam_schedule(queue, engines, width)
        greedy = greedy_schedule(queue, engines)
        best = brute_force_schedule(queue, engines)
        rows.append({
            "snapshot": i,
            "requests": len(queue),
            "engines": len(engines),
            "beam_score": beam.utilization,
            "greedy_score": greedy.utilization,
            "brute_force_score": best.utilization,
        })
    return rows


def beam_size_study(scenario, widths: Sequence[int] = (1, 2, 4, 8), rates=None, seeds=None,
                    workers: int = 1) -> list[dict]:
    rows = []
    for b in widths:
        result = sweep(scenario.with_(beam_width=b), rates=rates, seeds=seeds, workers=workers)
        rows.append({"beam_width": b, "saturation_throughput": result.saturation})
    return rows


def write_rows(path, rows: list[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if not rows:
            return path
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return path


def figure_harness(name: str, out_dir=".", scenario=None, workers: int = 1) -> Path:
    """Run one study and write ``<out_dir>/<name>.csv``."""
    if name not in FIGURES:
        raise ValueError(f"unknown figure {name!r} (expected one of: {', '.join(FIGURES)})")
    if name == "pruning-reduction":
        rows = pruning_study()
    elif name == "beam-quality":
        rows = beam_quality_study()
    else:
        if scenario is None:
            from .scenario import load_scenario
            scenario = load_scenario("self_refine")
        rows = beam_size_study(scenario, workers=workers)
    return write_rows(Path(out_dir) / f"{name}.csv", rows)
