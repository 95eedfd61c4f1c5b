"""Scenario files: YAML documents describing one simulated deployment."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .baselines import PolicyKind
from .engine import LogNormal, ServiceTimeModel
from .scheduler import SchedulerParams
from .workflow import ConfigSpace, ModelCatalog, WorkflowError, WorkflowGraph, build_graph
from .workload import DEFAULT_MIX, DifficultyTier

SCENARIO_DIR = Path(__file__).parent / "scenarios"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class RouterConfig:
    backend: str = "oracle"
    latency: float = 0.002
    fp: float = 0.0
    fn: float = 0.0
    lanes: int = 1
    ema_alpha: float = 0.2
    min_budget: float | None = None  # None: one evaluation's latency
    chain_cap: int | None = None

    @property
    def minimum_budget(self) -> float:
        return self.latency if self.min_budget is None else self.min_budget


@dataclass(frozen=True)
class SimConfig:
    mode: str = "drain"  # or "horizon"
    horizon: float = math.inf
    occupancy_samples: bool = True


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: WorkflowGraph
    catalog: ModelCatalog
    slots: tuple[int, ...]
    service: ServiceTimeModel = field(compare=False)
    router: RouterConfig = RouterConfig()
    rate: float = 1.0
    count: int | None = 100
    duration: float | None = None
    mix: tuple[DifficultyTier, ...] = DEFAULT_MIX
    violation_rate: float = 0.0
    trace: Path | None = None
    scheduler: SchedulerParams = SchedulerParams()
    sim: SimConfig = SimConfig()
    policy: PolicyKind = PolicyKind.ARAGOG
    seed: int = 0
    rates: tuple[float, ...] = ()
    seeds: tuple[int, ...] = ()
    source: Path | None = field(default=None, compare=False)

    @property
    def space(self) -> ConfigSpace:
        return ConfigSpace(self.graph, self.catalog)

    def with_(self, **changes) -> "Scenario":
        sched = changes.pop("beam_width", None)
        out = dataclasses.replace(self, **changes)
        if sched is not None:
            out = dataclasses.replace(out, scheduler=dataclasses.replace(out.scheduler, beam_width=int(sched)))
        if "policy" in changes:
            out = dataclasses.replace(out, policy=PolicyKind.parse(changes["policy"]))
        return out


def _get(d: dict, key: str, kind, where: str, default=...):
    if key not in d:
        if default is ...:
            raise ScenarioError(f"{where}: missing required field {key!r}")
        return default
    v = d[key]
    try:
        if kind is float:
            v = float(v)
        elif kind is int:
            if isinstance(v, bool) or float(v) != int(v):
                raise ValueError
            v = int(v)
        elif kind is str:
            v = str(v)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}.{key}: expected {kind.__name__}, got {v!r}") from None
    return v


def _section(doc: dict, key: str) -> dict:
    v = doc.get(key, {}) or {}
    if not isinstance(v, dict):
        raise ScenarioError(f"{key}: expected a mapping")
    return v


def parse_scenario(doc: Any, source: Path | None = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping at top level")
    try:
        return _parse(doc, source)
    except WorkflowError as exc:
        raise ScenarioError(str(exc)) from exc


def _parse(doc: dict, source) -> Scenario:
    wf = _section(doc, "workflow")
    agents = wf.get("agents")
    if not isinstance(agents, list) or not agents:
        raise ScenarioError("workflow.agents: expected a nonempty list")
    edges = wf.get("edges", []) or []
    if not all(isinstance(e, (list, tuple)) and len(e) == 2 for e in edges):
        raise ScenarioError("workflow.edges: expected a list of [producer, consumer] pairs")
    graph = build_graph([str(a) for a in agents], edges)

    models = doc.get("models")
    if not isinstance(models, list) or len(models) < 2:
        raise ScenarioError("models: expected a list of at least 2 model entries")
    names, costs, weights, slots, dists = [], [], [], [], []
    for i, m in enumerate(models):
        where = f"models[{i}]"
        if not isinstance(m, dict):
            raise ScenarioError(f"{where}: expected a mapping")
        names.append(_get(m, "name", str, where))
        costs.append(_get(m, "cost", float, where))
        weights.append(_get(m, "weight", float, where))
        k = _get(m, "slots", int, where)
        if k < 1:
            raise ScenarioError(f"{where}.slots: must be at least 1")
        slots.append(k)
        svc = m.get("service")
        if not isinstance(svc, dict):
            raise ScenarioError(f"{where}.service: expected a mapping with mu/sigma/floor")
        dists.append(_lognormal(svc, f"{where}.service"))
    catalog = ModelCatalog(tuple(names), tuple(costs), tuple(weights))

    overrides = {}
    for key, svc in (_section(doc, "service_overrides")).items():
        agent, _, model = str(key).partition("@")
        if agent not in graph.agents or model not in names:
            raise ScenarioError(f"service_overrides: {key!r} must be 'agent@model' with declared names")
        overrides[(graph.index(agent), names.index(model))] = _lognormal(svc, f"service_overrides.{key}")
    service = ServiceTimeModel(dists, overrides)

    rt = _section(doc, "router")
    router = RouterConfig(
        backend=_get(rt, "backend", str, "router", "oracle"),
        latency=_get(rt, "latency", float, "router", 0.002),
        fp=_get(rt, "fp", float, "router", 0.0),
        fn=_get(rt, "fn", float, "router", 0.0),
        lanes=_get(rt, "lanes", int, "router", 1),
        ema_alpha=_get(rt, "ema_alpha", float, "router", 0.2),
        min_budget=_get(rt, "min_budget", float, "router", None) if rt.get("min_budget") is not None else None,
        chain_cap=_get(rt, "chain_cap", int, "router", None) if rt.get("chain_cap") is not None else None,
    )
    if router.backend not in ("oracle", "noisy"):
        raise ScenarioError("router.backend: expected 'oracle' or 'noisy'")
    if router.latency < 0 or router.lanes < 1:
        raise ScenarioError("router: latency must be >= 0 and lanes >= 1")
    if not (0 <= router.fp < 1 and 0 <= router.fn < 1):
        raise ScenarioError("router: fp and fn must lie in [0, 1)")
    if not 0 < router.ema_alpha <= 1:
        raise ScenarioError("router.ema_alpha: must lie in (0, 1]")

    arr = _section(doc, "arrivals")
    rate = _get(arr, "rate", float, "arrivals", 1.0)
    count = _get(arr, "count", int, "arrivals", None) if arr.get("count") is not None else None
    duration = _get(arr, "duration", float, "arrivals", None) if arr.get("duration") is not None else None
    if rate <= 0:
        raise ScenarioError("arrivals.rate: must be positive")

    wl = _section(doc, "workload")
    trace = wl.get("trace")
    if trace is not None:
        trace = Path(trace)
        if not trace.is_absolute() and source is not None:
            trace = Path(source).parent / trace
    elif count is None and duration is None:
        raise ScenarioError("arrivals: give a count or a duration (or a workload.trace)")
    mix = DEFAULT_MIX
    if "tiers" in wl:
        tiers = wl["tiers"]
        if not isinstance(tiers, list) or not tiers:
            raise ScenarioError("workload.tiers: expected a nonempty list")
        mix = tuple(_tier(t, f"workload.tiers[{i}]") for i, t in enumerate(tiers))
    violation = _get(wl, "violation_rate", float, "workload", 0.0)
    if not 0 <= violation <= 0.1:
        raise ScenarioError("workload.violation_rate: must lie in [0, 0.1]")

    sc = _section(doc, "scheduler")
    try:
        sched = SchedulerParams(
            beam_width=_get(sc, "beam_width", int, "scheduler", 4),
            brute_force_cap=_get(sc, "brute_force_cap", int, "scheduler", 10**6),
        )
    except ValueError as exc:
        raise ScenarioError(f"scheduler: {exc}") from None

    sm = _section(doc, "sim")
    mode = _get(sm, "mode", str, "sim", "drain")
    if mode not in ("drain", "horizon"):
        raise ScenarioError("sim.mode: expected 'drain' or 'horizon'")
    horizon = _get(sm, "horizon", float, "sim", math.inf)
    if mode == "horizon" and not (0 < horizon < math.inf):
        raise ScenarioError("sim.horizon: horizon mode needs a finite positive horizon")
    sim = SimConfig(mode, horizon, bool(sm.get("occupancy_samples", True)))

    sw = _section(doc, "sweep")
    rates = tuple(float(r) for r in sw.get("rates", []) or [])
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise ScenarioError("sweep.rates: must be strictly increasing")
    seeds = tuple(int(s) for s in sw.get("seeds", []) or [])

    try:
        policy = PolicyKind.parse(doc.get("policy", "aragog"))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    unknown = set(doc) - {"name", "workflow", "models", "service_overrides", "router", "arrivals",
                          "workload", "scheduler", "sim", "sweep", "policy", "seed", "description"}
    if unknown:
        raise ScenarioError(f"unknown top-level fields: {', '.join(sorted(unknown))}")

    name = str(doc.get("name", source.stem if source else "scenario"))
    if not name or not name.isprintable():
        raise ScenarioError(f"name: must be non-empty printable text, got {name!r}")

    return Scenario(
        name=name,
        graph=graph, catalog=catalog, slots=tuple(slots), service=service,
        router=router, rate=rate, count=count, duration=duration, mix=mix,
        violation_rate=violation, trace=trace, scheduler=sched, sim=sim,
        policy=policy, seed=_get(doc, "seed", int, "scenario", 0),
        rates=rates, seeds=seeds, source=source,
    )


def _lognormal(d: dict, where: str) -> LogNormal:
    mu = _get(d, "mu", float, where)
    sigma = _get(d, "sigma", float, where, 0.0)
    floor = _get(d, "floor", float, where, 0.0)
    if sigma < 0 or floor < 0:
        raise ScenarioError(f"{where}: sigma and floor must be nonnegative")
    return LogNormal(mu, sigma, floor)


def _tier(d, where) -> DifficultyTier:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    t = DifficultyTier(
        name=_get(d, "name", str, where),
        weight=_get(d, "weight", float, where, 1.0),
        base_prob=_get(d, "base_prob", float, where, 0.0),
        generators=_get(d, "generators", int, where, 0),
        level=_get(d, "level", float, where, 0.5),
    )
    if t.weight < 0 or not 0 <= t.base_prob <= 1 or not 0 <= t.level <= 1 or t.generators < 0:
        raise ScenarioError(f"{where}: weight >= 0, base_prob/level in [0, 1], generators >= 0")
    return t


def load_scenario(path) -> Scenario:
    """Load a scenario file; bare names resolve to the shipped scenarios."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        shipped = SCENARIO_DIR / f"{p.name}.yaml"
        if shipped.exists():
            p = shipped
    with open(p) as fh:  # OSError propagates to the caller
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{p}: not valid YAML ({exc})") from None
    return parse_scenario(doc, p)


def shipped_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))
