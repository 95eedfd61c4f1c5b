"""Run reports, sweeps and CSV serialization."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

from .baselines import PolicyKind
from .sim import RunTrace

PERCENTILES = (25, 50, 90, 95)


def nearest_rank(values: Sequence[float], p: float) -> float | None:
    """Nearest-rank percentile of ``values``; None when there are none."""
    if not values:
        return None
    xs = sorted(values)
    k = max(1, math.ceil(p / 100.0 * len(xs)))
    return xs[k - 1]


@dataclass
class RunReport:
    scenario: str
    policy: str
    rate: float
    seeds: str
    beam_width: int
    mode: str
    arrived: int
    completed: int
    makespan: float
    throughput: float
    offered_rate: float
    mean_latency: float | None
    p25: float | None
    p50: float | None
    p90: float | None
    p95: float | None
    served_accuracy: float | None
    router_share: float | None
    router_evals: int
    mean_router_evals: float | None
    mean_viable: float | None
    rounds: int
    fairness_violations: int

    def csv_row(self) -> dict:
        return {f.name: _fmt(getattr(self, f.name)) for f in fields(self)}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


_INT_FIELDS = {"beam_width", "arrived", "completed", "router_evals", "rounds", "fairness_violations"}
_STR_FIELDS = {"scenario", "policy", "seeds", "mode"}


def _parse(name: str, text: str):
    if name in _STR_FIELDS:
        return text
    if text == "":
        return None
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


def _mean(xs) -> float | None:
    xs = list(xs)
    return sum(xs) / len(xs) if xs else None


def summarize(traces: RunTrace | Sequence[RunTrace]) -> RunReport:
    """One report over one or more runs (pooled latencies, mean throughput)."""
    if isinstance(traces, RunTrace):
        traces = [traces]
    if not traces:
        raise ValueError("nothing to summarize")
    t0 = traces[0]
    done = [r for t in traces for r in t.completed()]
    lat = [r.latency for r in done]

    throughputs = []
    offered = []
    for t in traces:
        n_done = len(t.completed())
        if t.mode == "horizon":
            span = t.horizon
        else:
            span = max((r.completed for r in t.completed()), default=0.0)
        throughputs.append(n_done / span if span > 0 else 0.0)
        arrived = [r.arrival for r in t.requests]
        last = max(arrived, default=0.0)
        offered.append(len(arrived) / last if last > 0 else 0.0)
    spans = []
    for t in traces:
        spans.append(t.horizon if t.mode == "horizon" else max((r.completed for r in t.completed()), default=0.0))

    routed = [r for r in done if r.predict_start is not None]
    mean_lat = _mean(lat)
    router_share = None
    if done and mean_lat:
        router_share = sum(r.router_latency for r in done) / len(done) / mean_lat
    accurate = [r.accurate for r in done]

    return RunReport(
        scenario=t0.scenario,
        policy=t0.policy,
        rate=t0.rate,
        seeds=" ".join(str(t.seed) for t in traces),
        beam_width=t0.beam_width,
        mode=t0.mode,
        arrived=sum(len(t.requests) for t in traces),
        completed=len(done),
        makespan=_mean(spans),
        throughput=_mean(throughputs),
        offered_rate=_mean(offered),
        mean_latency=mean_lat,
        p25=nearest_rank(lat, 25),
        p50=nearest_rank(lat, 50),
        p90=nearest_rank(lat, 90),
        p95=nearest_rank(lat, 95),
        served_accuracy=(sum(accurate) / len(accurate)) if accurate else None,
        router_share=router_share,
        router_evals=sum(r.router_evals for t in traces for r in t.requests),
        mean_router_evals=_mean(r.router_evals for r in routed),
        mean_viable=_mean(r.viable_size for t in traces for r in t.requests if r.viable_size),
        rounds=sum(len(t.rounds) for t in traces),
        fairness_violations=sum(t.fairness_violations for t in traces),
    )


REPORT_FIELDS = [f.name for f in fields(RunReport)]


def reports_to_csv(reports: Iterable[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS)
    w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def reports_from_csv(text: str) -> list[RunReport]:
    rows = csv.DictReader(io.StringIO(text, newline=""))
    return [RunReport(**{k: _parse(k, v) for k, v in row.items()}) for row in rows]


@dataclass
class SweepResult:
    reports: list[RunReport] = field(default_factory=list)

    def __post_init__(self):
        rates = [r.rate for r in self.reports]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("sweep rates must be strictly increasing")

    @property
    def saturation(self) -> float:
        return max((r.throughput for r in self.reports), default=0.0)


# Parallel runs. Each (policy, rate, seed) job is independent and a pure
# function of its inputs, so results are gathered in job order whatever the
# pool size.

def _run_job(job) -> RunTrace:
    from .sim import run
    scenario, policy, rate, seed = job
    return run(scenario.with_(rate=rate), seed, policy)


def run_many(jobs: Sequence[tuple], workers: int = 1, processes: bool = False) -> list[RunTrace]:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    pool_cls = ProcessPoolExecutor if processes else ThreadPoolExecutor
    with pool_cls(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def _seeds(scenario, seeds) -> list[int]:
    if seeds:
        return [int(s) for s in seeds]
    return list(scenario.seeds) or [scenario.seed]


def _rates(scenario, rates) -> list[float]:
    if rates:
        return [float(r) for r in rates]
    return list(scenario.rates) or [scenario.rate]


def sweep(scenario, policy=None, rates=None, seeds=None, workers: int = 1,
          processes: bool = False) -> SweepResult:
    """Reports per rate, seeds pooled, for one policy."""
    policy = policy if policy is not None else scenario.policy
    rates = _rates(scenario, rates)
    seeds = _seeds(scenario, seeds)
    if not rates:
        raise ValueError("sweep needs at least one rate")
    jobs = [(scenario, policy, r, s) for r in rates for s in seeds]
    traces = run_many(jobs, workers, processes)
    k = len(seeds)
    return SweepResult([summarize(traces[i * k:(i + 1) * k]) for i in range(len(rates))])


@dataclass
class Comparison:
    sweeps: dict[str, SweepResult]

    @property
    def saturation(self) -> dict[str, float]:
        return {p: s.saturation for p, s in self.sweeps.items()}

    def ratio(self, a: str, b: str) -> float:
        sb = self.sweeps[b].saturation
        return self.sweeps[a].saturation / sb if sb > 0 else math.inf

    @property
    def ratios(self) -> dict[str, float]:
        a = PolicyKind.ARAGOG.value
        return {f"{a}/{p}": self.ratio(a, p) for p in self.sweeps if p != a and a in self.sweeps}

    def reports(self) -> list[RunReport]:
        return [r for s in self.sweeps.values() for r in s.reports]


def compare_policies(scenario, rates=None, seeds=None, policies=None, workers: int = 1,
                     processes: bool = False) -> Comparison:
    policies = [PolicyKind.parse(p) for p in (policies or list(PolicyKind))]
    rates = _rates(scenario, rates)
    seeds = _seeds(scenario, seeds)
    jobs = [(scenario, p, r, s) for p in policies for r in rates for s in seeds]
    traces = run_many(jobs, workers, processes)
    k = len(seeds)
    out, i = {}, 0
    for p in policies:
        reps = []
        for _ in rates:
            reps.append(summarize(traces[i:i + k]))
            i += k
        out[p.value] = SweepResult(reps)
    return Comparison(out)


def format_table(reports: Iterable[RunReport]) -> str:
    """Fixed-width human summary."""
    cols = ["policy", "rate", "throughput", "mean_latency", "p50", "p95",
            "served_accuracy", "router_share", "completed"]
    rows = [cols]
    for r in reports:
        row = []
        for name in cols:
            v = getattr(r, name)
            row.append("-" if v is None else f"{v:.4f}" if isinstance(v, float) else str(v))
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(cols))]
    return "\n".join("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
                     for row in rows)
