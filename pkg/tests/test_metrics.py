import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jitroute.metrics import (
    REPORT_FIELDS, RunReport, SweepResult, compare_policies, format_table, nearest_rank,
    reports_from_csv, reports_to_csv, run_many, summarize, sweep,
)
from jitroute.scenario import load_scenario, parse_scenario
from jitroute.sim import run

TINY = {
    "name": "tiny",
    "workflow": {"agents": ["a", "b"], "edges": [["a", "b"]]},
    "models": [
        {"name": "s", "cost": 1, "weight": 2, "slots": 3, "service": {"mu": -0.5, "sigma": 0.3}},
        {"name": "l", "cost": 4, "weight": 1, "slots": 2, "service": {"mu": 0.0, "sigma": 0.3}},
    ],
    "router": {"latency": 0.005, "min_budget": 0.05},
    "arrivals": {"rate": 1.0, "count": 40},
}


def tiny(**changes):
    d = copy.deepcopy(TINY)
    d.update(changes)
    return parse_scenario(d)


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=200),
       st.sampled_from([1, 25, 50, 90, 95, 99, 100]))
def test_nearest_rank_matches_inverted_cdf(xs, p):
    assert nearest_rank(xs, p) == float(np.percentile(xs, p, method="inverted_cdf"))


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=200))
def test_percentiles_nondecreasing(xs):
    ps = [nearest_rank(xs, p) for p in (25, 50, 90, 95)]
    assert ps == sorted(ps)


def test_empty_workload_reports_absent_markers():
    rep = summarize(run(tiny(arrivals={"rate": 1.0, "count": 0}), 0))
    assert rep.throughput == 0.0 and rep.completed == 0
    assert rep.p25 is rep.p50 is rep.p95 is rep.mean_latency is None
    row = reports_to_csv([rep]).splitlines()[1].split(",")
    assert row[REPORT_FIELDS.index("p50")] == ""
    assert reports_from_csv(reports_to_csv([rep])) == [rep]


def test_single_request_degenerate_percentiles():
    tr = run(tiny(arrivals={"rate": 1.0, "count": 1}), 0)
    rep = summarize(tr)
    lat = tr.requests[0].latency
    assert rep.p25 == rep.p50 == rep.p90 == rep.p95 == rep.mean_latency == lat


def test_same_invocation_byte_identical_csv():
    sc = tiny()
    a = reports_to_csv([summarize(run(sc, 3))])
    b = reports_to_csv([summarize(run(sc, 3))])
    assert a == b


def test_report_fields_and_invariants():
    tr = run(tiny(), 1)
    rep = summarize(tr)
    assert rep.served_accuracy == 1.0
    assert rep.p25 <= rep.p50 <= rep.p90 <= rep.p95
    assert rep.throughput <= rep.offered_rate
    assert 0 < rep.router_share < 1
    assert rep.router_evals == sum(r.router_evals for r in tr.requests)
    assert rep.fairness_violations == 0


reports = st.builds(
    RunReport,
    scenario=st.text(min_size=1, max_size=8).filter(str.isprintable),
    policy=st.sampled_from(["aragog", "per-workflow"]),
    rate=st.floats(1e-3, 1e3),
    seeds=st.just("0 1"),
    beam_width=st.integers(1, 16),
    mode=st.sampled_from(["drain", "horizon"]),
    arrived=st.integers(0, 10**6),
    completed=st.integers(0, 10**6),
    makespan=st.floats(0, 1e6),
    throughput=st.floats(0, 1e3),
    offered_rate=st.floats(0, 1e3),
    mean_latency=st.none() | st.floats(0, 1e6),
    p25=st.none() | st.floats(0, 1e6),
    p50=st.none() | st.floats(0, 1e6),
    p90=st.none() | st.floats(0, 1e6),
    p95=st.none() | st.floats(0, 1e6),
    served_accuracy=st.none() | st.floats(0, 1),
    router_share=st.none() | st.floats(0, 1),
    router_evals=st.integers(0, 10**7),
    mean_router_evals=st.none() | st.floats(0, 1e3),
    mean_viable=st.none() | st.floats(0, 1e3),
    rounds=st.integers(0, 10**6),
    fairness_violations=st.integers(0, 10),
)


@given(st.lists(reports, max_size=5))
def test_csv_round_trip_exact(reps):
    text = reports_to_csv(reps)
    assert reports_from_csv(text) == reps
    assert reports_to_csv(reports_from_csv(text)) == text


def test_sweep_single_rate_and_order():
    sc = tiny()
    s = sweep(sc, rates=[0.5], seeds=[0])
    assert len(s.reports) == 1 and s.saturation == s.reports[0].throughput
    with pytest.raises(ValueError):
        SweepResult([s.reports[0], s.reports[0]])


def test_seed_pooling():
    sc = tiny()
    s = sweep(sc, rates=[1.0], seeds=[0, 1])
    a, b = summarize(run(sc, 0)), summarize(run(sc, 1))
    pooled = s.reports[0]
    assert pooled.completed == a.completed + b.completed
    assert pooled.throughput == pytest.approx((a.throughput + b.throughput) / 2)
    assert pooled.seeds == "0 1"


def test_low_load_throughput_tracks_rate():
    sc = load_scenario("littles_law").with_(rate=0.5, count=4000)
    rep = summarize(run(sc, 0))
    assert rep.throughput == pytest.approx(0.5, rel=0.05)


@pytest.mark.parametrize("processes", [False, True])
def test_pool_size_does_not_change_results(processes):
    sc = tiny()
    jobs = [(sc, p, r, s) for p in ("aragog", "per-input-static") for r in (0.5, 1.5) for s in (0, 1)]
    serial = [t.to_jsonl() for t in run_many(jobs, 1)]
    pooled = [t.to_jsonl() for t in run_many(jobs, 3, processes=processes)]
    assert serial == pooled


def test_compare_policies_shape():
    cmp = compare_policies(tiny(), rates=[0.5, 1.0], seeds=[0])
    assert set(cmp.sweeps) == {"aragog", "per-workflow", "per-input-static", "per-input-runtime-cost"}
    assert set(cmp.ratios) == {"aragog/per-workflow", "aragog/per-input-static",
                               "aragog/per-input-runtime-cost"}
    assert len(cmp.reports()) == 8
    assert "policy" in format_table(cmp.reports()).splitlines()[0]


def test_degenerate_scenario_policies_agree():
    sc = load_scenario("degenerate_top")
    cmp = compare_policies(sc, rates=[0.5, 1.0, 1.5], seeds=[0])
    sat = cmp.saturation
    assert max(sat.values()) <= 1.05 * min(sat.values())


def test_reference_saturates(reference_comparison):
    reps = reference_comparison.sweeps["aragog"].reports
    top, second = reps[-1].throughput, reps[-2].throughput
    assert abs(top - second) <= 0.1 * max(top, second)
    low = reps[0]
    assert low.throughput == pytest.approx(low.offered_rate, rel=0.05)
