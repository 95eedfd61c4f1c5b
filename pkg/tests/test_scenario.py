import copy
import math

import pytest
import yaml

from jitroute.baselines import PolicyKind
from jitroute.scenario import ScenarioError, load_scenario, parse_scenario, shipped_scenarios

BASE = {
    "name": "tiny",
    "workflow": {"agents": ["a", "b"], "edges": [["a", "b"]]},
    "models": [
        {"name": "s", "cost": 1, "weight": 2, "slots": 2, "service": {"mu": 0.0, "sigma": 0.2, "floor": 0.1}},
        {"name": "l", "cost": 4, "weight": 1, "slots": 1, "service": {"mu": 0.5}},
    ],
    "arrivals": {"rate": 1.0, "count": 5},
}


def doc(**changes):
    d = copy.deepcopy(BASE)
    for k, v in changes.items():
        if v is None:
            d.pop(k, None)
        else:
            d[k] = v
    return d


def test_minimal_document_defaults():
    sc = parse_scenario(doc())
    assert sc.name == "tiny"
    assert sc.slots == (2, 1)
    assert sc.router.backend == "oracle" and sc.router.minimum_budget == sc.router.latency
    assert sc.scheduler.beam_width == 4
    assert sc.sim.mode == "drain" and math.isinf(sc.sim.horizon)
    assert sc.policy is PolicyKind.ARAGOG
    assert len(sc.space) == 4


def test_overrides_and_sections():
    sc = parse_scenario(doc(
        service_overrides={"b@l": {"mu": 1.0, "sigma": 0.0}},
        router={"backend": "noisy", "fn": 0.2, "lanes": 2, "min_budget": 0.5, "chain_cap": 3},
        scheduler={"beam_width": 2},
        sim={"mode": "horizon", "horizon": 10},
        sweep={"rates": [1, 2], "seeds": [3, 4]},
        policy="per-input-static",
    ))
    assert sc.service.dist(sc.graph.index("b"), 1).mu == 1.0
    assert sc.router.fn == 0.2 and sc.router.lanes == 2 and sc.router.minimum_budget == 0.5
    assert sc.scheduler.beam_width == 2
    assert sc.rates == (1.0, 2.0) and sc.seeds == (3, 4)
    assert sc.policy is PolicyKind.PER_INPUT_STATIC


@pytest.mark.parametrize("bad", [
    dict(workflow={"agents": ["a", "b"], "edges": [["a", "b"], ["b", "a"]]}),
    dict(workflow={"agents": ["a"], "edges": [["a", "z"]]}),
    dict(workflow={"agents": []}),
    dict(models=[BASE["models"][0]]),
    dict(models=[BASE["models"][1], BASE["models"][0]]),
    dict(router={"backend": "psychic"}),
    dict(router={"fp": 1.5}),
    dict(arrivals={"rate": -1, "count": 3}),
    dict(arrivals={"rate": 1}),
    dict(workload={"violation_rate": 0.5}),
    dict(scheduler={"beam_width": 0}),
    dict(sim={"mode": "horizon"}),
    dict(sweep={"rates": [2, 1]}),
    dict(policy="best"),
    dict(service_overrides={"zz@s": {"mu": 0}}),
    dict(mystery=1),
    dict(name=""),
    dict(name="two\nlines"),
    dict(models=[{**BASE["models"][0], "slots": 0}, BASE["models"][1]]),
    dict(models=[{**BASE["models"][0], "cost": "cheap"}, BASE["models"][1]]),
])
def test_invalid_documents(bad):
    with pytest.raises(ScenarioError):
        parse_scenario(doc(**bad))


def test_non_mapping_document():
    with pytest.raises(ScenarioError):
        parse_scenario(["not", "a", "mapping"])


def test_load_by_path_and_name(tmp_path):
    p = tmp_path / "mine.yaml"
    p.write_text(yaml.safe_dump(doc(name=None)))
    sc = load_scenario(p)
    assert sc.name == "mine" and sc.source == p
    with pytest.raises(OSError):
        load_scenario(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("models: [\n")
    with pytest.raises(ScenarioError):
        load_scenario(bad)


@pytest.mark.parametrize("name", shipped_scenarios())
def test_shipped_scenarios_load(name):
    sc = load_scenario(name)
    assert sc.name == name


def test_with_changes():
    sc = parse_scenario(doc())
    sc2 = sc.with_(rate=3.0, beam_width=8, policy="per-workflow")
    assert (sc2.rate, sc2.scheduler.beam_width, sc2.policy) == (3.0, 8, PolicyKind.PER_WORKFLOW)
    assert sc.rate == 1.0


def test_trace_path_resolved_against_scenario(tmp_path):
    d = doc(workload={"trace": "t.jsonl"}, arrivals={"rate": 1.0})
    sc = parse_scenario(d, tmp_path / "s.yaml")
    assert sc.trace == tmp_path / "t.jsonl"
