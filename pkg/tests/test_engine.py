import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from jitroute.engine import (
    CapacityError, EngineState, EventKind, EventQueue, LogNormal, ServiceTimeModel,
    slots_available, submit_stage,
)

SVC = ServiceTimeModel([LogNormal(0.0, 0.5, 0.1), LogNormal(0.5, 0.5, 0.2)],
                       {(1, 1): LogNormal(1.0, 0.1, 0.0)})


def test_slot_accounting():
    e = EngineState(0, 8, 1.0)
    assert slots_available(e, 0.0) == 8
    for k in range(3):
        submit_stage(e, k, 0, 0.0, SVC, 0)
    assert slots_available(e, 0.0) == 5
    e.complete(1, 0)
    assert slots_available(e, 0.0) == 6


def test_fill_last_slot_then_reject():
    e = EngineState(1, 2, 1.0)
    submit_stage(e, 0, 0, 0.0, SVC, 0)
    ev = submit_stage(e, 1, 0, 0.0, SVC, 0)
    assert e.occupancy == e.max_slots and e.available == 0
    assert ev.kind is EventKind.STAGE_COMPLETE and ev.payload == (1, 0, 1)
    with pytest.raises(CapacityError):
        submit_stage(e, 2, 0, 0.0, SVC, 0)


def test_duplicate_stage_rejected():
    e = EngineState(0, 4, 1.0)
    e.submit(0, 0, 1.0)
    with pytest.raises(CapacityError):
        e.submit(0, 0, 2.0)


def test_sampling_is_pure():
    a = SVC.sample(3, 17, 1, 0)
    assert a == SVC.sample(3, 17, 1, 0)
    assert a != SVC.sample(4, 17, 1, 0)
    assert SVC.dist(1, 1) == LogNormal(1.0, 0.1, 0.0)
    assert SVC.dist(0, 1) == LogNormal(0.5, 0.5, 0.2)


@given(st.integers(0, 2**31), st.integers(0, 10**6), st.integers(0, 5), st.integers(0, 1))
def test_samples_positive_and_above_floor(seed, rid, agent, model):
    x = SVC.sample(seed, rid, agent, model)
    assert x > 0 and x >= SVC.dist(agent, model).floor


def test_zero_duration_is_bumped_positive():
    svc = ServiceTimeModel([LogNormal(-800.0, 0.0, 0.0)])
    assert svc.sample(0, 0, 0, 0) > 0


def test_lognormal_mean_matches_samples():
    svc = ServiceTimeModel([LogNormal(0.2, 0.4, 0.3)])
    xs = [svc.sample(1, rid, 0, 0) for rid in range(20_000)]
    assert sum(xs) / len(xs) == pytest.approx(svc.mean(0, 0), rel=0.01)
    assert svc.mean(0, 0) == pytest.approx(0.3 + math.exp(0.2 + 0.08))


def test_event_priority_and_sequence():
    q = EventQueue()
    q.push(1.0, EventKind.ROUND, "r")
    q.push(1.0, EventKind.ARRIVAL, "a1")
    q.push(1.0, EventKind.STAGE_COMPLETE, "s")
    q.push(1.0, EventKind.PREDICTION_COMPLETE, "p")
    q.push(1.0, EventKind.ARRIVAL, "a2")
    q.push(0.5, EventKind.ROUND, "early")
    got = [q.pop().payload for _ in range(6)]
    assert got == ["early", "s", "p", "a1", "a2", "r"]
    assert not q and q.peek_time() == math.inf


def test_event_queue_rejects_the_past():
    q = EventQueue()
    q.push(2.0, EventKind.ARRIVAL)
    q.pop()
    with pytest.raises(ValueError):
        q.push(1.0, EventKind.ROUND)
    q.push(2.0, EventKind.ROUND)


def test_bad_parameters():
    with pytest.raises(ValueError):
        EngineState(0, 0, 1.0)
    with pytest.raises(ValueError):
        LogNormal(0.0, -1.0)
