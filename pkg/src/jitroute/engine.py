"""Serving-engine primitives for the discrete-event simulator."""
from __future__ import annotations

import enum
import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np


class CapacityError(RuntimeError):
    """A stage was submitted to an engine with no free batch slot."""


@dataclass
class EngineState:
    model: int
    max_slots: int
    weight: float
    inflight: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.max_slots < 1:
            raise ValueError("an engine needs at least one batch slot")

    @classmethod
    def snapshot(cls, model: int, max_slots: int, weight: float, occupied: int = 0):
        """Engine with ``occupied`` placeholder stages (for scheduler snapshots)."""
        e = cls(model, max_slots, weight)
        for k in range(occupied):
            e.submit(-1 - k, 0, math.inf)
        return e

    @property
    def occupancy(self) -> int:
        return len(self.inflight)

    @property
    def available(self) -> int:
        return self.max_slots - len(self.inflight)

    def submit(self, rid: int, agent: int, completion: float):
        if len(self.inflight) >= self.max_slots:
            raise CapacityError(f"engine {self.model} is full ({self.max_slots} slots)")
        key = (rid, agent)
        if key in self.inflight:
            raise CapacityError(f"stage {key} already running on engine {self.model}")
        self.inflight[key] = completion

    def complete(self, rid: int, agent: int) -> float:
        return self.inflight.pop((rid, agent))


def slots_available(engine: EngineState, now: float = 0.0) -> int:
    return engine.available


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float
    floor: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.floor < 0:
            raise ValueError("sigma and floor must be nonnegative")

    @property
    def mean(self) -> float:
        return self.floor + math.exp(self.mu + 0.5 * self.sigma**2)


class ServiceTimeModel:
    """Per (agent, model) lognormal stage durations plus a fixed floor.

    Samples are a pure function of (seed, request id, agent, model).
    """

    def __init__(self, per_model: list[LogNormal], overrides: Mapping[tuple[int, int], LogNormal] | None = None):
        self.per_model = list(per_model)
        self.overrides = dict(overrides or {})

    def dist(self, agent: int, model: int) -> LogNormal:
        return self.overrides.get((agent, model), self.per_model[model])

    def mean(self, agent: int, model: int) -> float:
        return self.dist(agent, model).mean

    def sample(self, seed: int, rid: int, agent: int, model: int) -> float:
        d = self.dist(agent, model)
        rng = np.random.default_rng([seed, 0x5E5, rid, agent, model])
        x = d.floor + float(rng.lognormal(d.mu, d.sigma))
        return x if x > 0 else math.ulp(0.0)


class EventKind(enum.IntEnum):
    # lower value fires first at equal timestamps
    STAGE_COMPLETE = 0
    PREDICTION_COMPLETE = 1
    ARRIVAL = 2
    ROUND = 3


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    payload: Any = None


class EventQueue:
    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.last = -math.inf

    def push(self, time: float, kind: EventKind, payload=None):
        if time < self.last:
            raise ValueError(f"event at {time} scheduled before current time {self.last}")
        heapq.heappush(self._heap, (time, int(kind), next(self._seq), payload))

    def pop(self) -> Event:
        time, kind, _, payload = heapq.heappop(self._heap)
        self.last = time
        return Event(time, EventKind(kind), payload)

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


def submit_stage(engine: EngineState, rid: int, agent: int, now: float,
                 service: ServiceTimeModel, seed: int) -> Event:
    """Occupy one slot and return the stage-completion event."""
    if engine.available <= 0:
        raise CapacityError(f"engine {engine.model} has no free slot at t={now}")
    done = now + service.sample(seed, rid, agent, engine.model)
    engine.submit(rid, agent, done)
    return Event(done, EventKind.STAGE_COMPLETE, (rid, agent, engine.model))
