"""Configuration policies that bind a request to one configuration up front."""
from __future__ import annotations

import enum
from typing import Callable, Iterable, Sequence

from .workflow import ConfigSpace, Configuration
from .workload import AccuracyTable


class PolicyKind(str, enum.Enum):
    ARAGOG = "aragog"
    PER_WORKFLOW = "per-workflow"
    PER_INPUT_STATIC = "per-input-static"
    PER_INPUT_RUNTIME = "per-input-runtime-cost"

    @classmethod
    def parse(cls, value) -> "PolicyKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            names = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {value!r} (expected one of: {names})") from None

    @property
    def uses_router(self) -> bool:
        return self is not PolicyKind.PER_WORKFLOW


def per_workflow_policy(tables: AccuracyTable | Sequence[frozenset], space: ConfigSpace,
                        tolerance: float = 0.0) -> Configuration:
    """Cheapest configuration accurate on at least ``1 - tolerance`` of the sample."""
    sets = list(tables.sets.values()) if isinstance(tables, AccuracyTable) else list(tables)
    if not sets:
        raise ValueError("per-workflow selection needs a nonempty sample")
    need = (1.0 - tolerance) * len(sets)
    for c in sorted(space, key=space.cost_key):
        hits = sum(1 for s in sets if c in s)
        if hits >= need - 1e-9:
            return c
    return space.top


def per_input_policy(accurate: Iterable[Configuration], space: ConfigSpace,
                     kind: PolicyKind | str = PolicyKind.PER_INPUT_STATIC,
                     estimate: Callable[[Configuration], float] | None = None) -> Configuration:
    """Pick one member of a request's accurate set.

    The static kind minimizes static cost. The runtime kind minimizes
    ``estimate`` (estimated completion time under current load), falling
    back to static cost and then the assignment vector on ties.
    """
    kind = PolicyKind.parse(kind)
    options = set(accurate) | {space.top}
    if kind is PolicyKind.PER_INPUT_STATIC:
        return min(options, key=space.cost_key)
    if kind is PolicyKind.PER_INPUT_RUNTIME:
        if estimate is None:
            raise ValueError("runtime-cost selection needs a completion-time estimator")
        return min(options, key=lambda c: (estimate(c), space.cost_key(c)))
    raise ValueError(f"{kind.value} is not a per-input policy")


class RuntimeCostEstimator:
    """Completion-time guess for a whole configuration, frozen when called.

    Per stage on model m: (stages ahead on m / slots of m) * mean service
    time + mean service time. Stages ahead = in flight on m plus
    undispatched stages already pinned to m.
    """

    def __init__(self, ahead: Sequence[int], slots: Sequence[int], mean_service: Callable[[int, int], float]):
        self.ahead = list(ahead)
        self.slots = list(slots)
        self.mean_service = mean_service

    def __call__(self, c: Configuration) -> float:
        total = 0.0
        for agent, m in enumerate(c):
            mean = self.mean_service(agent, m)
            total += (self.ahead[m] / self.slots[m]) * mean + mean
        return total
