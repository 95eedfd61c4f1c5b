"""Per-request prediction of the accurate configuration set.

Chains of single-step upgrades run from the all-smallest configuration to
the top. Each chain is binary-searched for its inaccurate/accurate
boundary; everything at or above a boundary becomes a candidate, and each
candidate is then confirmed by its own binary router. Router calls stop
once the request's time budget is spent.
"""
from __future__ import annotations

import hashlib
import math
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .workflow import ConfigSpace, Configuration, WorkflowError, leq
from .workload import AccuracyTable

COVERAGE_LIMIT = 4096
DEFAULT_CHAIN_CAP = 64


class RouterBackend(ABC):
    """Answers: is configuration ``c`` as accurate as the top for this request?"""

    latency: float = 0.0

    @abstractmethod
    def evaluate(self, rid: int, c: Configuration) -> bool: ...


class OracleRouter(RouterBackend):
    def __init__(self, table: AccuracyTable, latency: float = 0.0):
        if latency < 0:
            raise WorkflowError("router latency must be nonnegative")
        self.table = table
        self.latency = latency

    def evaluate(self, rid: int, c: Configuration) -> bool:
        return self.table.is_accurate(rid, c)


def _unit_hash(*parts: int) -> float:
    """Uniform [0, 1) value keyed on integers, stable across processes."""
    h = hashlib.blake2b(struct.pack(f"<{len(parts)}q", *parts), digest_size=8)
    return int.from_bytes(h.digest(), "little") / 2.0**64


class NoisyRouter(RouterBackend):
    """Oracle verdicts flipped with fixed false-positive/false-negative rates.

    Flips depend only on (seed, request id, configuration), so repeated
    questions get the same answer.
    """

    def __init__(self, oracle: OracleRouter, fp: float = 0.0, fn: float = 0.0, seed: int = 0):
        if not (0.0 <= fp < 1.0 and 0.0 <= fn < 1.0):
            raise WorkflowError("fp and fn must lie in [0, 1)")
        self.oracle = oracle
        self.fp = fp
        self.fn = fn
        self.seed = seed
        self.latency = oracle.latency

    def evaluate(self, rid: int, c: Configuration) -> bool:
        truth = self.oracle.evaluate(rid, c)
        u = _unit_hash(self.seed, rid, *c)
        if truth:
            return u >= self.fn
        return u < self.fp


@dataclass
class PredictorBudget:
    ema: float = 0.0
    alpha: float = 0.2
    minimum: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise WorkflowError("EMA smoothing factor must lie in (0, 1]")
        if self.ema < 0 or self.minimum < 0:
            raise WorkflowError("EMA and minimum budget must be nonnegative")

    @property
    def budget(self) -> float:
        return max(self.ema, self.minimum)


def update_queue_ema(budget: PredictorBudget, observed: float) -> PredictorBudget:
    if observed < 0:
        raise WorkflowError(f"queue delay must be nonnegative, got {observed}")
    budget.ema = budget.alpha * observed + (1.0 - budget.alpha) * budget.ema
    return budget


@dataclass(frozen=True)
class ViableSet:
    request_id: int
    configs: frozenset[Configuration]

    def __contains__(self, c) -> bool:
        return tuple(c) in self.configs

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(sorted(self.configs))


@dataclass
class Prediction:
    viable: ViableSet
    evaluations: int
    search_evaluations: int
    latency: float
    truncated: bool
    chains: int = 0
    boundaries: list[int] = field(default_factory=list)


# chains


def _walk(space: ConfigSpace, start, goal, covered, agent_order) -> list[Configuration]:
    """Single-step upgrade path from ``start`` to ``goal``, preferring uncovered nodes."""
    path = []
    cur = tuple(start)
    while cur != goal:
        steps = [i for i in agent_order if cur[i] < goal[i]]
        nexts = [cur[:i] + (cur[i] + 1,) + cur[i + 1:] for i in steps]
        fresh = [c for c in nexts if c not in covered]
        cur = (fresh or nexts)[0]
        path.append(cur)
    return path


def build_chains(space: ConfigSpace, cap: int | None = None, exhaustive: bool | None = None):
    """Maximal upgrade chains from the all-smallest configuration to the top.

    Coverage mode (default for lattices up to ``COVERAGE_LIMIT`` elements)
    keeps adding chains until every configuration lies on one. Capped mode
    emits ``cap`` distinct chains, or all of them if fewer exist.
    """
    if exhaustive is None:
        exhaustive = len(space) <= COVERAGE_LIMIT and cap is None
    base, top = space.base, space.top
    covered = {base}
    chains: list[list[Configuration]] = []
    seen: set[tuple] = set()
    n = space.n

    def emit(chain):
        key = tuple(chain)
        if key in seen:
            return False
        seen.add(key)
        chains.append(chain)
        covered.update(chain)
        return True

    if exhaustive:
        for target in sorted(space, key=lambda c: (abs(2 * sum(c) - n * (space.m - 1)), c)):
            if target in covered:
                continue
            k = len(chains) % n
            order = list(range(k, n)) + list(range(k))
            lower = _walk(space, base, target, covered, order)
            upper = _walk(space, target, top, covered, order)
            emit([base] + lower + upper)
        if not chains:
            emit([base])
        return chains

    cap = DEFAULT_CHAIN_CAP if cap is None else cap
    if cap < 1:
        raise WorkflowError("chain cap must be at least 1")
    attempts = 0
    while len(chains) < cap and attempts < 4 * cap:
        k = attempts % n
        order = list(range(k, n)) + list(range(k))
        attempts += 1
        emit([base] + _walk(space, base, top, covered, order))
    if len(chains) < cap:
        for chain in _dfs_chains(space):
            if len(chains) >= cap:
                break
            emit(chain)
    return chains


def _dfs_chains(space: ConfigSpace):
    """Every maximal chain, in depth-first order."""
    stack = [[space.base]]
    while stack:
        path = stack.pop()
        succ = space.successors(path[-1])
        if not succ:
            yield path
            continue
        for s in reversed(succ):
            stack.append(path + [s])


def boundary_search(chain: Sequence[Configuration], router: RouterBackend, rid: int) -> int:
    """Index of the first accurate element, or ``len(chain)`` if none is."""
    return bisect_boundary(len(chain), lambda i: router.evaluate(rid, tuple(chain[i])))


def bisect_boundary(n: int, verdict: Callable[[int], bool], known_hi: bool = False) -> int:
    lo, hi = 0, n - 1 if known_hi and n > 0 else n
    while lo < hi:
        mid = (lo + hi) // 2
        if verdict(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


class _BudgetSpent(Exception):
    pass


class _Session:
    """Router calls for one request, with verdict cache and monotone inference."""

    def __init__(self, router: RouterBackend, rid: int, budget: float, top):
        self.router = router
        self.rid = rid
        self.budget = budget
        self.top = top
        self.verdicts: dict[Configuration, bool] = {}
        self.accurate: list[Configuration] = []
        self.inaccurate: list[Configuration] = []
        self.spent = 0.0
        self.count = 0

    def evaluate(self, c) -> bool:
        if c in self.verdicts:
            return self.verdicts[c]
        lat = self.router.latency
        if self.budget <= 0 or self.spent + lat > self.budget:
            raise _BudgetSpent
        self.spent += lat
        self.count += 1
        v = bool(self.router.evaluate(self.rid, c))
        self.verdicts[c] = v
        (self.accurate if v else self.inaccurate).append(c)
        return v

    def infer(self, c) -> bool:
        """Verdict for the search phase; free when implied by an earlier answer."""
        if c == self.top:
            return True
        if c in self.verdicts:
            return self.verdicts[c]
        if any(leq(a, c) for a in self.accurate):
            return True
        if any(leq(c, b) for b in self.inaccurate):
            return False
        return self.evaluate(c)


def predict_viable_set(
    rid: int,
    space: ConfigSpace,
    router: RouterBackend,
    budget: PredictorBudget | float | None = None,
    chains=None,
    chain_cap: int | None = None,
) -> Prediction:
    if budget is None:
        limit = math.inf
    elif isinstance(budget, PredictorBudget):
        limit = budget.budget
    else:
        limit = float(budget)
    if chains is None:
        chains = build_chains(space, cap=chain_cap) if chain_cap else build_chains(space)

    top = space.top
    s = _Session(router, rid, limit, top)
    boundaries: list[int] = []
    candidates: set[Configuration] = set()
    truncated = False
    search_evals = None
    try:
        for chain in chains:
            b = bisect_boundary(len(chain), lambda i: s.infer(chain[i]), known_hi=chain[-1] == top)
            boundaries.append(b)
            candidates.update(chain[b:])
        search_evals = s.count
        candidates.discard(top)
        for c in sorted(candidates, key=space.cost_key):
            s.evaluate(c)
    except _BudgetSpent:
        truncated = True
        if search_evals is None:
            search_evals = s.count
    viable = frozenset(s.accurate) | {top}
    return Prediction(
        viable=ViableSet(rid, viable),
        evaluations=s.count,
        search_evaluations=search_evals,
        latency=s.spent,
        truncated=truncated,
        chains=len(chains),
        boundaries=boundaries,
    )


def router_eval_count(prediction: Prediction) -> int:
    return prediction.evaluations


def exhaustive_viable_set(rid: int, space: ConfigSpace, router: RouterBackend) -> Prediction:
    """Baseline: ask every binary router, the top included."""
    hits = [c for c in space if router.evaluate(rid, c)]
    n = len(space)
    return Prediction(
        viable=ViableSet(rid, frozenset(hits) | {space.top}),
        evaluations=n,
        search_evaluations=n,
        latency=n * router.latency,
        truncated=False,
    )
