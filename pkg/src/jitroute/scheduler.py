"""Stage-wise joint scheduling of ready (request, agent) pairs onto engines.

Each round walks the ready pairs in two-level order (request arrival, then
agent depth) and extends a beam of partial assignments. A pair either takes
a free slot on one of its candidate models or, when none of them has a free
slot, is skipped (look-ahead FIFO). States are ranked by weighted
utilization, then by the fraction of viable configurations they preserve.
"""
from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .engine import EngineState, Event, ServiceTimeModel, submit_stage
from .workflow import Configuration, WorkflowGraph

DEFAULT_BEAM_WIDTH = 4
DEFAULT_BRUTE_FORCE_CAP = 10**6


@dataclass
class Request:
    rid: int
    arrival: float
    graph: WorkflowGraph
    viable: frozenset[Configuration]
    prefix: dict[int, int] = field(default_factory=dict)
    completed: set[int] = field(default_factory=set)
    inflight: set[int] = field(default_factory=set)
    enqueued: dict[int, float] = field(default_factory=dict)
    dispatched: dict[int, float] = field(default_factory=dict)
    finished: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.viable = frozenset(tuple(c) for c in self.viable)
        if not self.viable:
            raise ValueError(f"request {self.rid} has an empty viable set")

    def ready(self) -> list[int]:
        g = self.graph
        busy = self.completed | self.inflight
        return [a for a in range(g.n) if a not in busy and g.preds[a] <= self.completed]

    @property
    def done(self) -> bool:
        return len(self.completed) == self.graph.n

    def consistent(self, extra: Mapping[int, int] | None = None) -> list[Configuration]:
        fixed = dict(self.prefix)
        if extra:
            fixed.update(extra)
        return [c for c in self.viable if all(c[a] == m for a, m in fixed.items())]


@dataclass(frozen=True)
class SchedulerParams:
    beam_width: int = DEFAULT_BEAM_WIDTH
    brute_force_cap: int = DEFAULT_BRUTE_FORCE_CAP

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam width must be at least 1")


def candidate_models(r: Request, agent: int, extra: Mapping[int, int] | None = None) -> list[int]:
    return sorted({c[agent] for c in r.consistent(extra)})


def two_level_order(queue: Sequence[Request], ready: Mapping[int, Iterable[int]] | None = None):
    """(request, agent) pairs: arrival first, then deeper agents, then declaration order."""
    items = []
    for r in queue:
        agents = r.ready() if ready is None else ready[r.rid]
        g = r.graph
        for a in agents:
            items.append(((r.arrival, r.rid, -g.depth_at(a), g.declared_at(a)), r, a))
    items.sort(key=lambda t: t[0])
    return [(r, a) for _, r, a in items]


@dataclass
class Skip:
    rid: int
    agent: int
    candidates: tuple[int, ...]
    free: tuple[int, ...]


@dataclass
class Assignment:
    triples: list[tuple[int, int, int]] = field(default_factory=list)
    skipped: list[Skip] = field(default_factory=list)
    utilization: float = 0.0
    flexibility: float = 1.0
    considered: int = 0
    expansions: int = 0
    passed_over: int = 0
    sequence: list = field(default_factory=list, repr=False)

    @property
    def score(self) -> tuple[float, float]:
        return (self.utilization, self.flexibility)


PartialAssignment = Assignment


class _Round:
    """Shared, memoized view of one round's queue and engine snapshot.

    ``items`` may be a lazy iterable; pairs are pulled only as the search
    reaches them and recorded in ``seen``. An item may carry a third
    element, a superset of the models the pair could use. Such a pair is
    passed over without entering the search when none of those models is
    still open in any beam state, since every state would skip it.
    """

    def __init__(self, queue: Sequence[Request], engines: Sequence[EngineState], items=None):
        self.items = iter(two_level_order(queue) if items is None else items)
        self.seen: list[tuple[Request, int]] = []
        self.by_id: dict[int, Request] = {}
        self.weights = [e.weight for e in engines]
        self.free0 = tuple(max(e.available, 0) for e in engines)
        self.open = {m for m, f in enumerate(self.free0) if f > 0}
        self.passed = 0
        self.size0: dict[int, int] = {}
        self._cand: dict = {}
        self._count: dict = {}

    def __iter__(self):
        for item in self.items:
            r, agent = item[0], item[1]
            if len(item) > 2 and self.open.isdisjoint(item[2]):
                self.passed += 1
                continue
            if r.rid not in self.by_id:
                self.by_id[r.rid] = r
                self.size0[r.rid] = len(r.viable)
            self.seen.append((r, agent))
            yield r, agent

    def all_items(self) -> list[tuple[Request, int]]:
        for _ in self:
            pass
        return self.seen

    def candidates(self, rid: int, agent: int, extra: tuple) -> tuple[int, ...]:
        key = (rid, agent, extra)
        got = self._cand.get(key)
        if got is None:
            got = tuple(candidate_models(self.by_id[rid], agent, dict(extra)))
            self._cand[key] = got
        return got

    def kept(self, rid: int, extra: tuple) -> int:
        key = (rid, extra)
        got = self._count.get(key)
        if got is None:
            got = len(self.by_id[rid].consistent(dict(extra)))
            self._count[key] = got
        return got

    def utilization(self, free: Sequence[int]) -> float:
        return sum((f0 - f) * w for f0, f, w in zip(self.free0, free, self.weights))

    def flexibility(self, tentative: Mapping[int, tuple]) -> float:
        if not tentative:
            return 1.0
        ratios = [self.kept(rid, extra) / self.size0[rid] for rid, extra in sorted(tentative.items())]
        return sum(ratios) / len(ratios)


_END = (math.inf,)


@dataclass
class _State:
    free: tuple[int, ...]
    assigned: tuple[tuple[int, int], ...]  # (item position, model), skips implicit
    length: int  # items processed
    tentative: dict[int, tuple]  # rid -> sorted ((agent, model), ...)
    skips: int
    util: float
    flex: float

    def rank_key(self):
        # Ascending sort puts the best state first. Comparing the sparse
        # (position, model) lists plus a sentinel orders states exactly as
        # their full decision vectors with a skip ranked after every model.
        return (-self.util, -self.flex, self.skips, self.assigned + (_END,))

    def decisions(self) -> list[int]:
        out = [-1] * self.length
        for pos, m in self.assigned:
            out[pos] = m
        return out


def _extend(rnd: _Round, st: _State, rid: int, agent: int) -> list[_State]:
    extra = st.tentative.get(rid, ())
    cands = rnd.candidates(rid, agent, extra)
    out = []
    for m in cands:
        if st.free[m] <= 0:
            continue
        free = st.free[:m] + (st.free[m] - 1,) + st.free[m + 1:]
        tent = dict(st.tentative)
        tent[rid] = tuple(sorted(extra + ((agent, m),)))
        out.append(_State(free, st.assigned + ((st.length, m),), st.length + 1, tent, st.skips,
                          rnd.utilization(free), rnd.flexibility(tent)))
    if not out:
        out.append(_State(st.free, st.assigned, st.length + 1, st.tentative, st.skips + 1,
                          st.util, st.flex))
    return out


def _finish(rnd: _Round, st: _State, expansions: int) -> Assignment:
    a = Assignment(utilization=st.util, flexibility=st.flex,
                   considered=st.length, expansions=expansions, passed_over=rnd.passed)
    free = list(rnd.free0)
    tentative: dict[int, tuple] = {}
    for (r, agent), d in zip(rnd.seen, st.decisions()):
        extra = tentative.get(r.rid, ())
        if d < 0:
            cands = rnd.candidates(r.rid, agent, extra)
            skip = Skip(r.rid, agent, cands, tuple(free[m] for m in cands))
            a.skipped.append(skip)
            a.sequence.append(("skip", skip))
        else:
            a.triples.append((r.rid, agent, d))
            a.sequence.append(("assign", (r.rid, agent, d)))
            free[d] -= 1
            tentative[r.rid] = tuple(sorted(extra + ((agent, d),)))
    return a


def beam_schedule(queue: Sequence[Request], engines: Sequence[EngineState],
                  params: SchedulerParams | int = SchedulerParams(), items=None) -> Assignment:
    """Beam search over the round's ready pairs.

    The beam is kept nested: its first k states are exactly the beam a
    width-k search would hold. Slot k takes the best not-yet-taken
    extension of states 1..k, so a wider beam never ends worse than a
    narrower one and width 1 is plain greedy.
    """
    width = params if isinstance(params, int) else params.beam_width
    if width < 1:
        raise ValueError("beam width must be at least 1")
    rnd = _Round(queue, engines, items)
    beam = [_State(rnd.free0, (), 0, {}, 0, 0.0, 1.0)]
    expansions = 0
    if sum(rnd.free0) == 0:
        return _finish(rnd, beam[0], 0)
    for r, agent in rnd:
        if all(sum(st.free) == 0 for st in beam):
            rnd.seen.pop()
            break
        if not any(st.free[m] > 0 for st in beam
                   for m in rnd.candidates(r.rid, agent, st.tentative.get(r.rid, ()))):
            # every state skips; relative order is unchanged
            beam = [_State(st.free, st.assigned, st.length + 1, st.tentative, st.skips + 1,
                           st.util, st.flex) for st in beam]
            expansions += len(beam)
            continue
        pool: list = []
        nxt = []
        for st in beam:
            for child in _extend(rnd, st, r.rid, agent):
                heapq.heappush(pool, (child.rank_key(), len(pool) + expansions, child))
            nxt.append(heapq.heappop(pool)[2])
        while pool and len(nxt) < width:
            nxt.append(heapq.heappop(pool)[2])
        expansions += len(pool) + len(nxt)
        beam = nxt
        rnd.open = {m for m in rnd.open if any(st.free[m] > 0 for st in beam)}
    best = min(beam, key=_State.rank_key)
    return _finish(rnd, best, expansions)


def greedy_schedule(queue: Sequence[Request], engines: Sequence[EngineState]) -> Assignment:
    """FIFO pass giving each pair its best single extension."""
    rnd = _Round(queue, engines)
    free = list(rnd.free0)
    tentative: dict[int, tuple] = {}
    decisions = []
    for r, agent in rnd:
        if sum(free) == 0:
            rnd.seen.pop()
            break
        extra = tentative.get(r.rid, ())
        best = None
        for m in rnd.candidates(r.rid, agent, extra):
            if free[m] <= 0:
                continue
            trial = dict(tentative)
            trial[r.rid] = tuple(sorted(extra + ((agent, m),)))
            after = free.copy()
            after[m] -= 1
            key = (-rnd.utilization(after), -rnd.flexibility(trial), m)
            if best is None or key < best[0]:
                best = (key, m, trial)
        if best is None:
            decisions.append(-1)
            continue
        _, m, tentative = best
        free[m] -= 1
        decisions.append(m)
    util = rnd.utilization(free)
    assigned = tuple((i, m) for i, m in enumerate(decisions) if m >= 0)
    st = _State(tuple(free), assigned, len(decisions), tentative, decisions.count(-1),
                util, rnd.flexibility(tentative))
    return _finish(rnd, st, len(decisions))


class SearchSpaceTooLarge(RuntimeError):
    pass


def brute_force_schedule(queue: Sequence[Request], engines: Sequence[EngineState],
                         cap: int = DEFAULT_BRUTE_FORCE_CAP) -> Assignment:
    """Exhaustive optimum under the same expansion rules as the beam."""
    rnd = _Round(queue, engines)
    items = rnd.all_items()
    bound = 1
    for r, agent in items:
        bound *= len(rnd.candidates(r.rid, agent, ())) + 1
        if bound > cap:
            raise SearchSpaceTooLarge(f"more than {cap} assignments to enumerate")
    best: list = [None]
    leaves = [0]

    def rec(i: int, st: _State):
        if i == len(items) or sum(st.free) == 0:
            leaves[0] += 1
            key = st.rank_key()
            if best[0] is None or key < best[0][0]:
                best[0] = (key, st)
            return
        r, agent = items[i]
        for child in _extend(rnd, st, r.rid, agent):
            rec(i + 1, child)

    rec(0, _State(rnd.free0, (), 0, {}, 0, 0.0, 1.0))
    return _finish(rnd, best[0][1], leaves[0])


def score(triples: Iterable[tuple[int, int, int]], engines: Sequence[EngineState],
          queue: Sequence[Request]) -> tuple[float, float]:
    """(weighted utilization, flexibility preserved) of a set of assignments."""
    by_id = {r.rid: r for r in queue}
    util = 0.0
    tentative: dict[int, dict[int, int]] = {}
    for rid, agent, m in triples:
        util += engines[m].weight
        tentative.setdefault(rid, {})[agent] = m
    if not tentative:
        return util, 1.0
    ratios = [len(by_id[rid].consistent(extra)) / len(by_id[rid].viable)
              for rid, extra in sorted(tentative.items())]
    return util, sum(ratios) / len(ratios)


def fairness_violations(assignment: Assignment) -> list[tuple[Skip, tuple[int, int, int]]]:
    """Later assignments that took a slot a skipped pair was waiting for.

    When a pair is skipped its candidate models had the recorded free slot
    counts; a later pair in the same round may not use more than that.
    """
    seq = assignment.sequence
    later: dict[int, list[tuple[int, tuple]]] = {}  # model -> [(position, triple)]
    for i, (kind, rec) in enumerate(seq):
        if kind == "assign":
            later.setdefault(rec[2], []).append((i, rec))
    violations = []
    for i, (kind, rec) in enumerate(seq):
        if kind != "skip":
            continue
        for m, free in zip(rec.candidates, rec.free):
            after = later.get(m, [])
            k = bisect.bisect_right(after, i, key=lambda e: e[0])
            violations.extend((rec, t) for _, t in after[k + free:])
    return violations


def apply_assignment(assignment: Assignment, requests: Mapping[int, Request],
                     engines: Sequence[EngineState], now: float,
                     service: ServiceTimeModel, seed: int):
    """Dispatch each triple; returns (completion events, dropped triples)."""
    events: list[Event] = []
    dropped = []
    for rid, agent, m in assignment.triples:
        r = requests[rid]
        e = engines[m]
        if e.available <= 0 or agent not in r.ready() or m not in candidate_models(r, agent):
            dropped.append((rid, agent, m))
            continue
        events.append(submit_stage(e, rid, agent, now, service, seed))
        r.prefix[agent] = m
        r.viable = frozenset(c for c in r.viable if c[agent] == m)
        r.inflight.add(agent)
        r.dispatched[agent] = now
    return events, dropped
