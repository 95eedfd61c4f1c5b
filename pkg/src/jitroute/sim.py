"""Discrete-event simulation of workflow serving under one policy.

Requests arrive, pass through a router lane (configuration prediction),
then queue for stage-wise scheduling onto per-model engines. Rounds fire
whenever a slot frees or a request becomes ready.
"""
from __future__ import annotations

import bisect
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field

from .baselines import PolicyKind, RuntimeCostEstimator, per_input_policy, per_workflow_policy
from .engine import EngineState, EventKind, EventQueue
from .predictor import (NoisyRouter, OracleRouter, PredictorBudget, build_chains,
                        predict_viable_set, update_queue_ema)
from .scenario import Scenario
from .scheduler import Request, apply_assignment, candidate_models, beam_schedule, fairness_violations
from .workload import ArrivalProcess, generate_accuracy_table, read_trace


@dataclass
class RequestRecord:
    rid: int
    arrival: float
    tier: str = ""
    predict_start: float | None = None
    predict_end: float | None = None
    router_evals: int = 0
    router_latency: float = 0.0
    viable_size: int = 0
    config: list[int] | None = None
    accurate: bool | None = None
    completed: float | None = None
    stages: dict[int, list] = field(default_factory=dict)  # agent -> [model, enqueued, dispatched, done]

    @property
    def latency(self) -> float | None:
        return None if self.completed is None else self.completed - self.arrival


@dataclass
class RunTrace:
    scenario: str
    policy: str
    seed: int
    rate: float
    beam_width: int
    mode: str
    horizon: float
    end_time: float = 0.0
    requests: list[RequestRecord] = field(default_factory=list)
    rounds: list[dict] = field(default_factory=list)
    occupancy: list[list] = field(default_factory=list)  # [t, in_system, waiting, occ...]
    fairness_violations: int = 0
    dropped: int = 0
    fixed_config: list[int] | None = None
    estimator: str = ""

    def completed(self) -> list[RequestRecord]:
        return [r for r in self.requests if r.completed is not None]

    def to_jsonl(self) -> str:
        head = {k: v for k, v in asdict(self).items() if k not in ("requests", "rounds", "occupancy")}
        if math.isinf(head["horizon"]):
            head["horizon"] = None
        lines = [json.dumps({"type": "run", **head}, sort_keys=True)]
        for r in self.requests:
            rec = asdict(r)
            rec["stages"] = {str(k): v for k, v in sorted(r.stages.items())}
            lines.append(json.dumps({"type": "request", **rec}, sort_keys=True))
        for rd in self.rounds:
            lines.append(json.dumps({"type": "round", **rd}, sort_keys=True))
        for s in self.occupancy:
            lines.append(json.dumps({"type": "occupancy", "sample": s}))
        return "\n".join(lines) + "\n"


RUNTIME_ESTIMATOR_NOTE = (
    "per-stage (stages ahead on model / slots) * mean service + mean service, "
    "summed over stages, frozen when the router answers"
)


class Simulation:
    def __init__(self, scenario: Scenario, seed: int | None = None, policy=None):
        self.sc = scenario
        self.seed = scenario.seed if seed is None else int(seed)
        self.policy = PolicyKind.parse(policy if policy is not None else scenario.policy)
        self.space = scenario.space
        self.graph = scenario.graph

        if scenario.trace is not None:
            arrivals, self.table = read_trace(scenario.trace, self.space)
            ids = self.table.ids()
        else:
            proc = ArrivalProcess(scenario.rate, scenario.count, scenario.duration, self.seed)
            arrivals = [float(t) for t in proc.times()]
            self.table = generate_accuracy_table(self.space, len(arrivals), scenario.mix,
                                                 scenario.violation_rate, self.seed)
            ids = list(range(len(arrivals)))
        self.arrivals = dict(zip(ids, arrivals))

        rc = scenario.router
        oracle = OracleRouter(self.table, rc.latency)
        self.router = oracle if rc.backend == "oracle" else NoisyRouter(oracle, rc.fp, rc.fn, self.seed)
        self.budget = PredictorBudget(alpha=rc.ema_alpha, minimum=rc.minimum_budget)
        self.chains = build_chains(self.space, cap=rc.chain_cap) if rc.chain_cap else build_chains(self.space)

        self.engines = [EngineState(m, scenario.slots[m], scenario.catalog.weights[m])
                        for m in range(len(scenario.catalog))]
        self.events = EventQueue()
        self.trace = RunTrace(scenario.name, self.policy.value, self.seed, scenario.rate,
                              scenario.scheduler.beam_width, scenario.sim.mode, scenario.sim.horizon)
        self.fixed = None
        if self.policy is PolicyKind.PER_WORKFLOW:
            self.fixed = per_workflow_policy(self.table, self.space)
            self.trace.fixed_config = list(self.fixed)
        if self.policy is PolicyKind.PER_INPUT_RUNTIME:
            self.trace.estimator = RUNTIME_ESTIMATOR_NOTE

        self.records: dict[int, RequestRecord] = {}
        self.active: dict[int, Request] = {}
        self.waiting: list[tuple[float, int]] = []
        self.lane_queue: deque[int] = deque()
        self.lanes_busy = 0
        self.pinned = [0] * len(self.engines)
        self.pinned_ids: set[int] = set()
        self.ready_pairs: dict[int, tuple] = {}  # rid -> (ready agents in order, usable models)
        self.in_system = 0
        self.round_at = None
        self.now = 0.0

    # bookkeeping

    def _sample(self):
        if self.sc.sim.occupancy_samples:
            self.trace.occupancy.append(
                [self.now, self.in_system, len(self.waiting)] + [e.occupancy for e in self.engines])

    def _trigger_round(self):
        if self.round_at != self.now:
            self.round_at = self.now
            self.events.push(self.now, EventKind.ROUND)

    def _mark_ready(self, r: Request):
        rec = self.records[r.rid]
        ready = r.ready()
        for a in ready:
            rec.stages.setdefault(a, [None, self.now, None, None])
            r.enqueued.setdefault(a, self.now)
        key = (r.arrival, r.rid)
        i = bisect.bisect_left(self.waiting, key)
        present = i < len(self.waiting) and self.waiting[i] == key
        if ready and not present:
            self.waiting.insert(i, key)
        elif not ready and present:
            del self.waiting[i]
        if ready:
            g = self.graph
            agents = sorted(ready, key=lambda a: (-g.depth_at(a), g.declared_at(a)))
            wants = frozenset(m for a in ready for m in candidate_models(r, a))
            self.ready_pairs[r.rid] = (agents, wants)

    # event handlers

    def _arrive(self, rid: int):
        self.records[rid] = RequestRecord(rid, self.now, self.table.tiers.get(rid, ""))
        self.in_system += 1
        self._sample()
        if self.policy.uses_router:
            self.lane_queue.append(rid)
            self._start_predictions()
        else:
            self._enqueue(rid, {self.fixed})
            self._trigger_round()

    def _start_predictions(self):
        while self.lanes_busy < self.sc.router.lanes and self.lane_queue:
            rid = self.lane_queue.popleft()
            self.lanes_busy += 1
            pred = predict_viable_set(rid, self.space, self.router, self.budget, chains=self.chains)
            rec = self.records[rid]
            rec.predict_start = self.now
            rec.router_evals = pred.evaluations
            rec.router_latency = pred.latency
            self.events.push(self.now + pred.latency, EventKind.PREDICTION_COMPLETE, (rid, pred))

    def _predicted(self, rid: int, pred):
        self.lanes_busy -= 1
        self.records[rid].predict_end = self.now
        if self.policy is PolicyKind.ARAGOG:
            viable = pred.viable.configs
        elif self.policy is PolicyKind.PER_INPUT_STATIC:
            viable = {per_input_policy(self.table[rid], self.space, self.policy)}
        else:
            est = RuntimeCostEstimator(
                [e.occupancy + p for e, p in zip(self.engines, self.pinned)],
                self.sc.slots, self.sc.service.mean)
            viable = {per_input_policy(self.table[rid], self.space, self.policy, est)}
        self._enqueue(rid, viable)
        self._start_predictions()
        self._trigger_round()

    def _enqueue(self, rid: int, viable):
        r = Request(rid, self.arrivals[rid], self.graph, frozenset(viable))
        self.records[rid].viable_size = len(r.viable)
        self.active[rid] = r
        if len(r.viable) == 1:
            (c,) = r.viable
            self.pinned_ids.add(rid)
            for m in c:
                self.pinned[m] += 1
        self._mark_ready(r)

    def _stage_done(self, rid: int, agent: int, model: int):
        self.engines[model].complete(rid, agent)
        r = self.active[rid]
        r.inflight.discard(agent)
        r.completed.add(agent)
        r.finished[agent] = self.now
        self.records[rid].stages[agent][3] = self.now
        if r.done:
            rec = self.records[rid]
            rec.completed = self.now
            rec.config = [r.prefix[a] for a in range(self.graph.n)]
            rec.accurate = self.table.is_accurate(rid, tuple(rec.config))
            del self.active[rid]
            self.ready_pairs.pop(rid, None)
            self.pinned_ids.discard(rid)
            self.in_system -= 1
            self._sample()
        else:
            self._mark_ready(r)
        self._trigger_round()

    def _waiting_items(self):
        for _, rid in list(self.waiting):
            r = self.active[rid]
            agents, wants = self.ready_pairs[rid]
            for a in agents:
                yield r, a, wants

    def _round(self):
        if not self.waiting or all(e.available == 0 for e in self.engines):
            return
        free0 = [e.available for e in self.engines]
        asg = beam_schedule([], self.engines, self.sc.scheduler, items=self._waiting_items())
        self.trace.fairness_violations += len(fairness_violations(asg))
        events, dropped = apply_assignment(asg, self.active, self.engines, self.now,
                                           self.sc.service, self.seed)
        self.trace.dropped += len(dropped)
        touched = set()
        for ev in events:
            rid, agent, model = ev.payload
            self.events.push(ev.time, ev.kind, ev.payload)
            r = self.active[rid]
            rec = self.records[rid]
            if not any(s[2] is not None for s in rec.stages.values()):
                update_queue_ema(self.budget, self.now - r.arrival)
            rec.stages[agent][0] = model
            rec.stages[agent][2] = self.now
            if rid in self.pinned_ids:
                self.pinned[model] -= 1
            touched.add(rid)
        for rid in sorted(touched):
            self._mark_ready(self.active[rid])
        if asg.triples or asg.skipped:
            self.trace.rounds.append({
                "t": self.now,
                "free": free0,
                "assigned": [list(t) for t in asg.triples],
                "skipped": len(asg.skipped),
                "considered": asg.considered,
                "utilization": asg.utilization,
                "flexibility": asg.flexibility,
            })

    def run(self) -> RunTrace:
        for rid, t in sorted(self.arrivals.items(), key=lambda kv: (kv[1], kv[0])):
            self.events.push(t, EventKind.ARRIVAL, rid)
        horizon = self.sc.sim.horizon if self.sc.sim.mode == "horizon" else math.inf
        while self.events:
            if self.events.peek_time() > horizon:
                self.now = horizon
                break
            ev = self.events.pop()
            self.now = ev.time
            if ev.kind is EventKind.ARRIVAL:
                self._arrive(ev.payload)
            elif ev.kind is EventKind.PREDICTION_COMPLETE:
                self._predicted(*ev.payload)
            elif ev.kind is EventKind.STAGE_COMPLETE:
                self._stage_done(*ev.payload)
            else:
                self._round()
        self.trace.end_time = self.now
        self.trace.requests = [self.records[rid] for rid in sorted(self.records)]
        return self.trace


def run(scenario: Scenario, seed: int | None = None, policy=None) -> RunTrace:
    return Simulation(scenario, seed, policy).run()
