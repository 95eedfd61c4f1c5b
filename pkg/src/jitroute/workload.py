"""Synthetic workloads: Poisson arrivals and per-request accuracy tables.

An accuracy table maps each request id to the set of configurations that
are as accurate as the all-largest configuration for that request.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .workflow import ConfigSpace, Configuration, WorkflowError, leq

MAX_TABLE_SPACE = 1 << 16
BITMAP_LIMIT = 4096


@dataclass(frozen=True)
class DifficultyTier:
    """One difficulty class of requests.

    ``base_prob`` is the chance that even the all-smallest configuration is
    accurate (the whole lattice then qualifies). Otherwise the accurate set
    is the up-closure of ``generators`` random configurations whose entries
    are Binomial(M-1, ``level``). Zero generators gives the top only.
    """

    name: str
    weight: float = 1.0
    base_prob: float = 0.0
    generators: int = 0
    level: float = 0.5


EASY = DifficultyTier("easy", weight=0.5, base_prob=0.5, generators=3, level=0.25)
MEDIUM = DifficultyTier("medium", weight=0.35, base_prob=0.0, generators=3, level=0.5)
HARD = DifficultyTier("hard", weight=0.15)
DEFAULT_MIX = (EASY, MEDIUM, HARD)


@dataclass
class AccuracyTable:
    space: ConfigSpace
    sets: dict[int, frozenset[Configuration]] = field(default_factory=dict)
    tiers: dict[int, str] = field(default_factory=dict)

    def __getitem__(self, rid: int) -> frozenset[Configuration]:
        return self.sets[rid]

    def __contains__(self, rid) -> bool:
        return rid in self.sets

    def __len__(self) -> int:
        return len(self.sets)

    def ids(self) -> list[int]:
        return sorted(self.sets)

    def is_accurate(self, rid: int, c: Configuration) -> bool:
        return tuple(c) in self.sets[rid]

    def add(self, rid: int, accurate: Iterable[Sequence[int]], tier: str = ""):
        s = frozenset(self.space.validate(c) for c in accurate) | {self.space.top}
        self.sets[rid] = s
        if tier:
            self.tiers[rid] = tier


def upgrade_edges(space: ConfigSpace) -> list[tuple[Configuration, Configuration]]:
    return [(c, s) for c in space for s in space.successors(c)]


def violated_edges(s: frozenset, edges) -> int:
    """Upgrade edges leaving the accurate set (accurate -> inaccurate)."""
    return sum(1 for a, b in edges if a in s and b not in s)


def up_closure(space: ConfigSpace, gens: Iterable[Configuration]) -> set[Configuration]:
    gens = list(gens)
    return {c for c in space if any(leq(g, c) for g in gens)}


def _check_space(space: ConfigSpace):
    if len(space) > MAX_TABLE_SPACE:
        raise WorkflowError(
            f"configuration space of {len(space)} is too large to generate labels for"
        )


def generate_accuracy_table(
    space: ConfigSpace,
    n_requests: int,
    mix: Sequence[DifficultyTier] = DEFAULT_MIX,
    violation_rate: float = 0.0,
    seed: int = 0,
) -> AccuracyTable:
    """Draw one accuracy set per request id ``0..n_requests-1``.

    Violations delete accurate members so that, aggregated over all
    requests generated so far, the fraction of upgrade edges going from an
    accurate to an inaccurate configuration tracks ``violation_rate``.
    """
    if not 0.0 <= violation_rate <= 0.1:
        raise WorkflowError("violation rate must lie in [0, 0.1]")
    if not mix:
        raise WorkflowError("difficulty mix is empty")
    _check_space(space)
    rng = np.random.default_rng([seed, 0xACC])
    weights = np.array([t.weight for t in mix], dtype=float)
    if (weights < 0).any() or weights.sum() <= 0:
        raise WorkflowError("tier weights must be nonnegative with a positive sum")
    weights = weights / weights.sum()

    configs = list(space)
    everything = frozenset(configs)
    edges = upgrade_edges(space) if violation_rate > 0 else []
    preds: dict[Configuration, list[Configuration]] = {c: [] for c in configs}
    for a, b in edges:
        preds[b].append(a)

    table = AccuracyTable(space)
    target_total = 0.0
    achieved = 0
    for rid in range(n_requests):
        tier = mix[int(rng.choice(len(mix), p=weights))]
        accurate = _draw_upset(space, tier, rng, everything)
        if violation_rate > 0:
            target_total += violation_rate * len(edges)
            gap = int(round(target_total)) - achieved
            if gap > 0:
                accurate, made = _inject_violations(space, accurate, gap, preds, rng)
                achieved += made
        table.add(rid, accurate, tier.name)
    return table


def _draw_upset(space, tier, rng, everything) -> set:
    if tier.base_prob > 0 and rng.random() < tier.base_prob:
        return set(everything)
    gens = []
    for _ in range(tier.generators):
        g = tuple(int(v) for v in rng.binomial(space.m - 1, tier.level, size=space.n))
        if g == space.base:
            # base membership is governed by base_prob alone
            i = int(rng.integers(space.n))
            g = g[:i] + (1,) + g[i + 1:]
        gens.append(g)
    s = up_closure(space, gens)
    s.add(space.top)
    return s


def _inject_violations(space, accurate, gap, preds, rng):
    """Delete members until ``gap`` new violated edges exist (or no move helps)."""
    s = set(accurate)
    made = 0
    while made < gap:
        options = []
        for c in sorted(s):
            if c == space.top:
                continue
            gained = sum(1 for p in preds[c] if p in s)
            lost = sum(1 for nxt in space.successors(c) if nxt not in s)
            delta = gained - lost
            if 0 < delta <= gap - made:
                options.append((c, delta))
        if not options:
            break
        c, delta = options[int(rng.integers(len(options)))]
        s.discard(c)
        made += delta
    return s, made


def is_upward_closed(space: ConfigSpace, s) -> bool:
    return all(n in s for c in s for n in space.successors(c))


@dataclass(frozen=True)
class ArrivalProcess:
    rate: float
    count: int | None = None
    duration: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.rate <= 0:
            raise WorkflowError("arrival rate must be positive")
        if self.count is None and self.duration is None:
            raise WorkflowError("arrival process needs a count or a duration")

    def times(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, 0xA22])
        if self.count is not None:
            gaps = rng.exponential(1.0 / self.rate, size=self.count)
            t = np.cumsum(gaps)
            if self.duration is not None:
                t = t[t <= self.duration]
            return t
        out = []
        now = 0.0
        while True:
            now += rng.exponential(1.0 / self.rate)
            if now > self.duration:
                return np.array(out)
            out.append(now)


# trace files: one JSON object per line


def _encode_set(space: ConfigSpace, s) -> dict:
    if len(space) <= BITMAP_LIMIT:
        bits = 0
        for c in s:
            bits |= 1 << space.rank(c)
        return {"bitmap": format(bits, "x")}
    return {"configs": sorted(list(c) for c in s)}


def _decode_set(space: ConfigSpace, rec: Mapping) -> list[Configuration]:
    if "bitmap" in rec:
        bits = int(rec["bitmap"], 16)
        out = []
        r = 0
        while bits:
            if bits & 1:
                out.append(space.unrank(r))
            bits >>= 1
            r += 1
        return out
    return [tuple(c) for c in rec["configs"]]


def write_trace(path, arrivals: Sequence[float], table: AccuracyTable):
    space = table.space
    with open(path, "w") as fh:
        for rid, t in zip(table.ids(), arrivals):
            rec = {"request": rid, "arrival": float(t)}
            rec.update(_encode_set(space, table[rid]))
            if rid in table.tiers:
                rec["tier"] = table.tiers[rid]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_trace(path, space: ConfigSpace) -> tuple[list[float], AccuracyTable]:
    arrivals = []
    last_id = -1
    table = AccuracyTable(space)
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rid = int(rec["request"])
                t = float(rec["arrival"])
                table.add(rid, _decode_set(space, rec), rec.get("tier", ""))
            except (KeyError, ValueError, TypeError) as exc:
                raise WorkflowError(f"{path}:{lineno}: bad trace record ({exc})") from exc
            if rid <= last_id:
                raise WorkflowError(f"{path}:{lineno}: request ids must increase")
            last_id = rid
            arrivals.append(t)
    if any(b < a for a, b in zip(arrivals, arrivals[1:])):
        raise WorkflowError(f"{path}: arrival timestamps must be nondecreasing")
    return arrivals, table
