"""Workflow graphs, model catalogs and the configuration lattice.

A configuration assigns one model index to every agent of a workflow.
Configurations are plain tuples of ints indexed by the graph's canonical
agent ordering (topological, declaration order breaking ties). Model index
0 is the smallest model; the upgrade order compares tuples entrywise.
"""
from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

Configuration = tuple[int, ...]


class WorkflowError(ValueError):
    """Raised for malformed graphs, catalogs or configurations."""


class CycleError(WorkflowError):
    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__("workflow graph has a cycle: " + " -> ".join(self.cycle))


@dataclass(frozen=True)
class ModelCatalog:
    names: tuple[str, ...]
    costs: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        n = len(self.names)
        if n < 2:
            raise WorkflowError("a model catalog needs at least 2 models")
        if len(set(self.names)) != n:
            raise WorkflowError("model names must be unique")
        if len(self.costs) != n or len(self.weights) != n:
            raise WorkflowError("costs and weights must have one entry per model")
        if any(c <= 0 for c in self.costs) or any(w <= 0 for w in self.weights):
            raise WorkflowError("costs and weights must be positive")
        if any(a >= b for a, b in zip(self.costs, self.costs[1:])):
            raise WorkflowError("static cost must strictly increase with model index")
        if any(a <= b for a, b in zip(self.weights, self.weights[1:])):
            raise WorkflowError("throughput weight must strictly decrease with model index")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def largest(self) -> int:
        return len(self.names) - 1


@dataclass(frozen=True)
class WorkflowGraph:
    """Validated DAG of agents.

    ``agents`` keeps declaration order; ``order`` is the canonical
    (topological) order and the index space used by configurations.
    """

    agents: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    order: tuple[str, ...]
    depth: dict[str, int] = field(compare=False)
    preds: tuple[frozenset[int], ...] = field(compare=False, repr=False)
    succs: tuple[frozenset[int], ...] = field(compare=False, repr=False)

    @property
    def n(self) -> int:
        return len(self.agents)

    def index(self, agent: str) -> int:
        """Canonical position of ``agent``."""
        return self.order.index(agent)

    def depth_at(self, pos: int) -> int:
        return self.depth[self.order[pos]]

    def declared_at(self, pos: int) -> int:
        return self.agents.index(self.order[pos])

    def sources(self) -> list[int]:
        return [i for i, p in enumerate(self.preds) if not p]


def build_graph(agents: Iterable[str], edges: Iterable[Sequence[str]]) -> WorkflowGraph:
    agents = tuple(agents)
    edges = tuple((str(a), str(b)) for a, b in edges)
    if not agents:
        raise WorkflowError("a workflow needs at least one agent")
    if len(set(agents)) != len(agents):
        raise WorkflowError("agent identifiers must be unique")
    declared = set(agents)
    for a, b in edges:
        if a not in declared or b not in declared:
            missing = a if a not in declared else b
            raise WorkflowError(f"edge {a}->{b} references undeclared agent {missing!r}")
    if len(set(edges)) != len(edges):
        raise WorkflowError("duplicate edges")

    out: dict[str, list[str]] = {a: [] for a in agents}
    indeg = {a: 0 for a in agents}
    for a, b in edges:
        out[a].append(b)
        indeg[b] += 1

    # Kahn's algorithm, smallest declaration index first
    pos = {a: i for i, a in enumerate(agents)}
    heap = [pos[a] for a in agents if indeg[a] == 0]
    heapq.heapify(heap)
    order: list[str] = []
    remaining = dict(indeg)
    while heap:
        a = agents[heapq.heappop(heap)]
        order.append(a)
        for b in out[a]:
            remaining[b] -= 1
            if remaining[b] == 0:
                heapq.heappush(heap, pos[b])
    if len(order) != len(agents):
        raise CycleError(_find_cycle(agents, out, set(order)))

    depth: dict[str, int] = {}
    for a in reversed(order):
        depth[a] = 1 + max((depth[b] for b in out[a]), default=-1)

    canon = {a: i for i, a in enumerate(order)}
    preds = [set() for _ in order]
    succs = [set() for _ in order]
    for a, b in edges:
        preds[canon[b]].add(canon[a])
        succs[canon[a]].add(canon[b])
    return WorkflowGraph(
        agents=agents,
        edges=edges,
        order=tuple(order),
        depth=depth,
        preds=tuple(frozenset(p) for p in preds),
        succs=tuple(frozenset(s) for s in succs),
    )


def _find_cycle(agents, out, done) -> list[str]:
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(a):
        color[a] = 1
        stack.append(a)
        for b in out[a]:
            if b in done:
                continue
            if color.get(b) == 1:
                return stack[stack.index(b):] + [b]
            if b not in color:
                found = visit(b)
                if found:
                    return found
        stack.pop()
        color[a] = 2
        return None

    for a in agents:
        if a not in done and a not in color:
            found = visit(a)
            if found:
                return found
    raise AssertionError("unreachable: Kahn left nodes but no cycle found")


def topo_order(graph: WorkflowGraph) -> list[str]:
    return list(graph.order)


class Order(enum.Enum):
    EQUAL = "equal"
    LESS = "x<=y"
    GREATER = "y<=x"
    INCOMPARABLE = "incomparable"


def compare_configs(x: Sequence[int], y: Sequence[int]) -> Order:
    if len(x) != len(y):
        raise WorkflowError(f"configuration length mismatch: {len(x)} vs {len(y)}")
    below = above = False
    for a, b in zip(x, y):
        if a < b:
            below = True
        elif a > b:
            above = True
    if below and above:
        return Order.INCOMPARABLE
    if below:
        return Order.LESS
    if above:
        return Order.GREATER
    return Order.EQUAL


def leq(x: Sequence[int], y: Sequence[int]) -> bool:
    """True when ``y`` is ``x`` or an upgrade of it."""
    return all(a <= b for a, b in zip(x, y))


def static_cost(c: Sequence[int], catalog: ModelCatalog) -> float:
    return sum(catalog.costs[m] for m in c)


class ConfigSpace:
    """The M^N configuration lattice of a graph under a catalog."""

    def __init__(self, graph: WorkflowGraph, catalog: ModelCatalog):
        self.graph = graph
        self.catalog = catalog
        self.n = graph.n
        self.m = len(catalog)
        self.top: Configuration = (self.m - 1,) * self.n
        self.base: Configuration = (0,) * self.n

    @classmethod
    def of_size(cls, n_agents: int, n_models: int) -> "ConfigSpace":
        """Chain workflow ``a0 -> a1 -> ...`` over a synthetic catalog."""
        agents = [f"a{i}" for i in range(n_agents)]
        graph = build_graph(agents, list(zip(agents, agents[1:])))
        catalog = ModelCatalog(
            names=tuple(f"m{j}" for j in range(n_models)),
            costs=tuple(2.0 ** j for j in range(n_models)),
            weights=tuple(float(n_models - j) for j in range(n_models)),
        )
        return cls(graph, catalog)

    def __len__(self) -> int:
        return self.m ** self.n

    def __iter__(self) -> Iterator[Configuration]:
        return itertools.product(range(self.m), repeat=self.n)

    def __contains__(self, c) -> bool:
        return len(c) == self.n and all(isinstance(v, int) and 0 <= v < self.m for v in c)

    def validate(self, c: Sequence[int]) -> Configuration:
        c = tuple(c)
        if len(c) != self.n:
            raise WorkflowError(f"configuration {c} has {len(c)} entries, expected {self.n}")
        if not all(0 <= v < self.m for v in c):
            raise WorkflowError(f"configuration {c} has a model index outside [0, {self.m})")
        return c

    def rank(self, c: Sequence[int]) -> int:
        """Position of ``c`` in the canonical (lexicographic) enumeration."""
        r = 0
        for v in c:
            r = r * self.m + v
        return r

    def unrank(self, r: int) -> Configuration:
        out = []
        for _ in range(self.n):
            r, v = divmod(r, self.m)
            out.append(v)
        return tuple(reversed(out))

    def successors(self, c: Sequence[int]) -> list[Configuration]:
        return upgrade_successors(c, self.m)

    def cost(self, c: Sequence[int]) -> float:
        return static_cost(c, self.catalog)

    def cost_key(self, c: Sequence[int]):
        """Sort key: cheapest first, lexicographic tie-break."""
        return (self.cost(c), tuple(c))


def upgrade_successors(c: Sequence[int], n_models: int) -> list[Configuration]:
    c = tuple(c)
    return [c[:i] + (v + 1,) + c[i + 1:] for i, v in enumerate(c) if v + 1 < n_models]
