"""An ideal-machine emulator: sequential traces, dynamic dependence DAGs and critical paths.

run_trace() executes ``main`` sequentially and records, for every executed
instruction, the loop iterations it belongs to and the memory cells it read and
wrote. A parallelization plan turns the trace into a DAG: unplanned code stays a
chain, a planned loop instance forks its iterations and joins them again, and
only the cross-iteration dependences the abstraction keeps are added back. The
longest path through the DAG is the number of instructions that must run one
after another on a machine with unlimited cores and free communication.

Calls are opaque: their result is the sum of their arguments and they read and
write the ``@mem`` cell. Division or remainder by zero yields zero.
"""

# pylint: disable=logging-fstring-interpolation, too-many-lines

# Global imports
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

# 3rd party imports
import networkx as nx

# local imports
import param
from analysis_parallel import (
    AnalysisError,
    EnumerationConfig,
    LoopSubgraph,
    ParallelPlan,
    SccKind,
    Technique,
    derive_plans,
    loop_sccs,
    loop_subgraph,
    source_plans,
)
from mini_pir import (
    Block,
    Instruction,
    IndexExpr,
    Opcode,
    Program,
    Ref,
    Region,
    RegionKind,
    VarKind,
)
from pdg_builder import IO, MEM, Pdg, build_pdg
from pspdg_core import HierarchicalNode, PsPdg

# (memory object, instance, cell index); globals have the empty instance
Cell = tuple[str, tuple[int, ...], int]

MEM_CELL: Cell = (MEM, (), 0)
IO_CELL: Cell = (IO, (), 0)


class EmulationError(Exception):
    """The program cannot be executed or a plan cannot be applied."""


class TraceCapExceeded(EmulationError):
    """The trace grew past the cap; ``trace`` holds what was recorded so far."""

    def __init__(self, cap: int, trace: "DynTrace") -> None:
        self.trace = trace
        super().__init__(f"trace cap of {cap} events exceeded")


class PlanConflictError(EmulationError):
    """Two different plans were given for one loop."""


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class Event:
    """One executed instruction.

    ``path`` lists (loop id, iteration) for the enclosing loops, outermost first;
    ``ivs`` the induction variable values visible to the instruction.
    """

    index: int
    ins: int
    path: tuple[tuple[str, int], ...]
    ivs: tuple[tuple[str, int], ...]
    reads: frozenset[Cell]
    writes: frozenset[Cell]


@dataclass(frozen=True)
class DynTrace:
    events: tuple[Event, ...] = ()
    loop_counts: dict[str, int] = field(default_factory=dict, compare=False, hash=False)
    output: tuple[int, ...] = ()
    memory: dict[Cell, int] = field(default_factory=dict, compare=False, hash=False)
    initial: dict[Cell, int] = field(default_factory=dict, compare=False, hash=False)
    uninitialized: tuple[tuple[int, Cell], ...] = ()
    truncated: bool = False

    def coverage(self) -> dict[str, float]:
        """Share of the dynamic instructions executed inside each loop."""
        total = len(self.events)
        return {loop: (count / total if total else 0.0) for loop, count in self.loop_counts.items()}


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class _Evaluator:
    """Evaluate one instruction against pluggable memory accessors."""

    def __init__(self, p: Program) -> None:
        self.p = p

    def _instance(self, scope_loops: tuple[str, ...], path: tuple[tuple[str, int], ...]) -> tuple[int, ...]:
        iterations = dict(path)
        return tuple(iterations.get(loop, 0) for loop in scope_loops)

    def _index(
        self, ins: Instruction, index: IndexExpr, env: dict[str, int], path, read: Callable[[Cell], int], reads: set
    ) -> int:
        if index.var is None:
            return index.offset
        if index.var in env and not index.opaque:
            return index.coef * env[index.var] + index.offset
        value = self._value(ins, Ref(index.var), env, path, read, reads)
        return index.coef * value + index.offset

    def cells(self, ins: Instruction, ref: Ref, env: dict[str, int], path, read, reads: set) -> list[Cell]:
        """Cells a reference names; a bare array or struct names all of them."""
        binding = self.p.binding(ins.id, ref.name)
        if binding is None:
            raise EmulationError(f"instruction {ins.id}: '{ref.name}' is not declared")
        instance = self._instance(binding.scope_loops, path)
        decl = binding.decl
        kind = decl.kind if decl is not None else VarKind.SCALAR
        if kind is VarKind.STRUCT:
            assert decl is not None
            if ref.field is None:
                return [(binding.key, instance, k) for k in range(len(decl.fields))]
            return [(binding.key, instance, decl.fields.index(ref.field))]
        if kind is VarKind.ARRAY:
            assert decl is not None
            if ref.index is None:
                return [(binding.key, instance, k) for k in range(decl.size)]
            cell = self._index(ins, ref.index, env, path, read, reads)
            if not 0 <= cell < decl.size:
                raise EmulationError(f"instruction {ins.id}: index {cell} outside {ref.name}[{decl.size}]")
            return [(binding.key, instance, cell)]
        return [(binding.key, instance, 0)]

    def _value(self, ins: Instruction, operand: Ref | int, env: dict[str, int], path, read, reads: set) -> int:
        if isinstance(operand, int):
            return operand
        binding = self.p.binding(ins.id, operand.name)
        if binding is not None and not binding.is_memory:
            return env.get(operand.name, 0)
        total = 0
        for cell in self.cells(ins, operand, env, path, read, reads):
            reads.add(cell)
            total += read(cell)
        return total

    def execute(
        self,
        ins: Instruction,
        env: dict[str, int],
        path: tuple[tuple[str, int], ...],
        read: Callable[[Cell], int],
        write: Callable[[Cell, int], None],
    ) -> tuple[set[Cell], set[Cell], int | None]:
        """Run one instruction.

        :return: cells read, cells written, and the printed value for print instructions
        """

        reads: set[Cell] = set()
        writes: set[Cell] = set()
        printed = None
        values = [self._value(ins, op, env, path, read, reads) for op in ins.operands]
        match ins.opcode:
            case Opcode.BARRIER | Opcode.SYNC:
                return reads, writes, None
            case Opcode.PRINT:
                printed = values[0] if values else 0
                reads.add(IO_CELL)
                writes.add(IO_CELL)
                read(IO_CELL)
                write(IO_CELL, printed)
                return reads, writes, printed
            case Opcode.CALL:
                reads.add(MEM_CELL)
                writes.add(MEM_CELL)
                read(MEM_CELL)
                write(MEM_CELL, 0)
                result = sum(values)
            case _ if len(values) == 2:
                result = binary(ins.op or "+", values[0], values[1])
            case _:
                result = values[0] if values else 0
        if ins.dest is not None:
            for cell in self.cells(ins, ins.dest, env, path, read, reads):
                writes.add(cell)
                write(cell, result)
        return reads, writes, printed


def binary(op: str, a: int, b: int) -> int:
    """Integer arithmetic with truncating division; dividing by zero gives 0.

    >>> binary("/", 7, 2), binary("%", -7, 2), binary("/", 1, 0)
    (3, -1, 0)
    """

    match op:
        case "+":
            return a + b
        case "-":
            return a - b
        case "*":
            return a * b
        case "/":
            return 0 if b == 0 else int(a / b)
        case "%":
            return 0 if b == 0 else a - b * int(a / b)
    raise EmulationError(f"unknown operator '{op}'")


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class _Tracer:
    def __init__(self, p: Program, cap: int, inputs: dict[str, list[int]] | None) -> None:
        self.p = p
        self.cap = cap
        self.evaluator = _Evaluator(p)
        self.memory: dict[Cell, int] = {}
        for decl in p.globals:
            values = list(inputs[decl.name]) if inputs and decl.name in inputs else decl.initial_values()
            values = (values + [0] * decl.cells)[: decl.cells]
            for k, value in enumerate(values):
                self.memory[(decl.name, (), k)] = value
        self.memory[MEM_CELL] = 0
        self.memory[IO_CELL] = 0
        self.initial = dict(self.memory)
        self.events: list[Event] = []
        self.loop_counts: dict[str, int] = {loop.id: 0 for loop in p.loops()}
        self.output: list[int] = []
        self.uninitialized: list[tuple[int, Cell]] = []
        self._current = 0

    def read(self, cell: Cell) -> int:
        if cell not in self.memory:
            self.uninitialized.append((self._current, cell))
            logging.warning(f"instruction {self._current} reads uninitialized {cell[0]}[{cell[2]}]")
            return 0
        return self.memory[cell]

    def write(self, cell: Cell, value: int) -> None:
        self.memory[cell] = value

    def trace(self, truncated: bool = False) -> DynTrace:
        return DynTrace(
            events=tuple(self.events),
            loop_counts=dict(self.loop_counts),
            output=tuple(self.output),
            memory=dict(self.memory),
            initial=self.initial,
            uninitialized=tuple(self.uninitialized),
            truncated=truncated,
        )

    def run(self, children: tuple[Region | Block, ...], env: dict[str, int], path: tuple[tuple[str, int], ...], regions: tuple[Region, ...]) -> None:
        for child in children:
            if isinstance(child, Block):
                for item in child.items:
                    if isinstance(item, Instruction):
                        self.step(item, env, path)
            elif child.is_loop:
                trip = child.trip if isinstance(child.trip, int) else self.memory.get((str(child.trip), (), 0), 0)
                for iteration in range(max(trip or 0, 0)):
                    inner = dict(env)
                    inner[child.iv or ""] = iteration
                    self.run(child.children, inner, path + ((child.id, iteration),), regions + (child,))
            elif child.kind is RegionKind.SINGLE and self._skip_single(regions, path):
                continue
            else:
                self.run(child.children, env, path, regions + (child,))

    @staticmethod
    def _skip_single(regions: tuple[Region, ...], path: tuple[tuple[str, int], ...]) -> bool:
        context = next(
            (r for r in reversed(regions) if r.kind in (RegionKind.PARALLEL_FOR, RegionKind.PARALLEL, RegionKind.TASK, RegionKind.SCOPE)),
            None,
        )
        if context is None or context.kind is not RegionKind.PARALLEL_FOR:
            return False
        return dict(path).get(context.id, 0) != 0

    def step(self, ins: Instruction, env: dict[str, int], path: tuple[tuple[str, int], ...]) -> None:
        if len(self.events) >= self.cap:
            raise TraceCapExceeded(self.cap, self.trace(truncated=True))
        self._current = ins.id
        reads, writes, printed = self.evaluator.execute(ins, env, path, self.read, self.write)
        if printed is not None:
            self.output.append(printed)
        ivs = tuple(sorted(env.items()))
        self.events.append(Event(len(self.events), ins.id, path, ivs, frozenset(reads), frozenset(writes)))
        for loop, _iteration in path:
            self.loop_counts[loop] = self.loop_counts.get(loop, 0) + 1


def run_trace(
    p: Program, inputs: dict[str, list[int]] | None = None, cap: int = param.default_trace_cap
) -> DynTrace:
    """Execute main sequentially and record every instruction.

    :param p: a validated program
    :param inputs: initial values per global, overriding the declared ones
    :param cap: maximum number of events
    :return: the trace
    :raises TraceCapExceeded: when more than cap instructions execute
    :raises EmulationError: on an out of range subscript or a missing main
    """

    main = p.function_map.get("main")
    if main is None:
        raise EmulationError("no function named 'main'")
    tracer = _Tracer(p, cap, inputs)
    tracer.run(main.children, {}, (), ())
    trace = tracer.trace()
    logging.info(f"trace: {len(trace.events)} events, {len(trace.uninitialized)} uninitialized reads")
    return trace


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class DynDag:
    """Dynamic dependence DAG; nodes below ``events`` are trace events, the rest fork and join nodes."""

    weights: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    events: int

    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.weights)))
        graph.add_edges_from(self.edges)
        return graph


def dependences(events: tuple[Event, ...] | list[Event]) -> list[tuple[int, int]]:
    """Event pairs ordered by a read-after-write, write-after-read or write-after-write on one cell.

    Each access depends on the most recent conflicting ones; earlier conflicts are
    ordered through them.
    """

    last_write: dict[Cell, int] = {}
    readers: dict[Cell, list[int]] = {}
    out: set[tuple[int, int]] = set()
    for index, event in enumerate(events):
        for cell in event.reads:
            if cell in last_write:
                out.add((last_write[cell], index))
        for cell in event.writes:
            if cell in last_write and last_write[cell] != index:
                out.add((last_write[cell], index))
            out.update((r, index) for r in readers.get(cell, ()) if r != index)
        for cell in event.reads:
            readers.setdefault(cell, []).append(index)
        for cell in event.writes:
            last_write[cell] = index
            readers[cell] = []
    return sorted(out)


def deciding_loop(a: Event, b: Event) -> str | None:
    """The loop whose iterations separate two events, None when they share every common iteration.

    >>> e = lambda path: Event(0, 0, path, (), frozenset(), frozenset())
    >>> deciding_loop(e((("L1", 0), ("L2", 1))), e((("L1", 0), ("L2", 3))))
    'L2'
    >>> deciding_loop(e((("L1", 0),)), e((("L3", 0),))) is None
    True
    """

    for (loop_a, it_a), (loop_b, it_b) in zip(a.path, b.path):
        if loop_a != loop_b:
            return None
        if it_a != it_b:
            return loop_a
    return None


def dynamic_dependences(t: DynTrace) -> dict[tuple[int, int], set[str | None]]:
    """Instruction pairs with a dynamic dependence, mapped to the loops carrying it (None: same iteration)."""
    out: dict[tuple[int, int], set[str | None]] = {}
    for a, b in dependences(t.events):
        ea, eb = t.events[a], t.events[b]
        out.setdefault((ea.ins, eb.ins), set()).add(deciding_loop(ea, eb))
    return out


def _split(items: list, parts: int) -> list[list]:
    """Split into contiguous groups of near-equal length.

    >>> _split([1, 2, 3, 4, 5], 2)
    [[1, 2], [3, 4, 5]]
    """

    parts = max(1, min(parts, len(items)))
    return [items[k * len(items) // parts : (k + 1) * len(items) // parts] for k in range(parts)]


@dataclass(frozen=True)
class _PlannedLoop:
    plan: ParallelPlan
    retained: frozenset[tuple[int, int]]
    mutex: tuple[frozenset[int], ...]
    ordered: tuple[frozenset[int], ...]
    chained: tuple[frozenset[int], ...]
    reduces: bool


def _planned_loop(g: PsPdg | Pdg, plan: ParallelPlan) -> _PlannedLoop:
    try:
        sub = loop_subgraph(g, plan.loop)
    except AnalysisError as e:
        raise EmulationError(f"plan {plan}: {e}") from e
    chained: list[frozenset[int]] = []
    if plan.technique is not Technique.DOALL:
        partition = loop_sccs(sub)
        if plan.technique is Technique.HELIX:
            sccs = [c for c, k in zip(partition.sccs, partition.kinds) if k is SccKind.SEQUENTIAL]
            groups = _split(sccs, plan.segments or len(sccs))
        else:
            groups = _split(list(partition.sccs), plan.stages or len(partition.sccs))
        for group in groups:
            nodes = frozenset().union(*group) if group else frozenset()
            chained.append(frozenset(sub.instructions[n] for n in nodes if n in sub.instructions))
    return _PlannedLoop(
        plan,
        sub.retained_pairs,
        tuple(sub.group_instructions(sub.mutex)),
        tuple(sub.group_instructions(sub.ordered)),
        tuple(chained),
        bool(sub.reduced),
    )


def plan_map(plans: Iterable[ParallelPlan] | dict[str, ParallelPlan]) -> dict[str, ParallelPlan]:
    """One plan per loop.

    :raises PlanConflictError: when a loop has two different plans
    """

    out: dict[str, ParallelPlan] = {}
    for plan in plans.values() if isinstance(plans, dict) else plans:
        if plan.loop in out and out[plan.loop] != plan:
            raise PlanConflictError(f"loop {plan.loop} has two plans: {out[plan.loop]} and {plan}")
        out[plan.loop] = plan
    return out


class _DagBuilder:
    """Series-parallel skeleton of a trace under a set of loop plans."""

    def __init__(self, t: DynTrace, planned: dict[str, _PlannedLoop]) -> None:
        self.t = t
        self.planned = planned
        self.weights: list[int] = [1] * len(t.events)
        self.edges: set[tuple[int, int]] = set()
        # (loop, iterations in trace order, each a list of event indices)
        self.instances: list[tuple[str, list[list[int]]]] = []

    def _node(self, weight: int) -> int:
        self.weights.append(weight)
        return len(self.weights) - 1

    def _link(self, prev: int | None, node: int) -> None:
        if prev is not None:
            self.edges.add((prev, node))

    def sequence(self, items: list[int], depth: int, prev: int | None) -> int | None:
        i = 0
        while i < len(items):
            event = self.t.events[items[i]]
            if len(event.path) == depth:
                self._link(prev, items[i])
                prev = items[i]
                i += 1
                continue
            loop = event.path[depth][0]
            j = i
            while j < len(items) and len(self.t.events[items[j]].path) > depth and self.t.events[items[j]].path[depth][0] == loop:
                j += 1
            prev = self.loop_instance(loop, items[i:j], depth, prev)
            i = j
        return prev

    def loop_instance(self, loop: str, items: list[int], depth: int, prev: int | None) -> int | None:
        iterations: dict[int, list[int]] = {}
        for index in items:
            iterations.setdefault(self.t.events[index].path[depth][1], []).append(index)
        planned = self.planned.get(loop)
        if planned is None:
            for body in iterations.values():
                prev = self.sequence(body, depth + 1, prev)
            return prev

        fork = self._node(0)
        self._link(prev, fork)
        tails = [self.sequence(body, depth + 1, fork) for body in iterations.values()]
        cost = math.ceil(math.log2(len(iterations))) if planned.reduces and len(iterations) > 1 else 0
        join = self._node(cost)
        for tail in tails:
            self._link(tail, join)
        self.instances.append((loop, list(iterations.values())))
        return join

    def dependences(self) -> None:
        for a, b in dependences(self.t.events):
            loop = deciding_loop(self.t.events[a], self.t.events[b])
            planned = self.planned.get(loop) if loop is not None else None
            if planned is None or (self.t.events[a].ins, self.t.events[b].ins) in planned.retained:
                self.edges.add((a, b))

    def _blocks(self, iterations: list[list[int]], group: frozenset[int]) -> list[list[int]]:
        blocks = [[i for i in body if self.t.events[i].ins in group] for body in iterations]
        return [block for block in blocks if block]

    def _chain(self, blocks: list[list[int]]) -> None:
        for first, second in zip(blocks, blocks[1:]):
            self.edges.add((first[-1], second[0]))

    def groups(self) -> None:
        for loop, iterations in self.instances:
            planned = self.planned[loop]
            for group in planned.ordered + planned.chained:
                self._chain(self._blocks(iterations, group))
        for loop, iterations in self.instances:
            for group in self.planned[loop].mutex:
                blocks = self._blocks(iterations, group)
                if len(blocks) < 2:
                    continue
                # blocks enter the section in the order they become ready
                ready = finish_times(self.dag())
                self._chain(sorted(blocks, key=lambda b: (ready[b[0]] - self.weights[b[0]], b[0])))

    def dag(self) -> DynDag:
        return DynDag(tuple(self.weights), frozenset(self.edges), len(self.t.events))


def build_dag(t: DynTrace, plans: Iterable[ParallelPlan] | dict[str, ParallelPlan], g: PsPdg | Pdg) -> DynDag:
    """The dynamic dependence DAG of a trace under loop plans.

    :param t: a sequential trace
    :param plans: at most one plan per loop
    :param g: the graph the plans were derived from; it decides which cross-iteration dependences stay
    :raises PlanConflictError: when a loop has two plans
    """

    planned = {loop: _planned_loop(g, plan) for loop, plan in plan_map(plans).items()}
    builder = _DagBuilder(t, planned)
    builder.sequence(list(range(len(t.events))), 0, None)
    builder.dependences()
    builder.groups()
    return builder.dag()


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def finish_times(d: DynDag) -> list[int]:
    """Longest weighted path ending at each node, computed in topological order.

    :raises EmulationError: when the graph has a cycle
    """

    successors: list[list[int]] = [[] for _ in d.weights]
    indegree = [0] * len(d.weights)
    for u, v in d.edges:
        successors[u].append(v)
        indegree[v] += 1
    finish = list(d.weights)
    ready = deque(n for n, k in enumerate(indegree) if k == 0)
    seen = 0
    while ready:
        node = ready.popleft()
        seen += 1
        for succ in successors[node]:
            finish[succ] = max(finish[succ], finish[node] + d.weights[succ])
            indegree[succ] -= 1
            if indegree[succ] == 0:
                ready.append(succ)
    if seen != len(d.weights):
        raise EmulationError("dynamic dependence graph has a cycle")
    return finish


def longest_path(d: DynDag) -> int:
    """Length of the critical path: the heaviest chain of node weights.

    >>> longest_path(DynDag((1, 1, 1, 0), frozenset({(0, 3), (1, 3), (3, 2)}), 3))
    2
    """

    return max(finish_times(d), default=0)


def oracle_longest_path(d: DynDag) -> int:
    """longest_path() computed by networkx on an edge-weighted copy, for cross-checking."""
    if d.events > param.oracle_event_limit:
        raise EmulationError(f"{d.events} events exceed the oracle limit of {param.oracle_event_limit}")
    graph = nx.DiGraph()
    graph.add_node("start")
    for node, weight in enumerate(d.weights):
        graph.add_edge("start", node, weight=weight)
    for u, v in d.edges:
        graph.add_edge(u, v, weight=d.weights[v])
    if not nx.is_directed_acyclic_graph(graph):
        raise EmulationError("dynamic dependence graph has a cycle")
    return int(nx.dag_longest_path_length(graph, weight="weight", default_weight=0))


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class CriticalPathReport:
    plans: tuple[str, ...]
    critical_path_length: int
    total_instructions: int
    speedup: float = 1.0

    def against(self, baseline: "CriticalPathReport") -> "CriticalPathReport":
        """This report with its speedup measured against another report's path."""
        speedup = baseline.critical_path_length / self.critical_path_length if self.critical_path_length else 1.0
        return CriticalPathReport(self.plans, self.critical_path_length, self.total_instructions, round(speedup, 4))


def critical_path(
    t: DynTrace, plans: Iterable[ParallelPlan] | dict[str, ParallelPlan], g: PsPdg | Pdg
) -> CriticalPathReport:
    """Critical path of a trace on the ideal machine under loop plans.

    :param t: a sequential trace
    :param plans: at most one plan per loop; no plans means sequential execution
    :param g: the PDG or PS-PDG the plans come from
    :return: the report, with speedup over sequential execution
    :raises PlanConflictError: when a loop has two plans
    """

    chosen = plan_map(plans)
    length = longest_path(build_dag(t, chosen, g))
    total = len(t.events)
    speedup = round(total / length, 4) if length else 1.0
    logging.debug(f"critical path {length}/{total} under {sorted(map(str, chosen.values()))}")
    return CriticalPathReport(tuple(sorted(str(p) for p in chosen.values())), length, total, speedup)


def best_plans(t: DynTrace, p: Program, g: PsPdg | Pdg, cfg: EnumerationConfig) -> dict[str, ParallelPlan]:
    """derive_plans() measuring each loop's candidates alone on the trace and keeping the shortest."""

    def shortest(_loop: str, candidates: list[ParallelPlan]) -> ParallelPlan:
        return min(candidates, key=lambda c: critical_path(t, [c], g).critical_path_length)

    return derive_plans(p, g, cfg, choose=shortest)


def linear_extensions(d: DynDag, k: int = param.default_extensions, seed: int = param.default_seed) -> list[list[int]]:
    """k random topological orders of the DAG, restricted to trace events.

    >>> linear_extensions(DynDag((1, 1), frozenset({(0, 1)}), 2), k=2)
    [[0, 1], [0, 1]]
    """

    rng = random.Random(seed)
    successors: list[list[int]] = [[] for _ in d.weights]
    indegree = [0] * len(d.weights)
    for u, v in sorted(d.edges):
        successors[u].append(v)
        indegree[v] += 1
    orders = []
    for _ in range(k):
        remaining = list(indegree)
        ready = [n for n, count in enumerate(remaining) if count == 0]
        order = []
        while ready:
            node = ready.pop(rng.randrange(len(ready)))
            if node < d.events:
                order.append(node)
            for succ in successors[node]:
                remaining[succ] -= 1
                if remaining[succ] == 0:
                    ready.append(succ)
        if len(order) != d.events:
            raise EmulationError("dynamic dependence graph has a cycle")
        orders.append(order)
    return orders


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class _LoopVariables:
    """Per-iteration copies a planned loop keeps: privatized, reduced (reducer function, None keeps
    the first written copy) and live-out names."""

    privatized: frozenset[str] = frozenset()
    reduced: dict[str, tuple[str | None, int]] = field(default_factory=dict)
    live_out: frozenset[str] = frozenset()
    any_producer: frozenset[str] = frozenset()

    @property
    def names(self) -> frozenset[str]:
        return self.privatized | frozenset(self.reduced) | self.live_out


def _reducer_function(g: PsPdg, node: str | None) -> str | None:
    payload = g.node_map[node].payload if node in g.node_map else None
    if isinstance(payload, HierarchicalNode) and payload.context and payload.context.startswith("ctx:fn:"):
        return payload.context.removeprefix("ctx:fn:")
    return None


def loop_variables(g: PsPdg | Pdg, loop: str) -> _LoopVariables:
    if not isinstance(g, PsPdg):
        return _LoopVariables()
    sub: LoopSubgraph = loop_subgraph(g, loop)
    context = g.loops[loop].context
    identities = {v.name: v.identity for v in g.variables_in(context)}
    reduced = {
        name: (_reducer_function(g, node), identities.get(name) or 0) for name, node in sub.reduced.items()
    }
    live_out = sub.live_out - frozenset(reduced)
    return _LoopVariables(sub.privatized - frozenset(reduced) - live_out, reduced, live_out, sub.any_producer)


def apply_reducer(p: Program, function: str, a: int, b: int) -> int:
    """Run a two-parameter reducer on one cell: the first parameter holds the merged value."""
    fn = p.function_map[function]
    env = {fn.params[0]: a, fn.params[1]: b}

    def run(children: tuple[Region | Block, ...]) -> None:
        for child in children:
            if isinstance(child, Region):
                run(child.children)
                continue
            for ins in child.items:
                if not isinstance(ins, Instruction) or ins.dest is None:
                    continue
                values = [op if isinstance(op, int) else env.get(op.name, 0) for op in ins.operands]
                match ins.opcode:
                    case Opcode.CALL:
                        env[ins.dest.name] = sum(values)
                    case _ if len(values) == 2:
                        env[ins.dest.name] = binary(ins.op or "+", values[0], values[1])
                    case _:
                        env[ins.dest.name] = values[0] if values else 0

    run(fn.children)
    return env[fn.params[0]]


Chain = tuple[tuple[tuple[str, tuple], int], ...]


class _Replayer:
    """Re-executes trace events in a given order, giving planned loops per-iteration copies."""

    def __init__(self, p: Program, t: DynTrace, variables: dict[str, _LoopVariables]) -> None:
        self.p = p
        self.t = t
        self.variables = variables
        self.evaluator = _Evaluator(p)
        self.memory: dict[Cell, int] = dict(t.initial)
        self.copies: dict[tuple[Cell, Chain], int] = {}
        self.written: set[tuple[Cell, Chain]] = set()
        self.remaining: dict[tuple[str, tuple], int] = {}
        for event in t.events:
            for instance in self._instances(event):
                self.remaining[instance] = self.remaining.get(instance, 0) + 1

    def _instances(self, event: Event) -> list[tuple[str, tuple]]:
        return [(loop, event.path[:depth]) for depth, (loop, _it) in enumerate(event.path) if loop in self.variables]

    def _chain(self, event: Event, name: str) -> Chain:
        return tuple(
            ((loop, event.path[:depth]), iteration)
            for depth, (loop, iteration) in enumerate(event.path)
            if loop in self.variables and name in self.variables[loop].names
        )

    def load(self, cell: Cell, chain: Chain) -> int:
        if not chain:
            return self.memory.get(cell, 0)
        key = (cell, chain)
        if key not in self.copies:
            (loop, _prefix), _iteration = chain[-1]
            reducer = self.variables[loop].reduced.get(cell[0])
            if reducer is not None and reducer[0] is not None:
                self.copies[key] = reducer[1]
            else:
                self.copies[key] = self.load(cell, chain[:-1])
        return self.copies[key]

    def store(self, cell: Cell, chain: Chain, value: int) -> None:
        if not chain:
            self.memory[cell] = value
            return
        self.copies[(cell, chain)] = value
        self.written.add((cell, chain))

    def merge(self, instance: tuple[str, tuple]) -> None:
        variables = self.variables[instance[0]]
        groups: dict[tuple[Cell, Chain], list[tuple[int, tuple[Cell, Chain]]]] = {}
        for key in [k for k in self.copies if k[1] and k[1][-1][0] == instance]:
            cell, chain = key
            groups.setdefault((cell, chain[:-1]), []).append((chain[-1][1], key))
        for (cell, parent), copies in groups.items():
            copies.sort()
            written = [key for _it, key in copies if key in self.written]
            name = cell[0]
            if name in variables.reduced:
                function = variables.reduced[name][0]
                if function is None:
                    if written:
                        self.store(cell, parent, self.copies[written[0]])
                else:
                    value = self.load(cell, parent)
                    for _it, key in copies:
                        value = apply_reducer(self.p, function, value, self.copies[key])
                    self.store(cell, parent, value)
            elif name in variables.live_out and written:
                self.store(cell, parent, self.copies[written[-1]])
            for _it, key in copies:
                del self.copies[key]
                self.written.discard(key)

    def step(self, event: Event) -> None:
        ins = self.p.instruction_map[event.ins]

        def read(cell: Cell) -> int:
            return self.load(cell, self._chain(event, cell[0]))

        def write(cell: Cell, value: int) -> None:
            self.store(cell, self._chain(event, cell[0]), value)

        self.evaluator.execute(ins, dict(event.ivs), event.path, read, write)
        for instance in reversed(self._instances(event)):
            self.remaining[instance] -= 1
            if self.remaining[instance] == 0:
                self.merge(instance)


def replay(
    p: Program,
    t: DynTrace,
    order: list[int],
    plans: Iterable[ParallelPlan] | dict[str, ParallelPlan],
    g: PsPdg | Pdg,
) -> dict[Cell, int]:
    """Execute the events of a trace in another order.

    Inside every planned loop, privatized, reduced and live-out variables get one copy per
    iteration; reduced copies are merged with the reducer and live-out copies are copied back
    from the last iteration that wrote them when the loop instance finishes.

    :param order: a permutation of the event indices, normally a linear extension of build_dag()
    :return: the final memory
    """

    variables = {loop: loop_variables(g, loop) for loop in plan_map(plans)}
    replayer = _Replayer(p, t, {loop: v for loop, v in variables.items() if v.names})
    for index in order:
        replayer.step(t.events[index])
    return replayer.memory


def observable(p: Program, memory: dict[Cell, int], excluded: frozenset[str] | set[str] = frozenset()) -> dict[Cell, int]:
    """The global cells a final memory is compared on."""
    names = set(p.global_map) - set(excluded)
    return {cell: value for cell, value in memory.items() if cell[0] in names}


def check_semantics(
    p: Program,
    t: DynTrace,
    plans: Iterable[ParallelPlan] | dict[str, ParallelPlan],
    g: PsPdg | Pdg,
    k: int = param.default_extensions,
    seed: int = param.default_seed,
) -> list[str]:
    """Replay k linear extensions of the plan's DAG and compare them with the sequential final memory.

    Variables that are private without a live-out copy, or whose live-out value may come from any
    producer, are left out of the comparison.

    :return: one message per differing cell, empty when every replay matches
    """

    chosen = plan_map(plans)
    excluded: set[str] = set()
    for loop in chosen:
        v = loop_variables(g, loop)
        excluded |= v.privatized | v.any_producer
    expected = observable(p, t.memory, excluded)
    problems = []
    for number, order in enumerate(linear_extensions(build_dag(t, chosen, g), k, seed)):
        got = observable(p, replay(p, t, order, chosen, g), excluded)
        for cell in sorted(expected.keys() | got.keys()):
            if expected.get(cell) != got.get(cell):
                problems.append(f"extension {number}: {cell[0]}[{cell[2]}] is {got.get(cell)}, expected {expected.get(cell)}")
    return problems


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
BASELINES = ("source", "sequential")


@dataclass(frozen=True)
class EmulationReport:
    """Critical paths of one trace under each abstraction's plans.

    ``ps`` measures the plans derived from the PS-PDG alone.
    """

    baseline: str
    sequential: CriticalPathReport
    pdg: CriticalPathReport
    source: CriticalPathReport
    ps: CriticalPathReport
    truncated: bool = False

    def rows(self) -> list[tuple[str, CriticalPathReport]]:
        return [
            ("sequential", self.sequential),
            ("pdg", self.pdg),
            ("source", self.source),
            ("ps-pdg", self.ps),
        ]


def emulate(
    p: Program,
    g: PsPdg,
    cfg: EnumerationConfig,
    baseline: str = "source",
    t: DynTrace | None = None,
    cap: int = param.default_trace_cap,
) -> EmulationReport:
    """Measure sequential, PDG, source and PS-PDG plans on one trace.

    :param p: the program
    :param g: its PS-PDG
    :param cfg: plan space limits
    :param baseline: "source" or "sequential", the denominator of every speedup
    :param t: a trace of p; run_trace(p, cap=cap) when omitted
    :return: the report; ``truncated`` is set when the trace hit the cap
    :raises EmulationError: for an unknown baseline or a program that cannot run
    """

    if baseline not in BASELINES:
        raise EmulationError(f"unknown baseline '{baseline}', expected one of {', '.join(BASELINES)}")
    if t is None:
        try:
            t = run_trace(p, cap=cap)
        except TraceCapExceeded as e:
            logging.warning(f"{e}, reporting on the partial trace")
            t = e.trace

    pdg = build_pdg(p)
    sequential = critical_path(t, {}, pdg)
    pdg_path = critical_path(t, best_plans(t, p, pdg, cfg), pdg)
    source = critical_path(t, source_plans(p, cfg), g)
    ps = critical_path(t, best_plans(t, p, g, cfg), g)

    base = source if baseline == "source" else sequential
    return EmulationReport(
        baseline,
        sequential.against(base),
        pdg_path.against(base),
        source.against(base),
        ps.against(base),
        t.truncated,
    )
