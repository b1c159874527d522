"""Loop parallelization analysis on a PDG or a PS-PDG.

For every loop the dependence graph restricted to the loop body is split into
strongly connected components. A component is sequential when it holds a
dependence carried by the loop that the PS-PDG features could not remove. The
loop is then a DOALL candidate (no sequential component, known trip count) or a
HELIX/DSWP candidate, and the options the compiler could choose are enumerated.
"""

# pylint: disable=logging-fstring-interpolation

# Global imports
import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Callable

# 3rd party imports
import networkx as nx

# local imports
from mini_pir import Program, RegionKind
from pdg_builder import Pdg, build_pdg, jk_pdg, node_instruction
from pspdg_core import (
    WIDENED,
    Directed,
    EdgeDep,
    HierarchicalNode,
    InstructionRef,
    PsPdg,
    SelectorKind,
    Synthetic,
    VariableKind,
)


class AnalysisError(Exception):
    """An analysis was asked about something the graph does not hold."""


class Technique(StrEnum):
    DOALL = "DOALL"
    HELIX = "HELIX"
    DSWP = "DSWP"


class SccKind(StrEnum):
    SEQUENTIAL = "sequential"
    PARALLEL = "parallel"


@dataclass(frozen=True)
class EnumerationConfig:
    """Plan space limits: core counts 1..cores, chunk sizes 1, 2, 4, ... (chunk_sizes of them)."""

    cores: int = 56
    chunk_sizes: int = 8
    coverage_threshold: float = 0.01

    def __post_init__(self) -> None:
        if self.cores < 1 or self.chunk_sizes < 1:
            raise AnalysisError(f"cores and chunk_sizes must be positive, got {self.cores}, {self.chunk_sizes}")
        if not 0.0 <= self.coverage_threshold <= 1.0:
            raise AnalysisError(f"coverage threshold {self.coverage_threshold} is not a fraction")

    @property
    def chunks(self) -> list[int]:
        """
        >>> EnumerationConfig().chunks
        [1, 2, 4, 8, 16, 32, 64, 128]
        """
        return [2**k for k in range(self.chunk_sizes)]


@dataclass(frozen=True, order=True)
class ParallelPlan:
    """One parallelization option. DOALL uses cores and chunk, HELIX segments and cores, DSWP stages and cores."""

    loop: str
    technique: Technique
    cores: int
    chunk: int = 0
    segments: int = 0
    stages: int = 0

    def __str__(self) -> str:
        match self.technique:
            case Technique.DOALL:
                return f"{self.loop}: DOALL(cores={self.cores}, chunk={self.chunk})"
            case Technique.HELIX:
                return f"{self.loop}: HELIX(segments={self.segments}, cores={self.cores})"
        return f"{self.loop}: DSWP(stages={self.stages}, cores={self.cores})"


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class SubEdge:
    src: str
    dst: str
    carried: bool
    variables: frozenset[str] = frozenset()
    undirected: bool = False


@dataclass(frozen=True)
class LoopSubgraph:
    """The dependence graph of one loop body, after the PS-PDG features were applied.

    ``mutex`` groups may not overlap in time, ``ordered`` groups run in iteration
    order. ``privatized`` and ``reduced`` name the loop's parallel semantic
    variables, ``live_out`` the variables whose last value escapes, ``any_producer``
    the variables whose escaping value may come from any iteration.
    """

    loop: str
    nodes: tuple[str, ...]
    edges: tuple[SubEdge, ...]
    trip_known: bool = True
    mutex: tuple[frozenset[str], ...] = ()
    ordered: tuple[frozenset[str], ...] = ()
    privatized: frozenset[str] = frozenset()
    reduced: dict[str, str | None] = field(default_factory=dict, compare=False, hash=False)
    live_out: frozenset[str] = frozenset()
    any_producer: frozenset[str] = frozenset()
    instructions: dict[str, int] = field(default_factory=dict, compare=False, hash=False)

    @property
    def carried(self) -> list[SubEdge]:
        return [e for e in self.edges if e.carried]

    @property
    def retained_pairs(self) -> frozenset[tuple[int, int]]:
        """Instruction pairs whose cross-iteration dependences stay ordered."""
        pairs = set()
        for edge in self.carried:
            src, dst = self.instructions.get(edge.src), self.instructions.get(edge.dst)
            if src is not None and dst is not None:
                pairs.add((src, dst))
        return frozenset(pairs)

    def group_instructions(self, groups: tuple[frozenset[str], ...]) -> list[frozenset[int]]:
        return [frozenset(self.instructions[n] for n in g if n in self.instructions) for g in groups]


@dataclass(frozen=True)
class SccPartition:
    loop: str
    sccs: tuple[frozenset[str], ...]
    kinds: tuple[SccKind, ...]
    carried: int = 0

    @property
    def sequential(self) -> int:
        return sum(1 for k in self.kinds if k is SccKind.SEQUENTIAL)

    @property
    def doall(self) -> bool:
        """No dependence crosses iterations, whether inside one SCC or between two."""
        return self.carried == 0


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def _pdg_subgraph(g: Pdg, loop: str) -> LoopSubgraph:
    info = g.loops.get(loop)
    if info is None:
        raise AnalysisError(f"unknown loop '{loop}'")
    members = info.members
    edges = []
    for e in g.sorted_edges():
        if e.src not in members or e.dst not in members or e.carried_by in info.ancestors:
            continue
        edges.append(SubEdge(e.src, e.dst, e.carried_by == loop, frozenset({e.var}) if e.var else frozenset()))
    instructions = {n: i for n in members if (i := node_instruction(n)) is not None}
    return LoopSubgraph(
        loop=loop,
        nodes=tuple(sorted(members, key=lambda n: g.positions.get(n, 0))),
        edges=tuple(edges),
        trip_known=info.trip_known,
        instructions=instructions,
    )


def _analysed_leaves(g: PsPdg, members: frozenset[str]) -> list[str]:
    kept = []
    for leaf in members:
        payload = g.node_map[leaf].payload
        if isinstance(payload, InstructionRef) or (isinstance(payload, Synthetic) and payload.kind == "head"):
            kept.append(leaf)
    return sorted(kept, key=g.position)


def apply_features(g: PsPdg, loop: str) -> LoopSubgraph:
    """The loop subgraph of a PS-PDG with its parallel semantics applied.

    Carried edges on privatizable or reducible variables of the loop and edges whose
    live-out value may come from any producer are removed; undirected edges become
    mutual exclusion groups, ORDER self-edges ordered groups.

    :param g: PS-PDG built by a front end
    :param loop: loop region id
    :return: the loop subgraph
    :raises AnalysisError: when the loop is unknown
    """

    meta = g.loops.get(loop)
    if meta is None:
        raise AnalysisError(f"unknown loop '{loop}'")
    nodes = _analysed_leaves(g, meta.members)
    inside = set(nodes)
    ctx = meta.context
    outer = {g.loops[a].context for a in meta.ancestors if a in g.loops}
    loop_node = meta.node if meta.node in g.node_map else g.root

    loop_vars = g.variables_in(ctx)
    psv_names = {v.name for v in loop_vars}
    reduced = {v.name: v.reducer for v in loop_vars if v.kind is VariableKind.REDUCIBLE}
    privatized = frozenset(v.name for v in loop_vars if v.kind is VariableKind.PRIVATIZABLE)

    def expand(node: str) -> list[str]:
        if isinstance(g.node_map[node].payload, HierarchicalNode):
            return [leaf for leaf in g.leaves(node) if leaf in inside]
        return [node] if node in inside else []

    edges: set[SubEdge] = set()
    mutex, ordered = [], []
    live_out: set[str] = set()
    any_producer: set[str] = set()
    for edge in sorted(g.edges, key=repr):
        if not isinstance(edge, Directed):
            group = frozenset(expand(edge.a)) | frozenset(expand(edge.b))
            if group and g.bearer_encloses(edge.context, loop_node):
                mutex.append(group)
            for a in expand(edge.a):
                for b in expand(edge.b):
                    edges.add(SubEdge(a, b, False, undirected=True))
                    edges.add(SubEdge(b, a, False, undirected=True))
            continue

        selector = edge.consumer_selector
        if selector is not None and selector.kind is SelectorKind.LAST_PRODUCER:
            live_out |= edge.variables
        if selector is not None and selector.kind is SelectorKind.ANY_PRODUCER:
            any_producer |= edge.variables
            continue
        if edge.context in outer:
            continue
        carried = edge.context in (ctx, WIDENED)
        if carried and edge.variables and edge.variables <= psv_names:
            continue
        sources, targets = expand(edge.producer), expand(edge.consumer)
        if carried and edge.dep is EdgeDep.ORDER and edge.producer == edge.consumer and sources:
            ordered.append(frozenset(sources))
        for a in sources:
            for b in targets:
                edges.add(SubEdge(a, b, carried, edge.variables))

    return LoopSubgraph(
        loop=loop,
        nodes=tuple(nodes),
        edges=tuple(sorted(edges, key=lambda e: (e.src, e.dst, e.carried, sorted(e.variables), e.undirected))),
        trip_known=meta.trip_known,
        mutex=tuple(sorted(set(mutex), key=sorted)),
        ordered=tuple(sorted(set(ordered), key=sorted)),
        privatized=privatized,
        reduced=reduced,
        live_out=frozenset(live_out),
        any_producer=frozenset(any_producer),
        instructions={n: i for n in nodes if (i := g.instruction_of(n)) is not None},
    )


def loop_subgraph(g: PsPdg | Pdg, loop: str) -> LoopSubgraph:
    return apply_features(g, loop) if isinstance(g, PsPdg) else _pdg_subgraph(g, loop)


def loop_sccs(g: PsPdg | Pdg | LoopSubgraph, loop: str | None = None) -> SccPartition:
    """Strongly connected components of a loop body, in order of their first node.

    :param g: a graph and a loop id, or an already built loop subgraph
    :raises AnalysisError: when the loop is unknown
    """

    sub = g if isinstance(g, LoopSubgraph) else loop_subgraph(g, loop or "")
    graph = nx.DiGraph()
    graph.add_nodes_from(sub.nodes)
    graph.add_edges_from((e.src, e.dst) for e in sub.edges)
    order = {n: i for i, n in enumerate(sub.nodes)}
    sccs = sorted((frozenset(c) for c in nx.strongly_connected_components(graph)), key=lambda c: min(order[n] for n in c))
    kinds = tuple(
        SccKind.SEQUENTIAL if any(e.carried and e.src in c and e.dst in c for e in sub.edges) else SccKind.PARALLEL
        for c in sccs
    )
    return SccPartition(sub.loop, tuple(sccs), kinds, len(sub.carried))


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def doall_plans(loop: str, cfg: EnumerationConfig) -> list[ParallelPlan]:
    return [
        ParallelPlan(loop, Technique.DOALL, cores, chunk=chunk)
        for cores in range(1, cfg.cores + 1)
        for chunk in cfg.chunks
    ]


def plans_for(sub: LoopSubgraph, cfg: EnumerationConfig) -> list[ParallelPlan]:
    """Every option for one loop subgraph; a DOALL loop is only considered as DOALL."""

    partition = loop_sccs(sub)
    if not partition.sccs:
        logging.info(f"loop {sub.loop}: EmptyLoop, no plans")
        return []
    if partition.doall and sub.trip_known:
        return doall_plans(sub.loop, cfg)

    plans = [
        ParallelPlan(sub.loop, Technique.HELIX, cores, segments=segments)
        for segments in range(1, partition.sequential + 1)
        for cores in range(1, cfg.cores + 1)
    ]
    plans += [
        ParallelPlan(sub.loop, Technique.DSWP, cores, stages=stages)
        for stages in range(2, min(len(partition.sccs), cfg.cores) + 1)
        for cores in range(stages, cfg.cores + 1)
    ]
    return plans


def enumerate_plans(
    g: PsPdg | Pdg, loop: str, cfg: EnumerationConfig, coverage: dict[str, float] | None = None
) -> list[ParallelPlan]:
    """Enumerate the parallelization options of a loop.

    :param g: PDG or PS-PDG
    :param loop: loop region id
    :param cfg: plan space limits
    :param coverage: fraction of dynamic instructions per loop; loops below the threshold get no plans
    :return: plans in a deterministic order
    :raises AnalysisError: when the loop is unknown
    """

    sub = loop_subgraph(g, loop)
    if coverage is not None and coverage.get(loop, 0.0) < cfg.coverage_threshold:
        logging.info(f"loop {loop}: coverage {coverage.get(loop, 0.0):.4f} below threshold")
        return []
    return plans_for(sub, cfg)


def source_enumeration(p: Program, loop: str, cfg: EnumerationConfig) -> list[ParallelPlan]:
    """Options a programmer-parallelized loop leaves open: core count and chunk size."""
    region = p.region_map.get(loop)
    if region is None or region.kind is not RegionKind.PARALLEL_FOR:
        return []
    return doall_plans(loop, cfg)


def _contains_ordered(p: Program, loop: str) -> bool:
    region = p.region_map[loop]
    return any(
        r.kind is RegionKind.ORDERED and region.position < r.position < region.end_position
        for r in p.region_map.values()
    )


def source_plans(p: Program, cfg: EnumerationConfig) -> dict[str, ParallelPlan]:
    """The plan the programmer encoded: one per worksharing loop, HELIX when it holds an ordered region."""
    plans = {}
    for loop in p.loops():
        if loop.kind is not RegionKind.PARALLEL_FOR:
            continue
        if _contains_ordered(p, loop.id):
            plans[loop.id] = ParallelPlan(loop.id, Technique.HELIX, cfg.cores, segments=1)
        else:
            plans[loop.id] = ParallelPlan(loop.id, Technique.DOALL, cfg.cores, chunk=1)
    return plans


def plan_candidates(g: PsPdg | Pdg, loop: str, cfg: EnumerationConfig) -> list[ParallelPlan]:
    """The strongest options of a loop: full-width DOALL, or max-segment HELIX and max-stage DSWP."""
    sub = loop_subgraph(g, loop)
    partition = loop_sccs(sub)
    if not partition.sccs:
        return []
    if partition.doall and sub.trip_known:
        return [ParallelPlan(loop, Technique.DOALL, cfg.cores, chunk=1)]
    candidates = []
    if partition.sequential:
        candidates.append(ParallelPlan(loop, Technique.HELIX, cfg.cores, segments=partition.sequential))
    stages = min(len(partition.sccs), cfg.cores)
    if stages >= 2:
        candidates.append(ParallelPlan(loop, Technique.DSWP, cfg.cores, stages=stages))
    return candidates


def derive_plans(
    p: Program,
    g: PsPdg | Pdg,
    cfg: EnumerationConfig,
    choose: Callable[[str, list[ParallelPlan]], ParallelPlan] | None = None,
) -> dict[str, ParallelPlan]:
    """Pick one plan per loop from plan_candidates().

    :param choose: picks among the candidates of a loop, by default the first one
    :return: loop id to plan, loops without options are left out
    """

    plans = {}
    for loop in p.loops():
        candidates = plan_candidates(g, loop.id, cfg)
        if not candidates:
            continue
        plans[loop.id] = choose(loop.id, candidates) if choose and len(candidates) > 1 else candidates[0]
    logging.debug(f"derive_plans: {sorted(str(p) for p in plans.values())}")
    return plans


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class OptionRow:
    loop: str
    pdg: int
    jk: int
    ps: int
    source: int
    note: str = ""


@dataclass(frozen=True)
class OptionReport:
    rows: tuple[OptionRow, ...] = ()

    @property
    def total(self) -> OptionRow:
        return OptionRow(
            "total",
            sum(r.pdg for r in self.rows),
            sum(r.jk for r in self.rows),
            sum(r.ps for r in self.rows),
            sum(r.source for r in self.rows),
        )


def count_options(
    p: Program, g: PsPdg, cfg: EnumerationConfig, coverage: dict[str, float] | None = None
) -> OptionReport:
    """Count the options of every loop for the PDG, the J&K-style PDG, the PS-PDG and the source.

    A loop the PS-PDG proves DOALL counts exactly its DOALL options; any other loop counts
    its PS-PDG options together with the PDG and source options. Loops below the coverage
    threshold are left out when coverage is given.

    :param p: the program
    :param g: its PS-PDG
    :param cfg: plan space limits
    :param coverage: fraction of dynamic instructions per loop, from a trace
    :return: one row per loop
    """

    pdg = build_pdg(p)
    jk = jk_pdg(p, pdg)
    rows = []
    for loop in p.loops():
        if coverage is not None and coverage.get(loop.id, 0.0) < cfg.coverage_threshold:
            continue
        pdg_plans = set(plans_for(loop_subgraph(pdg, loop.id), cfg))
        jk_plans = set(plans_for(loop_subgraph(jk, loop.id), cfg))
        sub = loop_subgraph(g, loop.id)
        partition = loop_sccs(sub)
        ps_plans = set(plans_for(sub, cfg))
        source = set(source_enumeration(p, loop.id, cfg))
        if not (partition.doall and sub.trip_known):
            ps_plans |= pdg_plans | source
        note = "EmptyLoop" if not partition.sccs else ""
        rows.append(OptionRow(loop.id, len(pdg_plans), len(jk_plans), len(ps_plans), len(source), note))
    return OptionReport(tuple(rows))
