"""Map programs annotated with OpenMP-style regions and clauses onto a PS-PDG.

The mapping follows three groups of semantics:

- declarations of independence: worksharing loops drop the dependences they carry,
  sibling tasks drop their mutual dependences unless a ``depend`` pair links them or a
  barrier separates them, and ``nowait`` lifts the implicit barrier that ends a
  worksharing construct inside a parallel region;
- data properties: private, firstprivate, threadprivate and reduction become parallel
  semantic variables, firstprivate/lastprivate/shared become data selectors;
- ordering: critical, atomic, single, ordered and task regions become hierarchical
  nodes with undirected edges, traits or ordered self-edges.
"""

# pylint: disable=logging-fstring-interpolation

# Global imports
import logging
from dataclasses import dataclass

# local imports
from mini_pir import (
    Block,
    ClauseKind,
    Diagnostic,
    Instruction,
    Opcode,
    Program,
    Region,
    RegionKind,
    Site,
    diagnostic,
)
from pdg_builder import Pdg
from pspdg_core import (
    DataSelector,
    Directed,
    EdgeDep,
    PsPdg,
    PsPdgBuilder,
    PsVariable,
    SelectorKind,
    TraitKind,
    Undirected,
    VariableKind,
    add_variable_accesses,
    common_ancestors,
    from_program,
    function_context,
    licensed_by_variables,
    lift_edges,
    region_context,
    smallest_context,
)

# Regions that keep ordering inside a worksharing loop
ORDERING_KINDS = frozenset({RegionKind.CRITICAL, RegionKind.ATOMIC, RegionKind.ORDERED})

# Regions whose context the ordering semantics of nested regions refer to
PARALLEL_CONTEXT_KINDS = frozenset(
    {RegionKind.PARALLEL_FOR, RegionKind.PARALLEL, RegionKind.TASK, RegionKind.SCOPE}
)

# Constructs that end in an implicit barrier unless they carry nowait
WORKSHARING_KINDS = frozenset({RegionKind.PARALLEL_FOR, RegionKind.SINGLE})

CLAUSE_PLACEMENT: dict[ClauseKind, frozenset[RegionKind]] = {
    ClauseKind.PRIVATE: frozenset({RegionKind.PARALLEL_FOR, RegionKind.PARALLEL, RegionKind.TASK}),
    ClauseKind.FIRSTPRIVATE: frozenset({RegionKind.PARALLEL_FOR, RegionKind.PARALLEL, RegionKind.TASK}),
    ClauseKind.SHARED: frozenset({RegionKind.PARALLEL_FOR, RegionKind.PARALLEL, RegionKind.TASK}),
    ClauseKind.LASTPRIVATE: frozenset({RegionKind.PARALLEL_FOR}),
    ClauseKind.REDUCTION: frozenset({RegionKind.PARALLEL_FOR}),
    ClauseKind.THREADPRIVATE: frozenset({RegionKind.PARALLEL}),
    ClauseKind.NOWAIT: frozenset({RegionKind.PARALLEL_FOR, RegionKind.SINGLE}),
    ClauseKind.DEPEND: frozenset({RegionKind.TASK}),
}


class FrontendError(Exception):
    """A program uses a construct or clause the selected model cannot express."""

    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        self.diagnostics = sorted(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class MappingRule:
    construct: str
    production: str


MAPPING_RULES: tuple[MappingRule, ...] = (
    MappingRule("seq", "plain hierarchical node"),
    MappingRule("loop", "context with a head leaf; carried edges keep the loop context"),
    MappingRule("parallel_for", "context; carried edges removed outside critical/atomic/ordered"),
    MappingRule("parallel", "context"),
    MappingRule("task", "context with Unordered in the enclosing parallel context"),
    MappingRule("critical", "undirected self-edge in the enclosing parallel context"),
    MappingRule("atomic", "undirected self-edge plus Atomic in the enclosing parallel context"),
    MappingRule("single", "Singular in the enclosing parallel context"),
    MappingRule("ordered", "ORDER self-edge in the innermost parallel_for context"),
    MappingRule("barrier", "leaf that keeps the edges crossing it"),
    MappingRule("private", "privatizable variable"),
    MappingRule("firstprivate", "privatizable variable and AllConsumers on entry edges"),
    MappingRule("threadprivate", "privatizable variable of the parallel region"),
    MappingRule("lastprivate", "LastProducer on live-out edges"),
    MappingRule("shared", "AnyProducer on live-out edges"),
    MappingRule("reduction", "reducible variable with the reducer function node"),
    MappingRule("nowait", "implicit end barrier lifted, so sibling tasks around it stay independent"),
    MappingRule("depend", "DEPEND edge between sibling tasks with a matching pair"),
)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def check_supported(p: Program) -> None:
    """Reject Cilk-only constructs and misplaced clauses.

    :raises FrontendError: listing every offending construct
    """

    out: list[Diagnostic] = []
    for decl in p.globals:
        if decl.hyper is not None:
            out.append(diagnostic("UnsupportedConstruct", f"hyperobject '{decl.name}' needs the cilk model", decl.line))
    for item, _site in p.walk():
        if isinstance(item, Region):
            if item.kind in (RegionKind.SPAWN, RegionKind.SCOPE):
                out.append(diagnostic("UnsupportedConstruct", f"{item.kind} region '{item.id}' needs the cilk model", item.line))
            for clause in item.clauses:
                if item.kind not in CLAUSE_PLACEMENT[clause.kind]:
                    out.append(
                        diagnostic("UnsupportedClause", f"{clause.kind} is not allowed on {item.kind} region '{item.id}'", item.line)
                    )
        elif isinstance(item, Instruction) and item.opcode is Opcode.SYNC:
            out.append(diagnostic("UnsupportedConstruct", "sync needs the cilk model", item.line, item.column))
    if out:
        raise FrontendError(out)


def parallel_context(site: Site) -> str:
    """Context of the innermost enclosing parallel region, or of the function."""
    region = site.innermost(PARALLEL_CONTEXT_KINDS)
    return region_context(region.id) if region else function_context(site.function)


def _region_kinds(b: PsPdgBuilder, p: Program) -> dict[str, RegionKind]:
    return {node: p.region_map[rid].kind for rid, node in b.regions.items()}


def ordering_region(g: PsPdg, kinds: dict[str, RegionKind], edge: Directed, bearer: str) -> str | None:
    """Outermost critical, atomic or ordered node strictly inside bearer that holds both endpoints."""
    shared = common_ancestors(g, edge.producer, edge.consumer)
    if bearer not in shared:
        return None
    for node in shared[shared.index(bearer) + 1 :]:
        if kinds.get(node) in ORDERING_KINDS:
            return node
    return None


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def declare_loop_independence(b: PsPdgBuilder, p: Program, loop: Region) -> int:
    """Drop the edges a worksharing loop carries, except inside ordering regions or on loop variables.

    :return: number of removed edges
    """

    g = b.view()
    kinds = _region_kinds(b, p)
    ctx = region_context(loop.id)
    bearer = b.regions[loop.id]
    removed = 0
    for edge in g.directed():
        if edge.context != ctx or licensed_by_variables(g, edge):
            continue
        if ordering_region(g, kinds, edge, bearer) is not None:
            continue
        b.edges.discard(edge)
        removed += 1
    logging.debug(f"loop {loop.id}: {removed} carried edges declared independent")
    return removed


def _add_variables(b: PsPdgBuilder, p: Program) -> None:
    for region in sorted(p.region_map.values(), key=lambda r: r.position):
        ctx = region_context(region.id)
        for clause in region.clauses:
            if clause.kind not in (
                ClauseKind.PRIVATE,
                ClauseKind.FIRSTPRIVATE,
                ClauseKind.THREADPRIVATE,
                ClauseKind.REDUCTION,
            ):
                continue
            binding = p.clause_binding(region.id, clause.var)
            key = binding.key if binding else clause.var
            if clause.kind is ClauseKind.REDUCTION:
                reducer = b.functions[clause.reducer or ""]
                b.variables.add(PsVariable(key, VariableKind.REDUCIBLE, ctx, reducer, clause.identity))
            else:
                b.variables.add(PsVariable(key, VariableKind.PRIVATIZABLE, ctx))
            add_variable_accesses(b, p, key, region.id)


def _add_selectors(b: PsPdgBuilder, p: Program) -> None:
    g = b.view()
    for region in p.region_map.values():
        bearer = b.regions[region.id]
        for clause in region.clauses:
            binding = p.clause_binding(region.id, clause.var) if clause.var else None
            key = binding.key if binding else clause.var
            for edge in g.directed():
                if edge.dep is not EdgeDep.RAW or key not in edge.variables or edge not in b.edges:
                    continue
                inside = (g.contains(bearer, edge.producer), g.contains(bearer, edge.consumer))
                selector = DataSelector(SelectorKind.ANY_PRODUCER, smallest_context(g, edge.producer, edge.consumer))
                if clause.kind is ClauseKind.FIRSTPRIVATE and inside == (False, True):
                    updated = Directed(
                        edge.producer, edge.consumer, edge.dep, edge.variables, edge.context,
                        DataSelector(SelectorKind.ALL_CONSUMERS, selector.context), edge.consumer_selector,
                    )
                elif clause.kind is ClauseKind.LASTPRIVATE and inside == (True, False):
                    updated = Directed(
                        edge.producer, edge.consumer, edge.dep, edge.variables, edge.context,
                        edge.producer_selector, DataSelector(SelectorKind.LAST_PRODUCER, selector.context),
                    )
                elif clause.kind is ClauseKind.SHARED and inside == (True, False):
                    updated = Directed(
                        edge.producer, edge.consumer, edge.dep, edge.variables, edge.context,
                        edge.producer_selector, selector,
                    )
                else:
                    continue
                b.edges.discard(edge)
                b.edges.add(updated)
            g = b.view()


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def lifted_barriers(p: Program) -> frozenset[str]:
    """Worksharing regions whose implicit end barrier a nowait clause removes.

    Only a team started by an enclosing parallel region keeps running past the construct;
    elsewhere the construct ends the team and the barrier stays.
    """

    return frozenset(
        r.id
        for r in p.region_map.values()
        if r.kind in WORKSHARING_KINDS
        and r.has_clause(ClauseKind.NOWAIT)
        and p.region_sites[r.id].innermost({RegionKind.PARALLEL}) is not None
    )


def _sibling_runs(children: tuple[Region | Block, ...], lifted: frozenset[str]) -> list[list[Region]]:
    """Group consecutive regions of one child list into runs that no barrier separates.

    Explicit barriers separate runs, and so does every worksharing region that keeps its
    implicit end barrier.
    """

    runs: list[list[Region]] = [[]]
    for child in children:
        if isinstance(child, Region):
            runs[-1].append(child)
            if child.kind in WORKSHARING_KINDS and child.id not in lifted:
                runs.append([])
        elif any(isinstance(i, Instruction) and i.opcode is Opcode.BARRIER for i in child.items):
            runs.append([])
    return runs


def _child_lists(p: Program) -> list[tuple[Region | Block, ...]]:
    lists = [fn.children for fn in p.functions]
    lists += [r.children for r in p.region_map.values()]
    return lists


def _depend_keys(p: Program, task: Region) -> dict[str, set[str]]:
    keys: dict[str, set[str]] = {}
    for clause in task.clauses_of(ClauseKind.DEPEND):
        binding = p.clause_binding(task.id, clause.var)
        keys.setdefault(binding.key if binding else clause.var, set()).add(clause.direction or "inout")
    return keys


def _tasks(b: PsPdgBuilder, p: Program) -> None:
    g = b.view()
    lifted = lifted_barriers(p)
    for children in _child_lists(p):
        for run in _sibling_runs(children, lifted):
            tasks = [r for r in run if r.kind is RegionKind.TASK]
            for i, first in enumerate(tasks):
                for second in tasks[i + 1 :]:
                    a, c = b.regions[first.id], b.regions[second.id]
                    for edge in g.directed():
                        if edge.context is not None:
                            continue
                        ends = {edge.producer, edge.consumer}
                        if any(g.contains(a, n) for n in ends) and any(g.contains(c, n) for n in ends):
                            b.edges.discard(edge)
                    before, after = _depend_keys(p, first), _depend_keys(p, second)
                    linked = {
                        key
                        for key in before.keys() & after.keys()
                        if (before[key] | after[key]) - {"in"}
                    }
                    if linked:
                        b.edges.add(Directed(a, c, EdgeDep.DEPEND, frozenset(linked)))
                        logging.debug(f"tasks {first.id} -> {second.id} depend on {sorted(linked)}")


def _region_semantics(b: PsPdgBuilder, p: Program) -> None:
    for region in sorted(p.region_map.values(), key=lambda r: r.position):
        node = b.regions[region.id]
        site = p.region_sites[region.id]
        ctx = parallel_context(site)
        match region.kind:
            case RegionKind.CRITICAL:
                b.edges.add(Undirected(node, node, ctx))
            case RegionKind.ATOMIC:
                b.edges.add(Undirected(node, node, ctx))
                b.add_trait(node, TraitKind.ATOMIC, ctx)
            case RegionKind.SINGLE:
                b.add_trait(node, TraitKind.SINGULAR, ctx)
            case RegionKind.TASK:
                b.add_trait(node, TraitKind.UNORDERED, ctx)
            case RegionKind.ORDERED:
                loop = site.innermost({RegionKind.PARALLEL_FOR})
                if loop is not None:
                    b.merge_order_edge(node, region_context(loop.id), frozenset())


def _lift_into_ordering_regions(b: PsPdgBuilder, p: Program) -> int:
    g = b.view()
    kinds = _region_kinds(b, p)
    candidates = [e for e in g.directed() if e.context is not None and not licensed_by_variables(g, e)]
    return lift_edges(b, candidates, lambda view, edge, bearer: ordering_region(view, kinds, edge, bearer))


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def build_pspdg_omp(p: Program, base: Pdg) -> PsPdg:
    """Build the PS-PDG of an OpenMP-style program.

    :param p: a validated program
    :param base: build_pdg(p)
    :return: the PS-PDG
    :raises FrontendError: when p uses spawn, scope, sync, hyperobjects or a misplaced clause
    """

    check_supported(p)
    b = from_program(p, base)
    _add_variables(b, p)
    _add_selectors(b, p)
    for loop in p.loops():
        if loop.kind is RegionKind.PARALLEL_FOR:
            declare_loop_independence(b, p, loop)
    _tasks(b, p)
    _region_semantics(b, p)
    lifted = _lift_into_ordering_regions(b, p)
    logging.info(f"openmp PS-PDG: {len(b.nodes)} nodes, {len(b.edges)} edges, {lifted} lifted")
    return b.freeze()
