"""Map programs written with spawn, sync, scope, cilk_for and hyperobjects onto a PS-PDG.

A spawn becomes a single-entry single-exit node holding a knot and the spawned
call: the knot starts two strands, the call and the continuation. A sync joins the
calls spawned since the previous sync of its scope, and every scope ends in a sync.
cilk_for loops are worksharing loops, and hyperobjects are reducible variables.
"""

# pylint: disable=logging-fstring-interpolation

# Global imports
import logging
from dataclasses import dataclass, replace

# local imports
from frontend_openmp import FrontendError, declare_loop_independence
from mini_pir import HOLDER, Diagnostic, Instruction, Opcode, Program, Region, RegionKind, diagnostic
from pdg_builder import Pdg
from pspdg_core import (
    Directed,
    EdgeDep,
    HierarchicalNode,
    InstructionRef,
    PsPdg,
    PsPdgBuilder,
    PsVariable,
    Synthetic,
    VariableKind,
    add_variable_accesses,
    from_program,
    region_context,
)

UNSUPPORTED_KINDS = frozenset(
    {
        RegionKind.CRITICAL,
        RegionKind.ATOMIC,
        RegionKind.SINGLE,
        RegionKind.ORDERED,
        RegionKind.TASK,
        RegionKind.PARALLEL,
    }
)

KEEP_FIRST = "reducer:keep_first"


@dataclass(frozen=True)
class SpawnShape:
    knot: str
    spawned: str
    continuation: Directed | None


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def check_supported(p: Program) -> None:
    """Reject OpenMP-only regions, barriers and clauses.

    :raises FrontendError: listing every offending construct
    """

    out: list[Diagnostic] = []
    for item, _site in p.walk():
        if isinstance(item, Instruction):
            if item.opcode is Opcode.BARRIER:
                out.append(diagnostic("UnsupportedConstruct", "barrier needs the openmp model", item.line, item.column))
            continue
        if not isinstance(item, Region):
            continue
        if item.kind in UNSUPPORTED_KINDS:
            out.append(diagnostic("UnsupportedConstruct", f"{item.kind} region '{item.id}' needs the openmp model", item.line))
        for clause in item.clauses:
            out.append(diagnostic("UnsupportedClause", f"{clause.kind} is not a cilk annotation", item.line))
    if out:
        raise FrontendError(out)


def _is_sync(b: PsPdgBuilder, node: str) -> bool:
    payload = b.nodes[node].payload
    if isinstance(payload, Synthetic):
        return payload.kind == "sync-exit"
    return isinstance(payload, InstructionRef) and payload.opcode == str(Opcode.SYNC)


def _spawns(b: PsPdgBuilder, p: Program) -> None:
    g = b.view()
    spawn_nodes = {b.regions[r.id] for r in p.region_map.values() if r.kind is RegionKind.SPAWN}
    for scope in (r for r in p.region_map.values() if r.kind is RegionKind.SCOPE):
        children = list(g.node_map[b.regions[scope.id]].payload.children)  # type: ignore[union-attr]
        pending: list[str] = []
        for index, child in enumerate(children):
            if _is_sync(b, child):
                for call in pending:
                    b.edges.add(Directed(call, child, EdgeDep.JOIN))
                pending = []
                continue
            if child not in spawn_nodes:
                continue
            knot, call = g.node_map[child].payload.children  # type: ignore[union-attr]
            previous, following = children[index - 1], children[index + 1]
            if previous not in spawn_nodes:
                b.edges.add(Directed(previous, knot, EdgeDep.STRAND))
            b.edges.add(Directed(knot, call, EdgeDep.STRAND))
            b.edges.add(Directed(knot, following, EdgeDep.STRAND))
            pending.append(call)

            continuation: set[str] = set()
            for later in children[index + 1 :]:
                if _is_sync(b, later):
                    break
                continuation.update(g.leaves(later))
            for edge in g.directed():
                if edge.context is None and edge.producer == call and edge.consumer in continuation:
                    b.edges.discard(edge)
        logging.debug(f"scope {scope.id}: {len(children)} children")


def _touches(p: Program, ins_id: int, name: str) -> bool:
    binding = p.binding(ins_id, name)
    return binding is not None and binding.key == name


def _hyperobjects(b: PsPdgBuilder, p: Program) -> None:
    keep_first: str | None = None
    for decl in p.globals:
        if decl.hyper is None:
            continue
        if decl.hyper == HOLDER:
            if keep_first is None:
                keep_first = b.leaf(Synthetic(KEEP_FIRST, 0))
                root = b.nodes[b.root]
                children = root.payload.children  # type: ignore[union-attr]
                b.nodes[b.root] = replace(root, payload=HierarchicalNode((keep_first, *children)))
            reducer = keep_first
        else:
            reducer = b.functions[decl.hyper]
        for region in sorted(p.region_map.values(), key=lambda r: r.position):
            if region.kind not in (RegionKind.SCOPE, RegionKind.PARALLEL_FOR):
                continue
            if not any(_touches(p, i, decl.name) for i in p.region_instructions(region.id)):
                continue
            b.variables.add(
                PsVariable(decl.name, VariableKind.REDUCIBLE, region_context(region.id), reducer, decl.identity)
            )
            add_variable_accesses(b, p, decl.name, region.id)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def build_pspdg_cilk(p: Program, base: Pdg) -> PsPdg:
    """Build the PS-PDG of a Cilk-style program.

    :param p: a validated program
    :param base: build_pdg(p)
    :return: the PS-PDG
    :raises FrontendError: when p uses OpenMP-only regions, barriers or clauses
    """

    check_supported(p)
    b = from_program(p, base)
    _hyperobjects(b, p)
    for loop in p.loops():
        if loop.kind is RegionKind.PARALLEL_FOR:
            declare_loop_independence(b, p, loop)
    _spawns(b, p)
    logging.info(f"cilk PS-PDG: {len(b.nodes)} nodes, {len(b.edges)} edges")
    return b.freeze()


def spawn_shapes(g: PsPdg) -> list[SpawnShape]:
    """Knot, spawned call and continuation strand of every spawn node."""
    shapes = []
    strands = [e for e in g.directed() if e.dep is EdgeDep.STRAND]
    for node in g.nodes:
        payload = node.payload
        if not isinstance(payload, HierarchicalNode) or len(payload.children) != 2:
            continue
        knot, spawned = payload.children
        knot_payload = g.node_map[knot].payload
        if not isinstance(knot_payload, Synthetic) or knot_payload.kind != "knot":
            continue
        continuation = next((e for e in strands if e.producer == knot and e.consumer != spawned), None)
        shapes.append(SpawnShape(knot, spawned, continuation))
    return sorted(shapes, key=lambda s: g.position(s.knot))


def check_spawn_sese(g: PsPdg) -> list[str]:
    """Every spawn node has one strand entering and one leaving it; every spawned call is joined."""
    problems = []
    strands = [e for e in g.directed() if e.dep is EdgeDep.STRAND]
    joins = {e.producer for e in g.directed() if e.dep is EdgeDep.JOIN}
    for shape in spawn_shapes(g):
        node = g.parent_map[shape.knot]
        inside = {node, shape.knot, shape.spawned}
        entering = [e for e in strands if e.producer not in inside and e.consumer in inside]
        leaving = [e for e in strands if e.producer in inside and e.consumer not in inside]
        if len(entering) != 1 or len(leaving) != 1:
            problems.append(f"spawn {node}: {len(entering)} strands in, {len(leaving)} out")
        knot_out = [e for e in strands if e.producer == shape.knot]
        if len(knot_out) != 2:
            problems.append(f"knot {shape.knot} has {len(knot_out)} outgoing strands")
        if shape.spawned not in joins:
            problems.append(f"spawned call {shape.spawned} is never joined")
    return problems
