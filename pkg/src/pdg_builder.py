"""Build the baseline sequential program dependence graph of a mini-IR program.

Nodes are instructions (``i<id>``) and synthetic loop heads (``h:<loop>``). Data edges
come from a pairwise comparison of memory accesses, with an affine subscript test per
loop level; control edges run from each loop head to the nodes it governs directly.
"""

# pylint: disable=logging-fstring-interpolation

# Global imports
import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum

# local imports
from mini_pir import (
    Binding,
    IndexExpr,
    Instruction,
    Opcode,
    Program,
    Ref,
    Region,
    RegionKind,
    VarKind,
)

MEM = "@mem"
IO = "@io"

# Largest iteration domain that is enumerated exactly by the subscript test
_ENUMERATION_LIMIT = 100_000


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class DepKind(StrEnum):
    RAW = "RAW"
    WAR = "WAR"
    WAW = "WAW"
    CTRL = "CTRL"


@dataclass(frozen=True)
class PdgEdge:
    """A directed dependence. ``carried_by`` names the loop carrying it, None when loop independent."""

    src: str
    dst: str
    kind: DepKind
    var: str = ""
    carried_by: str | None = None

    def sort_key(self) -> tuple[str, str, str, str, str]:
        return (self.src, self.dst, self.kind, self.var, self.carried_by or "")


@dataclass(frozen=True)
class LoopInfo:
    """What the analyses need to know about one loop of the program."""

    id: str
    kind: RegionKind
    function: str
    position: int
    head: str
    members: frozenset[str]
    parent: str | None
    trip_known: bool
    ancestors: tuple[str, ...] = ()


@dataclass(frozen=True)
class Pdg:
    """The classical dependence graph: directed data and control edges only."""

    nodes: frozenset[str]
    edges: frozenset[PdgEdge]
    loops: dict[str, LoopInfo] = field(default_factory=dict, compare=False, hash=False)
    positions: dict[str, int] = field(default_factory=dict, compare=False, hash=False)

    def sorted_edges(self) -> list[PdgEdge]:
        return sorted(self.edges, key=PdgEdge.sort_key)


@dataclass(frozen=True)
class Access:
    """One memory access of an instruction.

    ``cell`` is a constant cell number (scalars and struct fields), ``index`` an array
    subscript; both None means the whole object. ``fresh_in`` lists loops whose
    iterations each see a new instance of the object.
    """

    key: str
    write: bool
    cell: int | None = None
    index: IndexExpr | None = None
    fresh_in: tuple[str, ...] = ()
    distinct: bool = False
    is_global: bool = False


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def instruction_node(ins_id: int) -> str:
    return f"i{ins_id}"


def head_node(loop_id: str) -> str:
    return f"h:{loop_id}"


def node_instruction(node: str) -> int | None:
    """Instruction id behind a PDG node, None for loop heads.

    >>> node_instruction("i12"), node_instruction("h:L1")
    (12, None)
    """
    return int(node[1:]) if node.startswith("i") else None


def _ref_access(binding: Binding, ref: Ref, write: bool, whole_ok: bool) -> Access:
    decl = binding.decl
    kind = decl.kind if decl is not None else VarKind.SCALAR
    base = {
        "key": binding.key,
        "write": write,
        "fresh_in": binding.scope_loops if binding.kind == "local" else (),
        "distinct": bool(decl and decl.distinct_index),
        "is_global": binding.kind == "global",
    }
    if kind is VarKind.SCALAR:
        return Access(cell=0, **base)  # type: ignore[arg-type]
    if kind is VarKind.STRUCT:
        assert decl is not None
        if ref.field is None and whole_ok:
            return Access(**base)  # type: ignore[arg-type]
        return Access(cell=decl.fields.index(ref.field or decl.fields[0]), **base)  # type: ignore[arg-type]
    if ref.index is None:
        return Access(**base)  # type: ignore[arg-type]
    if ref.index.is_constant:
        return Access(cell=ref.index.offset, **base)  # type: ignore[arg-type]
    return Access(index=ref.index, **base)  # type: ignore[arg-type]


def accesses(p: Program, ins: Instruction) -> list[Access]:
    """The abstract memory accesses of one instruction.

    Calls read and write the opaque object ``@mem``, which aliases every global;
    prints read and write ``@io``.
    """

    result: list[Access] = []
    is_call = ins.opcode is Opcode.CALL
    for ref in ins.refs_read():
        binding = p.binding(ins.id, ref.name)
        if binding is None or not binding.is_memory:
            continue
        result.append(_ref_access(binding, ref, False, is_call))
    for ref in ins.refs_written():
        binding = p.binding(ins.id, ref.name)
        if binding is None or not binding.is_memory:
            continue
        result.append(_ref_access(binding, ref, True, False))
    if is_call:
        result += [Access(MEM, False), Access(MEM, True)]
    if ins.opcode is Opcode.PRINT:
        result += [Access(IO, False), Access(IO, True)]
    return result


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def loop_domain(p: Program, loop: Region) -> range | None:
    """Iteration values of a loop's induction variable, None when unbounded."""
    if isinstance(loop.trip, int):
        return range(max(loop.trip, 0))
    decl = p.global_map.get(loop.trip or "")
    if decl is not None and decl.bound is not None:
        return range(decl.bound)
    return None


def trip_known(p: Program, loop: Region) -> bool:
    """Constant trip counts and symbolic ones with a declared bound count as known."""
    return loop_domain(p, loop) is not None


def _solve_equal(c1: int, d1: int, c2: int, d2: int, domain: range | None) -> bool:
    """Is there x in domain with c1*x + d1 == c2*x + d2?"""
    if c1 == c2:
        return d1 == d2
    quotient, remainder = divmod(d2 - d1, c1 - c2)
    if remainder:
        return False
    return quotient >= 0 if domain is None else quotient in domain


def _solve(
    c1: int, d1: int, dom1: range | None, c2: int, d2: int, dom2: range | None, less: bool
) -> bool:
    """Is there x in dom1, y in dom2 with c1*x + d1 == c2*y + d2 (and x < y when less)?"""

    if dom1 is None or dom2 is None or len(dom1) > _ENUMERATION_LIMIT:
        divisor = math.gcd(c1, c2)
        return d1 == d2 if divisor == 0 else (d2 - d1) % divisor == 0
    for x in dom1:
        target = c1 * x + d1 - d2
        if c2 == 0:
            if target == 0 and (not less or (len(dom2) and dom2[-1] > x)):
                return True
            continue
        y, remainder = divmod(target, c2)
        if not remainder and y in dom2 and (not less or y > x):
            return True
    return False


class _DependenceTester:
    """Decide per loop level whether two accesses can touch the same cell."""

    def __init__(self, p: Program) -> None:
        self.p = p
        self.domains: dict[str, range | None] = {loop.id: loop_domain(p, loop) for loop in p.loops()}
        self.iv_loops: dict[str, dict[str, str]] = {}

    def _iv_loop(self, ins: int, iv: str) -> str | None:
        for loop in reversed(self.p.instruction_sites[ins].loops()):
            if loop.iv == iv:
                return loop.id
        return None

    def _term(self, ins: int, index: IndexExpr) -> tuple[int, int, str | None, range | None]:
        if index.var is None:
            return 0, index.offset, None, range(1)
        loop = self._iv_loop(ins, index.var)
        return index.coef, index.offset, loop, self.domains.get(loop or "")

    def depends(
        self, a: Access, ia: int, b: Access, ib: int, common: tuple[str, ...], level: int | None
    ) -> bool:
        """Can access a (earlier instance) and access b touch the same cell?

        ``level`` is the index in ``common`` of the carrying loop, None for a loop
        independent dependence.
        """

        if level is not None:
            carrier = common[level]
            if carrier in a.fresh_in or carrier in b.fresh_in:
                return False
            domain = self.domains.get(carrier)
            if domain is not None and len(domain) < 2:
                return False

        if a.key != b.key:
            return True
        if a.cell is not None and b.cell is not None:
            return a.cell == b.cell
        if a.index is None and b.index is None:
            return True
        if a.index is None or b.index is None:
            index = a.index or b.index
            assert index is not None
            if index.opaque or a.cell is None and b.cell is None:
                return True
            # one constant cell against an affine subscript
            cell = a.cell if a.cell is not None else b.cell
            assert cell is not None
            ins = ib if a.index is None else ia
            coef, offset, _loop, domain = self._term(ins, index)
            return _solve(coef, offset, domain, 0, cell, range(1), False)
        if a.index.opaque or b.index.opaque:
            return level is None or not (a.distinct and b.distinct)

        c1, d1, loop1, dom1 = self._term(ia, a.index)
        c2, d2, loop2, dom2 = self._term(ib, b.index)
        if loop1 is not None and loop1 == loop2 and loop1 in common:
            position = common.index(loop1)
            if level is None or position < level:
                return _solve_equal(c1, d1, c2, d2, dom1)
            if position == level:
                return _solve(c1, d1, dom1, c2, d2, dom2, less=True)
        return _solve(c1, d1, dom1, c2, d2, dom2, less=False)


def _aliases(a: Access, b: Access) -> bool:
    if a.key == b.key:
        return True
    return (a.key == MEM and b.is_global) or (b.key == MEM and a.is_global)


def _dep_kind(src: Access, dst: Access) -> DepKind | None:
    if src.write and dst.write:
        return DepKind.WAW
    if src.write:
        return DepKind.RAW
    if dst.write:
        return DepKind.WAR
    return None


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def _loop_infos(p: Program) -> dict[str, LoopInfo]:
    infos: dict[str, LoopInfo] = {}
    for loop in p.loops():
        site = p.region_sites[loop.id]
        enclosing = tuple(r.id for r in site.loops())
        members = {instruction_node(i) for i in p.region_instructions(loop.id)}
        members |= {
            head_node(inner.id)
            for inner in p.loops()
            if loop.position < inner.position < loop.end_position
        }
        infos[loop.id] = LoopInfo(
            id=loop.id,
            kind=loop.kind,
            function=site.function,
            position=loop.position,
            head=head_node(loop.id),
            members=frozenset(members),
            parent=enclosing[-1] if enclosing else None,
            trip_known=trip_known(p, loop),
            ancestors=enclosing,
        )
    return infos


def build_pdg(p: Program) -> Pdg:
    """Build the conservative dependence graph of the sequential interpretation of p.

    :param p: A validated program
    :return: The Pdg with data edges per carrying loop level and loop-head control edges

    >>> from mini_pir import parse
    >>> g = build_pdg(parse("global x: scalar\\nfunc main() {\\n  x = 1\\n}"))
    >>> len(g.nodes), len(g.edges)
    (1, 0)
    """

    tester = _DependenceTester(p)
    loops = _loop_infos(p)
    edges: set[PdgEdge] = set()
    positions: dict[str, int] = {}

    by_function: dict[str, list[int]] = {}
    for ins_id, site in sorted(p.instruction_sites.items()):
        by_function.setdefault(site.function, []).append(ins_id)
        positions[instruction_node(ins_id)] = ins_id
    access_map = {ins.id: accesses(p, ins) for ins in p.instructions}

    for ids in by_function.values():
        for n, first in enumerate(ids):
            for second in ids[n:]:
                loops_first = tuple(r.id for r in p.instruction_sites[first].loops())
                loops_second = tuple(r.id for r in p.instruction_sites[second].loops())
                common: tuple[str, ...] = ()
                for x, y in zip(loops_first, loops_second):
                    if x != y:
                        break
                    common += (x,)
                orientations = [(first, second)] if first == second else [(first, second), (second, first)]
                for src, dst in orientations:
                    for a in access_map[src]:
                        for b in access_map[dst]:
                            kind = _dep_kind(a, b)
                            if kind is None or not _aliases(a, b):
                                continue
                            var = a.key if a.key == b.key else MEM
                            for level, carrier in enumerate(common):
                                if tester.depends(a, src, b, dst, common, level):
                                    edges.add(PdgEdge(instruction_node(src), instruction_node(dst), kind, var, carrier))
                            if src < dst and tester.depends(a, src, b, dst, common, None):
                                edges.add(PdgEdge(instruction_node(src), instruction_node(dst), kind, var, None))

    for info in loops.values():
        positions[info.head] = info.position
        if info.parent is not None:
            edges.add(PdgEdge(loops[info.parent].head, info.head, DepKind.CTRL))
    for ins_id, site in p.instruction_sites.items():
        enclosing = site.loops()
        if enclosing:
            edges.add(PdgEdge(head_node(enclosing[-1].id), instruction_node(ins_id), DepKind.CTRL))

    nodes = frozenset(positions)
    logging.debug(f"build_pdg: {len(nodes)} nodes, {len(edges)} edges")
    return Pdg(nodes=nodes, edges=frozenset(edges), loops=loops, positions=positions)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def jk_pdg(p: Program, pdg: Pdg) -> Pdg:
    """The comparison baseline that only drops the carried edges of worksharing loops.

    :param p: The program the Pdg was built from
    :param pdg: Its baseline Pdg
    :return: A Pdg without edges carried by ParallelFor loops
    """

    worksharing = {loop.id for loop in p.loops() if loop.kind is RegionKind.PARALLEL_FOR}
    kept = frozenset(e for e in pdg.edges if e.carried_by not in worksharing)
    return Pdg(nodes=pdg.nodes, edges=kept, loops=pdg.loops, positions=pdg.positions)
