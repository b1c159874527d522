"""The parallel semantics program dependence graph (PS-PDG).

A PS-PDG is a tuple (nodes, edges, variables, accesses):

- a node is an instruction leaf, a synthetic leaf (entry, loop head, knot, implicit
  sync, built-in reducer) or a hierarchical node holding an ordered list of children;
  a hierarchical node with a context label is a *context*;
- nodes carry traits (singular, unordered, atomic), each valid within a context;
- directed edges may carry a data selector at either end, undirected edges always
  name the context in which their endpoints must not overlap;
- parallel semantic variables are privatizable or reducible within a context, and
  variable accesses tie them to the nodes using and defining them.

This module holds the data model, the skeleton construction shared by the front
ends, canonical forms, structural equality and diff, feature ablation, and the
well-formedness check.
"""

# pylint: disable=logging-fstring-interpolation, too-many-lines

# Global imports
import logging
from dataclasses import dataclass, field, replace
from enum import StrEnum
from functools import cached_property
from typing import Callable, Iterable

# local imports
from mini_pir import Block, Instruction, Opcode, Program, Region, RegionKind, VarDecl
from pdg_builder import Pdg, node_instruction
from pdg_builder import accesses as memory_accesses

# Context reference after context ablation: valid in every enclosing scope
WIDENED = "*"


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class TraitKind(StrEnum):
    SINGULAR = "singular"
    UNORDERED = "unordered"
    ATOMIC = "atomic"

    @classmethod
    def from_text(cls, text: str) -> "TraitKind":
        """Accept the alternative spellings used in the literature.

        >>> TraitKind.from_text("orderless")
        <TraitKind.UNORDERED: 'unordered'>
        """
        name = text.strip().lower()
        return {"orderless": cls.UNORDERED, "singuler": cls.SINGULAR}.get(name) or cls(name)


class SelectorKind(StrEnum):
    ANY_PRODUCER = "any_producer"
    LAST_PRODUCER = "last_producer"
    ALL_CONSUMERS = "all_consumers"


class EdgeDep(StrEnum):
    """Why a directed edge exists."""

    RAW = "RAW"
    WAR = "WAR"
    WAW = "WAW"
    CTRL = "CTRL"
    ORDER = "ORDER"
    STRAND = "STRAND"
    JOIN = "JOIN"
    DEPEND = "DEPEND"


class VariableKind(StrEnum):
    PRIVATIZABLE = "privatizable"
    REDUCIBLE = "reducible"


class Feature(StrEnum):
    """PS-PDG features that ablate() can remove."""

    HN_UE = "HN_UE"
    NT = "NT"
    CTX = "CTX"
    DSDE = "DSDE"
    PSV = "PSV"


@dataclass(frozen=True)
class Trait:
    kind: TraitKind
    context: str


@dataclass(frozen=True)
class InstructionRef:
    id: int
    position: int
    opcode: str


@dataclass(frozen=True)
class Synthetic:
    """An instruction-less leaf: entry, head, knot, sync-exit or reducer:<name>."""

    kind: str
    anchor: int


@dataclass(frozen=True)
class HierarchicalNode:
    children: tuple[str, ...]
    context: str | None = None


Payload = InstructionRef | Synthetic | HierarchicalNode


@dataclass(frozen=True)
class PsNode:
    id: str
    payload: Payload
    traits: frozenset[Trait] = frozenset()

    @property
    def is_hierarchical(self) -> bool:
        return isinstance(self.payload, HierarchicalNode)


@dataclass(frozen=True)
class DataSelector:
    kind: SelectorKind
    context: str


@dataclass(frozen=True)
class Directed:
    """A directed edge. ``context`` names the loop context carrying it, None when loop independent."""

    producer: str
    consumer: str
    dep: EdgeDep
    variables: frozenset[str] = frozenset()
    context: str | None = None
    producer_selector: DataSelector | None = None
    consumer_selector: DataSelector | None = None


@dataclass(frozen=True)
class Undirected:
    a: str
    b: str
    context: str


Edge = Directed | Undirected


@dataclass(frozen=True)
class PsVariable:
    """A parallel semantic variable. ``identity`` is optional metadata for reductions and hyperobjects."""

    name: str
    kind: VariableKind
    context: str
    reducer: str | None = None
    identity: int | None = None


@dataclass(frozen=True)
class VariableAccess:
    variable: str
    uses: frozenset[str] = frozenset()
    defs: frozenset[str] = frozenset()


@dataclass(frozen=True)
class LoopMeta:
    """Loop facts kept next to the graph for the analyses; not part of graph identity."""

    id: str
    kind: RegionKind
    context: str
    node: str
    head: str
    members: frozenset[str]
    trip_known: bool
    parent: str | None = None
    ancestors: tuple[str, ...] = ()


def region_context(region_id: str) -> str:
    return f"ctx:{region_id}"


def function_context(name: str) -> str:
    return f"ctx:fn:{name}"


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class PsPdg:
    """An immutable PS-PDG plus lookup tables derived from it on first use."""

    nodes: tuple[PsNode, ...]
    root: str
    edges: frozenset[Edge] = frozenset()
    variables: frozenset[PsVariable] = frozenset()
    accesses: frozenset[VariableAccess] = frozenset()
    loops: dict[str, LoopMeta] = field(default_factory=dict, compare=False, hash=False)
    regions: dict[str, str] = field(default_factory=dict, compare=False, hash=False)
    instructions: dict[int, str] = field(default_factory=dict, compare=False, hash=False)

    @cached_property
    def node_map(self) -> dict[str, PsNode]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def parent_map(self) -> dict[str, str]:
        parents: dict[str, str] = {}
        for node in self.nodes:
            if isinstance(node.payload, HierarchicalNode):
                for child in node.payload.children:
                    parents.setdefault(child, node.id)
        return parents

    @cached_property
    def context_bearers(self) -> dict[str, str]:
        """Context label to the hierarchical node carrying it."""
        bearers: dict[str, str] = {}
        for node in self.nodes:
            if isinstance(node.payload, HierarchicalNode) and node.payload.context:
                bearers.setdefault(node.payload.context, node.id)
        return bearers

    def ancestors(self, node: str) -> list[str]:
        """Hierarchical ancestors of a node, innermost first."""
        chain: list[str] = []
        current = self.parent_map.get(node)
        while current is not None and current not in chain:
            chain.append(current)
            current = self.parent_map.get(current)
        return chain

    def leaves(self, node: str) -> list[str]:
        """Leaves under a node in child order; a leaf is its own single leaf."""
        result: list[str] = []
        stack = [node]
        seen: set[str] = set()
        while stack:
            current = stack.pop()
            if current in seen:
                continue
            seen.add(current)
            payload = self.node_map[current].payload
            if isinstance(payload, HierarchicalNode):
                stack.extend(reversed(payload.children))
            else:
                result.append(current)
        return result

    def position(self, node: str) -> int:
        payload = self.node_map[node].payload
        if isinstance(payload, InstructionRef):
            return payload.position
        if isinstance(payload, Synthetic):
            return payload.anchor
        return min((self.position(leaf) for leaf in self.leaves(node)), default=0)

    def depth(self, node: str) -> int:
        return len(self.ancestors(node))

    def contains(self, outer: str, node: str) -> bool:
        """Is node equal to outer or nested in it?"""
        return node == outer or outer in self.ancestors(node)

    def bearer_encloses(self, context: str, node: str) -> bool:
        """Does the node bearing context contain node? Widened contexts enclose everything."""
        if context == WIDENED:
            return True
        bearer = self.context_bearers.get(context)
        return bearer is not None and self.contains(bearer, node)

    def instruction_of(self, node: str) -> int | None:
        payload = self.node_map[node].payload
        return payload.id if isinstance(payload, InstructionRef) else None

    def directed(self) -> list[Directed]:
        return [e for e in self.edges if isinstance(e, Directed)]

    def undirected(self) -> list[Undirected]:
        return [e for e in self.edges if isinstance(e, Undirected)]

    def variables_in(self, context: str) -> list[PsVariable]:
        return [v for v in self.variables if v.context == context]


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class PsPdgBuilder:
    """Mutable staging area used by the front ends and by ablation."""

    def __init__(self) -> None:
        self.nodes: dict[str, PsNode] = {}
        self.root: str = ""
        self.edges: set[Edge] = set()
        self.variables: set[PsVariable] = set()
        self.accesses: dict[str, VariableAccess] = {}
        self.loops: dict[str, LoopMeta] = {}
        self.regions: dict[str, str] = {}
        self.instructions: dict[int, str] = {}
        self.functions: dict[str, str] = {}
        self.scope_exits: dict[str, str] = {}
        self._counter = 0

    @classmethod
    def from_graph(cls, g: PsPdg) -> "PsPdgBuilder":
        builder = cls()
        builder.nodes = {n.id: n for n in g.nodes}
        builder.root = g.root
        builder.edges = set(g.edges)
        builder.variables = set(g.variables)
        builder.accesses = {a.variable: a for a in g.accesses}
        builder.loops = dict(g.loops)
        builder.regions = dict(g.regions)
        builder.instructions = dict(g.instructions)
        builder._counter = len(g.nodes)
        while f"n{builder._counter}" in builder.nodes:
            builder._counter += 1
        return builder

    def _new_id(self) -> str:
        node_id = f"n{self._counter}"
        self._counter += 1
        return node_id

    def leaf(self, payload: InstructionRef | Synthetic) -> str:
        node_id = self._new_id()
        self.nodes[node_id] = PsNode(node_id, payload)
        if isinstance(payload, InstructionRef):
            self.instructions[payload.id] = node_id
        return node_id

    def hierarchical(self, children: Iterable[str], context: str | None = None) -> str:
        node_id = self._new_id()
        self.nodes[node_id] = PsNode(node_id, HierarchicalNode(tuple(children), context))
        return node_id

    def add_trait(self, node: str, kind: TraitKind, context: str) -> None:
        current = self.nodes[node]
        self.nodes[node] = replace(current, traits=current.traits | {Trait(kind, context)})

    def add_access(self, variable: str, uses: Iterable[str] = (), defs: Iterable[str] = ()) -> None:
        current = self.accesses.get(variable, VariableAccess(variable))
        self.accesses[variable] = VariableAccess(
            variable, current.uses | frozenset(uses), current.defs | frozenset(defs)
        )

    def merge_order_edge(self, node: str, context: str, variables: frozenset[str]) -> None:
        """Add or widen the ORDER self-edge of node within context."""
        for edge in list(self.edges):
            if (
                isinstance(edge, Directed)
                and edge.dep is EdgeDep.ORDER
                and edge.producer == node
                and edge.consumer == node
                and edge.context == context
            ):
                self.edges.discard(edge)
                variables = variables | edge.variables
        self.edges.add(Directed(node, node, EdgeDep.ORDER, variables, context))

    def view(self) -> PsPdg:
        """Freeze without checking, for hierarchy queries while edges are still edited."""
        return PsPdg(
            nodes=tuple(self.nodes.values()),
            root=self.root,
            edges=frozenset(self.edges),
            variables=frozenset(self.variables),
            accesses=frozenset(self.accesses.values()),
            loops=dict(self.loops),
            regions=dict(self.regions),
            instructions=dict(self.instructions),
        )

    def freeze(self) -> PsPdg:
        """Freeze and check the result against the PS-PDG rules.

        :raises ValueError: when the graph is not well formed
        """
        graph = self.view()
        problems = check_wellformed(graph)
        if problems:
            raise ValueError("malformed PS-PDG: " + "; ".join(problems))
        return graph


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class _SkeletonBuilder:
    """Walk a program once and create the node hierarchy, one context per loop and parallel region."""

    def __init__(self, p: Program, pdg: Pdg, builder: PsPdgBuilder) -> None:
        self.p = p
        self.pdg = pdg
        self.b = builder

    def items(self, items: Iterable[Block | Region]) -> list[str]:
        children: list[str] = []
        for item in items:
            if isinstance(item, Block):
                for ins in item.items:
                    if isinstance(ins, VarDecl):
                        continue
                    children.append(self.instruction(ins))
            else:
                children.append(self.region(item))
        return children

    def instruction(self, ins: Instruction) -> str:
        return self.b.leaf(InstructionRef(ins.id, ins.id, str(ins.opcode)))

    def region(self, region: Region) -> str:
        kind = region.kind
        ctx = region_context(region.id)
        if region.is_loop:
            head = self.b.leaf(Synthetic("head", region.position))
            body = self.items(region.children)
            node = self.b.hierarchical([head, *body], ctx)
            info = self.pdg.loops[region.id]
            members = {leaf for child in body for leaf in self._leaves(child)}
            self.b.loops[region.id] = LoopMeta(
                id=region.id,
                kind=kind,
                context=ctx,
                node=node,
                head=head,
                members=frozenset(members),
                trip_known=info.trip_known,
                parent=info.parent,
                ancestors=info.ancestors,
            )
        elif kind is RegionKind.SCOPE:
            entry = self.b.leaf(Synthetic("entry", region.position))
            body = self.items(region.children)
            last = self.b.nodes[body[-1]].payload if body else None
            if isinstance(last, InstructionRef) and last.opcode == str(Opcode.SYNC):
                exit_node = body[-1]
                node = self.b.hierarchical([entry, *body], ctx)
            else:
                exit_node = self.b.leaf(Synthetic("sync-exit", region.end_position))
                node = self.b.hierarchical([entry, *body, exit_node], ctx)
            self.b.scope_exits[region.id] = exit_node
        elif kind is RegionKind.SPAWN:
            knot = self.b.leaf(Synthetic("knot", region.position))
            node = self.b.hierarchical([knot, *self.items(region.children)])
        elif kind in (RegionKind.PARALLEL, RegionKind.TASK):
            node = self.b.hierarchical(self.items(region.children), ctx)
        else:
            node = self.b.hierarchical(self.items(region.children))
        self.b.regions[region.id] = node
        return node

    def _leaves(self, node: str) -> list[str]:
        payload = self.b.nodes[node].payload
        if isinstance(payload, HierarchicalNode):
            return [leaf for child in payload.children for leaf in self._leaves(child)]
        return [node]

    def endpoint(self, name: str) -> str:
        """Map a PDG node name onto the PS-PDG leaf standing for it."""
        ins = node_instruction(name)
        if ins is not None:
            return self.b.instructions[ins]
        return self.b.loops[name.removeprefix("h:")].head


def from_program(p: Program, pdg: Pdg) -> PsPdgBuilder:
    """Create the PS-PDG skeleton of a program: hierarchy, contexts and the PDG edges.

    Every PDG edge becomes one directed edge per variable; carried edges name the
    context of the loop carrying them. The front ends add the parallel semantics.

    :param p: the validated program
    :param pdg: its program dependence graph
    :return: a builder holding the skeleton
    """

    b = PsPdgBuilder()
    walker = _SkeletonBuilder(p, pdg, b)
    function_nodes = []
    for fn in p.functions:
        entry = b.leaf(Synthetic("entry", fn.position))
        node = b.hierarchical([entry, *walker.items(fn.children)], function_context(fn.name))
        b.functions[fn.name] = node
        function_nodes.append(node)
    b.root = b.hierarchical(function_nodes)

    for e in pdg.edges:
        ctx = region_context(e.carried_by) if e.carried_by else None
        b.edges.add(
            Directed(
                walker.endpoint(e.src),
                walker.endpoint(e.dst),
                EdgeDep(str(e.kind)),
                frozenset({e.var}) if e.var else frozenset(),
                ctx,
            )
        )
    logging.debug(f"skeleton: {len(b.nodes)} nodes, {len(b.edges)} edges")
    return b


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def lift_edges(
    b: PsPdgBuilder,
    edges: Iterable[Directed],
    target: Callable[[PsPdg, Directed, str], str | None],
) -> int:
    """Replace carried instruction-level edges by ORDER self-edges on an enclosing node.

    Each edge is handed to target(view, edge, loop_bearer); when it names a node H the
    edge is removed and merged into Directed(H, H, ORDER) in the edge's context, or
    absorbed when H already has an undirected self-edge in that context.

    :param b: builder whose edges are edited in place
    :param edges: the candidate edges
    :param target: chooses the node to lift to, or None to keep the edge
    :return: number of edges lifted
    """

    view = b.view()
    lifted = 0
    for edge in sorted(edges, key=_edge_sort_key):
        if edge.context is None or edge.context == WIDENED:
            continue
        bearer = view.context_bearers.get(edge.context)
        if bearer is None:
            continue
        node = target(view, edge, bearer)
        if node is None:
            continue
        b.edges.discard(edge)
        lifted += 1
        if Undirected(node, node, edge.context) in b.edges:
            continue
        b.merge_order_edge(node, edge.context, edge.variables)
    return lifted


def common_ancestors(g: PsPdg, a: str, b: str) -> list[str]:
    """Hierarchical nodes containing both a and b, outermost first."""
    mine = g.ancestors(a)
    theirs = set(g.ancestors(b))
    return [n for n in reversed(mine) if n in theirs]


def outermost_plain_inside(g: PsPdg, edge: Directed, bearer: str) -> str | None:
    """The outermost context-less node strictly inside bearer that holds both endpoints."""
    shared = common_ancestors(g, edge.producer, edge.consumer)
    if bearer not in shared:
        return None
    for node in shared[shared.index(bearer) + 1 :]:
        payload = g.node_map[node].payload
        if isinstance(payload, HierarchicalNode) and payload.context is None:
            return node
    return None


def _edge_sort_key(edge: Edge) -> tuple:
    if isinstance(edge, Directed):
        return (0, edge.producer, edge.consumer, str(edge.dep), sorted(edge.variables), edge.context or "")
    return (1, edge.a, edge.b, "", [], edge.context)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class CanonicalForm:
    """Sorted text lines describing a graph independent of its node ids."""

    lines: tuple[str, ...]
    labels: dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    @property
    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _node_key(g: PsPdg, node: PsNode) -> tuple:
    payload = node.payload
    if isinstance(payload, InstructionRef):
        tag = f"leaf {payload.opcode}"
    elif isinstance(payload, Synthetic):
        tag = f"syn {payload.kind}"
    else:
        tag = "hn"
    traits = sorted(f"{t.kind}" for t in node.traits)
    return (g.position(node.id), -len(g.leaves(node.id)), g.depth(node.id), tag, traits)


def canonicalize(g: PsPdg) -> CanonicalForm:
    """Relabel nodes N0, N1, ... by position, size and depth, then print every fact as one line.

    Two graphs that differ only in node ids get the same text.
    """

    order = sorted(g.nodes, key=lambda n: _node_key(g, n))
    labels = {n.id: f"N{i}" for i, n in enumerate(order)}
    index = {n.id: i for i, n in enumerate(order)}

    def ctx(name: str | None) -> str:
        if name is None:
            return "-"
        if name == WIDENED:
            return WIDENED
        bearer = g.context_bearers.get(name)
        return f"@{labels[bearer]}" if bearer else name

    def label(node: str | None) -> str:
        return labels.get(node, node) if node else "-"

    def group(nodes: Iterable[str]) -> str:
        return ",".join(labels.get(n, n) for n in sorted(nodes, key=lambda n: index.get(n, -1)))

    def selector(sel: DataSelector | None) -> str:
        return f"{sel.kind}@{ctx(sel.context)}" if sel else "-"

    lines: list[str] = []
    for node in order:
        payload = node.payload
        name = labels[node.id]
        if isinstance(payload, InstructionRef):
            lines.append(f"node {name} leaf {payload.opcode} @{payload.position}")
        elif isinstance(payload, Synthetic):
            lines.append(f"node {name} syn {payload.kind} @{payload.anchor}")
        else:
            lines.append(f"node {name} hn ctx={ctx(payload.context)} children={group(payload.children)}")
        for trait in sorted(node.traits, key=lambda t: (t.kind, t.context)):
            lines.append(f"trait {name} {trait.kind} ctx={ctx(trait.context)}")

    edge_lines = []
    for edge in g.edges:
        if isinstance(edge, Directed):
            edge_lines.append(
                f"edge {label(edge.producer)} -> {label(edge.consumer)} {edge.dep} "
                f"ctx={ctx(edge.context)} vars={','.join(sorted(edge.variables))} "
                f"psel={selector(edge.producer_selector)} csel={selector(edge.consumer_selector)}"
            )
        else:
            a, b = sorted((edge.a, edge.b), key=lambda n: index.get(n, -1))
            edge_lines.append(f"edge {label(a)} -- {label(b)} ctx={ctx(edge.context)}")
    lines.extend(sorted(edge_lines))

    lines.extend(
        sorted(
            f"var {v.name} {v.kind} ctx={ctx(v.context)} reducer={label(v.reducer)} "
            f"identity={'-' if v.identity is None else v.identity}"
            for v in g.variables
        )
    )
    lines.extend(
        sorted(f"access {a.variable} uses={group(a.uses)} defs={group(a.defs)}" for a in g.accesses)
    )
    return CanonicalForm(tuple(lines), labels)


def equal(a: PsPdg, b: PsPdg) -> bool:
    """Structural equality modulo node ids."""
    return canonicalize(a).lines == canonicalize(b).lines


@dataclass(frozen=True, order=True)
class DiffEntry:
    category: str
    change: str
    subject: str
    before: str = ""
    after: str = ""

    def __str__(self) -> str:
        if self.change == "changed":
            return f"{self.category} {self.subject} changed: {self.before}  =>  {self.after}"
        text = self.before or self.after
        return f"{self.category} {self.change}: {text}"


@dataclass(frozen=True)
class StructuredDiff:
    entries: tuple[DiffEntry, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def by_category(self, category: str) -> list[DiffEntry]:
        return [e for e in self.entries if e.category == category]

    def __str__(self) -> str:
        return "\n".join(str(e) for e in self.entries)


def _subject(line: str) -> tuple[str, str]:
    words = line.split()
    category = words[0]
    if category == "edge":
        return category, f"{words[1]}|{words[3]}"
    return category, words[1]


def diff(a: PsPdg, b: PsPdg) -> StructuredDiff:
    """Differences between the canonical forms of two graphs.

    Edges are matched by their endpoint pair, so an edge whose kind, context or
    selectors changed shows up as one 'changed' entry.
    """

    before = set(canonicalize(a).lines)
    after = set(canonicalize(b).lines)
    removed = sorted(before - after)
    added = sorted(after - before)

    entries: list[DiffEntry] = []
    removed_edges: dict[str, list[str]] = {}
    added_edges: dict[str, list[str]] = {}
    for line in removed:
        category, subject = _subject(line)
        if category == "edge":
            removed_edges.setdefault(subject, []).append(line)
        else:
            entries.append(DiffEntry(category, "removed", subject, before=line))
    for line in added:
        category, subject = _subject(line)
        if category == "edge":
            added_edges.setdefault(subject, []).append(line)
        else:
            entries.append(DiffEntry(category, "added", subject, after=line))

    for subject in sorted(set(removed_edges) | set(added_edges)):
        old = removed_edges.get(subject, [])
        new = added_edges.get(subject, [])
        if old and new:
            entries.append(DiffEntry("edge", "changed", subject, " | ".join(old), " | ".join(new)))
        else:
            entries.extend(DiffEntry("edge", "removed", subject, before=line) for line in old)
            entries.extend(DiffEntry("edge", "added", subject, after=line) for line in new)
    return StructuredDiff(tuple(sorted(entries)))


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def _widen(ctx: str | None) -> str | None:
    return None if ctx is None else WIDENED


def _widen_selector(sel: DataSelector | None) -> DataSelector | None:
    return None if sel is None else DataSelector(sel.kind, WIDENED)


def _drop_hierarchy(g: PsPdg) -> PsPdgBuilder:
    """Keep the leaves under one context-less root; contexts lose their bearer and widen."""

    b = PsPdgBuilder()
    leaves = g.leaves(g.root)
    for leaf in leaves:
        node = g.node_map[leaf]
        b.nodes[leaf] = replace(node, traits=frozenset(Trait(t.kind, WIDENED) for t in node.traits))
    b.nodes[g.root] = PsNode(g.root, HierarchicalNode(tuple(leaves)))
    b.root = g.root

    def first(node: str) -> str:
        return g.leaves(node)[0]

    def last(node: str) -> str:
        return g.leaves(node)[-1]

    for edge in g.edges:
        if isinstance(edge, Directed):
            grouped = g.node_map[edge.producer].is_hierarchical or g.node_map[edge.consumer].is_hierarchical
            b.edges.add(
                Directed(
                    last(edge.producer),
                    first(edge.consumer),
                    edge.dep,
                    frozenset() if grouped else edge.variables,
                    _widen(edge.context),
                    _widen_selector(edge.producer_selector),
                    _widen_selector(edge.consumer_selector),
                )
            )
        else:
            early, late = sorted((edge.a, edge.b), key=g.position)
            b.edges.add(Directed(last(early), first(late), EdgeDep.ORDER, frozenset(), WIDENED))

    for var in g.variables:
        reducer = var.reducer
        if reducer is not None and g.node_map[reducer].is_hierarchical:
            reducer = first(reducer)
        b.variables.add(replace(var, context=WIDENED, reducer=reducer))
    for access in g.accesses:
        b.add_access(
            access.variable,
            [leaf for n in access.uses for leaf in g.leaves(n)],
            [leaf for n in access.defs for leaf in g.leaves(n)],
        )
    b.loops = dict(g.loops)
    b.regions = dict(g.regions)
    b.instructions = dict(g.instructions)
    return b


def _drop_contexts(g: PsPdg) -> PsPdgBuilder:
    b = PsPdgBuilder.from_graph(g)
    for node_id, node in b.nodes.items():
        payload = node.payload
        if isinstance(payload, HierarchicalNode):
            payload = HierarchicalNode(payload.children)
        b.nodes[node_id] = PsNode(node_id, payload, frozenset(Trait(t.kind, WIDENED) for t in node.traits))
    b.edges = {
        replace(
            e,
            context=_widen(e.context),
            producer_selector=_widen_selector(e.producer_selector),
            consumer_selector=_widen_selector(e.consumer_selector),
        )
        if isinstance(e, Directed)
        else Undirected(e.a, e.b, WIDENED)
        for e in g.edges
    }
    b.variables = {replace(v, context=WIDENED) for v in g.variables}
    return b


def licensed_by_variables(g: PsPdg, edge: Edge) -> bool:
    """Is a carried edge covered by privatizable or reducible variables of its loop?"""
    if not isinstance(edge, Directed) or edge.context in (None, WIDENED) or not edge.variables:
        return False
    names = {v.name for v in g.variables_in(edge.context)}
    return edge.variables <= names


def _drop_variables(g: PsPdg) -> PsPdgBuilder:
    b = PsPdgBuilder.from_graph(g)
    licensed = [e for e in g.directed() if licensed_by_variables(g, e)]
    lifted = lift_edges(b, licensed, outermost_plain_inside)
    logging.debug(f"PSV ablation: {len(licensed)} licensed edges, {lifted} lifted")
    b.variables = set()
    b.accesses = {}
    return b


def ablate(g: PsPdg, feature: Feature) -> PsPdg:
    """Remove one PS-PDG feature, falling back to the stricter sequential reading.

    - HN_UE: only leaves remain; undirected edges become ORDER edges in program order
    - NT: traits are dropped
    - CTX: context labels are dropped and every context reference widens to '*'
    - DSDE: data selectors are dropped
    - PSV: variables and accesses are dropped; the carried edges they covered stay

    :param g: a well formed PS-PDG
    :param feature: the feature to remove
    :return: the reduced graph
    """

    match feature:
        case Feature.HN_UE:
            b = _drop_hierarchy(g)
        case Feature.NT:
            b = PsPdgBuilder.from_graph(g)
            b.nodes = {k: replace(n, traits=frozenset()) for k, n in b.nodes.items()}
        case Feature.CTX:
            b = _drop_contexts(g)
        case Feature.DSDE:
            b = PsPdgBuilder.from_graph(g)
            b.edges = {
                replace(e, producer_selector=None, consumer_selector=None) if isinstance(e, Directed) else e
                for e in g.edges
            }
        case Feature.PSV:
            b = _drop_variables(g)
        case _:
            raise ValueError(f"unknown feature {feature!r}")
    return b.freeze()


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def _check_hierarchy(g: PsPdg, problems: list[str]) -> None:
    nodes = g.node_map
    if g.root not in nodes or not nodes[g.root].is_hierarchical:
        problems.append(f"root {g.root!r} is not a hierarchical node")
        return
    if len(nodes) != len(g.nodes):
        problems.append("duplicate node ids")

    parents: dict[str, list[str]] = {}
    for node in g.nodes:
        payload = node.payload
        if not isinstance(payload, HierarchicalNode):
            continue
        if not payload.children:
            problems.append(f"hierarchical node {node.id} has no children")
        for child in payload.children:
            if child not in nodes:
                problems.append(f"node {node.id} has unknown child {child}")
            parents.setdefault(child, []).append(node.id)
    for child, owners in sorted(parents.items()):
        if len(owners) > 1:
            problems.append(f"node {child} has several parents {sorted(owners)}")
    if g.root in parents:
        problems.append(f"root {g.root} has a parent")

    # A cycle has no path from a parentless root, so reachability also catches cycles
    reached: set[str] = set()
    stack = [g.root]
    while stack:
        current = stack.pop()
        if current in reached:
            continue
        reached.add(current)
        payload = nodes[current].payload
        if isinstance(payload, HierarchicalNode):
            stack.extend(c for c in payload.children if c in nodes)
    for node in g.nodes:
        if node.id not in reached:
            problems.append(f"node {node.id} is not reachable from the root")

    labels: dict[str, str] = {}
    for node in g.nodes:
        if isinstance(node.payload, HierarchicalNode) and node.payload.context:
            context = node.payload.context
            if context == WIDENED:
                problems.append(f"node {node.id} carries the reserved context {WIDENED}")
            elif context in labels:
                problems.append(f"context {context} bound to {labels[context]} and {node.id}")
            else:
                labels[context] = node.id


def _check_edges(g: PsPdg, problems: list[str]) -> None:
    nodes = g.node_map

    def encloses(context: str, *members: str) -> bool:
        return all(g.bearer_encloses(context, m) for m in members)

    for edge in sorted(g.edges, key=_edge_sort_key):
        ends = (edge.producer, edge.consumer) if isinstance(edge, Directed) else (edge.a, edge.b)
        if any(end not in nodes for end in ends):
            problems.append(f"edge {ends} has an unknown endpoint")
            continue
        if isinstance(edge, Undirected):
            if not encloses(edge.context, *ends):
                problems.append(f"undirected edge {ends} outside its context {edge.context}")
            continue
        if edge.context is not None and not encloses(edge.context, *ends):
            problems.append(f"edge {ends} outside its context {edge.context}")
        if edge.producer_selector is not None:
            if edge.producer_selector.kind is not SelectorKind.ALL_CONSUMERS:
                problems.append(f"edge {ends} has producer selector {edge.producer_selector.kind}")
            if not encloses(edge.producer_selector.context, *ends):
                problems.append(f"edge {ends} selector context does not enclose both ends")
        if edge.consumer_selector is not None:
            if edge.consumer_selector.kind is SelectorKind.ALL_CONSUMERS:
                problems.append(f"edge {ends} has consumer selector {edge.consumer_selector.kind}")
            if not encloses(edge.consumer_selector.context, *ends):
                problems.append(f"edge {ends} selector context does not enclose both ends")


def _check_variables(g: PsPdg, problems: list[str]) -> None:
    nodes = g.node_map
    names = {v.name for v in g.variables}
    for var in sorted(g.variables, key=lambda v: (v.name, v.context)):
        if var.context != WIDENED and var.context not in g.context_bearers:
            problems.append(f"variable {var.name} refers to unknown context {var.context}")
        if var.kind is VariableKind.REDUCIBLE and var.reducer not in nodes:
            problems.append(f"reducible variable {var.name} has no reducer node")
        if var.kind is VariableKind.PRIVATIZABLE and var.reducer is not None:
            problems.append(f"privatizable variable {var.name} names a reducer")
    for access in sorted(g.accesses, key=lambda a: a.variable):
        if access.variable not in names:
            problems.append(f"access to unknown variable {access.variable}")
        for node in sorted(access.uses | access.defs):
            if node not in nodes:
                problems.append(f"access to {access.variable} names unknown node {node}")


def check_wellformed(g: PsPdg) -> list[str]:
    """List every violation of the PS-PDG construction rules; empty when the graph is well formed.

    Checked: arities, a single-rooted acyclic hierarchy, unique contexts, traits valid in a
    context of a strict ancestor, edge and selector contexts enclosing both endpoints,
    reducers and accessed nodes that exist.
    """

    problems: list[str] = []
    _check_hierarchy(g, problems)
    if problems:
        return problems

    for node in g.nodes:
        for trait in node.traits:
            if trait.context == WIDENED:
                continue
            bearer = g.context_bearers.get(trait.context)
            if bearer is None or bearer not in g.ancestors(node.id):
                problems.append(f"trait {trait.kind} of {node.id} names context {trait.context} outside its ancestors")
    _check_edges(g, problems)
    _check_variables(g, problems)
    return problems


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def smallest_context(g: PsPdg, a: str, b: str) -> str:
    """The innermost context whose node holds both a and b."""
    for node in g.ancestors(a):
        payload = g.node_map[node].payload
        if isinstance(payload, HierarchicalNode) and payload.context and g.contains(node, b):
            return payload.context
    return WIDENED


def add_variable_accesses(b: PsPdgBuilder, p: Program, key: str, region_id: str | None) -> None:
    """Record which leaves use and define memory object key, within a region or the whole program."""

    scope = p.region_instructions(region_id) if region_id else sorted(p.instruction_map)
    uses, defs = [], []
    for ins_id in scope:
        for access in memory_accesses(p, p.instruction_map[ins_id]):
            if access.key == key:
                (defs if access.write else uses).append(b.instructions[ins_id])
    b.add_access(key, uses, defs)
