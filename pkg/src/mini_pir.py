"""The structured parallel mini-IR: types, parser, validator and printer.

A program is a list of global declarations and functions. A function body is a
tree of regions (loops, parallel loops, tasks, critical sections, Cilk spawns and
scopes, ...) whose leaves are blocks of instructions::

    global a: array[8]
    global s: scalar

    func add(x, y) {
      x = x + y
    }

    func main() {
      @pragma(parallel_for, id=L1, iv=i, trip=8, reduction(s: add)) {
        s = s + a[i]
      }
      print s
    }

Every instruction and every region opening and closing gets the next program
position. Positions double as instruction ids and anchor the canonical PS-PDG.
"""

# pylint: disable=logging-fstring-interpolation, too-many-lines

# Global imports
import logging
import re
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from typing import Iterator


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class RegionKind(StrEnum):
    """Kinds of structured regions."""

    SEQ = "seq"
    LOOP = "loop"
    PARALLEL_FOR = "parallel_for"
    TASK = "task"
    CRITICAL = "critical"
    ATOMIC = "atomic"
    SINGLE = "single"
    ORDERED = "ordered"
    SPAWN = "spawn"
    SCOPE = "scope"
    PARALLEL = "parallel"


# Worksharing and tasking spellings normalized at parse time
REGION_ALIASES: dict[str, RegionKind] = {
    "for": RegionKind.PARALLEL_FOR,
    "cilk_for": RegionKind.PARALLEL_FOR,
    "taskloop": RegionKind.PARALLEL_FOR,
    "simd": RegionKind.PARALLEL_FOR,
    "workshare": RegionKind.PARALLEL_FOR,
    "section": RegionKind.TASK,
    "cilk_spawn": RegionKind.SPAWN,
    "cilk_scope": RegionKind.SCOPE,
}

LOOP_KINDS = frozenset({RegionKind.LOOP, RegionKind.PARALLEL_FOR})

# Regions that may enclose critical, atomic, single and barrier
PARALLEL_KINDS = frozenset(
    {RegionKind.PARALLEL_FOR, RegionKind.TASK, RegionKind.SCOPE, RegionKind.PARALLEL}
)

# Regions that must contain at least one node
NON_EMPTY_KINDS = frozenset(set(RegionKind) - {RegionKind.LOOP, RegionKind.PARALLEL_FOR, RegionKind.SCOPE})


class ClauseKind(StrEnum):
    """Data and ordering clauses attached to a region header."""

    PRIVATE = "private"
    FIRSTPRIVATE = "firstprivate"
    LASTPRIVATE = "lastprivate"
    REDUCTION = "reduction"
    THREADPRIVATE = "threadprivate"
    NOWAIT = "nowait"
    DEPEND = "depend"
    SHARED = "shared"


class Opcode(StrEnum):
    """The eight instruction opcodes."""

    ASSIGN = "assign"
    BINOP = "binop"
    LOAD = "load"
    STORE = "store"
    CALL = "call"
    PRINT = "print"
    BARRIER = "barrier"
    SYNC = "sync"


class VarKind(StrEnum):
    """Kinds of declared variables."""

    SCALAR = "scalar"
    ARRAY = "array"
    STRUCT = "struct"


BINARY_OPERATORS = ("+", "-", "*", "/", "%")
DEPEND_DIRECTIONS = ("in", "out", "inout")
HOLDER = "holder"


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True, order=True)
class Diagnostic:
    """One problem found in a program, ordered by source position."""

    line: int
    column: int
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.code}: {self.message}"


class PirError(Exception):
    """Raised when a program does not parse or does not validate."""

    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        self.diagnostics = sorted(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


def diagnostic(code: str, message: str, line: int = 0, column: int = 0) -> Diagnostic:
    """Shorthand that keeps the (code, message) argument order used in messages."""
    return Diagnostic(line=line, column=column, code=code, message=message)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class IndexExpr:
    """Subscript ``coef * var + offset``.

    ``var`` is None for a constant subscript. When ``opaque`` is set, ``var`` is a
    scalar whose run-time value is used, otherwise it is an enclosing induction variable.

    >>> str(IndexExpr("i", 2, -1))
    '2*i-1'
    >>> str(IndexExpr(None, 0, 3))
    '3'
    """

    var: str | None = None
    coef: int = 0
    offset: int = 0
    opaque: bool = False

    @property
    def is_constant(self) -> bool:
        return self.var is None

    def __str__(self) -> str:
        if self.var is None:
            return str(self.offset)
        text = self.var if self.coef == 1 else f"{self.coef}*{self.var}"
        if self.offset > 0:
            text += f"+{self.offset}"
        elif self.offset < 0:
            text += f"-{-self.offset}"
        return text


@dataclass(frozen=True)
class Ref:
    """A reference to a variable, an array element, or a struct field."""

    name: str
    index: IndexExpr | None = None
    field: str | None = None

    def __str__(self) -> str:
        if self.index is not None:
            return f"{self.name}[{self.index}]"
        if self.field is not None:
            return f"{self.name}.{self.field}"
        return self.name


Operand = Ref | int


@dataclass(frozen=True)
class Instruction:
    """One instruction. Its id is its program position."""

    id: int
    opcode: Opcode
    dest: Ref | None = None
    operands: tuple[Operand, ...] = ()
    op: str | None = None
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)

    def refs_read(self) -> tuple[Ref, ...]:
        """Every reference whose value this instruction reads, index variables included."""
        refs: list[Ref] = []
        for operand in self.operands:
            if isinstance(operand, Ref):
                refs.append(operand)
                if operand.index is not None and operand.index.var is not None:
                    refs.append(Ref(operand.index.var))
        if self.dest is not None and self.dest.index is not None and self.dest.index.var is not None:
            refs.append(Ref(self.dest.index.var))
        return tuple(refs)

    def refs_written(self) -> tuple[Ref, ...]:
        return (self.dest,) if self.dest is not None else ()

    def __str__(self) -> str:
        match self.opcode:
            case Opcode.BARRIER | Opcode.SYNC:
                return str(self.opcode)
            case Opcode.PRINT:
                return f"print {self.operands[0]}"
            case Opcode.CALL:
                call = f"call {self.op}({', '.join(str(a) for a in self.operands)})"
                return f"{self.dest} = {call}" if self.dest is not None else call
        rhs = f" {self.op} ".join(str(a) for a in self.operands) if self.op else str(self.operands[0])
        return f"{self.dest} = {rhs}"


@dataclass(frozen=True)
class VarDecl:
    """A global or local variable declaration."""

    name: str
    kind: VarKind = VarKind.SCALAR
    size: int = 1
    fields: tuple[str, ...] = ()
    distinct_index: bool = False
    bound: int | None = None
    init: tuple[int, ...] = ()
    hyper: str | None = None
    identity: int | None = None
    line: int = field(default=0, compare=False)

    @property
    def cells(self) -> int:
        """Number of memory cells the variable occupies."""
        if self.kind is VarKind.STRUCT:
            return len(self.fields)
        return self.size if self.kind is VarKind.ARRAY else 1

    def initial_values(self) -> list[int]:
        if not self.init:
            return [0] * self.cells
        if len(self.init) == 1:
            return [self.init[0]] * self.cells
        values = list(self.init[: self.cells])
        return values + [0] * (self.cells - len(values))

    def __str__(self) -> str:
        match self.kind:
            case VarKind.ARRAY:
                text = f"{self.name}: array[{self.size}]"
            case VarKind.STRUCT:
                text = f"{self.name}: struct{{{', '.join(self.fields)}}}"
            case _:
                text = f"{self.name}: scalar"
        if self.distinct_index:
            text += " distinct"
        if self.bound is not None:
            text += f" bound {self.bound}"
        if self.hyper is not None:
            if self.hyper == HOLDER or self.identity is None:
                text += f" hyper({self.hyper})"
            else:
                text += f" hyper({self.hyper}, {self.identity})"
        if self.init:
            if len(self.init) == 1 and self.kind is VarKind.SCALAR:
                text += f" = {self.init[0]}"
            else:
                text += f" = [{', '.join(str(v) for v in self.init)}]"
        return text


@dataclass(frozen=True)
class Clause:
    """A region clause. ``reducer`` and ``identity`` are used by reductions, ``direction`` by depend."""

    kind: ClauseKind
    var: str = ""
    reducer: str | None = None
    identity: int = 0
    direction: str | None = None

    def __str__(self) -> str:
        match self.kind:
            case ClauseKind.NOWAIT:
                return "nowait"
            case ClauseKind.REDUCTION:
                return f"reduction({self.var}: {self.reducer}, {self.identity})"
            case ClauseKind.DEPEND:
                return f"depend({self.direction}: {self.var})"
        return f"{self.kind}({self.var})"


@dataclass(frozen=True)
class Block:
    """Straight-line run of instructions and local declarations."""

    items: tuple["Instruction | VarDecl", ...] = ()


@dataclass(frozen=True)
class Region:
    """A structured region. ``iv`` and ``trip`` are used by loops only."""

    kind: RegionKind
    id: str
    position: int
    end_position: int
    iv: str | None = None
    trip: int | str | None = None
    clauses: tuple[Clause, ...] = ()
    children: tuple["Region | Block", ...] = ()
    line: int = field(default=0, compare=False)

    @property
    def is_loop(self) -> bool:
        return self.kind in LOOP_KINDS

    def clauses_of(self, kind: ClauseKind) -> tuple[Clause, ...]:
        return tuple(c for c in self.clauses if c.kind is kind)

    def has_clause(self, kind: ClauseKind) -> bool:
        return any(c.kind is kind for c in self.clauses)


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[str, ...] = ()
    children: tuple[Region | Block, ...] = ()
    position: int = 0
    end_position: int = 0
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Binding:
    """What an identifier resolves to at one use site.

    ``key`` names the abstract memory object; ``scope_loops`` lists the loops that
    enclose the declaration, whose iterations each get a fresh instance.
    """

    kind: str
    key: str
    decl: VarDecl | None = None
    scope_loops: tuple[str, ...] = ()

    @property
    def is_memory(self) -> bool:
        return self.kind != "iv"


@dataclass(frozen=True)
class Site:
    """Where an instruction or region sits: its function and enclosing regions, outermost first."""

    function: str
    ancestors: tuple[Region, ...] = ()

    def innermost(self, kinds: frozenset[RegionKind] | set[RegionKind]) -> Region | None:
        for region in reversed(self.ancestors):
            if region.kind in kinds:
                return region
        return None

    def loops(self) -> tuple[Region, ...]:
        return tuple(r for r in self.ancestors if r.is_loop)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def _walk(
    children: tuple[Region | Block, ...], function: str, ancestors: tuple[Region, ...]
) -> Iterator[tuple["Region | Instruction | VarDecl", Site]]:
    for child in children:
        if isinstance(child, Region):
            yield child, Site(function, ancestors)
            yield from _walk(child.children, function, ancestors + (child,))
        else:
            for item in child.items:
                yield item, Site(function, ancestors)


@dataclass(frozen=True)
class _ScopeTable:
    diagnostics: tuple[Diagnostic, ...]
    instructions: dict[tuple[int, str], Binding]
    clauses: dict[tuple[str, str], Binding]


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class Program:
    """A parsed program. Values are immutable; lookups are cached on first use."""

    functions: tuple[Function, ...] = ()
    globals: tuple[VarDecl, ...] = ()

    def walk(self) -> Iterator[tuple[Region | Instruction | VarDecl, Site]]:
        """Every region, instruction and local declaration in source order, with its site."""
        for function in self.functions:
            yield from _walk(function.children, function.name, ())

    @cached_property
    def function_map(self) -> dict[str, Function]:
        result: dict[str, Function] = {}
        for function in self.functions:
            result.setdefault(function.name, function)
        return result

    @cached_property
    def global_map(self) -> dict[str, VarDecl]:
        result: dict[str, VarDecl] = {}
        for decl in self.globals:
            result.setdefault(decl.name, decl)
        return result

    @cached_property
    def region_sites(self) -> dict[str, Site]:
        result: dict[str, Site] = {}
        for item, site in self.walk():
            if isinstance(item, Region):
                result.setdefault(item.id, site)
        return result

    @cached_property
    def region_map(self) -> dict[str, Region]:
        result: dict[str, Region] = {}
        for item, _site in self.walk():
            if isinstance(item, Region):
                result.setdefault(item.id, item)
        return result

    @cached_property
    def instruction_sites(self) -> dict[int, Site]:
        return {
            item.id: site for item, site in self.walk() if isinstance(item, Instruction)
        }

    @cached_property
    def instruction_map(self) -> dict[int, Instruction]:
        return {
            item.id: item for item, _site in self.walk() if isinstance(item, Instruction)
        }

    @property
    def instructions(self) -> list[Instruction]:
        return [self.instruction_map[k] for k in sorted(self.instruction_map)]

    def loops(self) -> list[Region]:
        """All Loop and ParallelFor regions in program order."""
        return sorted(
            (r for r in self.region_map.values() if r.is_loop), key=lambda r: r.position
        )

    def region_instructions(self, region_id: str) -> list[int]:
        """Ids of all instructions inside a region, nested regions included."""
        region = self.region_map[region_id]
        return [
            ins_id
            for ins_id in sorted(self.instruction_map)
            if region.position < ins_id < region.end_position
        ]

    @cached_property
    def scopes(self) -> _ScopeTable:
        return _Resolver(self).run()

    def binding(self, ins_id: int, name: str) -> Binding | None:
        """Resolve an identifier used by an instruction."""
        return self.scopes.instructions.get((ins_id, name))

    def clause_binding(self, region_id: str, name: str) -> Binding | None:
        """Resolve a variable named by a clause of a region."""
        return self.scopes.clauses.get((region_id, name))

    def declaration(self, key: str) -> VarDecl | None:
        """The declaration behind a memory object key, None for parameters."""
        if key in self.global_map:
            return self.global_map[key]
        for binding in self.scopes.instructions.values():
            if binding.key == key:
                return binding.decl
        return None


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
class _Resolver:
    """Resolve identifiers through the global, function and region scopes."""

    def __init__(self, program: Program) -> None:
        self.program = program
        self.diagnostics: list[Diagnostic] = []
        self.instructions: dict[tuple[int, str], Binding] = {}
        self.clauses: dict[tuple[str, str], Binding] = {}

    def run(self) -> _ScopeTable:
        global_frame: dict[str, Binding] = {}
        for decl in self.program.globals:
            if decl.name in global_frame:
                self._report("DuplicateDeclaration", f"global '{decl.name}' declared twice", decl.line)
                continue
            global_frame[decl.name] = Binding("global", decl.name, decl)

        for function in self.program.functions:
            frame: dict[str, Binding] = {}
            for name in function.params:
                if name in frame:
                    self._report("DuplicateDeclaration", f"parameter '{name}' declared twice", function.line)
                frame[name] = Binding("param", f"{name}@fn:{function.name}")
            self._children(function.children, [global_frame, frame], f"fn:{function.name}", ())

        return _ScopeTable(tuple(self.diagnostics), self.instructions, self.clauses)

    def _report(self, code: str, message: str, line: int = 0, column: int = 0) -> None:
        self.diagnostics.append(diagnostic(code, message, line, column))

    @staticmethod
    def _lookup(frames: list[dict[str, Binding]], name: str) -> Binding | None:
        for frame in reversed(frames):
            if name in frame:
                return frame[name]
        return None

    def _children(
        self,
        children: tuple[Region | Block, ...],
        frames: list[dict[str, Binding]],
        owner: str,
        loops: tuple[str, ...],
    ) -> None:
        frame = frames[-1]
        for child in children:
            if isinstance(child, Region):
                for clause in child.clauses:
                    if not clause.var:
                        continue
                    binding = self._lookup(frames, clause.var)
                    if binding is None or not binding.is_memory:
                        self._report(
                            "UnresolvedIdentifier",
                            f"clause {clause.kind} names unknown variable '{clause.var}'",
                            child.line,
                        )
                    else:
                        self.clauses[(child.id, clause.var)] = binding
                inner_loops = loops + (child.id,) if child.is_loop else loops
                new_frame: dict[str, Binding] = {}
                if child.is_loop and child.iv:
                    new_frame[child.iv] = Binding("iv", f"{child.iv}@{child.id}", None, inner_loops)
                self._children(child.children, frames + [new_frame], child.id, inner_loops)
                continue

            for item in child.items:
                if isinstance(item, VarDecl):
                    if item.name in frame:
                        self._report("DuplicateDeclaration", f"'{item.name}' declared twice in one scope", item.line)
                        continue
                    frame[item.name] = Binding("local", f"{item.name}@{owner}", item, loops)
                    continue
                for ref in item.refs_read() + item.refs_written():
                    binding = self._lookup(frames, ref.name)
                    if binding is None:
                        self._report(
                            "UnresolvedIdentifier", f"unknown identifier '{ref.name}'", item.line, item.column
                        )
                    else:
                        self.instructions[(item.id, ref.name)] = binding


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def _has_nodes(region: Region) -> bool:
    for child in region.children:
        if isinstance(child, Region):
            return True
        if any(isinstance(item, Instruction) for item in child.items):
            return True
    return False


def _check_reducer(p: Program, name: str | None, line: int, out: list[Diagnostic]) -> None:
    if name is None or name == HOLDER:
        return
    function = p.function_map.get(name)
    if function is None:
        out.append(diagnostic("UnknownReducer", f"reducer '{name}' is not a declared function", line))
    elif len(function.params) != 2:
        out.append(
            diagnostic(
                "BadReducerArity",
                f"reducer '{name}' takes {len(function.params)} arguments instead of 2",
                line,
            )
        )


def _check_region(p: Program, region: Region, site: Site, seen: set[str], out: list[Diagnostic]) -> None:
    line = region.line
    if region.id in seen:
        out.append(diagnostic("DuplicateRegionId", f"region id '{region.id}' used twice", line))
    seen.add(region.id)

    kinds = {a.kind for a in site.ancestors}
    if region.kind in (RegionKind.CRITICAL, RegionKind.ATOMIC, RegionKind.SINGLE, RegionKind.ORDERED):
        if not kinds & PARALLEL_KINDS:
            out.append(
                diagnostic(
                    "IllegalNesting",
                    f"{region.kind} region '{region.id}' is not enclosed in a parallel_for, task, scope or parallel region",
                    line,
                )
            )
    if region.kind is RegionKind.ORDERED and RegionKind.PARALLEL_FOR not in kinds:
        out.append(diagnostic("IllegalNesting", f"ordered region '{region.id}' needs an enclosing parallel_for", line))

    if region.kind is RegionKind.SPAWN:
        if not site.ancestors or site.ancestors[-1].kind is not RegionKind.SCOPE:
            out.append(diagnostic("IllegalNesting", f"spawn '{region.id}' must sit directly in a scope", line))
        items = [item for child in region.children if isinstance(child, Block) for item in child.items]
        if (
            len(region.children) != 1
            or len(items) != 1
            or not isinstance(items[0], Instruction)
            or items[0].opcode is not Opcode.CALL
        ):
            out.append(diagnostic("BadSpawnShape", f"spawn '{region.id}' must hold exactly one call", line))

    if region.is_loop:
        if region.iv is None or region.trip is None:
            out.append(diagnostic("BadTrip", f"loop '{region.id}' needs iv= and trip=", line))
        elif isinstance(region.trip, int) and region.trip < 0:
            out.append(diagnostic("BadTrip", f"loop '{region.id}' has a negative trip count", line))
        elif isinstance(region.trip, str):
            decl = p.global_map.get(region.trip)
            if decl is None or decl.kind is not VarKind.SCALAR:
                out.append(
                    diagnostic("BadTrip", f"trip '{region.trip}' of loop '{region.id}' is not a global scalar", line)
                )
    elif region.iv is not None or region.trip is not None:
        out.append(diagnostic("BadTrip", f"{region.kind} region '{region.id}' cannot have iv= or trip=", line))

    if region.kind in NON_EMPTY_KINDS and not _has_nodes(region):
        out.append(diagnostic("EmptyRegion", f"{region.kind} region '{region.id}' is empty", line))

    for clause in region.clauses_of(ClauseKind.REDUCTION):
        _check_reducer(p, clause.reducer, line, out)


def _check_ref(
    p: Program, ins: Instruction, ref: Ref, written: bool, bare_ok: bool, out: list[Diagnostic]
) -> None:
    binding = p.binding(ins.id, ref.name)
    if binding is None:
        return
    where = (ins.line, ins.column)
    if binding.kind == "iv":
        if written:
            out.append(diagnostic("IllegalAssignment", f"induction variable '{ref.name}' is read-only", *where))
        if ref.index is not None or ref.field is not None:
            out.append(diagnostic("UnexpectedIndex", f"induction variable '{ref.name}' is not indexable", *where))
        return
    kind = binding.decl.kind if binding.decl is not None else VarKind.SCALAR
    if kind is VarKind.SCALAR:
        if ref.index is not None or ref.field is not None:
            out.append(diagnostic("UnexpectedIndex", f"scalar '{ref.name}' takes no subscript", *where))
    elif kind is VarKind.ARRAY:
        if ref.field is not None:
            out.append(diagnostic("UnexpectedIndex", f"array '{ref.name}' has no fields", *where))
        elif ref.index is None and not bare_ok:
            out.append(diagnostic("MissingIndex", f"array '{ref.name}' needs a subscript", *where))
    else:
        assert binding.decl is not None
        if ref.index is not None:
            out.append(diagnostic("UnexpectedIndex", f"struct '{ref.name}' takes a field, not a subscript", *where))
        elif ref.field is None:
            if not bare_ok:
                out.append(diagnostic("MissingIndex", f"struct '{ref.name}' needs a field", *where))
        elif ref.field not in binding.decl.fields:
            out.append(diagnostic("UnresolvedIdentifier", f"struct '{ref.name}' has no field '{ref.field}'", *where))


def _check_instruction(p: Program, ins: Instruction, site: Site, out: list[Diagnostic]) -> None:
    kinds = {a.kind for a in site.ancestors}
    if ins.opcode is Opcode.BARRIER and not kinds & PARALLEL_KINDS:
        out.append(diagnostic("IllegalBarrier", "barrier outside a parallel_for, task, scope or parallel region", ins.line, ins.column))
    if ins.opcode is Opcode.SYNC and RegionKind.SCOPE not in kinds:
        out.append(diagnostic("IllegalSync", "sync outside a scope", ins.line, ins.column))

    is_call = ins.opcode is Opcode.CALL
    for operand in ins.operands:
        if isinstance(operand, Ref):
            _check_ref(p, ins, operand, False, is_call, out)
            if operand.index is not None and operand.index.var is not None:
                _check_ref(p, ins, Ref(operand.index.var), False, False, out)
    if ins.dest is not None:
        _check_ref(p, ins, ins.dest, True, False, out)
        if ins.dest.index is not None and ins.dest.index.var is not None:
            _check_ref(p, ins, Ref(ins.dest.index.var), False, False, out)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def validate(p: Program) -> list[Diagnostic]:
    """Check every program invariant.

    :param p: The program to check
    :return: Diagnostics ordered by source position, empty when the program is well formed

    >>> validate(parse("func main() { }"))
    []
    """

    out: list[Diagnostic] = list(p.scopes.diagnostics)

    names: set[str] = set()
    for function in p.functions:
        if function.name in names:
            out.append(diagnostic("DuplicateFunction", f"function '{function.name}' defined twice", function.line))
        names.add(function.name)
    if "main" not in names:
        out.append(diagnostic("MissingMain", "no function named 'main'", 1))

    for decl in p.globals:
        if decl.kind is VarKind.ARRAY and decl.size <= 0:
            out.append(diagnostic("BadArraySize", f"array '{decl.name}' has size {decl.size}", decl.line))
        _check_reducer(p, decl.hyper, decl.line, out)

    seen_regions: set[str] = set()
    seen_instructions: set[int] = set()
    for item, site in p.walk():
        if isinstance(item, Region):
            _check_region(p, item, site, seen_regions, out)
        elif isinstance(item, Instruction):
            if item.id in seen_instructions:
                out.append(diagnostic("DuplicateInstructionId", f"instruction id {item.id} used twice", item.line))
            seen_instructions.add(item.id)
            _check_instruction(p, item, site, out)

    result = sorted(set(out))
    logging.debug(f"validate: {len(result)} diagnostics")
    return result


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
_IDENT = r"[A-Za-z_]\w*"
_IDENT_RE = re.compile(rf"^{_IDENT}$")
_INT_RE = re.compile(r"^-?\d+$")
_REF_RE = re.compile(rf"^({_IDENT})(?:\[([^\]]*)\]|\.({_IDENT}))?$")
_INDEX_RE = re.compile(rf"^(?:(-?\d+)\s*\*\s*)?({_IDENT})\s*(?:([+-])\s*(\d+))?$")
_CALL_RE = re.compile(rf"^(?:(.+?)\s*=\s*)?call\s+({_IDENT})\s*\((.*)\)$")
_FUNC_RE = re.compile(rf"^func\s+({_IDENT})\s*\(([^)]*)\)\s*\{{$")
_PRAGMA_RE = re.compile(r"^@pragma\s*\((.*)\)\s*\{$")
_CLAUSE_RE = re.compile(rf"^({_IDENT})\s*(?:\((.*)\))?$")
_DECL_RE = re.compile(
    rf"^(global|local)\s+({_IDENT})\s*:\s*(scalar|array\s*\[\s*(-?\d+)\s*\]|struct\s*\{{([^}}]*)\}})(.*)$"
)


@dataclass(frozen=True)
class _Stmt:
    text: str
    line: int
    column: int


def _split_statements(text: str) -> list[_Stmt]:
    """Cut the source into statements. Braces end a statement; declarations keep theirs."""

    stmts: list[_Stmt] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(line.lstrip())
        if stripped.startswith(("global ", "local ")):
            stmts.append(_Stmt(stripped, lineno, indent + 1))
            continue
        start = indent
        for offset in range(indent, len(line)):
            char = line[offset]
            if char not in "{}":
                continue
            piece = line[start : offset + (1 if char == "{" else 0)]
            if piece.strip():
                column = start + len(piece) - len(piece.lstrip()) + 1
                stmts.append(_Stmt(piece.strip(), lineno, column))
            if char == "}":
                stmts.append(_Stmt("}", lineno, offset + 1))
            start = offset + 1
        rest = line[start:]
        if rest.strip():
            stmts.append(_Stmt(rest.strip(), lineno, start + len(rest) - len(rest.lstrip()) + 1))
    return stmts


def _split_args(text: str) -> list[str]:
    """Split on commas that are not nested in brackets."""
    parts: list[str] = []
    depth = 0
    current = ""
    for char in text:
        if char in "([{":
            depth += 1
        elif char in ")]}":
            depth -= 1
        if char == "," and depth == 0:
            parts.append(current.strip())
            current = ""
        else:
            current += char
    if current.strip():
        parts.append(current.strip())
    return parts


def _split_binop(text: str) -> tuple[str, str | None, str]:
    depth = 0
    previous = ""
    for offset, char in enumerate(text):
        if char == "[":
            depth += 1
        elif char == "]":
            depth -= 1
        elif depth == 0 and char in BINARY_OPERATORS and offset > 0 and previous not in BINARY_OPERATORS:
            return text[:offset].strip(), char, text[offset + 1 :].strip()
        if not char.isspace():
            previous = char
    return text, None, ""


class _Parser:
    """Recursive descent over the statement list."""

    def __init__(self, text: str) -> None:
        self.stmts = _split_statements(text)
        self.i = 0
        self.position = 0

    @staticmethod
    def _error(stmt: _Stmt, message: str) -> PirError:
        return PirError([diagnostic("SyntaxError", message, stmt.line, stmt.column)])

    def _next_position(self) -> int:
        self.position += 1
        return self.position

    def program(self) -> Program:
        decls: list[VarDecl] = []
        functions: list[Function] = []
        while self.i < len(self.stmts):
            stmt = self.stmts[self.i]
            self.i += 1
            if stmt.text.startswith("global "):
                decls.append(self._decl(stmt, "global"))
            elif match := _FUNC_RE.match(stmt.text):
                functions.append(self._function(stmt, match))
            else:
                raise self._error(stmt, f"expected 'global' or 'func', found {stmt.text!r}")
        return Program(functions=tuple(functions), globals=tuple(decls))

    def _function(self, stmt: _Stmt, match: re.Match[str]) -> Function:
        params = tuple(p.strip() for p in match[2].split(",") if p.strip())
        for name in params:
            if not _IDENT_RE.match(name):
                raise self._error(stmt, f"bad parameter name {name!r}")
        position = self._next_position()
        children = self._body(stmt, ())
        return Function(match[1], params, children, position, self._next_position(), line=stmt.line)

    def _body(self, opener: _Stmt, ivs: tuple[str, ...]) -> tuple[Region | Block, ...]:
        children: list[Region | Block] = []
        items: list[Instruction | VarDecl] = []
        while True:
            if self.i >= len(self.stmts):
                raise self._error(opener, "missing '}'")
            stmt = self.stmts[self.i]
            self.i += 1
            if stmt.text == "}":
                break
            if stmt.text.startswith("@pragma"):
                if items:
                    children.append(Block(tuple(items)))
                    items = []
                children.append(self._region(stmt, ivs))
            elif stmt.text.startswith("local "):
                items.append(self._decl(stmt, "local"))
            elif stmt.text.endswith("{"):
                raise self._error(stmt, f"unexpected block opener {stmt.text!r}")
            else:
                items.append(self._instruction(stmt, ivs))
        if items:
            children.append(Block(tuple(items)))
        return tuple(children)

    def _region(self, stmt: _Stmt, ivs: tuple[str, ...]) -> Region:
        match = _PRAGMA_RE.match(stmt.text)
        if not match:
            raise self._error(stmt, "malformed @pragma header")
        args = _split_args(match[1])
        if not args:
            raise self._error(stmt, "@pragma needs a region kind")
        kind_name = args[0].lower()
        try:
            kind = REGION_ALIASES.get(kind_name) or RegionKind(kind_name)
        except ValueError:
            raise self._error(stmt, f"unknown region kind {kind_name!r}") from None

        region_id: str | None = None
        iv: str | None = None
        trip: int | str | None = None
        clauses: list[Clause] = []
        for arg in args[1:]:
            key, sep, value = arg.partition("=")
            if sep and "(" not in key:
                key, value = key.strip(), value.strip()
                if key == "id" and value:
                    region_id = value
                elif key == "iv" and _IDENT_RE.match(value):
                    iv = value
                elif key == "trip" and _INT_RE.match(value):
                    trip = int(value)
                elif key == "trip" and _IDENT_RE.match(value):
                    trip = value
                else:
                    raise self._error(stmt, f"bad region attribute {arg!r}")
            else:
                clauses.extend(self._clause(stmt, arg))

        position = self._next_position()
        if region_id is None:
            region_id = f"_r{position}"
        inner = ivs + (iv,) if kind in LOOP_KINDS and iv else ivs
        children = self._body(stmt, inner)
        return Region(
            kind, region_id, position, self._next_position(), iv, trip, tuple(clauses), children, line=stmt.line
        )

    def _names(self, stmt: _Stmt, text: str) -> list[str]:
        names = [n.strip() for n in text.split(",") if n.strip()]
        if not names or not all(_IDENT_RE.match(n) for n in names):
            raise self._error(stmt, f"bad variable list {text!r}")
        return names

    def _clause(self, stmt: _Stmt, text: str) -> list[Clause]:
        match = _CLAUSE_RE.match(text)
        if not match:
            raise self._error(stmt, f"malformed clause {text!r}")
        name, body = match[1].lower(), match[2]
        if name == "nowait":
            if body:
                raise self._error(stmt, "nowait takes no arguments")
            return [Clause(ClauseKind.NOWAIT)]
        try:
            kind = ClauseKind(name)
        except ValueError:
            raise self._error(stmt, f"unknown clause {name!r}") from None
        if body is None:
            raise self._error(stmt, f"clause {name!r} needs arguments")

        if kind is ClauseKind.REDUCTION:
            variables, sep, rest = body.partition(":")
            parts = [p.strip() for p in rest.split(",")]
            if not sep or not _IDENT_RE.match(parts[0]) or len(parts) > 2:
                raise self._error(stmt, f"expected reduction(var: function[, identity]), found {text!r}")
            if len(parts) == 2 and not _INT_RE.match(parts[1]):
                raise self._error(stmt, f"reduction identity must be an integer, found {parts[1]!r}")
            identity = int(parts[1]) if len(parts) == 2 else 0
            return [Clause(kind, v, parts[0], identity) for v in self._names(stmt, variables)]

        if kind is ClauseKind.DEPEND:
            direction, sep, variables = body.partition(":")
            direction = direction.strip().lower()
            if not sep or direction not in DEPEND_DIRECTIONS:
                raise self._error(stmt, f"expected depend(in|out|inout: var), found {text!r}")
            return [Clause(kind, v, direction=direction) for v in self._names(stmt, variables)]

        return [Clause(kind, v) for v in self._names(stmt, body)]

    def _decl(self, stmt: _Stmt, scope: str) -> VarDecl:
        match = _DECL_RE.match(stmt.text)
        if not match or match[1] != scope:
            raise self._error(stmt, f"malformed {scope} declaration")
        type_text = match[3]
        kind, size, fields = VarKind.SCALAR, 1, ()
        if type_text.startswith("array"):
            kind, size = VarKind.ARRAY, int(match[4])
        elif type_text.startswith("struct"):
            kind = VarKind.STRUCT
            fields = tuple(self._names(stmt, match[5]))

        distinct, bound, hyper, identity = False, None, None, None
        init: tuple[int, ...] = ()
        rest = match[6].strip()
        while rest:
            if attr := re.match(r"^distinct\b", rest):
                distinct = True
            elif attr := re.match(r"^bound\s+(\d+)", rest):
                bound = int(attr[1])
            elif attr := re.match(rf"^hyper\s*\(\s*({_IDENT})\s*(?:,\s*(-?\d+)\s*)?\)", rest):
                hyper = attr[1]
                if attr[2] is not None:
                    identity = int(attr[2])
                elif hyper != HOLDER:
                    identity = 0
            elif attr := re.match(r"^=\s*\[([^\]]*)\]\s*$", rest):
                values = [v.strip() for v in attr[1].split(",") if v.strip()]
                if not values or not all(_INT_RE.match(v) for v in values):
                    raise self._error(stmt, "initializer lists hold integers only")
                init = tuple(int(v) for v in values)
            elif attr := re.match(r"^=\s*(-?\d+)\s*$", rest):
                init = (int(attr[1]),)
            else:
                raise self._error(stmt, f"unexpected {rest!r} in declaration")
            rest = rest[attr.end() :].strip()

        if scope == "local" and (hyper is not None or init or bound is not None):
            raise self._error(stmt, "local declarations take no hyper, bound or initializer")
        return VarDecl(match[2], kind, size, fields, distinct, bound, init, hyper, identity, line=stmt.line)

    def _index(self, stmt: _Stmt, text: str, ivs: tuple[str, ...]) -> IndexExpr:
        text = text.strip()
        if _INT_RE.match(text):
            return IndexExpr(None, 0, int(text))
        match = _INDEX_RE.match(text)
        if not match:
            raise self._error(stmt, f"subscript {text!r} is neither affine nor a variable")
        coef = int(match[1]) if match[1] else 1
        offset = int(match[4]) if match[4] else 0
        if match[3] == "-":
            offset = -offset
        return IndexExpr(match[2], coef, offset, opaque=match[2] not in ivs)

    def _ref(self, stmt: _Stmt, text: str, ivs: tuple[str, ...]) -> Ref:
        match = _REF_RE.match(text.strip())
        if not match:
            raise self._error(stmt, f"bad reference {text.strip()!r}")
        index = self._index(stmt, match[2], ivs) if match[2] is not None else None
        return Ref(match[1], index, match[3])

    def _atom(self, stmt: _Stmt, text: str, ivs: tuple[str, ...]) -> Operand:
        text = text.strip()
        if _INT_RE.match(text):
            return int(text)
        return self._ref(stmt, text, ivs)

    def _instruction(self, stmt: _Stmt, ivs: tuple[str, ...]) -> Instruction:
        text = stmt.text
        where = {"line": stmt.line, "column": stmt.column}
        if text in ("barrier", "sync"):
            return Instruction(self._next_position(), Opcode(text), **where)
        if text.startswith("print "):
            operand = self._atom(stmt, text[len("print ") :], ivs)
            return Instruction(self._next_position(), Opcode.PRINT, None, (operand,), **where)
        if match := _CALL_RE.match(text):
            dest = self._ref(stmt, match[1], ivs) if match[1] else None
            args = tuple(self._atom(stmt, a, ivs) for a in _split_args(match[3]))
            return Instruction(self._next_position(), Opcode.CALL, dest, args, match[2], **where)

        lhs, sep, rhs = text.partition("=")
        if not sep or not rhs.strip():
            raise self._error(stmt, f"unknown instruction {text!r}")
        dest = self._ref(stmt, lhs, ivs)
        indexed = dest.index is not None or dest.field is not None
        left, op, right = _split_binop(rhs.strip())
        if op is not None:
            operands = (self._atom(stmt, left, ivs), self._atom(stmt, right, ivs))
            opcode = Opcode.STORE if indexed else Opcode.BINOP
            return Instruction(self._next_position(), opcode, dest, operands, op, **where)
        operand = self._atom(stmt, rhs, ivs)
        if indexed:
            opcode = Opcode.STORE
        elif isinstance(operand, Ref) and (operand.index is not None or operand.field is not None):
            opcode = Opcode.LOAD
        else:
            opcode = Opcode.ASSIGN
        return Instruction(self._next_position(), opcode, dest, (operand,), **where)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def parse(text: str, check: bool = True) -> Program:
    """Parse mini-IR source text.

    :param text: UTF-8 program text
    :param check: Also run validate() and raise on any diagnostic
    :return: The parsed program
    :raises PirError: on a syntax error, or on validation diagnostics when check is set

    >>> len(parse("func main() { }").functions)
    1
    >>> [d.code for d in validate(parse("func main() { x = 1 }", check=False))]
    ['UnresolvedIdentifier']
    """

    program = _Parser(text).program()
    if check:
        diagnostics = validate(program)
        if diagnostics:
            raise PirError(diagnostics)
    return program


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def _print_children(children: tuple[Region | Block, ...], depth: int, lines: list[str]) -> None:
    pad = "  " * depth
    for child in children:
        if isinstance(child, Block):
            for item in child.items:
                lines.append(f"{pad}local {item}" if isinstance(item, VarDecl) else f"{pad}{item}")
            continue
        parts = [str(child.kind), f"id={child.id}"]
        if child.iv is not None:
            parts.append(f"iv={child.iv}")
        if child.trip is not None:
            parts.append(f"trip={child.trip}")
        parts.extend(str(c) for c in child.clauses)
        lines.append(f"{pad}@pragma({', '.join(parts)}) {{")
        _print_children(child.children, depth + 1, lines)
        lines.append(f"{pad}}}")


def print_program(p: Program) -> str:
    """Pretty-print a program; parse(print_program(p)) == p.

    >>> print(print_program(parse("func main() { }")), end="")
    func main() {
    }
    """

    lines = [f"global {decl}" for decl in p.globals]
    for function in p.functions:
        if lines:
            lines.append("")
        lines.append(f"func {function.name}({', '.join(function.params)}) {{")
        _print_children(function.children, 1, lines)
        lines.append("}")
    return "\n".join(lines) + "\n"
