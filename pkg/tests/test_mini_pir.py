"""Parsing, validation and printing of mini-IR programs."""

# 3rd party imports
import pytest
from hypothesis import given, settings

# local imports
from conftest import CORPUS, corpus_files, load
from mini_pir import ClauseKind, Opcode, PirError, RegionKind, parse, print_program, validate
from strategies import programs


def codes(text: str) -> list[str]:
    return [d.code for d in validate(parse(text, check=False))]


def test_is_kernel_shape(is_kernel):
    assert len(is_kernel.loops()) == 4
    kinds = [r.kind for r in is_kernel.region_map.values()]
    assert kinds.count(RegionKind.CRITICAL) == 1
    threadprivate = [
        c for r in is_kernel.region_map.values() for c in r.clauses if c.kind is ClauseKind.THREADPRIVATE
    ]
    assert [c.var for c in threadprivate] == ["prv_buff1"]


@pytest.mark.parametrize("path", corpus_files(), ids=lambda p: str(p.relative_to(CORPUS)))
def test_print_parse_fixed_point(path):
    p = load(path)
    assert parse(print_program(p)) == p


@given(programs())
@settings(max_examples=50)
def test_random_programs_are_valid_and_round_trip(text):
    p = parse(text)
    assert parse(print_program(p)) == p


def test_positions_follow_source_order():
    p = parse("global x: scalar\nfunc main() {\n  x = 1\n  @pragma(loop, id=L, iv=i, trip=2) {\n    x = x + i\n  }\n}")
    assert [ins.id for ins in p.instructions] == sorted(ins.id for ins in p.instructions)
    loop = p.region_map["L"]
    assert loop.position < p.instructions[-1].id < loop.end_position


def test_operand_forms():
    p = parse(
        "global a: array[4]\nglobal s: struct{lo, hi}\nglobal x: scalar\n"
        "func main() {\n  a[2] = x * 3\n  x = s.hi\n  x = call f(x, 1)\n  print x\n  x = a[1]\n}"
    )
    assert [ins.opcode for ins in p.instructions] == [Opcode.STORE, Opcode.LOAD, Opcode.CALL, Opcode.PRINT, Opcode.LOAD]
    assert p.instructions[0].op == "*"
    assert p.instructions[2].op == "f"


def test_opaque_subscript():
    p = parse("global a: array[4]\nglobal k: scalar\nfunc main() {\n  @pragma(loop, id=L, iv=i, trip=4) {\n    a[k] = a[i + 1]\n  }\n}")
    store = p.instructions[0]
    assert store.dest.index.opaque
    assert not store.operands[0].index.opaque and store.operands[0].index.offset == 1


@pytest.mark.parametrize(
    "text, code",
    [
        ("func main() {\n  x = 1\n}", "UnresolvedIdentifier"),
        ("func f() {\n}", "MissingMain"),
        ("func main() {\n}\nfunc main() {\n}", "DuplicateFunction"),
        ("global x: scalar\nfunc main() {\n  @pragma(critical) {\n    x = 1\n  }\n}", "IllegalNesting"),
        ("global x: scalar\nfunc main() {\n  @pragma(parallel) {\n    @pragma(ordered) {\n      x = 1\n    }\n  }\n}", "IllegalNesting"),
        ("global x: scalar\nfunc main() {\n  @pragma(loop, id=L, iv=i) {\n    x = i\n  }\n}", "BadTrip"),
        ("global x: scalar\nfunc main() {\n  @pragma(loop, id=L, iv=i, trip=2) {\n    i = x\n  }\n}", "IllegalAssignment"),
        ("global x: scalar\nfunc main() {\n  x = 1\n  @pragma(loop, id=L, iv=i, trip=2) {\n    x = i\n  }\n  @pragma(loop, id=L, iv=i, trip=2) {\n    x = i\n  }\n}", "DuplicateRegionId"),
        ("global x: scalar\nfunc main() {\n  barrier\n}", "IllegalBarrier"),
        ("func main() {\n  sync\n}", "IllegalSync"),
        ("global x: scalar\nfunc main() {\n  x = x[1]\n}", "UnexpectedIndex"),
        ("global a: array[0]\nfunc main() {\n}", "BadArraySize"),
        ("global x: scalar\nfunc main() {\n  @pragma(parallel_for, id=L, iv=i, trip=2, reduction(x: nothing)) {\n    x = x + i\n  }\n}", "UnknownReducer"),
        ("global x: scalar\nfunc r(a) {\n}\nfunc main() {\n  @pragma(parallel_for, id=L, iv=i, trip=2, reduction(x: r)) {\n    x = x + i\n  }\n}", "BadReducerArity"),
        ("global x: scalar\nfunc main() {\n  @pragma(scope, id=S) {\n    @pragma(spawn) {\n      x = 1\n    }\n  }\n}", "BadSpawnShape"),
    ],
)
def test_validation_codes(text, code):
    assert code in codes(text)


def test_diagnostics_are_sorted_by_position():
    found = validate(parse("func main() {\n  x = 1\n  y = 2\n}", check=False))
    assert [d.line for d in found] == sorted(d.line for d in found)
    assert len(found) == 2


@pytest.mark.parametrize(
    "text",
    [
        "func main() {",
        "func main() {\n  @pragma(nonsense) {\n  }\n}",
        "global x: scalar\nfunc main() {\n  x =\n}",
        "global x: scalar = [1, b]\nfunc main() {\n}",
        "global x: scalar\nfunc main() {\n  @pragma(parallel_for, id=L, iv=i, trip=2, reduction(x)) {\n    x = i\n  }\n}",
    ],
)
def test_syntax_errors_raise(text):
    with pytest.raises(PirError) as info:
        parse(text)
    assert info.value.diagnostics


def test_parse_without_check_keeps_invalid_program():
    p = parse("func main() {\n  x = 1\n}", check=False)
    assert len(p.instructions) == 1


def test_region_aliases():
    p = parse("global x: array[4]\nfunc main() {\n  @pragma(cilk_for, id=L, iv=i, trip=4) {\n    x[i] = i\n  }\n}")
    assert p.region_map["L"].kind is RegionKind.PARALLEL_FOR
