"""Dependence edges of the sequential PDG."""

# 3rd party imports
import pytest
from hypothesis import given, settings

# local imports
from conftest import CORPUS, load
from emulator_ideal import dynamic_dependences, run_trace
from mini_pir import parse
from pdg_builder import DepKind, build_pdg, head_node, instruction_node, jk_pdg
from strategies import programs


def data_edges(g):
    return {(e.src, e.dst, e.kind, e.var, e.carried_by) for e in g.edges if e.kind is not DepKind.CTRL}


def test_single_instruction():
    g = build_pdg(parse("global x: scalar\nfunc main() {\n  x = 1\n}"))
    assert len(g.nodes) == 1
    assert not g.edges


def test_textbook_carried_dependence():
    p = parse("global a: array[8]\nfunc main() {\n  @pragma(loop, id=L, iv=i, trip=7) {\n    a[i + 1] = a[i]\n  }\n}")
    g = build_pdg(p)
    node = instruction_node(p.instructions[0].id)
    assert (node, node, DepKind.RAW, "a", "L") in data_edges(g)
    assert (head_node("L"), node) in {(e.src, e.dst) for e in g.edges if e.kind is DepKind.CTRL}


def test_disjoint_affine_subscripts_have_no_edge():
    p = parse(
        "global a: array[16]\nfunc main() {\n  @pragma(loop, id=L, iv=i, trip=8) {\n"
        "    a[2 * i] = 1\n    a[2 * i + 1] = a[2 * i]\n  }\n}"
    )
    g = build_pdg(p)
    first, second = (instruction_node(ins.id) for ins in p.instructions)
    carried = {(s, d) for s, d, _k, _v, c in data_edges(g) if c == "L"}
    assert not carried
    assert (first, second, DepKind.RAW, "a", None) in data_edges(g)


def test_distinct_index_removes_carried_opaque_edges():
    text = (
        "global a: array[8]{attr}\nglobal k: scalar\nfunc main() {{\n"
        "  @pragma(loop, id=L, iv=i, trip=8) {{\n    a[k] = a[k] + 1\n  }}\n}}"
    )
    plain = build_pdg(parse(text.format(attr="")))
    distinct = build_pdg(parse(text.format(attr=" distinct")))
    assert any(e.carried_by == "L" and e.var == "a" for e in plain.edges)
    assert not any(e.carried_by == "L" and e.var == "a" for e in distinct.edges)
    assert distinct.edges <= plain.edges


def test_calls_alias_globals():
    p = parse("global x: scalar\nfunc main() {\n  x = 1\n  call f(2)\n}")
    g = build_pdg(p)
    first, second = (instruction_node(ins.id) for ins in p.instructions)
    assert (first, second, DepKind.WAW, "@mem", None) in data_edges(g)


def test_locals_are_fresh_per_iteration():
    p = parse(
        "global a: array[4]\nfunc main() {\n  @pragma(loop, id=L, iv=i, trip=4) {\n"
        "    local t: scalar\n    t = a[i]\n    a[i] = t + 1\n  }\n}"
    )
    assert not [e for e in build_pdg(p).edges if e.carried_by == "L"]


def test_is_kernel_histogram_is_carried(is_kernel):
    g = build_pdg(is_kernel)
    histogram = {(e.kind, e.var) for e in g.edges if e.carried_by == "L2"}
    assert {(DepKind.RAW, "prv_buff1"), (DepKind.WAW, "prv_buff1")} <= histogram


def test_jk_pdg_drops_worksharing_edges_only():
    p = load(CORPUS / "necessity" / "C" / "slow.pir")
    base = build_pdg(p)
    jk = jk_pdg(p, base)
    assert not [e for e in jk.edges if e.carried_by == "L2"]
    assert [e for e in jk.edges if e.carried_by == "L1"]
    assert jk.edges < base.edges


@given(programs())
@settings(max_examples=100)
def test_static_edges_cover_dynamic_dependences(text):
    p = parse(text)
    g = build_pdg(p)
    static = {(e.src, e.dst, e.carried_by) for e in g.edges}
    for (src, dst), loops in dynamic_dependences(run_trace(p)).items():
        for loop in loops:
            assert (instruction_node(src), instruction_node(dst), loop) in static


@pytest.mark.parametrize("attr", ["", " distinct"])
def test_removing_distinct_never_removes_edges(attr):
    text = "global a: array[8]{}\nglobal k: scalar\nfunc main() {{\n  @pragma(loop, id=L, iv=i, trip=8) {{\n    a[k] = a[i]\n  }}\n}}"
    with_attr = build_pdg(parse(text.format(attr)))
    without = build_pdg(parse(text.format("")))
    assert with_attr.edges <= without.edges
