"""OpenMP and Cilk front ends: every construct maps to its PS-PDG extension."""

# 3rd party imports
import pytest

# local imports
from conftest import CORPUS, load, pspdg
from frontend_cilk import KEEP_FIRST, check_spawn_sese, spawn_shapes
from frontend_openmp import MAPPING_RULES, FrontendError
from mini_pir import ClauseKind, RegionKind, parse
from pdg_builder import build_pdg
from pspdg_core import (
    WIDENED,
    EdgeDep,
    SelectorKind,
    Synthetic,
    TraitKind,
    VariableKind,
    canonicalize,
    equal,
    region_context,
)


def traits(g):
    return {t.kind for n in g.nodes for t in n.traits}


def selectors(g):
    out = set()
    for e in g.directed():
        for s in (e.producer_selector, e.consumer_selector):
            if s:
                out.add(s.kind)
    return out


# -----------------------------------------------------------------------------
# openmp
# -----------------------------------------------------------------------------
def test_every_construct_has_one_rule():
    constructs = [r.construct for r in MAPPING_RULES]
    assert len(constructs) == len(set(constructs))
    kinds = {str(k) for k in RegionKind if k not in (RegionKind.SPAWN, RegionKind.SCOPE)}
    clauses = {str(c) for c in ClauseKind}
    assert kinds | clauses <= set(constructs)


def test_sequential_program_keeps_pdg_edges():
    p = parse("global a: array[8]\nfunc main() {\n  @pragma(loop, id=L, iv=i, trip=7) {\n    a[i + 1] = a[i] + 1\n  }\n}")
    g = pspdg(p)
    base = build_pdg(p)
    assert len(g.directed()) == len(base.edges)
    assert not traits(g) and not g.variables and not g.undirected()


def test_parallel_for_drops_carried_edges():
    p = parse("global a: array[8]\nglobal k: scalar\nfunc main() {\n  @pragma(parallel_for, id=L, iv=i, trip=8) {\n    a[k] = a[k] + i\n  }\n}")
    g = pspdg(p)
    assert not [e for e in g.directed() if e.context == region_context("L")]


def test_critical_and_atomic(is_kernel):
    g = pspdg(is_kernel)
    undirected = g.undirected()
    assert len(undirected) == 1
    edge = undirected[0]
    assert edge.a == edge.b and edge.context == region_context("P")
    clauses = pspdg(load(CORPUS / "constructs" / "clauses.pir"))
    assert TraitKind.ATOMIC in traits(clauses)
    assert clauses.undirected()


def test_is_kernel_variables(is_kernel):
    g = pspdg(is_kernel)
    kinds = {(v.name, v.kind, v.context) for v in g.variables}
    assert ("prv_buff1", VariableKind.PRIVATIZABLE, region_context("P")) in kinds
    assert ("prv_buff1", VariableKind.REDUCIBLE, region_context("L2")) in kinds
    loop = g.loops["L2"]
    carried = [e for e in g.directed() if e.context == loop.context]
    assert carried
    assert all("prv_buff1" in e.variables for e in carried)


def test_single_is_singular():
    g = pspdg(load(CORPUS / "necessity" / "B" / "fast.pir"))
    singular = [(n, t) for n in g.nodes for t in n.traits if t.kind is TraitKind.SINGULAR]
    assert len(singular) == 1
    node, trait = singular[0]
    assert g.context_bearers[trait.context] in g.ancestors(node.id)


def test_ordered_keeps_iteration_order():
    g = pspdg(load(CORPUS / "necessity" / "A" / "slow.pir"))
    order = [e for e in g.directed() if e.dep is EdgeDep.ORDER]
    assert len(order) == 1
    assert order[0].producer == order[0].consumer
    assert order[0].context == region_context("L1")
    assert order[0].variables == frozenset({"s"})


def test_clause_selectors_and_variables():
    g = pspdg(load(CORPUS / "constructs" / "clauses.pir"))
    assert SelectorKind.LAST_PRODUCER in selectors(g)
    # nowait on a loop outside any team keeps the lastprivate copy-out
    last = [e for e in g.directed() if e.producer_selector and e.producer_selector.kind is SelectorKind.LAST_PRODUCER]
    assert any("last" in e.variables for e in last)
    names = {(v.name, v.kind) for v in g.variables}
    assert ("t", VariableKind.PRIVATIZABLE) in names
    assert ("scale", VariableKind.PRIVATIZABLE) in names
    shared = pspdg(load(CORPUS / "necessity" / "D" / "fast.pir"))
    assert selectors(shared) == {SelectorKind.ANY_PRODUCER}


def test_firstprivate_selects_all_consumers():
    g = pspdg(
        "global x: scalar\nglobal a: array[4]\nfunc main() {\n  x = 5\n"
        "  @pragma(parallel_for, id=L, iv=i, trip=4, firstprivate(x)) {\n    a[i] = x + i\n  }\n}"
    )
    assert SelectorKind.ALL_CONSUMERS in selectors(g)
    entry = [e for e in g.directed() if e.producer_selector]
    assert all(e.dep is EdgeDep.RAW and e.variables == frozenset({"x"}) for e in entry)


def test_reduction_names_its_reducer():
    g = pspdg(load(CORPUS / "necessity" / "E" / "fast.pir"))
    (var,) = g.variables
    assert var.kind is VariableKind.REDUCIBLE
    assert var.context == region_context("L1")
    assert g.node_map[var.reducer].is_hierarchical
    assert var.identity == 0


def test_tasks_depend_and_unordered():
    g = pspdg(load(CORPUS / "constructs" / "tasks.pir"))
    assert TraitKind.UNORDERED in traits(g)
    depend = [e for e in g.directed() if e.dep is EdgeDep.DEPEND]
    assert len(depend) == 1 and depend[0].variables == frozenset({"y"})
    assert depend[0].producer == g.regions["T1"] and depend[0].consumer == g.regions["T2"]


TASKS_AROUND_A_LOOP = (
    "global a: array[4]\nglobal x: scalar = 1\nglobal y: scalar\nglobal z: scalar\nfunc main() {\n"
    "  @pragma(OUTER) {\n    @pragma(task, id=T1) {\n      y = x + 1\n    }\n"
    "    @pragma(parallel_for, id=L, iv=i, trip=4CLAUSE) {\n      a[i] = i\n    }\n"
    "    @pragma(task, id=T2) {\n      z = y * 2\n    }\n  }\n  print z\n}"
)


def _task_edges(outer: str, clause: str):
    g = pspdg(TASKS_AROUND_A_LOOP.replace("OUTER", outer).replace("CLAUSE", clause))
    return [e for e in g.directed() if e.dep is EdgeDep.RAW and e.variables == frozenset({"y"})]


def test_nowait_lets_tasks_pass_the_loop():
    assert _task_edges("parallel, id=P", "")
    assert not _task_edges("parallel, id=P", ", nowait")


def test_nowait_outside_a_team_keeps_the_barrier():
    assert _task_edges("seq", ", nowait")


def test_nowait_keeps_data_edges():
    text = (
        "global a: array[4]\nglobal b: array[4]\nfunc main() {\n  @pragma(parallel, id=P) {\n"
        "    @pragma(parallel_for, id=L, iv=i, trip=4CLAUSE) {\n      a[i] = i\n    }\n"
        "    b[0] = a[3]\n  }\n}"
    )
    waiting = pspdg(text.replace("CLAUSE", ""))
    nowait = pspdg(text.replace("CLAUSE", ", nowait"))
    assert len(nowait.directed()) == len(waiting.directed())
    assert [e for e in nowait.directed() if e.dep is EdgeDep.RAW and e.variables == frozenset({"a"})]


def test_barrier_keeps_edges():
    text = (
        "global a: array[4]\nglobal b: array[4]\nfunc main() {\n  @pragma(parallel, id=P) {\n"
        "    @pragma(parallel_for, id=L, iv=i, trip=4, nowait) {\n      a[i] = i\n    }\n"
        "    barrier\n    b[0] = a[3]\n  }\n}"
    )
    g = pspdg(text)
    raw = [e for e in g.directed() if e.dep is EdgeDep.RAW and e.variables == frozenset({"a"})]
    assert raw


def test_outer_parallel_loop_keeps_inner_context():
    g = pspdg(load(CORPUS / "necessity" / "C" / "slow.pir"))
    contexts = {e.context for e in g.directed() if e.context is not None}
    assert contexts == {region_context("L1")}


@pytest.mark.parametrize(
    "text",
    [
        "global x: scalar\nfunc main() {\n  @pragma(scope, id=S) {\n    @pragma(spawn) {\n      call f(x)\n    }\n    sync\n  }\n}",
        "global x: scalar hyper(holder)\nfunc main() {\n  x = 1\n}",
        "global x: scalar\nfunc main() {\n  @pragma(loop, id=L, iv=i, trip=2, private(x)) {\n    x = i\n  }\n}",
    ],
)
def test_openmp_rejects_foreign_constructs(text):
    with pytest.raises(FrontendError) as info:
        pspdg(text)
    assert info.value.diagnostics


# -----------------------------------------------------------------------------
# cilk
# -----------------------------------------------------------------------------
def test_spawn_shapes_are_single_entry_single_exit():
    g = pspdg(load(CORPUS / "constructs" / "spawn_cilk.pir"), "cilk")
    shapes = spawn_shapes(g)
    assert len(shapes) == 2
    assert check_spawn_sese(g) == []
    joins = [e for e in g.directed() if e.dep is EdgeDep.JOIN]
    assert {e.producer for e in joins} == {s.spawned for s in shapes}
    assert len({e.consumer for e in joins}) == 1


def test_holder_uses_keep_first_reducer():
    g = pspdg(load(CORPUS / "constructs" / "spawn_cilk.pir"), "cilk")
    (var,) = [v for v in g.variables if v.name == "first"]
    payload = g.node_map[var.reducer].payload
    assert isinstance(payload, Synthetic) and payload.kind == KEEP_FIRST
    assert var.context == region_context("S1")


def test_scope_ends_in_sync_exit():
    p = load(CORPUS / "constructs" / "spawn_cilk.pir")
    g = pspdg(p, "cilk")
    scope = g.node_map[g.regions["S1"]].payload
    exit_node = g.node_map[scope.children[-1]].payload
    assert exit_node == Synthetic("sync-exit", p.region_map["S1"].end_position)


@pytest.mark.parametrize(
    "text",
    [
        "global x: scalar\nfunc main() {\n  @pragma(parallel) {\n    x = 1\n  }\n}",
        "global x: array[4]\nfunc main() {\n  @pragma(parallel_for, id=L, iv=i, trip=4, private(x)) {\n    x[i] = i\n  }\n}",
    ],
)
def test_cilk_rejects_openmp_constructs(text):
    with pytest.raises(FrontendError):
        pspdg(text, "cilk")


@pytest.mark.parametrize("name", ["reduce", "scale"])
def test_cilk_for_twins_are_equal(name):
    omp = pspdg(load(CORPUS / "twins" / f"{name}_omp.pir"))
    cilk = pspdg(load(CORPUS / "twins" / f"{name}_cilk.pir"), "cilk")
    assert equal(omp, cilk), "\n".join(canonicalize(omp).lines)


def test_widened_context_is_reserved():
    g = pspdg(load(CORPUS / "twins" / "reduce_cilk.pir"), "cilk")
    assert all(v.context != WIDENED for v in g.variables)
