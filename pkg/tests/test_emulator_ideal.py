"""Traces, dynamic dependence DAGs, critical paths and semantic replay on the ideal machine."""

# Global imports
from functools import cache

# 3rd party imports
import pytest
from hypothesis import given, settings

# local imports
from analysis_parallel import EnumerationConfig, ParallelPlan, Technique, source_plans
from conftest import corpus_files, load, model_of, pspdg
from emulator_ideal import (
    DynDag,
    EmulationError,
    PlanConflictError,
    TraceCapExceeded,
    best_plans,
    build_dag,
    check_semantics,
    critical_path,
    dynamic_dependences,
    emulate,
    linear_extensions,
    longest_path,
    oracle_longest_path,
    run_trace,
)
from mini_pir import parse
from pdg_builder import build_pdg
from strategies import dags

TWO_STEPS = (
    "global a: array[3]\nglobal b: array[3]\nfunc main() {\n"
    "  @pragma(loop, id=L, iv=i, trip=3) {\n    a[i] = i\n    b[i] = a[i]\n  }\n}"
)
CARRIED = "global a: array[8]\nfunc main() {\n  @pragma(loop, id=L, iv=i, trip=7) {\n    a[i + 1] = a[i] + 1\n  }\n}"


def exhaustive_longest_path(weights, edges) -> int:
    successors = {n: [v for u, v in edges if u == n] for n in range(len(weights))}

    @cache
    def heaviest_from(node: int) -> int:
        return weights[node] + max((heaviest_from(s) for s in successors[node]), default=0)

    return max((heaviest_from(n) for n in range(len(weights))), default=0)


# -----------------------------------------------------------------------------
# traces
# -----------------------------------------------------------------------------
def test_empty_main_has_an_empty_trace():
    p = parse("func main() {\n}", check=False)
    t = run_trace(p)
    assert t.events == ()
    report = critical_path(t, {}, build_pdg(p))
    assert report.critical_path_length == 0
    assert report.speedup == 1.0


def test_trace_records_every_instruction():
    t = run_trace(parse(TWO_STEPS))
    assert len(t.events) == 6
    assert [e.path for e in t.events[:2]] == [(("L", 0),), (("L", 0),)]
    assert t.loop_counts == {"L": 6}
    assert t.coverage() == {"L": 1.0}
    assert t.memory[("b", (), 2)] == 2


def test_trace_output_and_inputs():
    p = parse("global x: scalar = 2\nfunc main() {\n  x = x * 3\n  print x\n}")
    assert run_trace(p).output == (6,)
    assert run_trace(p, inputs={"x": [5]}).output == (15,)


def test_dynamic_dependences_name_the_carrying_loop():
    p = parse(CARRIED)
    (ins,) = p.instructions
    assert dynamic_dependences(run_trace(p)) == {(ins.id, ins.id): {"L"}}


def test_trace_cap():
    with pytest.raises(TraceCapExceeded) as info:
        run_trace(parse(TWO_STEPS), cap=2)
    assert info.value.trace.truncated
    assert len(info.value.trace.events) == 2


def test_out_of_bounds_subscript():
    p = parse("global a: array[4]\nglobal k: scalar = 9\nfunc main() {\n  a[k] = 1\n}")
    with pytest.raises(EmulationError):
        run_trace(p)


# -----------------------------------------------------------------------------
# critical paths
# -----------------------------------------------------------------------------
def test_sequential_path_is_the_trace_length():
    p = parse(TWO_STEPS)
    report = critical_path(run_trace(p), {}, build_pdg(p))
    assert report.critical_path_length == report.total_instructions == 6


def test_doall_runs_iterations_side_by_side():
    p = parse(TWO_STEPS)
    plan = ParallelPlan("L", Technique.DOALL, 4, chunk=1)
    report = critical_path(run_trace(p), [plan], build_pdg(p))
    assert report.critical_path_length == 2
    assert report.speedup == 3.0


def test_plans_keep_the_dependences_the_graph_keeps():
    p = parse(CARRIED)
    plan = ParallelPlan("L", Technique.DOALL, 4, chunk=1)
    assert critical_path(run_trace(p), [plan], build_pdg(p)).critical_path_length == 7


def test_conflicting_plans():
    p = parse(TWO_STEPS)
    plans = [ParallelPlan("L", Technique.DOALL, 4, chunk=1), ParallelPlan("L", Technique.HELIX, 4, segments=1)]
    with pytest.raises(PlanConflictError):
        critical_path(run_trace(p), plans, build_pdg(p))


def test_longest_path_rejects_cycles():
    with pytest.raises(EmulationError):
        longest_path(DynDag((1, 1), frozenset({(0, 1), (1, 0)}), 2))


@given(dags())
@settings(max_examples=100)
def test_longest_path_matches_exhaustive_search(dag):
    weights, edges = dag
    d = DynDag(weights, edges, len(weights))
    expected = exhaustive_longest_path(weights, edges)
    assert longest_path(d) == expected
    assert oracle_longest_path(d) == expected


@given(dags())
@settings(max_examples=50)
def test_linear_extensions_respect_edges(dag):
    weights, edges = dag
    d = DynDag(weights, edges, len(weights))
    for order in linear_extensions(d, k=3, seed=7):
        assert sorted(order) == list(range(len(weights)))
        where = {node: k for k, node in enumerate(order)}
        assert all(where[u] < where[v] for u, v in edges)


@pytest.mark.parametrize("path", corpus_files(), ids=lambda p: p.stem)
def test_oracle_agrees_on_corpus_traces(path):
    p = load(path)
    g = pspdg(p, model_of(path))
    t = run_trace(p)
    cfg = EnumerationConfig()
    for plans in ({}, source_plans(p, cfg), best_plans(t, p, g, cfg)):
        d = build_dag(t, plans, g)
        assert longest_path(d) == oracle_longest_path(d)


# -----------------------------------------------------------------------------
# emulation
# -----------------------------------------------------------------------------
@pytest.mark.parametrize("path", corpus_files(), ids=lambda p: p.stem)
def test_paths_are_monotone(path):
    p = load(path)
    g = pspdg(p, model_of(path))
    cfg = EnumerationConfig(cores=8, chunk_sizes=2)
    report = emulate(p, g, cfg, baseline="sequential")
    ps = report.ps.critical_path_length
    assert ps <= report.pdg.critical_path_length <= report.sequential.critical_path_length
    assert ps <= report.source.critical_path_length
    # the PS-PDG row is measured on its own plans only
    t = run_trace(p)
    assert ps == critical_path(t, best_plans(t, p, g, cfg), g).critical_path_length


@pytest.mark.parametrize("path", corpus_files(), ids=lambda p: p.stem)
def test_replays_match_sequential_memory(path):
    p = load(path)
    g = pspdg(p, model_of(path))
    t = run_trace(p)
    cfg = EnumerationConfig()
    assert check_semantics(p, t, best_plans(t, p, g, cfg), g) == []
    assert check_semantics(p, t, source_plans(p, cfg), g) == []


def test_reduction_copies_are_merged_back():
    text = (
        "global a: array[4] = [1, 2, 3, 4]\nglobal s: scalar = 0\nfunc add(acc, part) {\n  acc = acc + part\n}\n"
        "func main() {\n  @pragma(parallel_for, id=L, iv=i, trip=4, reduction(s: add)) {\n    s = s + a[i]\n  }\n}"
    )
    p = parse(text)
    g = pspdg(p)
    t = run_trace(p)
    plan = {"L": ParallelPlan("L", Technique.DOALL, 4, chunk=1)}
    assert check_semantics(p, t, plan, g) == []
    assert t.memory[("s", (), 0)] == 10


def test_is_kernel_speedups(is_kernel):
    report = emulate(is_kernel, pspdg(is_kernel), EnumerationConfig(), baseline="sequential")
    assert report.ps.speedup > report.source.speedup > 1.0
    assert report.source.critical_path_length < report.sequential.critical_path_length
    assert [name for name, _ in report.rows()] == ["sequential", "pdg", "source", "ps-pdg"]


def test_source_baseline_normalizes_source_to_one(is_kernel):
    report = emulate(is_kernel, pspdg(is_kernel), EnumerationConfig())
    assert report.source.speedup == 1.0
    assert report.sequential.speedup < 1.0


def test_emulate_reports_truncated_traces():
    p = parse(TWO_STEPS)
    report = emulate(p, pspdg(p), EnumerationConfig(cores=2, chunk_sizes=1), cap=4)
    assert report.truncated
    assert report.sequential.total_instructions == 4


def test_emulate_keeps_the_flag_of_a_given_trace():
    p = parse(TWO_STEPS)
    with pytest.raises(TraceCapExceeded) as info:
        run_trace(p, cap=4)
    report = emulate(p, pspdg(p), EnumerationConfig(cores=2, chunk_sizes=1), t=info.value.trace)
    assert report.truncated
    assert not emulate(p, pspdg(p), EnumerationConfig(cores=2, chunk_sizes=1), t=run_trace(p)).truncated


def test_unknown_baseline():
    p = parse(TWO_STEPS)
    with pytest.raises(EmulationError):
        emulate(p, pspdg(p), EnumerationConfig(), baseline="fastest")
