"""Canonical forms, equality, diff, ablation and well-formedness of PS-PDGs."""

# Global imports
from dataclasses import replace

# 3rd party imports
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# local imports
import param
from conftest import CORPUS, load, pspdg
from mini_pir import parse
from pspdg_core import (
    WIDENED,
    DataSelector,
    Directed,
    EdgeDep,
    Feature,
    HierarchicalNode,
    InstructionRef,
    PsNode,
    PsPdg,
    SelectorKind,
    Trait,
    TraitKind,
    Undirected,
    VariableAccess,
    ablate,
    canonicalize,
    check_wellformed,
    diff,
    equal,
)
from strategies import programs

LOOP = (
    "global a: array[8] = [1, 2, 3, 4, 5, 6, 7, 8]\nglobal s: scalar = 0\n"
    "func main() {\n  @pragma(parallel_for, id=L1, iv=i, trip=8) {\n    @pragma(critical) {\n      s = s + a[i]\n    }\n  }\n}"
)


def relabel(g: PsPdg, prefix: str = "x") -> PsPdg:
    """The same graph with every node id renamed and the node order reversed."""
    ids = {n.id: f"{prefix}{k}" for k, n in enumerate(reversed(g.nodes))}

    def node(n: PsNode) -> PsNode:
        payload = n.payload
        if isinstance(payload, HierarchicalNode):
            payload = HierarchicalNode(tuple(ids[c] for c in payload.children), payload.context)
        return PsNode(ids[n.id], payload, n.traits)

    def edge(e):
        if isinstance(e, Directed):
            return replace(e, producer=ids[e.producer], consumer=ids[e.consumer])
        return Undirected(ids[e.a], ids[e.b], e.context)

    return PsPdg(
        nodes=tuple(node(n) for n in reversed(g.nodes)),
        root=ids[g.root],
        edges=frozenset(edge(e) for e in g.edges),
        variables=frozenset(replace(v, reducer=ids.get(v.reducer, v.reducer)) for v in g.variables),
        accesses=frozenset(
            VariableAccess(a.variable, frozenset(ids[u] for u in a.uses), frozenset(ids[d] for d in a.defs))
            for a in g.accesses
        ),
    )


# -----------------------------------------------------------------------------
# canonical form and equality
# -----------------------------------------------------------------------------
def test_canonical_form_ignores_node_ids():
    g = pspdg(LOOP)
    assert canonicalize(relabel(g)).lines == canonicalize(g).lines
    assert equal(g, relabel(g))


def test_canonical_form_is_deterministic():
    assert canonicalize(pspdg(LOOP)).text == canonicalize(pspdg(LOOP)).text


@given(programs(), programs())
@settings(max_examples=60)
def test_equal_is_an_equivalence(first, second):
    a, b = pspdg(first), pspdg(second)
    c = relabel(a, "y")
    assert equal(a, a)
    assert equal(a, b) == equal(b, a)
    assert equal(a, c) and equal(c, a)
    if equal(a, b):
        assert equal(b, c)


def test_trait_synonyms():
    assert TraitKind.from_text("orderless") is TraitKind.UNORDERED
    assert TraitKind.from_text("Singuler") is TraitKind.SINGULAR
    assert TraitKind.from_text("atomic") is TraitKind.ATOMIC


# -----------------------------------------------------------------------------
# diff
# -----------------------------------------------------------------------------
def test_diff_of_equal_graphs_is_empty():
    g = pspdg(LOOP)
    assert diff(g, relabel(g)).is_empty


def test_diff_names_the_changed_edge():
    fast = load(CORPUS / "necessity" / "A" / "fast.pir")
    slow = load(CORPUS / "necessity" / "A" / "slow.pir")
    d = diff(pspdg(fast), pspdg(slow))
    assert not d.is_empty
    edges = d.by_category("edge")
    assert edges
    assert any("ORDER" in (e.after or "") for e in edges)
    assert any("--" in (e.before or "") for e in edges)


# -----------------------------------------------------------------------------
# ablation
# -----------------------------------------------------------------------------
@pytest.mark.parametrize("pair, feature", sorted(param.necessity_pairs.items()))
def test_each_feature_is_necessary(pair, feature):
    fast = pspdg(load(CORPUS / "necessity" / pair / "fast.pir"))
    slow = pspdg(load(CORPUS / "necessity" / pair / "slow.pir"))
    assert not equal(fast, slow)
    assert equal(ablate(fast, Feature(feature)), ablate(slow, Feature(feature)))


def test_hierarchy_ablation_keeps_only_leaves():
    g = ablate(pspdg(LOOP), Feature.HN_UE)
    hierarchical = [n for n in g.nodes if n.is_hierarchical]
    assert [n.id for n in hierarchical] == [g.root]
    assert not g.undirected()
    assert any(e.dep is EdgeDep.ORDER and e.context == WIDENED for e in g.directed())


def test_context_ablation_widens_every_reference():
    g = ablate(pspdg(load(CORPUS / "necessity" / "C" / "fast.pir")), Feature.CTX)
    assert all(e.context in (None, WIDENED) for e in g.directed())
    assert not any(n.payload.context for n in g.nodes if n.is_hierarchical)


def test_trait_ablation():
    g = pspdg(load(CORPUS / "necessity" / "B" / "fast.pir"))
    assert any(t.kind is TraitKind.SINGULAR for n in g.nodes for t in n.traits)
    assert not any(n.traits for n in ablate(g, Feature.NT).nodes)


def test_selector_ablation():
    g = pspdg(load(CORPUS / "necessity" / "D" / "slow.pir"))
    selectors = [e.consumer_selector for e in g.directed() if e.consumer_selector]
    assert [s.kind for s in selectors] == [SelectorKind.LAST_PRODUCER]
    reduced = ablate(g, Feature.DSDE)
    assert not any(e.consumer_selector or e.producer_selector for e in reduced.directed())


def test_variable_ablation_restores_carried_order():
    g = pspdg(load(CORPUS / "necessity" / "E" / "fast.pir"))
    assert g.variables
    reduced = ablate(g, Feature.PSV)
    assert not reduced.variables and not reduced.accesses
    assert any(e.dep is EdgeDep.ORDER and "pt" in e.variables for e in reduced.directed())


def test_ablation_leaves_input_untouched():
    g = pspdg(LOOP)
    before = canonicalize(g).lines
    for feature in Feature:
        ablate(g, feature)
    assert canonicalize(g).lines == before


# -----------------------------------------------------------------------------
# well-formedness
# -----------------------------------------------------------------------------
@given(st.sampled_from(["openmp", "cilk"]).flatmap(lambda model: st.tuples(st.just(model), programs(model))))
@settings(max_examples=1000)
def test_random_graphs_are_well_formed(case):
    model, text = case
    g = pspdg(text, model)
    assert check_wellformed(g) == []
    for feature in Feature:
        once = ablate(g, feature)
        assert check_wellformed(once) == []
        assert equal(ablate(once, feature), once)


def test_corpus_graphs_are_well_formed():
    for path in sorted(CORPUS.rglob("*.pir")):
        g = pspdg(load(path), "cilk" if "cilk" in path.stem else "openmp")
        assert check_wellformed(g) == [], path


def _broken(g: PsPdg, **changes) -> list[str]:
    return check_wellformed(replace(g, **changes))


def test_wellformedness_violations_are_reported():
    g = pspdg(LOOP)
    leaf = next(n for n in g.nodes if not n.is_hierarchical)
    hn = next(n for n in g.nodes if n.is_hierarchical and n.payload.context and n.id != g.root)

    assert _broken(g, root=leaf.id)
    cycle = PsNode(hn.id, HierarchicalNode((*hn.payload.children, g.root), hn.payload.context))
    assert _broken(g, nodes=tuple(cycle if n.id == hn.id else n for n in g.nodes))
    stray = Trait(TraitKind.SINGULAR, "ctx:nowhere")
    with_trait = tuple(replace(n, traits=frozenset({stray})) if n.id == leaf.id else n for n in g.nodes)
    assert _broken(g, nodes=with_trait)
    assert _broken(g, edges=g.edges | {Directed(leaf.id, "missing", EdgeDep.RAW)})
    bad_selector = Directed(leaf.id, leaf.id, EdgeDep.RAW, consumer_selector=DataSelector(SelectorKind.ALL_CONSUMERS, WIDENED))
    assert _broken(g, edges=g.edges | {bad_selector})
    assert _broken(g, accesses=g.accesses | {VariableAccess("ghost", frozenset({leaf.id}))})


def test_local_declarations_are_not_nodes():
    text = (
        "global dst: array[4]\nfunc main() {\n  @pragma(parallel_for, id=L1, iv=i, trip=4) {\n"
        "    local v: scalar\n    v = i * 2\n    dst[i] = v + 1\n  }\n}"
    )
    g = pspdg(text)
    leaves = [n.payload for n in g.nodes if isinstance(n.payload, InstructionRef)]
    assert sorted(ref.id for ref in leaves) == sorted(ins.id for ins in parse(text).instructions)
    assert check_wellformed(g) == []
