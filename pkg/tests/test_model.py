import random

import pytest

from epik.errors import EmptyModelError, GraphError, UnsatisfiableInitError
from epik.frontend import parse_system
from epik.graph import Dag
from epik.model import (
    SELECTOR,
    EpistemicStructure,
    NodeMeta,
    StructuredModel,
    drop_leaves,
    epistemic_marginalize,
    equality_merge,
    timed,
    unfold,
    validate,
)
from epik.semantics import enumerate_structure
from epik.valuation import Relation, VarInfo, VarTable, combine, marginalize
from tests.test_frontend import DC3


def test_unfold_dc3_counts_and_kinds():
    sm = unfold(parse_system(DC3))
    assert sm.count("program") == 48
    assert sm.count("selector") == 1
    assert sm.count("temp") == 0


def test_unfold_dc3_say_parents():
    sm = unfold(parse_system(DC3))
    assert sm.dag.parents("say0@3") == {"paid0@2", "coin0@2", "left0@2"}


def test_unfold_skip_protocol_copies_forward():
    text = """
    vars p;
    agent A { observes: p; protocol: skip; }
    init: 1;
    horizon: 1;
    """
    sm = unfold(parse_system(text))
    assert sm.dag.parents("p@1") == {"p@0"}
    assert sm.nodes["p@1"].tuples() == [(0, 0), (1, 1)]
    assert sm.count("selector") == 0  # trivially true init needs no selector


def test_unfold_validates():
    sm = unfold(parse_system(DC3))
    assert validate(sm) == []


def test_unfold_unsat_init():
    text = """
    vars p;
    agent A { observes: p; protocol: skip; }
    init: p & !p;
    """
    with pytest.raises(UnsatisfiableInitError):
        unfold(parse_system(text))


def test_unfold_rand_read_in_same_tick_makes_temp():
    text = """
    vars v, w;
    agent A { observes: v; protocol: { rand(v); w := !v; v := 0 }; }
    init: 1;
    """
    sm = unfold(parse_system(text))
    assert sm.count("temp") == 1
    temp = [x for x in sm.vertices if sm.meta[x].kind == "temp"][0]
    assert sm.dag.parents("w@1") == {temp}
    # v itself was overwritten by a constant
    assert sm.nodes["v@1"].tuples() == [(0,)]


def test_unfold_rand_as_sole_final_write_is_root():
    text = """
    vars v, w;
    agent A { observes: v; protocol: { rand(v); w := v }; }
    init: 1;
    """
    sm = unfold(parse_system(text))
    assert sm.count("temp") == 1  # read later in the tick, so a choice vertex stays
    sm2, alias = equality_merge(sm)
    assert sm2.count("temp") == 0  # both copies collapse onto the program vertex


def test_validate_catches_constraining_relation():
    table = VarTable()
    table.boolean("a", "b")
    dag = Dag(["a", "b"], [("a", "b")])
    nodes = {
        "a": table.identity(["a"]),
        "b": Relation(["a", "b"], [2, 2], [(0, 0)]),  # rules out a=1
    }
    meta = {"a": NodeMeta("program", "a", 0), "b": NodeMeta("program", "b", 0)}
    sm = StructuredModel(dag, nodes, {}, table, meta, 0)
    problems = validate(sm)
    assert problems and "constrains" in problems[0]


def test_validate_catches_wrong_domain():
    table = VarTable()
    table.boolean("a", "b")
    dag = Dag(["a", "b"], [("a", "b")])
    nodes = {"a": table.identity(["a"]), "b": table.identity(["b"])}
    meta = {"a": NodeMeta("program", "a", 0), "b": NodeMeta("program", "b", 0)}
    sm = StructuredModel(dag, nodes, {}, table, meta, 0)
    problems = validate(sm)
    assert problems and "domain" in problems[0]


def test_cyclic_edges_rejected_at_construction():
    with pytest.raises(GraphError):
        Dag(["a", "b"], [("a", "b"), ("b", "a")])


# -- equality merge -------------------------------------------------------------


def test_merge_collapses_stutter_chain():
    text = """
    vars p;
    agent A { observes: p; protocol: skip; skip; }
    init: 1;
    """
    sm = unfold(parse_system(text))
    sm2, alias = equality_merge(sm)
    assert set(sm2.vertices) == {"p@0"}
    assert alias == {"p@1": "p@0", "p@2": "p@0"}


def test_merge_dc3_classes_and_observability_transfer():
    sm = unfold(parse_system(DC3))
    sm2, alias = equality_merge(sm)
    for t in (1, 2, 3):
        assert alias[timed("paid1", t)] == "paid1@0"
    # the copy written into the left neighbour merges with the coin that fed it
    assert alias["left1@2"] == "coin0@1"
    # and the neighbour can now observe the surviving vertex
    assert "coin2@1" in sm2.obs["C0"]
    assert validate(sm2) == []
    assert sm2.count("program") == 18


def test_merge_keeps_non_copy_nodes():
    text = """
    vars p, q;
    agent A { observes: p; protocol: q := !p; }
    init: 1;
    """
    sm = unfold(parse_system(text))
    sm2, _ = equality_merge(sm)
    assert "q@1" in sm2.vertices  # negation is not a copy


def test_merge_respects_protect():
    text = """
    vars p;
    agent A { observes: p; protocol: skip; }
    init: 1;
    """
    sm = unfold(parse_system(text))
    sm2, alias = equality_merge(sm, protect=frozenset({"p@1"}))
    assert "p@1" in sm2.vertices
    assert alias == {"p@0": "p@1"}  # orientation flips to keep the protected vertex


def test_merge_preserves_combination_and_truth():
    # planted copy chains on random structured models
    rng = random.Random(17)
    from tests.helpers import random_structured as _random_structured

    for _ in range(25):
        g, rels = _random_structured(rng, rng.randint(2, 4))
        table = VarTable()
        for v in g.vertices:
            table.boolean(v)
        vertices = list(g.vertices)
        edges = list(g.edges())
        nodes = dict(rels)
        meta = {v: NodeMeta("program", v, 0) for v in vertices}
        for i in range(rng.randint(1, 3)):
            src = rng.choice(vertices)
            cp = f"c{i}"
            table.boolean(cp)
            vertices.append(cp)
            edges.append((src, cp))
            nodes[cp] = Relation([src, cp], [2, 2], [(0, 0), (1, 1)])
            meta[cp] = NodeMeta("program", cp, 1)
        obs = {"A": frozenset(rng.sample(vertices, rng.randint(0, len(vertices))))}
        sm = StructuredModel(Dag(vertices, edges), nodes, obs, table, meta, 1)
        sm2, alias = equality_merge(sm)
        assert validate(sm2) == []

        full = None
        for v in sm.vertices:
            full = sm.nodes[v] if full is None else combine(full, sm.nodes[v])
        reduced = None
        for v in sm2.vertices:
            reduced = sm2.nodes[v] if reduced is None else combine(reduced, sm2.nodes[v])
        assert reduced == marginalize(full, set(sm2.vertices))


# -- leaf elimination ---------------------------------------------------------------


def test_drop_leaves_noop_when_everything_kept():
    sm = unfold(parse_system(DC3))
    sm2 = drop_leaves(sm, set(sm.vertices))
    assert set(sm2.vertices) == set(sm.vertices)


def test_drop_leaves_chain():
    text = """
    vars a;
    agent A { observes: a; protocol: a := !a; a := !a; }
    init: 1;
    """
    sm = unfold(parse_system(text))
    sm2 = drop_leaves(sm, {"a@0"})
    assert set(sm2.vertices) == {"a@0"}


def test_drop_leaves_preserves_marginal():
    sm = unfold(parse_system(DC3))
    keep = {"paid0@0", "say1@3"}
    direct = epistemic_marginalize(sm, keep)
    assert set(direct.vars) == keep


# -- marginalization ------------------------------------------------------------------


def test_marginalize_full_matches_oracle_dc3():
    spec = parse_system(DC3)
    sm = unfold(spec)
    target = set(timed(v, t) for v in spec.variables for t in range(4))
    m = epistemic_marginalize(sm, target)
    oracle = enumerate_structure(spec)
    assert m.worlds == oracle.worlds
    assert m.obs == oracle.obs


def test_marginalize_empty_target_single_world():
    sm = unfold(parse_system(DC3))
    m = epistemic_marginalize(sm, set())
    assert len(m.worlds) == 1
    assert m.worlds.vars == ()


def test_marginalize_reports_stats():
    sm = unfold(parse_system(DC3))
    stats = {}
    epistemic_marginalize(sm, {"paid0@0"}, stats=stats)
    assert stats["max_intermediate_tuples"] >= 1
    assert stats["elim_len"] >= 1


def test_marginalize_unknown_target_rejected():
    sm = unfold(parse_system(DC3))
    with pytest.raises(GraphError):
        epistemic_marginalize(sm, {"nope@0"})


def test_merged_marginal_matches_oracle_through_alias():
    spec = parse_system(DC3)
    sm = unfold(spec)
    sm2, alias = equality_merge(sm)
    oracle = enumerate_structure(spec)
    keep = {alias.get(timed(v, t), timed(v, t)) for v in spec.variables for t in range(4)}
    reduced = epistemic_marginalize(sm2, keep)
    projected = marginalize(oracle.worlds, keep)
    assert reduced.worlds == projected


def test_fusion_on_reduced_model_matches_oracle():
    # run the fusion algorithm itself (not the join sweep) over the reduced
    # model's relations, eliminating down to the relevance set
    from epik.model import resolve_formula
    from epik.relevance import kappa
    from epik.valuation import elimination_order, fuse_all

    spec = parse_system(DC3)
    sm, alias = equality_merge(unfold(spec))
    phi = resolve_formula(spec.stamped_formula(), alias)
    rel = kappa(phi, sm)
    reduced = drop_leaves(sm, rel.final)
    rels = [reduced.nodes[v] for v in reduced.vertices]
    order = elimination_order(rels, rel.final)
    fused = fuse_all(rels, rel.final, order)
    oracle = enumerate_structure(spec)
    assert fused == marginalize(oracle.worlds, rel.final)
    assert fused == epistemic_marginalize(sm, rel.final).worlds


def test_validate_passes_after_every_transform():
    spec = parse_system(DC3)
    sm = unfold(spec)
    assert validate(sm) == []
    sm2, _ = equality_merge(sm)
    assert validate(sm2) == []
    sm3 = drop_leaves(sm2, {"paid0@0", "say1@3"})
    assert validate(sm3) == []
