import pytest

from epik.errors import CheckError
from epik.frontend import FAnd, FAtom, FKnows, FNot, parse_system
from epik.model import equality_merge, resolve_formula, unfold
from epik.relevance import kappa
from tests.test_frontend import DC3


def merged_dc3():
    spec = parse_system(DC3)
    sm, alias = equality_merge(unfold(spec))
    return spec, sm, alias


def test_kappa_atom_is_itself():
    spec, sm, alias = merged_dc3()
    r = kappa(FAtom("paid0@0", None), sm)
    assert r.final == {"paid0@0"}


def test_kappa_negation_passes_through():
    spec, sm, alias = merged_dc3()
    plain = kappa(FAtom("paid1@0", None), sm)
    negated = kappa(FNot(FAtom("paid1@0", None)), sm)
    assert plain.final == negated.final


def test_kappa_conjunction_monotone():
    spec, sm, alias = merged_dc3()
    left = kappa(FAtom("paid1@0", None), sm)
    both = kappa(FAnd(FAtom("paid1@0", None), FAtom("paid2@0", None)), sm)
    assert left.final <= both.final


def test_kappa_dc3_exact_sets():
    spec, sm, alias = merged_dc3()
    phi = resolve_formula(spec.stamped_formula(), alias)
    r = kappa(phi, sm)
    assert r.final == {
        "paid0@0", "paid1@0", "paid2@0",
        "say1@3", "say2@3",
        "coin0@1", "coin2@1",
    }
    # the reduced model adds the interior coin and the init selector
    assert r.model_vars == r.final | {"coin1@1", "$init"}
    assert len(r.model_vars) == 9


def test_kappa_separators_stay_valid():
    spec, sm, alias = merged_dc3()
    phi = resolve_formula(spec.stamped_formula(), alias)
    r = kappa(phi, sm)
    for agent, u in r.separators:
        assert u <= sm.obs[agent]


def test_kappa_dc_scaling_three_n():
    from epik.benchmarks import generate

    for n in (3, 4, 5, 6):
        spec = parse_system(generate("dc", n))
        sm, alias = equality_merge(unfold(spec))
        phi = resolve_formula(spec.stamped_formula(), alias)
        r = kappa(phi, sm)
        assert len(r.model_vars) == 3 * n


def test_separators_independent_on_materialized_worlds():
    # the graphical condition implies the relational one on the world set
    import random

    from epik.model import epistemic_marginalize
    from epik.valuation import conditional_independent
    from epik.semantics import enumerate_structure
    from epik.errors import StateSpaceOverflowError
    from tests.helpers import random_formula, random_system

    rng = random.Random(91)
    done = 0
    while done < 20:
        spec = random_system(rng, max_vars=3, max_horizon=2)
        try:
            enumerate_structure(spec, cap=2**12)
        except StateSpaceOverflowError:
            continue
        sm, alias = equality_merge(unfold(spec))
        phi = resolve_formula(random_formula(rng, spec, max_k=2), alias)
        rel = kappa(phi, sm)
        if not rel.separators:
            continue
        worlds = epistemic_marginalize(sm, set(sm.vertices)).worlds
        for (agent, u), (_, inner) in zip(rel.separators, _kappa_args(rel)):
            obs = sm.obs[agent]
            assert conditional_independent(worlds, inner - u, obs - u, u)
        done += 1


def _kappa_args(rel):
    # pair each separator with the operand relevance recorded just before it
    out = []
    for label, value in rel.subformulas:
        if label.startswith("knows:"):
            out.append((label, prev))
        prev = value
    return out


def test_kappa_rejects_unknown_atom():
    spec, sm, alias = merged_dc3()
    with pytest.raises(CheckError):
        kappa(FAtom("ghost@0", None), sm)


def test_kappa_rejects_unknown_agent():
    spec, sm, alias = merged_dc3()
    with pytest.raises(CheckError):
        kappa(FKnows("C9", FAtom("paid0@0", None)), sm)
