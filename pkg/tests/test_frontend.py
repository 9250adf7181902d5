import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epik.errors import ParseError
from epik.frontend import (
    AAtomic,
    ASkip,
    EBin,
    EConst,
    ENot,
    EVar,
    FAnd,
    FAtom,
    FKnows,
    FNot,
    SAssign,
    SRand,
    expr_to_str,
    formula_to_str,
    parse_formula,
    parse_system,
    stamp_formula,
)

DC3 = """
// three-party anonymous broadcast ring
vars paid0, paid1, paid2, coin0, coin1, coin2, left0, left1, left2,
     say0, say1, say2;

agent C0 {
  observes: paid0, coin0, left0, say0, say1, say2;
  protocol: rand(coin0); left1 := coin0; say0 := paid0 ^ coin0 ^ left0;
}
agent C1 {
  observes: paid1, coin1, left1, say0, say1, say2;
  protocol: rand(coin1); left2 := coin1; say1 := paid1 ^ coin1 ^ left1;
}
agent C2 {
  observes: paid2, coin2, left2, say0, say1, say2;
  protocol: rand(coin2); left0 := coin2; say2 := paid2 ^ coin2 ^ left2;
}

init: !(paid0 & paid1) & !(paid0 & paid2) & !(paid1 & paid2);

spec: (!paid0 => (Knows C0 (!paid1 & !paid2))
                 | (Knows C0 (paid1 | paid2) & !Knows C0 paid1 & !Knows C0 paid2)) @ 3;
"""


def test_parse_dc3_shape():
    spec = parse_system(DC3, "dc3.epik")
    assert len(spec.agents) == 3
    assert len(spec.variables) == 12
    assert spec.horizon == 3
    assert spec.eval_time == 3
    assert spec.agents[0].actions[0] == AAtomic((SRand("coin0"),))
    assert spec.agents[0].actions[1] == AAtomic((SAssign("left1", EVar("coin0")),))


def test_parse_no_agents_is_error():
    with pytest.raises(ParseError, match="no agents"):
        parse_system("vars p;\ninit: p;")


def test_parse_undeclared_variable_named_in_error():
    bad = DC3.replace("left1 := coin0", "left1 := coinX")
    with pytest.raises(ParseError, match="coinX"):
        parse_system(bad)


def test_parse_duplicate_agent_rejected():
    bad = DC3.replace("agent C1", "agent C0", 1)
    with pytest.raises(ParseError, match="duplicate agent"):
        parse_system(bad)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_system("vars p q;", "m.epik")
    assert "m.epik:1:8" in str(err.value)


def test_horizon_shorter_than_protocol_rejected():
    bad = DC3 + "\nhorizon: 1;"
    with pytest.raises(ParseError, match="horizon"):
        parse_system(bad)


def test_horizon_padding_allowed():
    spec = parse_system(DC3 + "\nhorizon: 5;")
    assert spec.horizon == 5


def test_multi_statement_atomic_action():
    text = """
    vars p, q;
    agent A { observes: p; protocol: { rand(p); q := p }; skip; }
    init: 1;
    """
    spec = parse_system(text)
    assert spec.agents[0].actions == (AAtomic((SRand("p"), SAssign("q", EVar("p")))), ASkip())


def test_env_block_parsed():
    text = """
    vars p, q;
    agent A { observes: p; protocol: skip; }
    env { q := p | q; }
    init: !q;
    """
    spec = parse_system(text)
    assert spec.env == (SAssign("q", EBin("or", EVar("p"), EVar("q"))),)


def test_parse_formula_stamps_untimed_atoms():
    f = parse_formula("p", 0)
    assert f == FAtom("p", 0)
    g = parse_formula("paid1@0 & p", 3)
    assert g == FAnd(FAtom("paid1", 0), FAtom("p", 3))


def test_parse_formula_knows_prefix():
    f = parse_formula("Knows C0 p", 1)
    assert f == FKnows("C0", FAtom("p", 1))


def test_parse_formula_unknown_agent():
    with pytest.raises(ParseError, match="C9"):
        parse_formula("Knows C9 p", 0, agents=["C0", "C1", "C2"])


def test_parse_formula_time_out_of_range():
    with pytest.raises(ParseError, match="outside"):
        parse_formula("p@7", 0, horizon=3)
    with pytest.raises(ParseError, match="outside"):
        parse_formula("p", 9, horizon=3)


def test_spec_formula_atoms_stamped_with_declared_time():
    spec = parse_system(DC3)
    f = spec.stamped_formula()
    names_times = {(a, t) for a, t in _atoms(f)}
    assert all(t == 3 for _, t in names_times)


def _atoms(f):
    if isinstance(f, FAtom):
        return {(f.name, f.time)}
    if isinstance(f, (FNot, FKnows)):
        return _atoms(f.arg)
    return _atoms(f.left) | _atoms(f.right)


def test_explicit_time_wins_over_default():
    spec = parse_system(DC3.replace("paid1 & !paid2", "paid1 & !paid2") + "\n")
    f = parse_formula("paid1@0", 3, horizon=3, agents=spec.agent_names())
    assert f == FAtom("paid1", 0)


def test_desugaring_of_implication():
    assert parse_formula("a => b", 0) == parse_formula("!(a & !b)", 0)


def test_desugaring_or_and_iff():
    assert parse_formula("a | b", 0) == parse_formula("!(!a & !b)", 0)
    assert parse_formula("a <=> b", 0) == parse_formula("(a => b) & (b => a)", 0)


def test_knows_binds_tighter_than_and():
    f = parse_formula("Knows A p & q", 0)
    assert isinstance(f, FAnd)
    assert isinstance(f.left, FKnows)


# -- round trips --------------------------------------------------------------


_names = st.sampled_from(["p", "q", "r", "s0"])


def _formulas(depth):
    if depth == 0:
        return st.builds(FAtom, _names, st.one_of(st.none(), st.integers(0, 3)))
    sub = _formulas(depth - 1)
    return st.one_of(
        st.builds(FAtom, _names, st.one_of(st.none(), st.integers(0, 3))),
        st.builds(FNot, sub),
        st.builds(FAnd, sub, sub),
        st.builds(FKnows, st.sampled_from(["A", "B"]), sub),
    )


@settings(max_examples=200, deadline=None)
@given(_formulas(4))
def test_formula_pretty_print_round_trip(f):
    stamped = stamp_formula(f, 2)
    text = formula_to_str(stamped)
    assert parse_formula(text, 2) == stamped


def _exprs(depth):
    if depth == 0:
        return st.one_of(st.builds(EVar, _names), st.builds(EConst, st.integers(0, 1)))
    sub = _exprs(depth - 1)
    return st.one_of(
        st.builds(EVar, _names),
        st.builds(EConst, st.integers(0, 1)),
        st.builds(ENot, sub),
        st.builds(EBin, st.sampled_from(["and", "or", "xor", "implies", "iff"]), sub, sub),
    )


@settings(max_examples=200, deadline=None)
@given(_exprs(4))
def test_expr_pretty_print_round_trip(e):
    from epik.frontend import _Parser

    text = expr_to_str(e)
    p = _Parser(text, "<t>")
    assert p.parse_expr() == e
    assert p.peek().kind == "eof"
