import pytest

from epik.benchmarks import FAMILIES, generate
from epik.checker import check_system
from epik.errors import CheckError
from epik.frontend import parse_system


def test_generation_is_deterministic():
    for family in FAMILIES:
        assert generate(family, 4) == generate(family, 4)


def test_all_families_parse_at_small_sizes():
    for family in FAMILIES:
        for n in (3, 4, 5):
            spec = parse_system(generate(family, n), f"{family}({n})")
            assert spec.formula is not None


def test_unknown_family_rejected():
    with pytest.raises(CheckError):
        generate("nope", 3)


def test_dc_init_is_pairwise_quadratic():
    text = generate("dc", 5)
    init = [line for line in text.splitlines() if line.startswith("init:")][0]
    assert init.count("!(paid") == 5 * 4 // 2


def test_dc_sizes_and_horizon():
    spec = parse_system(generate("dc", 7))
    assert len(spec.variables) == 28
    assert spec.horizon == 3
    assert len(spec.agents) == 7


def test_otp_runs_two_ticks_per_bit():
    spec = parse_system(generate("otp", 5))
    assert spec.horizon == 10
    assert spec.eval_time == 10


def test_rivest_variants_differ_only_in_spec():
    first = generate("rivest_ot", 3, variant="first")
    allbits = generate("rivest_ot", 3, variant="all")
    f_lines = [l for l in first.splitlines() if not l.startswith("spec:")]
    a_lines = [l for l in allbits.splitlines() if not l.startswith("spec:")]
    assert f_lines == a_lines
    assert first != allbits


def test_msg_transmission_runs_n_plus_one_steps():
    spec = parse_system(generate("msg_transmission", 4))
    assert spec.horizon == 5


def test_chaum_two_phases_length():
    spec = parse_system(generate("chaum2p", 3))
    assert spec.horizon == 12  # n booking ticks plus 3 ticks per slot round


CROSS_LEVEL = [
    ("dc", 3),
    ("dc", 4),
    ("otp", 3),
    ("otp", 4),
    ("rivest_ot", 2),
    ("rivest_ot", 3),
    ("msg_transmission", 3),
    ("msg_transmission", 4),
    ("chaum2p", 3),
]


@pytest.mark.parametrize("family,n", CROSS_LEVEL)
def test_cross_level_agreement_at_oracle_scale(family, n):
    spec = parse_system(generate(family, n), f"{family}({n})")
    v0, _ = check_system(spec, level=0)
    v1, _ = check_system(spec, level=1)
    v2, _ = check_system(spec, level=2)
    assert v0.outcome == v1.outcome == v2.outcome


def test_rivest_all_bits_agrees_too():
    spec = parse_system(generate("rivest_ot", 2, variant="all"))
    v0, _ = check_system(spec, level=0)
    v2, _ = check_system(spec, level=2)
    assert v0.outcome == v2.outcome == "valid"
