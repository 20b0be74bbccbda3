import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sympcocycle.cocycle import G, CocycleContext, IsotopySpec
from sympcocycle.errors import FixedPointError
from sympcocycle.geometry import EuclideanPlane
from sympcocycle.groups import (
    GeneratingSet,
    GroupWord,
    lemma_two_check,
    lipschitz_check,
    polterovich_report,
    semibounded_norm_estimate,
    semibounded_upper_bound,
    translation_length_estimate,
    word_length,
    word_norm_table,
)
from sympcocycle.hamiltonian import FlowSettings, bump_hamiltonian
from sympcocycle.symplectomap import CompactBump, Identity, translation

PLANE = EuclideanPlane()
EXACT = FlowSettings(method="exact")

letters = st.lists(st.tuples(st.sampled_from("ab"), st.sampled_from([1, -1])), max_size=10).map(
    lambda ls: GroupWord(tuple(ls))
)


def free_bumps():
    return GeneratingSet(
        {
            "a": CompactBump(bump_hamiltonian([0.5, 0.2], 1.0, 0.15), settings=EXACT),
            "b": CompactBump(bump_hamiltonian([-0.3, 0.4], 0.8, -0.15), settings=EXACT),
        }
    )


def grid_translations():
    return GeneratingSet({"a": translation([1.0, 0.0]), "b": translation([0.0, 1.0])}, structure="unknown")


SAMPLE = [translation(v) for v in ([-1.5, 0.2], [-2.3, 0.4], [-1.8, -0.3])]


def test_parse_and_format():
    w = GroupWord.parse("a b^-1 a^2")
    assert w.letters == (("a", 1), ("b", -1), ("a", 1), ("a", 1))
    assert str(w) == "a b^-1 a a"
    assert GroupWord.parse(str(w)) == w
    with pytest.raises(ValueError):
        GroupWord.parse("a^x")


@given(letters)
def test_reduction_properties(w):
    r = w.reduced()
    assert r.reduced() == r
    assert len((w * w.inverse()).reduced()) == 0
    assert len(r) <= len(w)
    assert len(r) % 2 == len(w) % 2


@given(letters)
def test_free_word_length_is_reduced_length(w):
    assert word_length(w, free_bumps()).value == len(w.reduced())


@given(letters.filter(lambda w: len(w.reduced()) > 0))
def test_translation_ratios_nonincreasing_on_doublings(w):
    S = free_bumps()
    ratios = [word_length(w.power(n), S).value / n for n in (1, 2, 4, 8)]
    assert all(b <= a for a, b in zip(ratios, ratios[1:]))


def test_bfs_detects_relations():
    S = grid_translations()
    assert word_length(GroupWord.parse("a b a^-1 b^-1"), S).value == 0
    wl = word_length(GroupWord.parse("a b a^-1"), S)
    assert wl.value == 1 and wl.exact
    assert word_length(GroupWord.parse("a a b a^-1 b"), S).value == 3


def test_bfs_beyond_cap_is_upper_bound():
    S = grid_translations()
    wl = word_length(GroupWord.parse("a^5 b^5"), S, cap=3)
    assert wl.value == 10 and not wl.exact


def test_unknown_generator():
    with pytest.raises(KeyError):
        word_length(GroupWord.parse("c"), free_bumps())


def test_translation_length_free_and_conjugate():
    S = free_bumps()
    est = translation_length_estimate(GroupWord.parse("a b a^-1"), S, n_max=8)
    # |g^n| = n + 2 for the conjugate of b: the infimum approaches 1 from above
    assert est.value == pytest.approx(10 / 8)
    assert est.exact
    assert translation_length_estimate(GroupWord.parse("a b"), S, n_max=4).value == 2


def test_semibounded_norm_trivial_and_empty():
    ctx = CocycleContext(PLANE)
    assert semibounded_norm_estimate(ctx, Identity(2), SAMPLE) == 0.0
    with pytest.raises(ValueError):
        semibounded_norm_estimate(ctx, translation([1, 0]), [])


def test_semibounded_lower_below_upper():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    g = CompactBump(bump_hamiltonian([0.5, 0.2], 1.0, 0.7), settings=EXACT)
    lower = semibounded_norm_estimate(ctx, g, SAMPLE + [translation([-1.5, 0.2])])
    assert lower <= semibounded_upper_bound(ctx, g)
    # nondegeneracy: the sample contains h moving one fixed point to the other
    assert lower >= 0.7 - 1e-5


def test_pointwise_inequality_trivial_and_translations():
    ctx = CocycleContext(PLANE)
    assert lemma_two_check(ctx, Identity(2), Identity(2), SAMPLE) <= 0.0
    rng = np.random.default_rng(0)
    for _ in range(10):
        f, g, h = (translation(rng.uniform(-2, 2, 2)) for _ in range(3))
        assert lemma_two_check(ctx, f, g, [h]) <= 1e-8


def test_word_norm_table_matches_direct_cocycle():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    S = free_bumps()
    for w, est, err in word_norm_table(ctx, S, SAMPLE, 2):
        g = S.evaluate(w)
        direct = max(abs(G(ctx, g, h)) for h in SAMPLE) if len(w) else 0.0
        assert est == pytest.approx(direct, abs=1e-8)
        assert err < 1e-7


def test_lipschitz_short_words():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    rep = lipschitz_check(ctx, free_bumps(), SAMPLE, max_length=4)
    assert rep.holds
    assert rep.n_words == 1 + 4 + 12 + 36 + 108
    assert [row[0] for row in rep.by_length] == [0, 1, 2, 3, 4]


def test_polterovich_short_table():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    iso = IsotopySpec(bump_hamiltonian([0.5, 0.2], 1.0, 0.7))
    h = translation([-1.5, 0.2])
    rep = polterovich_report(ctx, iso, h, free_bumps(), n_max=4, sample=SAMPLE)
    assert rep.cross_check_residual <= 1e-8
    assert rep.max_relative_deviation <= 1e-8
    assert rep.monotone_growth
    assert rep.translation_lower_bound > 0
    assert "diagnostic" in rep.caveat


def test_polterovich_trivial_isotopy_bound_zero():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    iso = IsotopySpec(bump_hamiltonian([0.5, 0.2], 1.0, 0.0))
    rep = polterovich_report(ctx, iso, translation([-1.5, 0.2]), free_bumps(), n_max=2, sample=SAMPLE)
    assert rep.G_gh == 0.0
    assert rep.translation_lower_bound == 0.0
    assert not rep.monotone_growth


def test_polterovich_requires_double_fixed_point():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    iso = IsotopySpec(bump_hamiltonian([0.5, 0.2], 1.0, 0.7))
    with pytest.raises(FixedPointError):
        polterovich_report(ctx, iso, translation([-1.3, 0.2]), n_max=2)
