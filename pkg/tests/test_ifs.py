import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tms.errors import NumericError, ValidationError
from tms.geometry import dyadic_cantor_set, unit_cube
from tms.ifs import (
    bernoulli_cylinder_mass,
    code_point,
    digit_frequency,
    entropy_dim,
    f_maximizer,
    f_of_lambda,
    frequency_counts,
    frequency_family,
    frequency_schedule,
    frequency_set,
    g_of_alpha,
    grid_f_of_lambda,
    ifs_digital_set,
    sample_frequency_codes,
    similarity_dimension,
)
from tms.models import Code, IFSystem, ProbVector

BINARY = IFSystem.homotheties((0.5, 0.5), (0.0, 0.5))
TERNARY_CANTOR = IFSystem.homotheties((1 / 3, 1 / 3), (0.0, 2 / 3))
QUARTER_CANTOR = IFSystem.homotheties((0.25, 0.25), (0.0, 0.5))

ratio_lists = st.lists(st.floats(0.05, 0.6), min_size=2, max_size=4)


@pytest.mark.parametrize(
    "ratios, expected",
    [
        ((0.5, 0.5), 1.0),
        ((1 / 3, 1 / 3), math.log(2) / math.log(3)),
        ((0.5, 0.5, 0.5), math.log(3) / math.log(2)),
        ((0.25, 0.25), 0.5),
    ],
)
def test_similarity_dimension(ratios, expected):
    assert similarity_dimension(ratios) == pytest.approx(expected, abs=1e-9)


def test_similarity_dimension_rejects_bad_ratios():
    with pytest.raises(ValidationError):
        similarity_dimension((0.5,))
    with pytest.raises(ValidationError):
        similarity_dimension((0.5, 1.0))


def test_entropy_dim_examples():
    assert entropy_dim((0.5, 0.5), (0.5, 0.5)) == pytest.approx(1.0)
    assert entropy_dim((1.0, 0.0), (0.3, 0.5)) == pytest.approx(0.0)
    binary_entropy = -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75))
    got = entropy_dim(ProbVector.of([0.25, 0.75]), (0.5, 0.5))
    assert got == pytest.approx(binary_entropy, abs=1e-9)
    with pytest.raises(ValidationError, match="not a probability vector"):
        entropy_dim((0.0, 0.0), (0.5, 0.5))


@given(ratio_lists)
@settings(max_examples=100, deadline=None)
def test_entropy_dim_at_natural_weights_is_the_dimension(ratios):
    r = np.asarray(ratios)
    s = similarity_dimension(r)
    p = r**s / np.sum(r**s)
    assert entropy_dim(p, r) == pytest.approx(s, abs=1e-6)


@given(ratio_lists, st.data())
@settings(max_examples=100, deadline=None)
def test_entropy_dim_is_bounded_by_the_dimension(ratios, data):
    w = np.asarray([data.draw(st.floats(0.0, 1.0)) for _ in ratios])
    w[0] += 0.01
    value = entropy_dim(w / w.sum(), ratios)
    assert -1e-12 <= value <= similarity_dimension(ratios) + 1e-9


def test_f_endpoints_and_midpoint():
    assert f_of_lambda(0.0, (0.5, 0.5)) == 0.0
    assert f_of_lambda(1.0, (0.5, 0.5)) == pytest.approx(1.0, abs=1e-9)
    assert f_of_lambda(0.5, (0.5, 0.5), 1.0) == pytest.approx(0.8112781, abs=1e-4)
    with pytest.raises(ValidationError, match="lambda out of range"):
        f_of_lambda(1.5, (0.5, 0.5))


@given(ratio_lists)
@settings(max_examples=30, deadline=None)
def test_f_reaches_the_dimension_at_one(ratios):
    got = f_of_lambda(1.0, ratios, cross_check=False)
    assert got == pytest.approx(similarity_dimension(ratios), abs=1e-8)


def test_f_maximizer_stays_in_the_polytope():
    r = np.asarray([0.5, 0.3, 0.2])
    s = similarity_dimension(r)
    for lam in (0.1, 0.4, 0.8):
        value, p = f_maximizer(lam, r)
        assert p.sum() == pytest.approx(1.0)
        assert np.all(p[:-1] <= lam * r[:-1] ** s + 1e-12)
        assert entropy_dim(p / p.sum(), r) == pytest.approx(value, abs=1e-9)


def test_f_is_nondecreasing():
    r = (0.5, 0.3, 0.2)
    values = [f_of_lambda(lam, r, cross_check=False) for lam in np.linspace(0, 1, 21)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize(
    "ratios", [(0.5, 0.5), (0.5, 0.25), (0.4, 0.3, 0.2), (1 / 3, 1 / 3, 1 / 3)]
)
@pytest.mark.parametrize("lam", [0.2, 0.5, 0.9])
def test_dinkelbach_agrees_with_the_grid(ratios, lam):
    fast = f_of_lambda(lam, ratios, cross_check=False)
    grid = grid_f_of_lambda(lam, ratios)
    assert grid <= fast + 1e-9
    assert fast - grid <= 1e-3


def test_grid_needs_few_maps():
    with pytest.raises(ValidationError, match="m <= 3"):
        grid_f_of_lambda(0.5, (0.2, 0.2, 0.2, 0.2))


def test_g_inverts_f():
    assert g_of_alpha(0.8112781, (0.5, 0.5)) == pytest.approx(0.5, abs=1e-3)
    r = (0.5, 0.3, 0.2)
    s = similarity_dimension(r)
    lams = [g_of_alpha(a * s, r, cross_check=False) for a in (0.2, 0.5, 0.8)]
    assert lams == sorted(lams)
    for a, lam in zip((0.2, 0.5, 0.8), lams):
        assert f_of_lambda(lam, r, cross_check=False) == pytest.approx(a * s, abs=1e-4)


def test_g_limits():
    assert g_of_alpha(1e-6, (0.5, 0.5)) < 1e-3
    assert g_of_alpha(1 - 1e-9, (0.5, 0.5)) > 0.99


def test_g_rejects_alpha_out_of_range():
    for alpha in (0.0, 1.0, 1.2):
        with pytest.raises(ValidationError, match="alpha out of range"):
            g_of_alpha(alpha, (0.5, 0.5))


def test_code_point():
    cp = code_point(BINARY, Code((1,) * 10, 2))
    assert cp.point[0] == pytest.approx(0.5 * 2.0**-10)
    assert cp.diameter == pytest.approx(2.0**-10)
    assert 0.5 <= code_point(BINARY, Code((2, 1, 1), 2)).point[0] <= 0.5 + 2.0**-3
    assert 8 / 9 <= code_point(TERNARY_CANTOR, Code((2, 2), 2)).point[0] <= 1.0
    with pytest.raises(ValidationError):
        code_point(BINARY, Code((), 2))
    with pytest.raises(ValidationError, match="digits must lie in 1..m"):
        code_point(BINARY, Code((3,), 3))


@pytest.mark.parametrize(
    "digits, expected",
    [
        ((1, 1, 1, 1), (1.0, 0.0)),
        ((1, 2, 1, 2), (0.5, 0.5)),
        ((1, 2, 2, 2), (0.25, 0.75)),
    ],
)
def test_digit_frequency(digits, expected):
    assert digit_frequency(Code(digits, 2)).entries == expected


def test_frequency_counts():
    assert frequency_counts(ProbVector.of([0.25, 0.75]), 8).tolist() == [2, 6]
    thirds = ProbVector.of([1 / 3, 1 / 3, 1 / 3])
    assert frequency_counts(thirds, 4).tolist() == [2, 1, 1]


def test_frequency_schedule_prefixes_track_the_shares():
    p = ProbVector.of([0.2, 0.3, 0.5])
    schedule = frequency_schedule(p, 50)
    counts = np.zeros(3)
    for t, digit in enumerate(schedule, start=1):
        counts[digit - 1] += 1
        assert np.all(np.abs(counts - t * p.as_array()) <= 3)
    assert counts.tolist() == [10, 15, 25]


def test_sample_frequency_codes():
    codes = sample_frequency_codes(ProbVector.of([0.25, 0.75]), 8, 5, seed=3)
    assert len(codes) == 5
    assert all(c.digits.count(1) == 2 and c.digits.count(2) == 6 for c in codes)
    assert codes == sample_frequency_codes(ProbVector.of([0.25, 0.75]), 8, 5, seed=3)
    with pytest.raises(ValidationError, match="code too short"):
        sample_frequency_codes(ProbVector.of([0.25, 0.75]), 1, 5)


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=4), st.integers(4, 40))
@settings(max_examples=50, deadline=None)
def test_sampled_codes_have_the_requested_frequency(weights, n):
    w = np.asarray(weights)
    p = ProbVector.of(w / w.sum())
    for code in sample_frequency_codes(p, max(n, p.m), 3):
        freq = digit_frequency(code).as_array()
        assert np.all(np.abs(freq - p.as_array()) <= p.m / len(code))


def test_bernoulli_cylinder_mass():
    half = ProbVector.of([0.5, 0.5])
    code = Code((1, 2, 2, 1, 2), 2)
    assert bernoulli_cylinder_mass(half, code) == pytest.approx(2.0**-5)
    p = ProbVector.of([0.25, 0.75])
    assert bernoulli_cylinder_mass(p, Code((1, 1), 2)) == pytest.approx(1 / 16)
    assert bernoulli_cylinder_mass(p, Code((2, 2, 2), 2)) == pytest.approx(27 / 64)
    a, b = Code((1, 2), 2), Code((2, 2, 1), 2)
    assert bernoulli_cylinder_mass(p, a + b) == pytest.approx(
        bernoulli_cylinder_mass(p, a) * bernoulli_cylinder_mass(p, b)
    )


@pytest.mark.parametrize(
    "weights, n",
    [((0.5, 0.5), 6), ((0.2, 0.3, 0.5), 4), ((0.1, 0.2, 0.3, 0.4), 3)],
)
def test_bernoulli_cylinders_of_one_length_carry_unit_mass(weights, n):
    p = ProbVector.of(weights)
    m = len(weights)
    codes = [Code(digits, m) for digits in itertools.product(range(1, m + 1), repeat=n)]
    total = math.fsum(bernoulli_cylinder_mass(p, code) for code in codes)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_binary_attractor_is_the_interval():
    assert ifs_digital_set(BINARY, 6) == unit_cube(6)


def test_quarter_cantor_attractor_is_exact():
    assert ifs_digital_set(QUARTER_CANTOR, 8) == dyadic_cantor_set(8)


def test_ternary_cantor_attractor_is_an_outer_approximation():
    E = ifs_digital_set(TERNARY_CANTOR, 8)
    assert len(E) <= 2 * 2**6
    for digits in [(1,) * 6, (2,) * 6, (1, 2, 1, 2, 1, 2), (2, 1, 1, 2, 2, 1)]:
        x = code_point(TERNARY_CANTOR, Code(digits, 2)).point
        assert E.contains_points(x[None, :]).all()
    # the middle third is a gap
    assert not E.contains_points(np.asarray([[0.5]])).any()


def test_attractor_expansion_budget():
    with pytest.raises(NumericError, match="depth too large for ratios"):
        ifs_digital_set(BINARY, 10, max_cylinders=100)


def test_frequency_sets_are_nested():
    small = frequency_set(BINARY, 0.3, 8, 8)
    large = frequency_set(BINARY, 0.7, 8, 8)
    full = frequency_set(BINARY, 1.0, 8, 8)
    assert small.issubset(large)
    assert large.issubset(full)
    # at most half of the digits may be ones
    assert len(full) == sum(math.comb(8, k) for k in range(5))


def test_frequency_family():
    shadows = frequency_family(BINARY, (0.5, 0.8), 8, 8)
    assert [sh.alpha for sh in shadows] == [0.5, 0.8]
    assert shadows[0].lam < shadows[1].lam
    assert shadows[0].set.issubset(shadows[1].set)
    for sh in shadows:
        assert sum(sh.p_star) == pytest.approx(1.0)
        got = entropy_dim(sh.p_star, BINARY.ratios)
        assert got == pytest.approx(sh.alpha, abs=1e-4)
    with pytest.raises(ValidationError, match="strictly increasing"):
        frequency_family(BINARY, (0.8, 0.5), 8, 8)
