import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_ball_mass
from tms.errors import NumericError, ValidationError
from tms.geometry import unit_cube
from tms.measures import (
    MassIndex,
    ball_mass,
    binomial_cascade,
    blend,
    check_Ulm,
    geometric_mixture,
    lebesgue_proxy,
    mixture_factors,
    perturbed_cover_measure,
    prevalence_segment,
    prop41_measure,
    self_similar_measure,
    spray_measure,
    spray_scales,
    ulm_radii,
    ulm_window,
)
from tms.models import AtomicMeasure, DigitalSet, IFSystem, ProbVector


@st.composite
def grid_measures(draw, dim: int):
    """Atoms on the 1/64 lattice; ball boundaries at half-step radii miss every atom."""
    count = draw(st.integers(1, 8))
    pts = [[draw(st.integers(0, 63)) / 64 for _ in range(dim)] for _ in range(count)]
    w = np.asarray([draw(st.integers(1, 10)) for _ in range(count)], dtype=float)
    return AtomicMeasure(pts, w / w.sum())


def test_ball_mass_is_open():
    mu = AtomicMeasure([[0.25], [0.5]], [0.5, 0.5])
    assert ball_mass(mu, 0.0, 0.25) == 0.0
    assert ball_mass(mu, 0.0, 0.2500001) == 0.5
    assert ball_mass(mu, 0.375, 0.2) == 1.0
    with pytest.raises(ValidationError):
        ball_mass(mu, 0.0, 0.0)
    with pytest.raises(ValidationError, match="dimension mismatch"):
        ball_mass(mu, (0.0, 0.0), 0.1)


@pytest.mark.parametrize("dim", [1, 2])
@given(data=st.data())
@settings(max_examples=50, deadline=None)
def test_mass_index_matches_brute_force(dim, data):
    mu = data.draw(grid_measures(dim))
    centers = np.asarray(
        [[data.draw(st.integers(0, 63)) / 64 for _ in range(dim)] for _ in range(4)]
    )
    r = (data.draw(st.integers(0, 40)) + 0.5) / 64
    got = MassIndex(mu).masses(centers, r)
    expected = [brute_force_ball_mass(mu, c, r) for c in centers]
    assert got == pytest.approx(expected, abs=1e-12)
    assert [ball_mass(mu, c, r) for c in centers] == pytest.approx(expected, abs=1e-12)


def test_ball_mass_is_monotone_in_the_radius(cascade):
    masses = [ball_mass(cascade, 1 / 3, r) for r in np.geomspace(1e-4, 1.0, 30)]
    assert all(b >= a for a, b in zip(masses, masses[1:]))


def test_blend_is_linear_in_ball_mass(cascade, lebesgue):
    mixed = blend(cascade, lebesgue, 0.3)
    assert mixed.total == pytest.approx(1.0, abs=1e-10)
    for x, r in [(0.1, 0.05), (0.5, 0.2), (0.9, 0.01)]:
        expected = 0.7 * ball_mass(cascade, x, r) + 0.3 * ball_mass(lebesgue, x, r)
        assert ball_mass(mixed, x, r) == pytest.approx(expected, abs=1e-12)


def test_blend_errors(cascade):
    with pytest.raises(ValidationError, match="invalid blend weight"):
        blend(cascade, cascade, 1.5)
    with pytest.raises(ValidationError, match="dimension mismatch"):
        blend(cascade, lebesgue_proxy(2, 2), 0.5)
    partial = AtomicMeasure([[0.1]], [0.5], unnormalized=True)
    with pytest.raises(ValidationError, match="not probability measures"):
        blend(partial, cascade, 0.5)


def test_perturbed_cover_measure_and_segment():
    nu = AtomicMeasure.uniform([[0.1], [0.4], [0.7], [0.9]])
    mu0 = AtomicMeasure.dirac(0.5)
    mixed, factor = perturbed_cover_measure(nu, mu0)
    assert factor == 0.25
    assert ball_mass(mixed, 0.5, 0.01) == pytest.approx(0.25)
    seg = prevalence_segment(nu, 0.0, 0.8)
    assert ball_mass(seg, 0.0, 0.01) == pytest.approx(0.2)


def test_mixture_factors():
    assert mixture_factors(3) == pytest.approx([4 / 7, 2 / 7, 1 / 7])
    assert mixture_factors(1) == pytest.approx([1.0])


def test_geometric_mixture_dominates_its_components(cascade, lebesgue):
    components = [cascade, lebesgue, AtomicMeasure.dirac(0.5)]
    mix = geometric_mixture(components)
    assert mix.total == pytest.approx(1.0, abs=1e-10)
    factors = mixture_factors(3)
    for x, r in [(0.5, 0.001), (0.2, 0.1), (1 / 3, 0.01)]:
        for f, mu in zip(factors, components):
            assert ball_mass(mix, x, r) >= f * ball_mass(mu, x, r) - 1e-12


def test_geometric_mixture_errors():
    with pytest.raises(ValidationError, match="empty measure list"):
        geometric_mixture([])
    with pytest.raises(ValidationError, match="dimension mismatch"):
        geometric_mixture([lebesgue_proxy(2), lebesgue_proxy(2, 2)])


def test_lebesgue_proxy():
    mu = lebesgue_proxy(3)
    assert len(mu) == 8
    assert mu.points[:, 0].tolist() == [(k + 0.5) / 8 for k in range(8)]
    assert np.allclose(mu.weights, 1 / 8)


def test_binomial_cascade_masses():
    mu = binomial_cascade(0.25, 3)
    assert len(mu) == 8
    assert mu.points[0, 0] == pytest.approx(1 / 16)
    assert mu.weights[0] == pytest.approx(0.25**3)
    assert mu.weights[-1] == pytest.approx(0.75**3)


def test_cascade_dyadic_masses(cascade):
    assert ball_mass(cascade, 0.25, 0.25) == pytest.approx(0.25)
    assert ball_mass(cascade, 0.125, 0.125) == pytest.approx(0.0625)


def test_self_similar_measure_on_the_ternary_cantor_set():
    ifs = IFSystem.homotheties((1 / 3, 1 / 3), (0.0, 2 / 3))
    mu = self_similar_measure(ifs, ProbVector.of([0.5, 0.5]), 5)
    assert len(mu) == 32
    assert ball_mass(mu, 0.5, 1 / 6) == 0.0
    assert ball_mass(mu, 1 / 6, 1 / 6 + 1e-9) == pytest.approx(0.5)
    with pytest.raises(NumericError, match="depth too large"):
        self_similar_measure(ifs, ProbVector.of([0.5, 0.5]), 5, max_atoms=16)
    with pytest.raises(ValidationError):
        self_similar_measure(ifs, ProbVector.of([0.2, 0.3, 0.5]), 5)


def test_prop41_single_point_target():
    K = unit_cube(12)
    E = DigitalSet(12, 1, [0])
    mu0, diag = prop41_measure(K, E, 0.5, 3)
    assert [lv.level for lv in diag.levels] == [1, 2, 3]
    for lv in diag.levels:
        assert lv.cubes == 1
        assert lv.delta_depth >= 2 * (lv.level + 1)
        assert lv.sigma <= lv.budget
    assert len(diag.atoms) == 3
    assert all(a.point[0] < 2.0**-10 for a in diag.atoms)
    assert mu0.total == pytest.approx(1.0)


def test_prop41_ball_lower_bound(cantor):
    mu0, diag = prop41_measure(cantor, cantor, 0.6, 4, "auto")
    assert diag.budget_scale >= 1.0
    assert sum(lv.omega * lv.sigma for lv in diag.levels) == pytest.approx(1.0)
    assert diag.tail_bound > 0
    index = MassIndex(mu0)
    centers = np.asarray([a.point for a in diag.atoms])
    masses = index.masses(centers, np.asarray([2 * a.side for a in diag.atoms]))
    bounds = np.asarray([a.omega * a.side**0.6 for a in diag.atoms])
    assert np.all(masses >= bounds - 1e-12)
    assert cantor.contains_points(mu0.points).all()


def test_prop41_errors(cantor, interval):
    with pytest.raises(ValidationError, match="empty target"):
        prop41_measure(interval, DigitalSet.empty(8, 1), 0.5, 3)
    with pytest.raises(ValidationError, match="target not contained in K"):
        prop41_measure(cantor, unit_cube(10), 0.5, 3)
    with pytest.raises(ValidationError, match="invalid exponent/depth"):
        prop41_measure(interval, interval, 0.0, 3)
    with pytest.raises(NumericError, match="cover budget unreachable at n=1"):
        prop41_measure(interval, interval, 1.0, 3, 1.0)


def test_spray_scales():
    assert spray_scales(16, 0.5) == pytest.approx((8 / 256, 2 / 256))
    assert spray_scales(16, 0.5, "printed") == pytest.approx((2.0, 0.5))


def test_spray_and_membership():
    K = unit_cube(10)
    mu = AtomicMeasure.dirac(0.5)
    sprayed, reports = spray_measure(mu, K, 0.5, 0.3, [16])
    assert len(sprayed) == 16
    assert np.allclose(sprayed.weights, 1 / 16)
    assert np.all(np.abs(sprayed.points[:, 0] - 0.5) < 0.3)
    (rep,) = reports
    assert rep.count == 16
    assert rep.min_gap > rep.gap_bound

    l, m, radii = ulm_window([16], 0.5)
    assert (l, m) == (127, 129)
    assert 1 / m < radii[0] < 1 / l
    result = check_Ulm(sprayed, K, l, m, 0.5, 4)
    assert result.member
    assert result.missing == 0
    assert np.all((result.witnesses > 1 / m) & (result.witnesses < 1 / l))


def test_spray_with_threads_is_deterministic():
    K = unit_cube(10)
    mu = AtomicMeasure([[0.25], [0.75]], [0.5, 0.5])
    a, _ = spray_measure(mu, K, 0.25, 0.1, [4, 6], threads=1)
    b, _ = spray_measure(mu, K, 0.25, 0.1, [4, 6], threads=3)
    assert a == b
    assert len(a) == 10


def test_spray_with_the_printed_rule_cannot_pack():
    mu, K = AtomicMeasure.dirac(0.5), unit_cube(10)
    with pytest.raises(NumericError, match="insufficient local box dimension"):
        spray_measure(mu, K, 0.5, 0.3, [16], radius_rule="printed")


def test_spray_errors():
    with pytest.raises(NumericError, match="insufficient local box dimension"):
        spray_measure(AtomicMeasure.dirac(0.5), unit_cube(8), 0.5, 0.01, [1000])
    close = AtomicMeasure([[0.1], [0.2]], [0.5, 0.5])
    with pytest.raises(ValidationError, match="quarter of the atom separation"):
        spray_measure(close, unit_cube(8), 0.5, 0.05, [2, 2])
    with pytest.raises(ValidationError, match="one count per atom"):
        spray_measure(close, unit_cube(8), 0.5, 0.01, [2])


def test_ulm_window_and_radii_errors():
    with pytest.raises(ValidationError, match="empty radius interval"):
        ulm_window([1], 0.5, "printed")
    with pytest.raises(ValidationError, match="empty radius interval"):
        ulm_radii(5, 3, 4)
    radii = ulm_radii(2, 4, 3)
    assert len(radii) == 3
    assert np.all((radii > 0.25) & (radii < 0.5))


def test_check_Ulm_reports_points_without_witness():
    K = unit_cube(4)
    result = check_Ulm(AtomicMeasure.dirac(0.5), K, 5, 20, 0.5, 4)
    assert not result.member
    assert result.missing >= 1
    # far from the atom every radius is a witness
    assert not np.isnan(result.witnesses[0])
    with pytest.raises(ValidationError, match="empty radius interval"):
        check_Ulm(AtomicMeasure.dirac(0.5), K, 5, 20, 0.5, 4, radii=np.asarray([0.5]))
