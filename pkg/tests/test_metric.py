import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import atomic_measures
from tms.errors import ValidationError
from tms.geometry import rasterize_points, unit_cube
from tms.measures import blend, lebesgue_proxy, spray_measure
from tms.metric import (
    build_program,
    fm_distance,
    fortet_mourier,
    fortet_mourier_transport,
    lemma_topo1_frontier,
    lemma_topo1_probe,
    shifted,
    solve_program,
)
from tms.models import AtomicMeasure


@pytest.mark.parametrize(
    "x, y, expected",
    [
        ((0.2,), (0.7,), 0.5),
        ((0.0, 0.0), (0.75, 1.0), 1.25),
        ((0.0,) * 5, (0.99,) * 5, 2.0),
    ],
)
def test_dirac_distance_is_the_truncated_metric(x, y, expected):
    got = fm_distance(AtomicMeasure.dirac(x), AtomicMeasure.dirac(y))
    assert got == pytest.approx(expected, abs=1e-12)


def test_distance_to_itself_is_zero():
    small = AtomicMeasure([[0.1], [0.4], [0.8]], [0.2, 0.3, 0.5])
    assert fm_distance(small, small) == 0.0


def test_collinear_pairs_are_pruned():
    mu = AtomicMeasure([[0.1], [0.6]], [0.5, 0.5])
    nu = AtomicMeasure.dirac(0.3)
    program = build_program(mu, nu)
    assert program.pairs.tolist() == [[0, 1], [1, 2]]
    assert program.c.tolist() == pytest.approx([0.5, -1.0, 0.5])


@pytest.mark.parametrize("eps", [1e-300, 1e-20, 1e-13])
def test_nearly_coincident_atoms_keep_their_constraints(eps):
    mu = AtomicMeasure.dirac(0.0)
    nu = AtomicMeasure([[eps], [0.5]], [0.5, 0.5])
    assert fortet_mourier(mu, nu) == pytest.approx(0.25, abs=1e-9)

    program = build_program(mu, nu)
    _, f = solve_program(program)
    assert np.all(np.abs(f) <= 1.0 + 1e-9)
    gaps = np.abs(f[:, None] - f[None, :])
    assert np.all(gaps <= program.distances + 1e-9)


def test_mass_split_across_an_interval():
    mu = AtomicMeasure([[0.1], [0.6]], [0.5, 0.5])
    nu = AtomicMeasure.dirac(0.3)
    assert fm_distance(mu, nu) == pytest.approx(0.5 * 0.2 + 0.5 * 0.3)


def test_inputs_must_be_probabilities():
    partial = AtomicMeasure([[0.1]], [0.5], unnormalized=True)
    with pytest.raises(ValidationError, match="not probability measures"):
        fm_distance(partial, AtomicMeasure.dirac(0.1))
    with pytest.raises(ValidationError, match="dimension mismatch"):
        fm_distance(AtomicMeasure.dirac(0.1), AtomicMeasure.dirac((0.1, 0.1)))


def test_large_supports_use_transport():
    mu = lebesgue_proxy(9)
    nu = AtomicMeasure.dirac(0.5)
    with pytest.raises(ValidationError, match="exceeds 400 points"):
        fortet_mourier(mu, nu)
    assert fm_distance(mu, nu) == pytest.approx(0.25, abs=1e-3)


@given(atomic_measures(dim=1), atomic_measures(dim=1))
@settings(max_examples=60, deadline=None)
def test_simplex_agrees_with_transport_on_the_line(mu, nu):
    expected = fortet_mourier_transport(mu, nu)
    assert fortet_mourier(mu, nu) == pytest.approx(expected, abs=1e-7)


@given(atomic_measures(dim=2), atomic_measures(dim=2))
@settings(max_examples=40, deadline=None)
def test_simplex_agrees_with_transport_in_the_plane(mu, nu):
    expected = fortet_mourier_transport(mu, nu)
    assert fortet_mourier(mu, nu) == pytest.approx(expected, abs=1e-7)


@given(
    st.sampled_from([1, 2]).flatmap(
        lambda d: st.tuples(*(atomic_measures(dim=d) for _ in range(3)))
    )
)
@settings(max_examples=60, deadline=None)
def test_metric_axioms(triple):
    a, b, c = triple
    ab, ba = fm_distance(a, b), fm_distance(b, a)
    assert 0.0 <= ab <= 2.0 + 1e-12
    assert ab == pytest.approx(ba, abs=1e-9)
    assert fm_distance(a, c) <= ab + fm_distance(b, c) + 1e-9


@given(st.integers(1, 5), st.data())
@settings(max_examples=40, deadline=None)
def test_diracs_in_higher_dimension(dim, data):
    coord = st.floats(0.0, 0.999)
    x = [data.draw(coord) for _ in range(dim)]
    y = [data.draw(coord) for _ in range(dim)]
    expected = min(2.0, math.dist(x, y))
    got = fm_distance(AtomicMeasure.dirac(x), AtomicMeasure.dirac(y))
    assert got == pytest.approx(expected, abs=1e-9)


def test_spray_stays_within_its_spread():
    mu = AtomicMeasure.dirac(0.5)
    sprayed, _ = spray_measure(mu, unit_cube(10), 0.5, 0.3, [16])
    assert fm_distance(mu, sprayed) <= 0.3 + 1e-9


def test_blend_moves_little_mass():
    nu = AtomicMeasure([[0.2], [0.9]], [0.5, 0.5])
    for t in (0.0, 0.1, 0.5):
        mixed = blend(nu, AtomicMeasure.dirac(0.4), t)
        assert fm_distance(mixed, nu) <= 2 * t + 1e-12


def test_shifted_clips_to_the_cube():
    mu = AtomicMeasure([[0.1], [0.95]], [0.5, 0.5])
    moved = shifted(mu, 0.1)
    assert moved.points[0, 0] == pytest.approx(0.2)
    assert moved.points[1, 0] < 1.0


def test_probe_after_a_small_spray():
    E = rasterize_points([0.5], 8)
    mu = AtomicMeasure.dirac(0.5)
    nu, _ = spray_measure(mu, unit_cube(8), 0.2, 0.05, [4])
    probe = lemma_topo1_probe(mu, nu, E, 0.1)
    assert probe.excess <= 0.0
    assert probe.distance <= 0.05 + 1e-9


def test_frontier():
    E = rasterize_points([0.5], 8)
    frontier = lemma_topo1_frontier(AtomicMeasure.dirac(0.5), E, 0.05, [0.0, 0.01, 0.2])
    assert [p.shift for p in frontier] == [0.0, 0.01, 0.2]
    assert [p.distance for p in frontier] == pytest.approx([0.0, 0.01, 0.2])
    assert [p.excess for p in frontier] == [0.0, 0.0, 1.0]
    assert np.all(np.diff([p.distance for p in frontier]) >= 0)
