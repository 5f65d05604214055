import math

import numpy as np
import pytest

from tms.errors import ValidationError
from tms.models import (
    AtomicMeasure,
    Code,
    DigitalSet,
    DyadicCube,
    IFSystem,
    ProbVector,
    Similarity,
    SpectrumCurve,
)


def test_cube_geometry():
    cube = DyadicCube(2, (1, 3))
    assert cube.side == 0.25
    assert cube.lower == (0.25, 0.75)
    assert cube.center == (0.375, 0.875)
    assert cube.size(2.0) == pytest.approx(1 / 16)
    assert cube.ancestor(1) == DyadicCube(1, (0, 1))
    assert len(cube.children()) == 4
    assert all(cube.contains(ch) for ch in cube.children())
    assert str(cube) == "2 1 3"


def test_cube_outside_domain():
    with pytest.raises(ValidationError):
        DyadicCube(1, (2,))


def test_digital_set_text_format():
    E = DigitalSet.from_coords(2, [[3, 0], [0, 1], [0, 0]])
    text = str(E)
    assert text.splitlines() == ["dim=2 depth=2", "2 0 0", "2 0 1", "2 3 0"]
    assert DigitalSet.parse("# comment\n" + text) == E


def test_digital_set_parse_rejects_wrong_depth():
    with pytest.raises(ValidationError):
        DigitalSet.parse("dim=1 depth=2\n3 1\n")


@pytest.mark.parametrize(
    "text, where",
    [
        ("dim=1 depth=x\n", "line 1: depth"),
        ("# op=ifs.raster params=0\ndim=1 depth=2\n2 a\n", "line 3"),
        ("dim=1 depth=-1\n", "line 1"),
    ],
)
def test_digital_set_parse_names_the_bad_line(text, where):
    with pytest.raises(ValidationError, match=where):
        DigitalSet.parse(text)


def test_digital_set_algebra():
    a = DigitalSet(3, 1, [0, 1, 2, 5])
    b = DigitalSet(3, 1, [2, 5, 7])
    assert list(a.union(b).keys) == [0, 1, 2, 5, 7]
    assert list(a.intersection(b).keys) == [2, 5]
    assert list(a.difference(b).keys) == [0, 1]
    assert a.intersection(b).issubset(a)
    assert not a.issubset(b)
    with pytest.raises(ValidationError):
        a.union(DigitalSet(2, 1, [0]))


def test_digital_set_ancestors_and_within():
    E = DigitalSet(3, 1, [0, 1, 5])
    assert list(E.ancestor_keys(1)) == [0, 1]
    assert list(E.within(DyadicCube(1, (0,))).keys) == [0, 1]
    assert DyadicCube(3, (5,)) in E
    assert DyadicCube(3, (4,)) not in E


def test_contains_points_uses_half_open_cubes():
    E = DigitalSet(1, 1, [0])
    inside = E.contains_points(np.asarray([[0.0], [0.4999], [0.5], [1.0]]))
    assert inside.tolist() == [True, True, False, False]


def test_atomic_measure_merges_coincident_atoms():
    mu = AtomicMeasure([[0.5], [0.25], [0.5]], [0.25, 0.5, 0.25])
    assert len(mu) == 2
    assert mu.points[:, 0].tolist() == [0.25, 0.5]
    assert mu.weights.tolist() == [0.5, 0.5]


def test_atomic_measure_drops_zero_weights():
    mu = AtomicMeasure([[0.1], [0.2]], [1.0, 0.0])
    assert len(mu) == 1


def test_atomic_measure_rejects_non_probability():
    with pytest.raises(ValidationError, match="not probability measures"):
        AtomicMeasure([[0.1]], [0.5])
    assert AtomicMeasure([[0.1]], [0.5], unnormalized=True).total == 0.5


def test_atomic_measure_text_format_normalizes():
    mu = AtomicMeasure.parse("dim=1 atoms=2\n1 0.25\n3 0.75\n")
    assert mu.weights.tolist() == [0.25, 0.75]
    assert AtomicMeasure.parse(str(mu)) == mu


def test_atomic_measure_parse_names_the_bad_line():
    with pytest.raises(ValidationError, match="line 1: atoms"):
        AtomicMeasure.parse("dim=1 atoms=2.5\n1 0.25\n")
    with pytest.raises(ValidationError, match="line 2"):
        AtomicMeasure.parse("dim=1 atoms=1\none 0.25\n")


def test_mass_in(cantor):
    mu = AtomicMeasure([[0.0], [0.3], [0.5]], [0.5, 0.25, 0.25])
    assert mu.mass_in(cantor) == pytest.approx(0.75)


def test_prob_vector():
    assert ProbVector.of([0.25, 0.75]).m == 2
    with pytest.raises(ValidationError, match="not a probability vector"):
        ProbVector.of([0.5, 0.6])


def test_code():
    code = Code((1, 2, 2), 2) + Code((1,), 2)
    assert len(code) == 4
    with pytest.raises(ValidationError, match="digits must lie in 1..m"):
        Code((3,), 2)


def test_ifs_text_format():
    ifs = IFSystem.homotheties((1 / 3, 1 / 3), (0.0, 2 / 3))
    assert IFSystem.parse(str(ifs)) == ifs
    assert ifs.ratios == (1 / 3, 1 / 3)


def test_ifs_parse_names_the_bad_line():
    with pytest.raises(ValidationError, match="line 1: m"):
        IFSystem.parse("m=two dim=1\n0.5 0\n0.5 0.5\n")
    with pytest.raises(ValidationError, match="line 3: not a number"):
        IFSystem.parse("m=2 dim=1\n0.5 0\n0.5 half\n")


def test_ifs_rejects_overlap_under_declared_osc():
    with pytest.raises(ValidationError, match="open set condition"):
        IFSystem.homotheties((0.6, 0.6), (0.0, 0.4))
    assert IFSystem.homotheties((0.6, 0.6), (0.0, 0.4), osc_declared=False).m == 2


def test_ifs_rejects_maps_leaving_the_cube():
    with pytest.raises(ValidationError):
        IFSystem((Similarity(0.5, (0.0,)), Similarity(0.5, (0.75,))))


def test_spectrum_curve_csv():
    curve = SpectrumCurve(
        (0.0, 0.5, 1.0), (-math.inf, 0.25, math.inf), ("empty", "", "")
    )
    text = curve.to_csv()
    assert text.splitlines()[1] == "0.0,-inf,empty"
    assert SpectrumCurve.parse(text) == curve


def test_spectrum_curve_grid_must_increase():
    with pytest.raises(ValidationError):
        SpectrumCurve((1.0, 0.5), (0.0, 0.0))
