import pytest

from tms.geometry import dyadic_cantor_set, unit_cube
from tms.measures import binomial_cascade, lebesgue_proxy
from tms.models import AtomicMeasure, DigitalSet


@pytest.fixture
def interval() -> DigitalSet:
    return unit_cube(8)


@pytest.fixture
def cantor() -> DigitalSet:
    return dyadic_cantor_set(10)


@pytest.fixture
def cascade() -> AtomicMeasure:
    return binomial_cascade(0.25, 12)


@pytest.fixture
def lebesgue() -> AtomicMeasure:
    return lebesgue_proxy(10)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("TMS_OUT_DIR", raising=False)
    monkeypatch.delenv("TMS_THREADS", raising=False)
    return tmp_path / "out"
