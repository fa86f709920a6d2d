import pytest
from hypothesis import given, strategies as st

from jsl.params import ModelParams


def test_defaults():
    p = ModelParams()
    assert (p.lam, p.n, p.base_rate) == (1.0, 0.0, 1.0)


@pytest.mark.parametrize("kwargs", [{"lam": 0.0}, {"lam": -1.0}, {"base_rate": 0.0}, {"lam": float("nan")}])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        ModelParams(**kwargs)


def test_from_m_is_on_the_soliton_line():
    p = ModelParams.from_m(2.0)
    assert (p.lam, p.n) == (2.0, 0.0)
    assert p.soliton_constrained()
    assert p.m == 2.0


def test_constraint_detection():
    assert not ModelParams(lam=2.0, n=1.0).soliton_constrained()
    assert ModelParams(lam=0.5, n=1.5).soliton_constrained()


@given(st.floats(min_value=0.01, max_value=50.0))
def test_from_m_roundtrip(m):
    p = ModelParams.from_m(m)
    assert p.soliton_constrained()
    assert p.m == pytest.approx(m)
