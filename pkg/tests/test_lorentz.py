import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxsurf.errors import PreconditionError, UnitModulusInput
from maxsurf.lorentz import (
    INFINITY,
    CausalClass,
    HyperbolicPoint,
    LorentzVec,
    classify,
    lorentz_inner,
    stereographic,
    stereographic_array,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = st.tuples(finite, finite, finite)


def off_unit(z):
    return abs(abs(z) - 1) > 1e-6


complexes = st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False).filter(off_unit)


def test_inner_examples():
    assert lorentz_inner((1, 0, 0), (1, 0, 0)) == 1
    assert lorentz_inner((0, 0, 1), (0, 0, 1)) == -1
    assert lorentz_inner((1, 0, 1), (1, 0, 1)) == 0


def test_classify_examples():
    assert classify((0, 0, 0)) is CausalClass.SPACELIKE
    assert classify((0, 0, 2)) is CausalClass.TIMELIKE
    assert classify((3, 4, 5)) is CausalClass.LIGHTLIKE
    assert classify((1, 0, 0)) is CausalClass.SPACELIKE


def test_stereographic_examples():
    assert np.array_equal(np.asarray(stereographic(INFINITY).p), [0.0, 0.0, 1.0])
    assert np.array_equal(np.asarray(stereographic(None).p), [0.0, 0.0, 1.0])
    assert np.allclose(np.asarray(stereographic(0).p), [0, 0, -1], atol=0)
    assert np.allclose(np.asarray(stereographic(2j).p), [4 / 3, 0, 5 / 3], rtol=0, atol=1e-15)


def test_stereographic_unit_circle_rejected():
    with pytest.raises(UnitModulusInput):
        stereographic(1.0)
    with pytest.raises(UnitModulusInput):
        stereographic(np.exp(0.3j))
    with pytest.raises(UnitModulusInput):
        stereographic_array(np.array([0.5, 1j]))


def test_lorentzvec_rejects_nonfinite():
    with pytest.raises(PreconditionError):
        LorentzVec(math.nan, 0, 0)
    with pytest.raises(PreconditionError):
        LorentzVec(0, math.inf, 0)


def test_hyperbolic_point_invariants():
    with pytest.raises(PreconditionError):
        HyperbolicPoint(LorentzVec(0, 0, 0.5))
    assert HyperbolicPoint(LorentzVec(0, 0, -1)).upper is False


def test_lorentzvec_arithmetic():
    a, b = LorentzVec(1, 2, 3), LorentzVec(0.5, -1, 2)
    assert np.array_equal(np.asarray(a + b), [1.5, 1, 5])
    assert np.array_equal(np.asarray(a - b), [0.5, 3, 1])
    assert np.array_equal(np.asarray(2 * a), [2, 4, 6])
    assert np.array_equal(np.asarray(-a), [-1, -2, -3])
    assert LorentzVec.of([1, 2, 3]) == a


@given(complexes)
def test_stereographic_on_hyperboloid(z):
    p = stereographic(z).p
    q = lorentz_inner(p, p)
    assert abs(q + 1) <= 1e-12 * max(1.0, p.x3 ** 2)
    assert classify(p) is CausalClass.TIMELIKE
    if abs(z) > 1:
        assert p.x3 >= 1
    else:
        assert p.x3 <= -1


@given(complexes)
def test_stereographic_array_matches_scalar(z):
    a = stereographic_array(np.array([z]))[0]
    assert np.array_equal(a, np.asarray(stereographic(z).p))


@given(vectors, vectors)
def test_inner_symmetric(a, b):
    assert lorentz_inner(a, b) == lorentz_inner(b, a)


@given(vectors, vectors, vectors, finite)
def test_inner_bilinear(a, b, c, k):
    a, b, c = map(np.asarray, (a, b, c))
    lhs = lorentz_inner(k * a + b, c)
    rhs = k * lorentz_inner(a, c) + lorentz_inner(b, c)
    scale = (abs(k) * np.abs(a).max() + np.abs(b).max() + 1) * (np.abs(c).max() + 1)
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(st.tuples(st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50)),
       st.integers(-20, 20).filter(lambda k: k != 0))
def test_classify_scale_invariant(v, k):
    # integer components keep the sign of <v, v> exact
    v = np.asarray(v, float)
    assert classify(k * v) is classify(v)
