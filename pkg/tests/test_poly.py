import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from ciliate_ctl.poly import Poly

coef = st.floats(-5, 5, allow_nan=False).filter(lambda c: abs(c) > 1e-3)
terms = st.dictionaries(st.tuples(*[st.integers(0, 2)] * 3), coef, max_size=5)


def P(t):
    return Poly(t, nvars=3)


@given(terms, terms, terms)
def test_ring_laws(a, b, c):
    a, b, c = P(a), P(b), P(c)
    x = np.array([0.3, -0.7, 1.1])
    assert np.isclose((a * (b + c))(x), (a * b + a * c)(x), atol=1e-9)
    assert np.isclose((a * b)(x), a(x) * b(x), atol=1e-9)
    assert (a - a).is_zero()


@given(terms, terms)
def test_product_rule(a, b):
    a, b = P(a), P(b)
    for k in range(3):
        assert ((a * b).deriv(k)).allclose(a.deriv(k) * b + a * b.deriv(k), rtol=1e-12)


def test_derivative_against_finite_difference():
    p = Poly({(2, 1, 0): 3.0, (0, 0, 3): -1.0, (0, 0, 0): 2.0}, nvars=3)
    x = np.array([0.4, -1.3, 0.9])
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (p(x + e) - p(x - e)) / (2 * h)
        assert np.isclose(p.deriv(k)(x), fd, rtol=1e-8)


def test_pruning_removes_roundoff():
    p = Poly({(1, 0, 0): 1.0, (0, 1, 0): 1e-17}, nvars=3)
    assert p.terms == {(1, 0, 0): 1.0}
    assert p.degree() == 1
    assert Poly({}, nvars=3).degree() == -1
