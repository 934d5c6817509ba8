"""Polynomial algebra: arithmetic identities, calculus, bases, text round-trip."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsocert.poly import (
    Polynomial,
    PolynomialParseError,
    VariableSpace,
    VariableSpaceMismatch,
    monomial_basis,
    parse,
    render,
)

X1 = VariableSpace(("x",))
X2 = VariableSpace(("x", "y"))


def poly1(**coeffs):
    """Univariate helper: poly1(c0=1, c2=3) -> 1 + 3x^2."""
    return Polynomial(X1, {(int(k[1:]),): v for k, v in coeffs.items()})


def test_product_identity():
    x = Polynomial.variable(X1, 0)
    assert (x + 1) * (x - 1) == x * x - 1


def test_additive_identity():
    p = poly1(c0=2.5, c3=-1.0)
    assert p + Polynomial.zero(X1) == p


def test_scaling():
    p = poly1(c1=1, c2=5, c3=1)
    assert p.scale(2.0) == poly1(c1=2, c2=10, c3=2)


def test_space_mismatch_raises():
    with pytest.raises(VariableSpaceMismatch):
        Polynomial.variable(X1, 0) + Polynomial.variable(X2, 0)


def test_no_zero_terms_stored():
    p = poly1(c0=1.0) - poly1(c0=1.0)
    assert p.is_zero() and p.terms == {}
    q = poly1(c2=3.0) + poly1(c2=-3.0, c1=1.0)
    assert list(q.terms) == [(1,)]


def test_differentiate_power_rule():
    p = poly1(c1=1, c2=5, c3=1)  # the scalar-example drift
    assert p.differentiate(0) == poly1(c0=1, c1=10, c2=3)


def test_differentiate_constant():
    assert Polynomial.constant(X1, 7.0).differentiate(0).is_zero()


def test_differentiate_partial():
    p = Polynomial(X2, {(2, 3): 1.0})  # x^2 y^3
    assert p.differentiate(1) == Polynomial(X2, {(2, 2): 3.0})


def test_evaluate_examples():
    p = poly1(c1=1, c2=5, c3=1)
    assert p.evaluate([1.0]) == pytest.approx(7.0, abs=1e-12)
    assert p.evaluate([0.0]) == 0.0
    q = poly1(c2=1, c0=-1)
    assert q.evaluate([-1.0]) == pytest.approx(0.0, abs=1e-12)


def test_evaluate_at_origin_is_constant_term():
    p = Polynomial(X2, {(0, 0): 4.25, (1, 2): -3.0, (3, 0): 1.0})
    assert p.evaluate([0.0, 0.0]) == 4.25


def test_monomial_basis_1d():
    basis = monomial_basis(X1, 2)
    assert basis == [(0,), (1,), (2,)]


def test_monomial_basis_counts():
    assert len(monomial_basis(X2, 7)) == 36  # C(9, 2)
    assert monomial_basis(X2, 0) == [(0, 0)]
    for n in range(1, 5):
        space = VariableSpace(tuple(f"x{i}" for i in range(n)))
        for d in range(15):
            assert len(monomial_basis(space, d)) == math.comb(n + d, d)


def test_monomial_basis_graded_lex_order():
    basis = monomial_basis(X2, 2)
    assert basis == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


coeff = st.integers(min_value=-10, max_value=10)


def random_poly(space, max_deg, rng, density=0.6):
    monos = monomial_basis(space, max_deg)
    terms = {}
    for m in monos:
        if rng.random() < density:
            terms[m] = rng.uniform(-10, 10)
    return Polynomial(space, terms)


@given(
    st.lists(st.tuples(st.integers(0, 4), coeff), max_size=6),
    st.lists(st.tuples(st.integers(0, 4), coeff), max_size=6),
    st.lists(st.tuples(st.integers(0, 4), coeff), max_size=6),
)
@settings(max_examples=60, deadline=None)
def test_ring_distributivity(ts_p, ts_q, ts_r):
    def build(ts):
        d = {}
        for e, c in ts:
            d[(e,)] = d.get((e,), 0) + c
        return Polynomial(X1, d)

    p, q, r = build(ts_p), build(ts_q), build(ts_r)
    assert (p + q) * r == p * r + q * r


@given(
    st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3), coeff), max_size=7),
    st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3), coeff), max_size=7),
    coeff,
    coeff,
)
@settings(max_examples=60, deadline=None)
def test_differentiate_linear(ts_p, ts_q, a, b):
    def build(ts):
        d = {}
        for e1, e2, c in ts:
            d[(e1, e2)] = d.get((e1, e2), 0) + c
        return Polynomial(X2, d)

    p, q = build(ts_p), build(ts_q)
    combo = p.scale(a) + q.scale(b)
    for var in (0, 1):
        assert combo.differentiate(var) == p.differentiate(var).scale(a) + q.differentiate(var).scale(b)


def test_derivative_matches_central_difference():
    """Formal derivative vs (p(x+h)-p(x-h))/2h on random degree-<=8 polynomials."""
    rng = np.random.default_rng(7)
    h = 1e-5
    for _ in range(25):
        p = random_poly(X2, 8, rng)
        dp0 = p.differentiate(0)
        for _ in range(4):
            pt = rng.uniform(-1, 1, size=2)
            fd = (p.evaluate([pt[0] + h, pt[1]]) - p.evaluate([pt[0] - h, pt[1]])) / (2 * h)
            exact = dp0.evaluate(pt)
            if abs(exact) > 1e-8:
                assert abs(fd - exact) / abs(exact) <= 1e-6
            else:
                assert abs(fd - exact) <= 1e-6


def test_evaluate_many_matches_scalar():
    rng = np.random.default_rng(3)
    p = random_poly(X2, 5, rng)
    pts = rng.uniform(-2, 2, size=(40, 2))
    vals = p.evaluate_many(pts)
    for i in range(40):
        assert vals[i] == pytest.approx(p.evaluate(pts[i]), rel=1e-12, abs=1e-12)


def test_substitute_and_restrict():
    p = parse("1*x^2*y + 2*y - 3", X2)
    q = p.substitute(0, 2.0)  # 4y + 2y - 3
    assert q == parse("6*y - 3", X2)
    face = VariableSpace(("y",))
    assert q.restrict(face, [1]) == parse("6*y - 3", face)


def test_embed_roundtrip():
    f = VariableSpace(("y",))
    p = parse("2*y^3 - 1", f)
    lifted = p.embed(X2)
    assert lifted == parse("2*y^3 - 1", X2)


def test_render_canonical():
    p = poly1(c3=2, c2=5, c1=1)
    assert render(p) == "2*x^3 + 5*x^2 + 1*x"
    assert render(Polynomial.zero(X1)) == "0"
    assert render(poly1(c0=-1, c2=1)) == "1*x^2 - 1"


def test_parse_roundtrip():
    rng = np.random.default_rng(11)
    for _ in range(30):
        p = random_poly(X2, 6, rng, density=0.4)
        assert parse(render(p), X2) == p


def test_parse_accepts_whitespace_and_bare_terms():
    assert parse("  x^2 -  x ", X1) == poly1(c2=1, c1=-1)
    assert parse("-3", X1) == poly1(c0=-3)
    assert parse("2 * x ^ 2 + 1", X1) == poly1(c2=2, c0=1)


def test_parse_rejects_garbage():
    for bad in ("", "x +", "2**x", "z + 1", "x^2.5", "x^", "1 & 2"):
        with pytest.raises(PolynomialParseError):
            parse(bad, X1)


def test_immutability():
    p = poly1(c1=1)
    with pytest.raises(AttributeError):
        p.terms = {}
