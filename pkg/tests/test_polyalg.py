from fractions import Fraction
from itertools import product
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonc.polyalg import (
    DegenerateSimplex,
    Exponent,
    PolyParseError,
    RationalMatrix,
    SparsePoly,
    barycentric_weights,
    evaluate,
    monomial_vector,
    nullspace,
    parse_poly,
    space_dim,
)

MOTZKIN = "x0^4*x1^2 + x0^2*x1^4 - 3*x0^2*x1^2 + 1"


# --- exponents and normal form ------------------------------------------

def test_exponent_basics():
    a = Exponent([2, 4])
    assert a.degree() == 6 and a.is_even()
    assert not Exponent([1, 2]).is_even()
    assert a + Exponent([1, 0]) == Exponent([3, 4])
    assert a.halved() == Exponent([1, 2])
    with pytest.raises(ValueError):
        Exponent([-1])


def test_normal_form_drops_zeros():
    p = SparsePoly(2, {(1, 0): 1, (0, 1): 0})
    assert len(p) == 1
    assert (p - p).is_zero()
    assert SparsePoly.zero(3).degree == -1
    with pytest.raises(ValueError):
        SparsePoly(2, {(1,): 1})


# --- evaluation -----------------------------------------------------------

def test_eval_examples():
    assert evaluate(parse_poly("x0^2"), [3]) == 9
    assert evaluate(parse_poly(MOTZKIN), [1, 1]) == 0
    assert evaluate(SparsePoly.zero(2), [0.3, -7]) == 0


def _rand_poly(rng, n, terms=6, deg=4):
    d = {}
    for _ in range(terms):
        e = tuple(int(v) for v in rng.integers(0, deg + 1, size=n))
        d[e] = Fraction(int(rng.integers(-1000, 1001)), int(rng.integers(1, 20)))
    return SparsePoly(n, d)


def test_eval_is_ring_homomorphism():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 4))
        f, g = _rand_poly(rng, n), _rand_poly(rng, n)
        x = rng.uniform(-10, 10, size=n)
        fx, gx = evaluate(f, x), evaluate(g, x)
        for lhs, rhs in ((evaluate(f + g, x), fx + gx), (evaluate(f * g, x), fx * gx)):
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs), abs(fx) * abs(gx), abs(fx) + abs(gx))


def test_evaluator_matches_exact():
    f = parse_poly(MOTZKIN)
    pts = np.random.default_rng(0).uniform(-2, 2, size=(50, 2))
    np.testing.assert_allclose(f.evaluator()(pts), [evaluate(f, p) for p in pts], rtol=1e-12, atol=1e-12)


# --- monomial vectors -----------------------------------------------------

def test_monomial_vector_examples():
    assert monomial_vector(1, 2) == [Exponent([0]), Exponent([1]), Exponent([2])]
    assert monomial_vector(2, 1) == [Exponent([0, 0]), Exponent([1, 0]), Exponent([0, 1])]
    # brute force count of |a| <= 2 in two variables
    brute = [a for a in product(range(3), repeat=2) if sum(a) <= 2]
    assert len(monomial_vector(2, 2)) == len(brute) == 6


@pytest.mark.parametrize("n", range(1, 6))
@pytest.mark.parametrize("d", range(0, 6))
def test_monomial_vector_length(n, d):
    v = monomial_vector(n, d)
    assert len(v) == space_dim(n, d) == comb(n + d, n)
    assert len(set(v)) == len(v)
    degs = [a.degree() for a in v]
    assert degs == sorted(degs)


def test_space_dim_examples():
    assert space_dim(1, 2) == 3
    assert space_dim(4, 0) == 1
    assert space_dim(3, 2) == 10
    with pytest.raises(OverflowError):
        space_dim(10**6, 10**6)


# --- exact linear algebra -------------------------------------------------

def test_nullspace_examples():
    assert nullspace(RationalMatrix([[1, 0, 0], [0, 1, 0], [0, 0, 1]])) == []
    (v,) = nullspace(RationalMatrix([[1, 1]]))
    assert v[0] == -v[1] != 0
    assert nullspace(RationalMatrix([[1, t, t * t] for t in (0, 1, 2)])) == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(-5, 5), min_size=4, max_size=4), min_size=1, max_size=4))
def test_nullspace_property(rows):
    M = RationalMatrix(rows)
    basis = nullspace(M)
    assert len(basis) == 4 - M.rank()
    for v in basis:
        assert all(x == 0 for x in M.matvec(v))


def test_barycentric_examples():
    assert barycentric_weights([(4, 2), (2, 4), (0, 0)], (2, 2)) == [Fraction(1, 3)] * 3
    assert barycentric_weights([(0,), (4,)], (2,)) == [Fraction(1, 2)] * 2
    assert barycentric_weights([(0,), (4,)], (4,)) is None
    with pytest.raises(DegenerateSimplex):
        barycentric_weights([(0, 0), (2, 2), (4, 4)], (2, 2))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(0, 4), min_size=n, max_size=n), min_size=2, max_size=n + 1),
    st.lists(st.integers(0, 4), min_size=n, max_size=n))))
def test_barycentric_reconstructs_beta(data):
    verts, beta = data
    try:
        lam = barycentric_weights(verts, beta)
    except DegenerateSimplex:
        return
    if lam is None:
        return
    assert sum(lam) == 1 and all(l > 0 for l in lam)
    for i in range(len(beta)):
        assert sum(l * v[i] for l, v in zip(lam, verts)) == beta[i]


# --- text grammar ---------------------------------------------------------

def test_parse_round_trip():
    f = parse_poly(MOTZKIN)
    assert f.nvars == 2 and f.degree == 6
    assert f.coeff((2, 2)) == -3
    assert parse_poly(f.to_text(), nvars=2) == f
    assert parse_poly("1/3*x0 - 2/3*x0") == parse_poly("-1/3*x0")
    assert parse_poly("x2").nvars == 3
    assert parse_poly("5") == SparsePoly.constant(1, 5)


@pytest.mark.parametrize("bad", ["x0^", "x0 + + 1", "3 x", "x0^2*", "1/0", "x0^1.5", ""])
def test_parse_errors_have_position(bad):
    with pytest.raises((PolyParseError, ZeroDivisionError)) as info:
        parse_poly(bad)
    if isinstance(info.value, PolyParseError):
        assert info.value.line >= 1 and info.value.column >= 1


def test_parse_error_line_column():
    with pytest.raises(PolyParseError) as info:
        parse_poly("x0 +\n  x1^^2")
    assert (info.value.line, info.value.column) == (2, 6)


@settings(max_examples=80, deadline=None)
@given(st.dictionaries(st.tuples(st.integers(0, 5), st.integers(0, 5)),
                       st.fractions(min_value=-100, max_value=100, max_denominator=50), max_size=6))
def test_text_round_trip_property(terms):
    f = SparsePoly(2, terms)
    assert parse_poly(f.to_text(), nvars=2) == f
