"""Circuits, circuit numbers and the nonnegativity test for circuit polynomials.

A circuit is a set of even exponents ``alpha(0..k)`` spanning a k-simplex
together with one exponent ``beta`` in the relative interior of that
simplex.  For a polynomial supported on a circuit with nonnegative vertex
coefficients, nonnegativity on R^n is decided by comparing ``f_beta``
against the circuit number

    Theta = prod_i (f_alpha(i) / lambda_i) ** lambda_i

where ``lambda`` are the barycentric coordinates of ``beta``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

import mpmath

from . import polyalg
from .polyalg import (
    Exponent,
    SparsePoly,
    barycentric_weights,
    graded_lex_key,
    to_fraction,
)

__all__ = [
    "Circuit",
    "CircuitPoly",
    "SoncCertificate",
    "CircuitError",
    "OddVertex",
    "DegenerateSimplex",
    "BetaNotInterior",
    "BetaIsVertex",
    "NegativeVertexCoeff",
    "SupportTooLarge",
    "make_circuit",
    "circuit_number",
    "circuit_poly_nonneg",
    "strict_circuit_member",
    "circuit_status",
    "enumerate_circuits",
    "evaluate_certificate",
]

EXACT_DENOMINATOR_LIMIT = 64
FLOAT_REL_TOL = 1e-12
DEFAULT_SUPPORT_CAP = 25


class CircuitError(ValueError):
    pass


class OddVertex(CircuitError):
    pass


class BetaNotInterior(CircuitError):
    pass


class BetaIsVertex(CircuitError):
    pass


class NegativeVertexCoeff(CircuitError):
    pass


class SupportTooLarge(CircuitError):
    pass


class DegenerateSimplex(CircuitError, polyalg.DegenerateSimplex):
    pass


@dataclass(frozen=True)
class Circuit:
    nvars: int
    vertices: tuple[Exponent, ...]
    beta: Exponent
    weights: tuple[Fraction, ...]

    @property
    def k(self) -> int:
        return len(self.vertices) - 1

    @property
    def denominator(self) -> int:
        return math.lcm(*(w.denominator for w in self.weights))

    @property
    def exponents(self) -> tuple[Exponent, ...]:
        return self.vertices + (self.beta,)

    def key(self):
        return (graded_lex_key(self.beta), tuple(graded_lex_key(v) for v in self.vertices))

    def to_dict(self) -> dict:
        return {
            "vertices": [list(v) for v in self.vertices],
            "beta": list(self.beta),
            "weights": [str(w) for w in self.weights],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        c = make_circuit(data["vertices"], data["beta"])
        if "weights" in data and [to_fraction(w) for w in data["weights"]] != list(c.weights):
            raise CircuitError(f"stored weights {data['weights']} disagree with recomputed {[str(w) for w in c.weights]}")
        return c


def make_circuit(vertices: Sequence[Sequence[int]], beta: Sequence[int]) -> Circuit:
    """Validate a circuit and attach its exact barycentric weights.

    Vertices are kept in the given order; the weights follow that order.
    """
    verts = tuple(Exponent(v) for v in vertices)
    b = Exponent(beta)
    if len(verts) < 2:
        raise CircuitError("a circuit needs at least two vertices")
    n = len(b)
    if any(len(v) != n for v in verts):
        raise CircuitError("exponent length mismatch")
    if len(verts) - 1 > n:
        raise DegenerateSimplex(f"{len(verts)} vertices cannot be affinely independent in dimension {n}")
    for v in verts:
        if not v.is_even():
            raise OddVertex(f"vertex {tuple(v)} is not even")
    if b in verts:
        raise BetaIsVertex(f"beta {tuple(b)} coincides with a vertex")
    try:
        lam = barycentric_weights(verts, b)
    except polyalg.DegenerateSimplex as exc:
        raise DegenerateSimplex(str(exc)) from None
    if lam is None:
        raise BetaNotInterior(f"beta {tuple(b)} is not in the relative interior of {[tuple(v) for v in verts]}")
    return Circuit(n, verts, b, tuple(lam))


@dataclass(frozen=True)
class CircuitPoly:
    """A polynomial supported on a circuit: vertex coefficients and f_beta."""

    circuit: Circuit
    vertex_coeffs: tuple[Fraction, ...]
    beta_coeff: Fraction

    def __post_init__(self):
        coeffs = tuple(to_fraction(c) for c in self.vertex_coeffs)
        if len(coeffs) != len(self.circuit.vertices):
            raise ValueError("one coefficient per vertex required")
        object.__setattr__(self, "vertex_coeffs", coeffs)
        object.__setattr__(self, "beta_coeff", to_fraction(self.beta_coeff))

    def to_poly(self) -> SparsePoly:
        terms = list(zip(self.circuit.vertices, self.vertex_coeffs))
        terms.append((self.circuit.beta, self.beta_coeff))
        return SparsePoly(self.circuit.nvars, terms)

    def scaled(self, t) -> "CircuitPoly":
        t = to_fraction(t)
        return CircuitPoly(self.circuit, tuple(t * c for c in self.vertex_coeffs), t * self.beta_coeff)

    def to_dict(self) -> dict:
        return {
            "circuit": self.circuit.to_dict(),
            "vertex_coeffs": [_num(c) for c in self.vertex_coeffs],
            "beta_coeff": _num(self.beta_coeff),
        }


def _num(c: Fraction):
    return c.numerator if c.denominator == 1 else float(c)


def circuit_number(p: CircuitPoly) -> float:
    """Circuit number Theta of ``p`` (0 if some vertex coefficient vanishes)."""
    if any(c < 0 for c in p.vertex_coeffs):
        raise NegativeVertexCoeff(f"vertex coefficients must be >= 0, got {[str(c) for c in p.vertex_coeffs]}")
    if any(c == 0 for c in p.vertex_coeffs):
        return 0.0
    with mpmath.workprec(113):
        s = mpmath.mpf(0)
        for c, lam in zip(p.vertex_coeffs, p.circuit.weights):
            lm = mpmath.mpf(lam.numerator) / lam.denominator
            s += lm * (mpmath.log(mpmath.mpf(c.numerator) / c.denominator) - mpmath.log(lm))
        return float(mpmath.exp(s))


def _theta_power(p: CircuitPoly, q: int) -> Fraction:
    """Exact Theta**q for q a multiple of every weight denominator."""
    out = Fraction(1)
    for c, lam in zip(p.vertex_coeffs, p.circuit.weights):
        e = lam * q
        assert e.denominator == 1
        out *= (c / lam) ** int(e)
    return out


def _compare_beta(p: CircuitPoly) -> int:
    """Sign of the slack in the circuit criterion: >0 interior, 0 boundary, <0 violated.

    Assumes all vertex coefficients are >= 0.
    """
    fb = p.beta_coeff
    even = p.circuit.beta.is_even()
    if even and fb >= 0:
        return 1
    mag = abs(fb)
    q = p.circuit.denominator
    if q <= EXACT_DENOMINATOR_LIMIT:
        lhs, rhs = mag ** q, _theta_power(p, q)
        return (rhs > lhs) - (rhs < lhs)
    theta = circuit_number(p)
    gap = theta - float(mag)
    tol = FLOAT_REL_TOL * (1 + theta)
    if abs(gap) <= tol:
        return 0
    return 1 if gap > 0 else -1


def circuit_poly_nonneg(p: CircuitPoly) -> bool:
    """Is the circuit polynomial nonnegative on R^n?"""
    if any(c < 0 for c in p.vertex_coeffs):
        return False
    return _compare_beta(p) >= 0


def strict_circuit_member(p: CircuitPoly) -> bool:
    """Nonnegative with every vertex coefficient strictly positive."""
    if any(c <= 0 for c in p.vertex_coeffs):
        return False
    return _compare_beta(p) >= 0


def circuit_status(p: CircuitPoly) -> str:
    """One of ``'interior'``, ``'boundary'``, ``'violated'``."""
    if any(c < 0 for c in p.vertex_coeffs):
        return "violated"
    s = _compare_beta(p)
    return "interior" if s > 0 else ("boundary" if s == 0 else "violated")


def enumerate_circuits(
    support: Iterable[Sequence[int]],
    max_degree: int,
    cap: int | None = DEFAULT_SUPPORT_CAP,
) -> list[Circuit]:
    """All circuits over the support-adjacent vertex pool.

    Vertices are drawn from the even support points, the origin and the
    axis points ``max_degree * e_i``; ``beta`` ranges over the support.
    Only exponents of degree <= ``max_degree`` are used.

    Raises
    ------
    SupportTooLarge
        If the support exceeds ``cap`` (pass ``cap=None`` to disable).
    """
    pts = sorted({Exponent(a) for a in support}, key=graded_lex_key)
    if not pts:
        return []
    if cap is not None and len(pts) > cap:
        raise SupportTooLarge(f"support has {len(pts)} points, cap is {cap}")
    n = len(pts[0])
    pool = {a for a in pts if a.is_even() and a.degree() <= max_degree}
    pool.add(Exponent([0] * n))
    if max_degree % 2 == 0:
        for i in range(n):
            pool.add(Exponent([max_degree if j == i else 0 for j in range(n)]))
    pool = sorted(pool, key=graded_lex_key)
    betas = [b for b in pts if b.degree() <= max_degree]

    found: dict[tuple, Circuit] = {}
    for size in range(2, n + 2):
        for verts in combinations(pool, size):
            try:
                lams = None
                for b in betas:
                    if b in verts:
                        continue
                    lams = barycentric_weights(verts, b)
                    if lams is None:
                        continue
                    c = Circuit(n, tuple(verts), b, tuple(lams))
                    found.setdefault(c.key(), c)
            except polyalg.DegenerateSimplex:
                continue
    return [found[k] for k in sorted(found)]


@dataclass
class SoncCertificate:
    """Decomposition ``f - bound = sum(circuit terms) + sum(mu * x^(2 alpha))``.

    ``square_terms`` holds pairs ``(alpha, mu)``; the monomial square is
    ``x^(2 alpha)``.
    """

    nvars: int
    circuit_terms: list[CircuitPoly] = field(default_factory=list)
    square_terms: list[tuple[Exponent, Fraction]] = field(default_factory=list)
    bound: float = 0.0

    def to_dict(self) -> dict:
        return {
            "nvars": self.nvars,
            "bound": self.bound,
            "circuit_terms": [t.to_dict() for t in self.circuit_terms],
            "square_terms": [{"alpha": list(a), "mu": _num(m)} for a, m in self.square_terms],
        }


def evaluate_certificate(cert: SoncCertificate) -> SparsePoly:
    """Sum of all terms of a certificate as one exact polynomial."""
    acc: dict[Exponent, Fraction] = {}
    for t in cert.circuit_terms:
        for e, c in t.to_poly():
            acc[e] = acc.get(e, Fraction(0)) + c
    for alpha, mu in cert.square_terms:
        e = Exponent(alpha).doubled()
        acc[e] = acc.get(e, Fraction(0)) + to_fraction(mu)
    return SparsePoly(cert.nvars, acc)
