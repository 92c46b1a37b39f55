"""Sparse multivariate polynomials over the rationals.

Polynomials are stored as a map from exponent tuples to exact
:class:`fractions.Fraction` coefficients.  Everything that needs to be sharp
(barycentric weights, simplex tests, circuit criteria) works on these exact
values; floating point only enters when a polynomial is evaluated.

The text format understood by :func:`parse_poly` is::

    x0^4*x1^2 + x0^2*x1^4 - 3*x0^2*x1^2 + 1

Coefficients are integers, ``p/q`` fractions or plain decimals.
"""
from __future__ import annotations

import math
import re
import sys
from fractions import Fraction
from itertools import combinations_with_replacement
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Exponent",
    "SparsePoly",
    "PolyParseError",
    "DegenerateSimplex",
    "RationalMatrix",
    "parse_poly",
    "evaluate",
    "monomial_vector",
    "space_dim",
    "nullspace",
    "barycentric_weights",
    "graded_lex_key",
    "to_fraction",
]


def to_fraction(value) -> Fraction:
    """Exact conversion; floats keep their binary value, strings are parsed."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"non-finite coefficient {value!r}")
        return Fraction(float(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value)


class Exponent(tuple):
    """Exponent vector ``alpha`` of a monomial ``x^alpha``."""

    __slots__ = ()

    def __new__(cls, entries: Iterable[int] = ()):
        vals = tuple(int(e) for e in entries)
        if any(e < 0 for e in vals):
            raise ValueError(f"negative exponent entry in {vals}")
        return super().__new__(cls, vals)

    def degree(self) -> int:
        return sum(self)

    def is_even(self) -> bool:
        return all(e % 2 == 0 for e in self)

    def __add__(self, other):
        return Exponent(a + b for a, b in zip(self, other, strict=True))

    def halved(self) -> "Exponent":
        if not self.is_even():
            raise ValueError(f"{tuple(self)} is not even")
        return Exponent(e // 2 for e in self)

    def doubled(self) -> "Exponent":
        return Exponent(2 * e for e in self)

    def __repr__(self):
        return f"Exponent{tuple(self)}"


def graded_lex_key(alpha: Sequence[int]):
    """Sort key for graded lexicographic order (x0 > x1 > ... within a degree)."""
    return (sum(alpha), tuple(-e for e in alpha))


class SparsePoly:
    """Immutable sparse polynomial with exact rational coefficients.

    Parameters
    ----------
    nvars : int
        Number of variables ``x0 .. x{nvars-1}``.
    terms : mapping, optional
        Exponent tuple -> coefficient.  Coefficients are converted to
        :class:`~fractions.Fraction`; zero coefficients are dropped.
    """

    __slots__ = ("_nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping | Iterable | None = None):
        if int(nvars) < 1:
            raise ValueError("nvars must be positive")
        self._nvars = int(nvars)
        acc: dict[Exponent, Fraction] = {}
        items = terms.items() if isinstance(terms, Mapping) else (terms or ())
        for alpha, coeff in items:
            e = Exponent(alpha)
            if len(e) != self._nvars:
                raise ValueError(f"exponent {tuple(e)} has length {len(e)}, expected {self._nvars}")
            acc[e] = acc.get(e, Fraction(0)) + to_fraction(coeff)
        self._terms = {e: c for e, c in sorted(acc.items(), key=lambda kv: graded_lex_key(kv[0])) if c != 0}
        self._hash = None

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> "SparsePoly":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value) -> "SparsePoly":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def monomial(cls, alpha: Sequence[int], coeff=1) -> "SparsePoly":
        return cls(len(alpha), {tuple(alpha): coeff})

    @classmethod
    def from_text(cls, text: str, nvars: int | None = None) -> "SparsePoly":
        return parse_poly(text, nvars)

    # basic accessors ------------------------------------------------------
    @property
    def nvars(self) -> int:
        return self._nvars

    @property
    def terms(self) -> Mapping[Exponent, Fraction]:
        return MappingProxyType(self._terms)

    @property
    def support(self) -> list[Exponent]:
        return list(self._terms)

    @property
    def degree(self) -> int:
        if not self._terms:
            return -1
        return max(e.degree() for e in self._terms)

    def coeff(self, alpha: Sequence[int]) -> Fraction:
        return self._terms.get(Exponent(alpha), Fraction(0))

    def is_zero(self) -> bool:
        return not self._terms

    def max_abs_coeff(self) -> Fraction:
        return max((abs(c) for c in self._terms.values()), default=Fraction(0))

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "SparsePoly"):
        if other.nvars != self.nvars:
            raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")

    def _lift(self, other) -> "SparsePoly":
        if isinstance(other, SparsePoly):
            self._check(other)
            return other
        return SparsePoly.constant(self.nvars, other)

    def __add__(self, other):
        other = self._lift(other)
        acc = dict(self._terms)
        for e, c in other._terms.items():
            acc[e] = acc.get(e, Fraction(0)) + c
        return SparsePoly(self.nvars, acc)

    __radd__ = __add__

    def __neg__(self):
        return SparsePoly(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, SparsePoly):
            s = to_fraction(other)
            return SparsePoly(self.nvars, {e: s * c for e, c in self._terms.items()})
        self._check(other)
        acc: dict[Exponent, Fraction] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = e1 + e2
                acc[e] = acc.get(e, Fraction(0)) + c1 * c2
        return SparsePoly(self.nvars, acc)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = SparsePoly.constant(self.nvars, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, SparsePoly):
            return self.nvars == other.nvars and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self == SparsePoly.constant(self.nvars, other)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._nvars, tuple(self._terms.items())))
        return self._hash

    # evaluation -----------------------------------------------------------
    def __call__(self, x) -> float:
        return evaluate(self, x)

    def evaluator(self):
        """Vectorised float64 evaluator ``X (m, nvars) -> (m,)``.

        Intended for sampling and search loops; use :func:`evaluate` when
        the value itself matters.
        """
        if not self._terms:
            return lambda X: np.zeros(np.atleast_2d(X).shape[0])
        exps = np.array(list(self._terms), dtype=float)
        coeffs = np.array([float(c) for c in self._terms.values()])

        def f(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            return np.prod(X[:, None, :] ** exps[None, :, :], axis=2) @ coeffs

        return f

    def coefficient_gap(self, other: "SparsePoly") -> tuple[Fraction, Exponent | None]:
        """Largest absolute coefficient difference and where it occurs."""
        diff = self - other
        if diff.is_zero():
            return Fraction(0), None
        best, where = Fraction(-1), None
        for e, c in diff._terms.items():  # graded-lex order, first maximum wins
            if abs(c) > best:
                best, where = abs(c), e
        return best, where

    # text -----------------------------------------------------------------
    def to_text(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for e in sorted(self._terms, key=lambda a: (-sum(a), tuple(-v for v in a))):
            c = self._terms[e]
            mono = "*".join(
                f"x{i}" if p == 1 else f"x{i}^{p}" for i, p in enumerate(e) if p
            )
            mag = abs(c)
            if mono and mag == 1:
                body = mono
            elif mono:
                body = f"{_fmt_coeff(mag)}*{mono}"
            else:
                body = _fmt_coeff(mag)
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"SparsePoly({self.nvars}, {self.to_text()!r})"


def _fmt_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def evaluate(f: SparsePoly, x: Sequence[float]) -> float:
    """Value of ``f`` at ``x``.

    The sum is accumulated exactly (floats are exact rationals) and rounded
    once at the end, so cancellation between large terms does not leak into
    the result.
    """
    if len(x) != f.nvars:
        raise ValueError(f"point has length {len(x)}, expected {f.nvars}")
    xs = [to_fraction(v) for v in x]
    total = Fraction(0)
    for e, c in f.terms.items():
        term = c
        for xi, p in zip(xs, e):
            if p:
                term *= xi ** p
        total += term
    return float(total)


# ---------------------------------------------------------------------------
# parsing

class PolyParseError(ValueError):
    """Malformed polynomial text; carries 1-based line and column."""

    def __init__(self, message: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        self.line, self.column = line, col
        super().__init__(f"{message} at line {line}, column {col}")


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d*)?(?:/\d+)?|\.\d+)
  | (?P<var>x(?P<idx>\d+))
  | (?P<op>[-+*^])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PolyParseError(f"unexpected character {text[pos]!r}", text, pos)
        if m.lastgroup != "ws":
            kind = m.lastgroup if m.lastgroup != "idx" else "var"
            out.append((kind, m.group(0), pos, m.group("idx")))
        pos = m.end()
    out.append(("end", "", len(text), None))
    return out


def parse_poly(text: str, nvars: int | None = None) -> SparsePoly:
    """Parse polynomial text into a :class:`SparsePoly`.

    ``nvars`` defaults to one more than the largest variable index that
    appears (and to 1 for constants).
    """
    toks = _tokenize(text)
    i = 0
    terms: list[tuple[Fraction, dict[int, int]]] = []

    def peek():
        return toks[i]

    def expect_int():
        nonlocal i
        kind, val, pos, _ = toks[i]
        if kind != "num" or not val.isdigit():
            raise PolyParseError("expected integer exponent", text, pos)
        i += 1
        return int(val)

    if peek()[0] == "end":
        raise PolyParseError("empty polynomial", text, 0)

    first = True
    while True:
        kind, val, pos, _ = peek()
        sign = 1
        if kind == "op" and val in "+-":
            sign = -1 if val == "-" else 1
            i += 1
        elif not first:
            raise PolyParseError(f"expected '+' or '-' before {val!r}" if val else "unexpected end", text, pos)
        first = False

        coeff = Fraction(sign)
        powers: dict[int, int] = {}
        factors = 0
        while True:
            kind, val, pos, idx = peek()
            if kind == "num":
                if factors and not (toks[i - 1][0] == "op" and toks[i - 1][1] == "*"):
                    raise PolyParseError("coefficient must lead the term", text, pos)
                try:
                    coeff *= Fraction(val)
                except (ValueError, ZeroDivisionError):
                    raise PolyParseError(f"bad coefficient {val!r}", text, pos) from None
                i += 1
            elif kind == "var":
                i += 1
                p = 1
                if peek()[0] == "op" and peek()[1] == "^":
                    i += 1
                    p = expect_int()
                v = int(idx)
                powers[v] = powers.get(v, 0) + p
            else:
                raise PolyParseError("expected coefficient or variable" if val else "unexpected end", text, pos)
            factors += 1
            kind, val, pos, _ = peek()
            if kind == "op" and val == "*":
                i += 1
                continue
            if kind == "var":  # implicit product such as 3x0
                continue
            break
        terms.append((coeff, powers))
        if peek()[0] == "end":
            break
        if not (peek()[0] == "op" and peek()[1] in "+-"):
            raise PolyParseError(f"unexpected {peek()[1]!r}", text, peek()[2])

    top = max((v for _, pw in terms for v in pw), default=-1)
    if nvars is None:
        nvars = max(top + 1, 1)
    elif top >= nvars:
        raise PolyParseError(f"variable x{top} out of range for {nvars} variables", text, 0)
    acc: dict[tuple, Fraction] = {}
    for c, pw in terms:
        e = tuple(pw.get(v, 0) for v in range(nvars))
        acc[e] = acc.get(e, Fraction(0)) + c
    return SparsePoly(nvars, acc)


# ---------------------------------------------------------------------------
# exponent combinatorics

def space_dim(n: int, d: int) -> int:
    """Dimension ``binom(n+d, n)`` of the polynomials of degree <= d in n variables."""
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    lo, hi = min(n, d), max(n, d)
    k = 1
    for i in range(1, lo + 1):
        k = k * (hi + i) // i
        if k > sys.maxsize:
            raise OverflowError(f"binom({n + d}, {n}) exceeds the index range")
    return k


def monomial_vector(n: int, d: int) -> list[Exponent]:
    """All exponents of degree <= d in graded lexicographic order."""
    size = space_dim(n, d)
    out = []
    for deg in range(d + 1):
        block = []
        for combo in combinations_with_replacement(range(n), deg):
            e = [0] * n
            for v in combo:
                e[v] += 1
            block.append(Exponent(e))
        block.sort(key=graded_lex_key)
        out.extend(block)
    assert len(out) == size
    return out


# ---------------------------------------------------------------------------
# exact linear algebra

class DegenerateSimplex(ValueError):
    """Vertices are affinely dependent."""


class RationalMatrix:
    """Dense matrix of Fractions with exact row reduction."""

    __slots__ = ("rows", "cols", "_data")

    def __init__(self, data: Sequence[Sequence]):
        data = [[to_fraction(v) for v in row] for row in data]
        if not data or not data[0]:
            raise ValueError("matrix needs at least one row and one column")
        if any(len(r) != len(data[0]) for r in data):
            raise ValueError("ragged rows")
        self.rows, self.cols = len(data), len(data[0])
        self._data = tuple(tuple(r) for r in data)

    def __getitem__(self, ij):
        i, j = ij
        return self._data[i][j]

    def tolist(self) -> list[list[Fraction]]:
        return [list(r) for r in self._data]

    def matvec(self, v: Sequence) -> list[Fraction]:
        v = [to_fraction(x) for x in v]
        return [sum((a * b for a, b in zip(r, v)), Fraction(0)) for r in self._data]

    def rref(self) -> tuple[list[list[Fraction]], list[int]]:
        """Reduced row echelon form and pivot columns (first nonzero pivot, left to right)."""
        m = self.tolist()
        pivots = []
        r = 0
        for c in range(self.cols):
            p = next((i for i in range(r, self.rows) if m[i][c] != 0), None)
            if p is None:
                continue
            m[r], m[p] = m[p], m[r]
            inv = 1 / m[r][c]
            m[r] = [v * inv for v in m[r]]
            for i in range(self.rows):
                if i != r and m[i][c] != 0:
                    f = m[i][c]
                    m[i] = [a - f * b for a, b in zip(m[i], m[r])]
            pivots.append(c)
            r += 1
            if r == self.rows:
                break
        return m, pivots

    def rank(self) -> int:
        return len(self.rref()[1])


def nullspace(M: RationalMatrix | Sequence[Sequence]) -> list[list[Fraction]]:
    """Exact basis of ``{v : M v = 0}``, one vector per free column."""
    if not isinstance(M, RationalMatrix):
        M = RationalMatrix(M)
    red, pivots = M.rref()
    free = [c for c in range(M.cols) if c not in set(pivots)]
    basis = []
    for f in free:
        v = [Fraction(0)] * M.cols
        v[f] = Fraction(1)
        for row, pc in enumerate(pivots):
            v[pc] = -red[row][f]
        basis.append(v)
    return basis


def barycentric_weights(vertices: Sequence[Sequence[int]], beta: Sequence[int]) -> list[Fraction] | None:
    """Exact barycentric coordinates of ``beta`` w.r.t. a simplex.

    Returns ``None`` when ``beta`` is not in the relative interior (outside
    the affine hull, or some weight <= 0).

    Raises
    ------
    DegenerateSimplex
        If the vertices are affinely dependent.
    """
    verts = [tuple(int(v) for v in a) for a in vertices]
    if not verts:
        raise ValueError("no vertices")
    n = len(verts[0])
    if any(len(a) != n for a in verts) or len(beta) != n:
        raise ValueError("dimension mismatch")
    k = len(verts) - 1
    if k > 0:
        diffs = RationalMatrix([[a[j] - verts[0][j] for j in range(n)] for a in verts[1:]])
        if diffs.rank() != k:
            raise DegenerateSimplex(f"vertices {verts} are affinely dependent")
    # columns = vertices, rows = coordinates and the affine row
    aug = [[a[j] for a in verts] + [int(beta[j])] for j in range(n)]
    aug.append([1] * (k + 1) + [1])
    red, pivots = RationalMatrix(aug).rref()
    if k + 1 in pivots:
        return None
    lam = [Fraction(0)] * (k + 1)
    for row, pc in enumerate(pivots):
        lam[pc] = red[row][k + 1]
    if any(w <= 0 for w in lam):
        return None
    return lam
