"""Second-order cone formulations of SONC membership and SONC lower bounds.

The hypograph ``t <= prod x_i ** w_i`` of a rational-weight geometric mean
is written as a binary tree of rotated second-order cones: with common
denominator ``q`` the tree has ``2**L >= q`` leaves; ``p_i = w_i q`` of them
carry ``x_i``, ``q - sum(p_i)`` carry the constant 1 and the remaining
``2**L - q`` carry ``t`` itself, so that ``t**(2**L) <= prod(leaves)``
collapses to ``t**q <= prod x_i**p_i``.

For a circuit ``A`` the circuit number is the geometric mean of the
rescaled vertex coefficients ``c_alpha(i) / lambda_i``; a variable ``t_A``
under that tower with ``-t_A <= c_beta`` (and ``c_beta <= t_A`` for odd
``beta``) describes the cone of nonnegative polynomials supported on ``A``.
Summing one copy per circuit plus monomial squares and matching
coefficients gives the SONC cone restricted to the candidate circuits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .circuit import (
    Circuit,
    CircuitPoly,
    SoncCertificate,
    circuit_number,
    evaluate_certificate,
)
from .polyalg import Exponent, SparsePoly, graded_lex_key, to_fraction

__all__ = [
    "ConeBlock",
    "ConeProgram",
    "ProgramBuilder",
    "Fragment",
    "SoncProgram",
    "UncoverableTerm",
    "ResidualTooLarge",
    "EmptyWeights",
    "geomean_tower",
    "add_geomean",
    "build_membership",
    "build_lower_bound",
    "extract_certificate",
    "SoncCertificate",
]

CONE_KINDS = ("nonneg", "soc", "rsoc")
FORMAT_TAG = "sonc-coneprogram/1"


class UncoverableTerm(ValueError):
    """A term of f that no circuit or monomial square can produce."""

    def __init__(self, exponent: Sequence[int], reason: str):
        self.exponent = Exponent(exponent)
        super().__init__(f"term x^{tuple(self.exponent)} {reason}")


class ResidualTooLarge(ArithmeticError):
    pass


class EmptyWeights(ValueError):
    pass


@dataclass(frozen=True)
class ConeBlock:
    """``nonneg``: every entry >= 0.  ``soc`` (z, u...): ||u|| <= z.
    ``rsoc`` (u, v, z...): 2 u v >= ||z||^2 with u, v >= 0."""

    kind: str
    vars: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        object.__setattr__(self, "vars", tuple(int(v) for v in self.vars))
        need = {"nonneg": 1, "soc": 2, "rsoc": 3}[self.kind]
        if len(self.vars) < need:
            raise ValueError(f"{self.kind} block needs at least {need} variables")


@dataclass(frozen=True)
class ConeProgram:
    """maximize objective . x  s.t.  A x = b,  x restricted by cone blocks.

    The equality matrix is kept in triplet form.  Variables outside every
    cone block are free.
    """

    nvar: int
    objective: np.ndarray
    eq_rows: np.ndarray
    eq_cols: np.ndarray
    eq_vals: np.ndarray
    eq_rhs: np.ndarray
    cones: tuple[ConeBlock, ...]
    var_names: tuple[str, ...] = ()

    @property
    def n_eq(self) -> int:
        return len(self.eq_rhs)

    def eq_matrix(self) -> np.ndarray:
        A = np.zeros((self.n_eq, self.nvar))
        np.add.at(A, (self.eq_rows, self.eq_cols), self.eq_vals)
        return A

    def validate(self) -> None:
        seen: set[int] = set()
        for blk in self.cones:
            for v in blk.vars:
                if not 0 <= v < self.nvar:
                    raise ValueError(f"cone variable {v} out of range")
                if v in seen:
                    raise ValueError(f"variable {v} appears in two cone blocks")
                seen.add(v)
        if self.objective.shape != (self.nvar,):
            raise ValueError("objective length mismatch")
        if len(self.eq_rows) and (self.eq_rows.max() >= self.n_eq or self.eq_cols.max() >= self.nvar):
            raise ValueError("equality triplet out of range")

    def with_objective(self, objective) -> "ConeProgram":
        return ConeProgram(self.nvar, np.asarray(objective, dtype=float), self.eq_rows, self.eq_cols,
                           self.eq_vals, self.eq_rhs, self.cones, self.var_names)

    def to_dict(self) -> dict:
        obj_idx = np.flatnonzero(self.objective)
        return {
            "format": FORMAT_TAG,
            "sense": "maximize",
            "nvar": self.nvar,
            "objective": [[int(i), float(self.objective[i])] for i in obj_idx],
            "equalities": {
                "nrows": self.n_eq,
                "rows": [int(i) for i in self.eq_rows],
                "cols": [int(j) for j in self.eq_cols],
                "vals": [float(v) for v in self.eq_vals],
                "rhs": [float(v) for v in self.eq_rhs],
            },
            "cones": [{"kind": b.kind, "vars": list(b.vars)} for b in self.cones],
            "var_names": list(self.var_names),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConeProgram":
        if data.get("format") != FORMAT_TAG:
            raise ValueError(f"not a {FORMAT_TAG} document")
        nvar = int(data["nvar"])
        obj = np.zeros(nvar)
        for i, v in data["objective"]:
            obj[int(i)] = float(v)
        eq = data["equalities"]
        prog = cls(
            nvar=nvar,
            objective=obj,
            eq_rows=np.asarray(eq["rows"], dtype=int),
            eq_cols=np.asarray(eq["cols"], dtype=int),
            eq_vals=np.asarray(eq["vals"], dtype=float),
            eq_rhs=np.asarray(eq["rhs"], dtype=float),
            cones=tuple(ConeBlock(c["kind"], tuple(c["vars"])) for c in data["cones"]),
            var_names=tuple(data.get("var_names", ())),
        )
        prog.validate()
        return prog

    @classmethod
    def from_json(cls, text: str) -> "ConeProgram":
        return cls.from_dict(json.loads(text))


class ProgramBuilder:
    """Incremental construction of a :class:`ConeProgram`."""

    def __init__(self):
        self.names: list[str] = []
        self.rows: list[dict[int, float]] = []
        self.rhs: list[float] = []
        self.cones: list[ConeBlock] = []
        self.objective: dict[int, float] = {}
        self._one: int | None = None

    @property
    def nvar(self) -> int:
        return len(self.names)

    def add_var(self, name: str = "") -> int:
        self.names.append(name or f"v{len(self.names)}")
        return len(self.names) - 1

    def add_eq(self, coeffs: Mapping[int, float], rhs: float = 0.0) -> int:
        row = {}
        for j, c in coeffs.items():
            if c:
                row[j] = row.get(j, 0.0) + float(c)
        self.rows.append(row)
        self.rhs.append(float(rhs))
        return len(self.rows) - 1

    def add_cone(self, kind: str, idxs: Sequence[int]) -> ConeBlock:
        blk = ConeBlock(kind, tuple(idxs))
        self.cones.append(blk)
        return blk

    def nonneg(self, name: str = "") -> int:
        j = self.add_var(name)
        self.add_cone("nonneg", (j,))
        return j

    def one(self) -> int:
        """A variable pinned to the constant 1 (shared)."""
        if self._one is None:
            self._one = self.add_var("one")
            self.add_eq({self._one: 1.0}, 1.0)
        return self._one

    def build(self) -> ConeProgram:
        rows, cols, vals = [], [], []
        for i, row in enumerate(self.rows):
            for j, c in sorted(row.items()):
                rows.append(i)
                cols.append(j)
                vals.append(c)
        obj = np.zeros(self.nvar)
        for j, c in self.objective.items():
            obj[j] = c
        prog = ConeProgram(
            nvar=self.nvar,
            objective=obj,
            eq_rows=np.asarray(rows, dtype=int),
            eq_cols=np.asarray(cols, dtype=int),
            eq_vals=np.asarray(vals, dtype=float),
            eq_rhs=np.asarray(self.rhs, dtype=float),
            cones=tuple(self.cones),
            var_names=tuple(self.names),
        )
        prog.validate()
        return prog


# ---------------------------------------------------------------------------
# geometric mean tower

LinExpr = Mapping[int, float]


def add_geomean(builder: ProgramBuilder, inputs: Sequence[LinExpr], weights: Sequence, t: int) -> list[ConeBlock]:
    """Append ``t <= prod(inputs[i] ** weights[i])`` with inputs forced >= 0.

    ``inputs`` are linear expressions (variable -> coefficient) so that a
    rescaling such as ``c / lambda`` costs nothing extra.  Returns the
    rotated cone blocks that were added.
    """
    if not weights:
        raise EmptyWeights("geometric mean of zero inputs")
    if len(weights) != len(inputs):
        raise ValueError("one weight per input")
    w = [to_fraction(x) for x in weights]
    if any(x <= 0 for x in w) or sum(w) > 1:
        raise ValueError("weights must be positive with sum <= 1")
    q = math.lcm(*(x.denominator for x in w))
    counts = [int(x * q) for x in w]
    depth = max(1, math.ceil(math.log2(q))) if q > 1 else 1
    n_leaves = 1 << depth

    leaves: list[LinExpr] = []
    for expr, p in zip(inputs, counts):
        leaves.extend([expr] * p)
    if q > sum(counts):
        leaves.extend([{builder.one(): 1.0}] * (q - sum(counts)))
    leaves.extend([{t: 1.0}] * (n_leaves - q))
    assert len(leaves) == n_leaves

    blocks = []
    level = leaves
    while len(level) > 1:
        nxt = []
        for a, b in zip(level[0::2], level[1::2]):
            # 2 u v >= z^2 with u = a, v = b / 2 gives z <= sqrt(a b)
            u = builder.add_var("gm_u")
            v = builder.add_var("gm_v")
            z = builder.add_var("gm_z")
            builder.add_eq({u: 1.0, **{j: -c for j, c in a.items()}}, 0.0)
            builder.add_eq({v: 2.0, **{j: -c for j, c in b.items()}}, 0.0)
            blocks.append(builder.add_cone("rsoc", (u, v, z)))
            nxt.append({z: 1.0})
        level = nxt
    # t <= root
    root = level[0]
    s = builder.nonneg("gm_slack")
    builder.add_eq({s: 1.0, t: 1.0, **{j: -c for j, c in root.items()}}, 0.0)
    return blocks


@dataclass
class Fragment:
    """Stand-alone geometric-mean tower: ``output <= prod(inputs ** weights)``."""

    builder: ProgramBuilder
    inputs: list[int]
    output: int
    blocks: list[ConeBlock]

    def program(self, fix: Mapping[int, float] | None = None, objective: Mapping[int, float] | None = None) -> ConeProgram:
        b = ProgramBuilder()
        b.names = list(self.builder.names)
        b.rows = [dict(r) for r in self.builder.rows]
        b.rhs = list(self.builder.rhs)
        b.cones = list(self.builder.cones)
        b._one = self.builder._one
        for j, val in (fix or {}).items():
            b.add_eq({j: 1.0}, val)
        b.objective = dict(objective or {})
        return b.build()


def geomean_tower(weights: Sequence) -> Fragment:
    """Second-order cone fragment for the hypograph of a weighted geometric mean."""
    if len(weights) == 0:
        raise EmptyWeights("geometric mean of zero inputs")
    b = ProgramBuilder()
    xs = [b.add_var(f"x{i}") for i in range(len(weights))]
    t = b.add_var("t")
    blocks = add_geomean(b, [{x: 1.0} for x in xs], weights, t)
    return Fragment(b, xs, t, blocks)


# ---------------------------------------------------------------------------
# SONC programs

@dataclass
class SoncProgram:
    """A compiled SONC program plus the map back to certificate terms."""

    program: ConeProgram
    poly: SparsePoly
    circuits: list[Circuit]
    circuit_vars: list[tuple[list[int], int, int]]  # (vertex coeff vars, beta var, t var)
    square_vars: dict[Exponent, int]
    bound_var: int | None
    max_degree: int
    report: list[str] = field(default_factory=list)


def _coverage(f: SparsePoly, circuits: Sequence[Circuit], skip_constant: bool):
    betas = {c.beta for c in circuits}
    for alpha, coeff in f.terms.items():
        if skip_constant and alpha.degree() == 0:
            continue
        if alpha in betas:
            continue
        if not alpha.is_even():
            raise UncoverableTerm(alpha, "has an odd exponent and is the inner point of no candidate circuit")
        if coeff < 0:
            raise UncoverableTerm(alpha, "has a negative coefficient and is the inner point of no candidate circuit")


def _compile(f: SparsePoly, circuits: Sequence[Circuit], max_degree: int | None, with_bound: bool) -> SoncProgram:
    if max_degree is None:
        max_degree = max(f.degree, 0)
        max_degree += max_degree % 2
    if f.degree > max_degree:
        raise ValueError(f"polynomial degree {f.degree} exceeds {max_degree}")
    for c in circuits:
        if c.nvars != f.nvars:
            raise ValueError("circuit and polynomial variable counts differ")
    _coverage(f, circuits, skip_constant=with_bound)

    zero = Exponent([0] * f.nvars)
    exps = set(f.support)
    for c in circuits:
        exps.update(c.exponents)
    if with_bound:
        exps.add(zero)
    exps = sorted(exps, key=graded_lex_key)

    b = ProgramBuilder()
    coupling: dict[Exponent, dict[int, float]] = {e: {} for e in exps}
    circuit_vars = []
    for ci, circ in enumerate(circuits):
        vcoef = [b.add_var(f"c{ci}_{_tag(v)}") for v in circ.vertices]
        cb = b.add_var(f"c{ci}_{_tag(circ.beta)}")
        t = b.add_var(f"theta{ci}")
        add_geomean(b, [{v: float(1 / lam)} for v, lam in zip(vcoef, circ.weights)], circ.weights, t)
        lo = b.nonneg(f"lo{ci}")
        b.add_eq({cb: 1.0, t: 1.0, lo: -1.0}, 0.0)  # c_beta + t >= 0
        if not circ.beta.is_even():
            hi = b.nonneg(f"hi{ci}")
            b.add_eq({t: 1.0, cb: -1.0, hi: -1.0}, 0.0)  # t - c_beta >= 0
        for v, e in zip(vcoef, circ.vertices):
            coupling[e][v] = 1.0
        coupling[circ.beta][cb] = 1.0
        circuit_vars.append((vcoef, cb, t))

    square_vars = {}
    for e in exps:
        if e.is_even() and e.degree() <= max_degree:
            mu = b.nonneg(f"mu_{_tag(e)}")
            square_vars[e] = mu
            coupling[e][mu] = 1.0

    bound_var = None
    if with_bound:
        bound_var = b.add_var("bound")
        coupling[zero][bound_var] = 1.0
        b.objective[bound_var] = 1.0

    report = []
    for e in exps:
        row = coupling[e]
        if not row:
            if f.coeff(e) != 0:
                raise UncoverableTerm(e, "cannot be produced by any variable")
            report.append(f"no variables for exponent {tuple(e)}; row dropped")
            continue
        b.add_eq(row, float(f.coeff(e)))

    return SoncProgram(b.build(), f, list(circuits), circuit_vars, square_vars, bound_var, max_degree, report)


def _tag(e: Sequence[int]) -> str:
    return "_".join(str(v) for v in e)


def build_membership(f: SparsePoly, circuits: Sequence[Circuit], max_degree: int | None = None) -> SoncProgram:
    """Feasibility program for ``f`` in the SONC cone over ``circuits``.

    Raises
    ------
    UncoverableTerm
        If some odd or negative term of ``f`` is not the inner point of any
        candidate circuit.
    """
    return _compile(f, circuits, max_degree, with_bound=False)


def build_lower_bound(f: SparsePoly, circuits: Sequence[Circuit], max_degree: int | None = None) -> SoncProgram:
    """Program maximising ``lambda`` subject to ``f - lambda`` SONC over ``circuits``."""
    return _compile(f, circuits, max_degree, with_bound=True)


# ---------------------------------------------------------------------------
# certificates

CLAMP_TOL = 1e-9
SHRINK = 1e-12
DROP_TOL = 1e-8


def _repair(term: CircuitPoly) -> CircuitPoly:
    """Push f_beta inside the exact circuit criterion after float rounding."""
    from .circuit import circuit_poly_nonneg

    if circuit_poly_nonneg(term):
        return term
    theta = circuit_number(term)
    lim = Fraction(theta) * (1 - Fraction(SHRINK))
    fb = term.beta_coeff
    fb = max(fb, -lim) if term.circuit.beta.is_even() else min(max(fb, -lim), lim)
    out = CircuitPoly(term.circuit, term.vertex_coeffs, fb)
    if not circuit_poly_nonneg(out):  # only reachable when theta underflows
        out = CircuitPoly(term.circuit, term.vertex_coeffs, 0 if not term.circuit.beta.is_even() else max(fb, 0))
    return out


def extract_certificate(sp: SoncProgram, x: Sequence[float], residual_tol: float = 1e-6) -> SoncCertificate:
    """Read a SONC certificate off a primal solution.

    Tiny negative multipliers (>= -1e-9) are clamped to zero, ``f_beta``
    is nudged by at most a relative 1e-12 so that every circuit term passes
    the exact criterion, and terms whose coefficients all stay below
    1e-8 (relative to 1 + max|f_alpha|) are dropped.  The certificate is then re-expanded and compared
    with ``f - bound`` coefficient-wise.

    Raises
    ------
    ResidualTooLarge
        If the reconstruction misses ``f - bound`` by more than
        ``residual_tol * (1 + max|f_alpha|)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (sp.program.nvar,):
        raise ValueError("solution length mismatch")

    def clamp(v: float) -> Fraction:
        if v < 0:
            if v < -CLAMP_TOL:
                raise ResidualTooLarge(f"cone-constrained value {v:.3e} below clamp tolerance")
            return Fraction(0)
        return Fraction(float(v))

    bound = float(x[sp.bound_var]) if sp.bound_var is not None else 0.0
    negligible = DROP_TOL * (1 + float(sp.poly.max_abs_coeff()))
    terms = []
    for circ, (vcoef, cb, _t) in zip(sp.circuits, sp.circuit_vars):
        coeffs = tuple(clamp(x[j]) for j in vcoef)
        term = _repair(CircuitPoly(circ, coeffs, Fraction(float(x[cb]))))
        if max(abs(c) for c in term.vertex_coeffs + (term.beta_coeff,)) > negligible:
            terms.append(term)
    squares = []
    for e, j in sp.square_vars.items():
        mu = clamp(x[j])
        if mu > negligible:
            squares.append((e.halved(), mu))
    cert = SoncCertificate(sp.poly.nvars, terms, squares, bound)

    target = sp.poly - Fraction(bound)
    gap, where = evaluate_certificate(cert).coefficient_gap(target)
    limit = residual_tol * (1 + float(sp.poly.max_abs_coeff()))
    if float(gap) > limit:
        raise ResidualTooLarge(f"certificate misses f - bound by {float(gap):.3e} at {tuple(where)} (limit {limit:.3e})")
    return cert
