"""Verification of sum-of-squares style certificates.

* Gram certificates ``f = v^T G v`` over the graded-lex monomial vector
  ``v = v_{n,d}(x)`` with ``G`` positive semidefinite.
* Truncated quadratic module certificates ``f = s_0 + sum_i g_i s_i`` with
  every ``s_i`` given by a Gram certificate.
* The dictionary between symmetric k x k matrices and polynomials of degree
  at most 2 in k-1 variables, ``q_A(x_1, .., x_{k-1}, 1)``.
* Copositivity certificates ``M = P + N`` with ``P`` PSD and ``N >= 0``.

Nothing here solves for a certificate; everything only checks one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .polyalg import Exponent, SparsePoly, monomial_vector, parse_poly, space_dim, to_fraction

__all__ = [
    "GramCertificate",
    "ModuleCertificate",
    "PsdResult",
    "ModuleResult",
    "CopositiveResult",
    "NotPsd",
    "NotSymmetric",
    "DegreeMismatch",
    "gram_reconstruct",
    "psd_check",
    "sos_extract",
    "module_verify",
    "quad_to_poly",
    "poly_to_quad",
    "quad_to_gram",
    "copositive_cert_verify",
]

DEFAULT_PSD_TOL = 1e-9


class NotPsd(ValueError):
    def __init__(self, message: str, witness=None, value: float = float("nan")):
        super().__init__(message)
        self.witness = witness
        self.value = value


class NotSymmetric(ValueError):
    pass


class DegreeMismatch(ValueError):
    pass


def _symmetric(G, what: str = "matrix") -> np.ndarray:
    G = np.array(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise NotSymmetric(f"{what} must be square, got shape {G.shape}")
    if G.size and np.max(np.abs(G - G.T)) > 1e-12 * max(1.0, float(np.max(np.abs(G)))):
        raise NotSymmetric(f"{what} is not symmetric")
    return np.tril(G) + np.tril(G, -1).T


# ---------------------------------------------------------------------------
# Gram certificates

@dataclass(frozen=True)
class GramCertificate:
    """Symmetric ``G`` over ``monomial_vector(n, d)``; represents ``v^T G v``.

    The lower triangle of the input is authoritative; inputs that are not
    symmetric (beyond 1e-12 relative) are rejected.
    """

    n: int
    d: int
    G: np.ndarray

    def __post_init__(self):
        if self.n < 1 or self.d < 0:
            raise ValueError("need n >= 1 and d >= 0")
        G = _symmetric(self.G, "Gram matrix")
        k = space_dim(self.n, self.d)
        if G.shape != (k, k):
            raise DegreeMismatch(f"Gram matrix for n={self.n}, d={self.d} must be {k}x{k}, got {G.shape[0]}x{G.shape[1]}")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def basis(self) -> list[Exponent]:
        return monomial_vector(self.n, self.d)

    @property
    def size(self) -> int:
        return self.G.shape[0]

    @classmethod
    def zero(cls, n: int, d: int) -> "GramCertificate":
        k = space_dim(n, d)
        return cls(n, d, np.zeros((k, k)))

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "G": self.G.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "GramCertificate":
        return cls(int(data["n"]), int(data["d"]), np.array(data["G"], dtype=float))

    @classmethod
    def from_json(cls, text: str) -> "GramCertificate":
        return cls.from_dict(json.loads(text))


def gram_reconstruct(cert: GramCertificate) -> SparsePoly:
    """Expand ``v^T G v`` exactly (each float entry taken at face value)."""
    basis = cert.basis
    acc: dict[Exponent, Fraction] = {}
    G = cert.G
    for i, a in enumerate(basis):
        for j in range(i, len(basis)):
            g = G[i, j]
            if g == 0.0:
                continue
            e = a + basis[j]
            c = Fraction(float(g)) * (1 if i == j else 2)
            acc[e] = acc.get(e, Fraction(0)) + c
    return SparsePoly(cert.n, acc)


# ---------------------------------------------------------------------------
# PSD test

@dataclass
class PsdResult:
    """Outcome of :func:`psd_check`.

    When ``psd`` holds, ``G[perm][:, perm] ~= L @ diag(D) @ L.T`` with ``L``
    unit lower triangular and ``D >= 0`` (pivots within tolerance clamped).
    Otherwise ``witness`` satisfies ``witness @ G @ witness == value < 0``.
    """

    psd: bool
    L: np.ndarray
    D: np.ndarray
    perm: np.ndarray
    rank: int
    tol: float
    witness: np.ndarray | None = None
    value: float = 0.0

    def __bool__(self):
        return self.psd

    def factor(self) -> np.ndarray:
        """``F`` with ``G ~= F.T @ F``; one row per positive pivot."""
        k = self.L.shape[0]
        F = np.zeros((self.rank, k))
        keep = np.flatnonzero(self.D > 0)
        F[:, self.perm] = (np.sqrt(self.D[keep])[:, None] * self.L[:, keep].T)
        return F


def _witness(L, D, perm, r, w_schur):
    """Lift a Schur-complement direction to the original coordinates."""
    k = L.shape[0]
    y = np.zeros(k)
    y[r:] = w_schur
    if r:
        L11 = L[:r, :r]
        L21 = L[r:, :r]
        y[:r] = -np.linalg.solve(L11.T, L21.T @ w_schur)
    v = np.zeros(k)
    v[perm] = y
    return v


def psd_check(G, tol: float = DEFAULT_PSD_TOL) -> PsdResult:
    """Decide ``G >= 0`` by symmetric diagonal-pivoted LDL^T.

    Pivots are chosen as the largest remaining diagonal entry, ties going to
    the lowest index.  The absolute tolerance is ``tol * trace(G)/k`` (or
    ``tol * max|G_ij|`` when the trace vanishes).  A pivot below ``-tol_abs``
    or a 2x2 principal minor of the remaining block that is negative beyond
    ``2 tol_abs`` yields a witness vector; otherwise the remaining block is
    treated as zero.
    """
    G = _symmetric(G)
    k = G.shape[0]
    if k == 0:
        return PsdResult(True, np.zeros((0, 0)), np.zeros(0), np.zeros(0, dtype=int), 0, 0.0)
    scale = abs(float(np.trace(G))) / k
    if scale == 0.0:
        scale = float(np.max(np.abs(G)))
    tol_abs = tol * scale

    A = G.copy()
    perm = np.arange(k)
    L = np.eye(k)
    D = np.zeros(k)
    r = 0
    while r < k:
        diag = np.diag(A)[r:]
        p = r + int(np.argmax(diag))
        piv = A[p, p]
        if piv < -tol_abs:
            w = np.zeros(k - r)
            w[p - r] = 1.0
            return _not_psd(G, L, D, perm, r, w, tol)
        if piv <= tol_abs:
            S = A[r:, r:]
            excess = 2 * np.abs(S) - diag[:, None] - diag[None, :]
            np.fill_diagonal(excess, -np.inf)
            i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
            if excess.size > 1 and excess[i, j] > 2 * tol_abs:
                i, j = min(i, j), max(i, j)
                w = np.zeros(k - r)
                w[i] = 1.0
                w[j] = -np.sign(S[i, j])
                return _not_psd(G, L, D, perm, r, w, tol)
            break
        if p != r:
            A[[r, p]] = A[[p, r]]
            A[:, [r, p]] = A[:, [p, r]]
            L[[r, p], :r] = L[[p, r], :r]
            perm[[r, p]] = perm[[p, r]]
        D[r] = piv
        col = A[r + 1:, r] / piv
        L[r + 1:, r] = col
        A[r + 1:, r + 1:] -= piv * np.outer(col, col)
        A[r + 1:, r] = 0.0
        A[r, r + 1:] = 0.0
        r += 1
    return PsdResult(True, L, D, perm, r, tol)


def _not_psd(G, L, D, perm, r, w, tol) -> PsdResult:
    v = _witness(L, D, perm, r, w)
    val = float(v @ G @ v)
    if not val < 0:
        # rounding ate the certificate; fall back to the lowest eigenvector
        evals, evecs = np.linalg.eigh(G)
        v = evecs[:, 0]
        val = float(v @ G @ v)
    if not val < 0:
        return PsdResult(True, L, D, perm, r, tol)
    return PsdResult(False, L, D, perm, r, tol, witness=v, value=val)


def sos_extract(cert: GramCertificate, tol: float = DEFAULT_PSD_TOL) -> list[SparsePoly]:
    """Squares ``f_i`` with ``sum f_i^2 = v^T G v`` from the LDL^T factor.

    Raises
    ------
    NotPsd
        If ``G`` fails :func:`psd_check`; carries the witness.
    """
    res = psd_check(cert.G, tol)
    if not res.psd:
        raise NotPsd(f"Gram matrix is not PSD (v^T G v = {res.value:.3e})", res.witness, res.value)
    basis = cert.basis
    out = []
    for row in res.factor():
        out.append(SparsePoly(cert.n, {basis[j]: Fraction(float(c)) for j, c in enumerate(row) if c != 0}))
    return out


# ---------------------------------------------------------------------------
# truncated quadratic module

@dataclass
class ModuleCertificate:
    """``f = s_0 + sum_i g_i s_i`` with ``sigma[i]`` the Gram data of ``s_i``.

    ``truncation`` is the degree bound 2D of the module; when omitted it is
    taken as ``max(2 d_0, deg g_i + 2 d_i)``.
    """

    generators: list[SparsePoly]
    sigma: list[GramCertificate]
    truncation: int | None = None

    def __post_init__(self):
        if len(self.sigma) != len(self.generators) + 1:
            raise DegreeMismatch(f"{len(self.generators)} generators need {len(self.generators) + 1} Gram blocks, got {len(self.sigma)}")
        ns = {s.n for s in self.sigma} | {g.nvars for g in self.generators}
        if len(ns) != 1:
            raise DegreeMismatch(f"inconsistent variable counts {sorted(ns)}")

    @property
    def nvars(self) -> int:
        return self.sigma[0].n

    def degrees(self) -> list[int]:
        """Degree of each product term ``g_i s_i`` (``g_0 = 1``)."""
        out = [2 * self.sigma[0].d]
        for g, s in zip(self.generators, self.sigma[1:]):
            out.append(max(g.degree, 0) + 2 * s.d)
        return out

    def effective_truncation(self) -> int:
        return self.truncation if self.truncation is not None else max(self.degrees())

    def to_dict(self) -> dict:
        return {
            "nvars": self.nvars,
            "generators": [g.to_text() for g in self.generators],
            "sigma": [s.to_dict() for s in self.sigma],
            "truncation": self.truncation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ModuleCertificate":
        sigma = [GramCertificate.from_dict(s) for s in data["sigma"]]
        n = int(data.get("nvars", sigma[0].n if sigma else 1))
        gens = [parse_poly(t, nvars=n) for t in data["generators"]]
        return cls(gens, sigma, data.get("truncation"))

    @classmethod
    def from_json(cls, text: str) -> "ModuleCertificate":
        return cls.from_dict(json.loads(text))


@dataclass
class ModuleResult:
    ok: bool
    residual: float
    exponent: Exponent | None
    psd: list[bool] = field(default_factory=list)
    witnesses: dict[int, list[float]] = field(default_factory=dict)

    def __bool__(self):
        return self.ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "residual": self.residual,
            "exponent": list(self.exponent) if self.exponent is not None else None,
            "psd": self.psd,
            "witnesses": {str(i): w for i, w in self.witnesses.items()},
        }


def module_verify(f: SparsePoly, cert: ModuleCertificate, tol: float = 1e-8, psd_tol: float = DEFAULT_PSD_TOL) -> ModuleResult:
    """Check ``f = s_0 + sum g_i s_i`` coefficient-wise and every ``s_i >= 0``.

    ``residual`` is the largest coefficient gap and ``exponent`` where it
    occurs (``None`` when the two sides agree exactly).

    Raises
    ------
    DegreeMismatch
        If some product term or ``f`` itself exceeds the truncation degree,
        or the variable counts disagree.
    """
    if f.nvars != cert.nvars:
        raise DegreeMismatch(f"f has {f.nvars} variables, certificate has {cert.nvars}")
    trunc = cert.effective_truncation()
    for i, deg in enumerate(cert.degrees()):
        if deg > trunc:
            raise DegreeMismatch(f"term {i} has degree {deg} above truncation {trunc}")
    if f.degree > trunc:
        raise DegreeMismatch(f"f has degree {f.degree} above truncation {trunc}")

    total = gram_reconstruct(cert.sigma[0])
    for g, s in zip(cert.generators, cert.sigma[1:]):
        total = total + g * gram_reconstruct(s)
    gap, where = total.coefficient_gap(f)

    flags, witnesses = [], {}
    for i, s in enumerate(cert.sigma):
        res = psd_check(s.G, psd_tol)
        flags.append(res.psd)
        if not res.psd:
            witnesses[i] = res.witness.tolist()
    ok = float(gap) <= tol and all(flags)
    return ModuleResult(ok, float(gap), where, flags, witnesses)


# ---------------------------------------------------------------------------
# quadratic forms <-> degree-2 polynomials

def _frac_matrix(A) -> list[list[Fraction]]:
    rows = [[to_fraction(a) for a in row] for row in (A.tolist() if isinstance(A, np.ndarray) else A)]
    k = len(rows)
    if any(len(r) != k for r in rows):
        raise NotSymmetric("matrix must be square")
    for i in range(k):
        for j in range(i):
            if rows[i][j] != rows[j][i]:
                raise NotSymmetric(f"entries ({i},{j}) and ({j},{i}) differ")
    return rows


def quad_to_poly(A) -> SparsePoly:
    """``q_A(x_0, .., x_{k-2}, 1)`` for a symmetric k x k matrix, exactly.

    The last coordinate of the quadratic form is dehomogenised to 1.
    """
    M = _frac_matrix(A)
    k = len(M)
    if k < 2:
        raise ValueError("need k >= 2")
    n = k - 1

    def unit(i):
        return [1 if j == i else 0 for j in range(n)] if i < n else [0] * n

    acc: dict[Exponent, Fraction] = {}
    for i in range(k):
        for j in range(i, k):
            c = M[i][j] * (1 if i == j else 2)
            if c:
                e = Exponent(unit(i)) + Exponent(unit(j))
                acc[e] = acc.get(e, Fraction(0)) + c
    return SparsePoly(n, acc)


def poly_to_quad(p: SparsePoly) -> list[list[Fraction]]:
    """Inverse of :func:`quad_to_poly` on polynomials of degree <= 2."""
    if p.degree > 2:
        raise DegreeMismatch(f"degree {p.degree} > 2")
    n = p.nvars
    k = n + 1
    M = [[Fraction(0)] * k for _ in range(k)]
    for e, c in p:
        idx = [i for i, a in enumerate(e) for _ in range(a)]
        while len(idx) < 2:
            idx.append(n)
        i, j = idx
        if i == j:
            M[i][i] += c
        else:
            M[i][j] += c / 2
            M[j][i] += c / 2
    return M


def quad_to_gram(A) -> GramCertificate:
    """Gram certificate of ``quad_to_poly(A)`` over ``(1, x_0, .., x_{k-2})``."""
    M = np.array([[float(a) for a in row] for row in _frac_matrix(A)])
    k = M.shape[0]
    order = [k - 1] + list(range(k - 1))
    return GramCertificate(k - 1, 1, M[np.ix_(order, order)])


# ---------------------------------------------------------------------------
# copositivity

@dataclass
class CopositiveResult:
    ok: bool
    split_residual: float
    psd: bool
    min_nonneg_entry: float
    witness: list[float] | None = None

    def __bool__(self):
        return self.ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "split_residual": self.split_residual,
            "psd": self.psd,
            "min_nonneg_entry": self.min_nonneg_entry,
            "witness": self.witness,
        }


def copositive_cert_verify(M, P, N, tol: float = 1e-9) -> CopositiveResult:
    """Check ``M = P + N`` (entrywise within ``tol``), ``P`` PSD and ``N >= -tol``.

    A passing certificate proves ``M`` copositive.  Such a split exists for
    every copositive matrix only when k <= 4; for k >= 5 a failed search for
    ``(P, N)`` says nothing about copositivity.
    """
    M = _symmetric(M, "M")
    P = _symmetric(P, "P")
    N = _symmetric(N, "N")
    if not (M.shape == P.shape == N.shape):
        raise ValueError("M, P and N must have the same shape")
    resid = float(np.max(np.abs(M - P - N))) if M.size else 0.0
    res = psd_check(P)
    nmin = float(np.min(N)) if N.size else 0.0
    ok = resid <= tol and res.psd and nmin >= -tol
    return CopositiveResult(ok, resid, res.psd, nmin, None if res.psd else res.witness.tolist())
