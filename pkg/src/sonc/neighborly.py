"""General-position point sets and the vanishing-square witness families.

For points ``S`` in general linear position with respect to degree-d
monomials, every k-subset ``T`` with ``k = space_dim(n, d) - 1`` admits a
polynomial ``f`` of degree <= d vanishing on ``T`` and on no other point of
``S``.  Its square ``f^2`` is a sum of squares that is zero on ``T`` and
strictly positive on ``S \\ T``.  This module constructs such families
numerically and checks the zero pattern, together with two linear-algebra
facts about PSD matrices and sums of subspaces.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import InitVar, dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np

from .polyalg import Exponent, SparsePoly, monomial_vector, space_dim

__all__ = [
    "Configuration",
    "WitnessFamily",
    "StarReport",
    "OrthogonalityResult",
    "SubspaceSum",
    "SamplingExhausted",
    "NotGeneralPosition",
    "TooManyPoints",
    "NotPsd",
    "MINOR_THRESHOLD",
    "monomial_matrix",
    "general_position_margin",
    "sample_general_position",
    "vanishing_poly",
    "witness_family",
    "verify_star",
    "psd_orthogonality",
    "subspace_sum_basis",
]

MINOR_THRESHOLD = 1e-10
IN_T_TOL = 1e-9
OFF_T_TOL = 1e-6
EXHAUSTIVE_LIMIT = 200_000


class SamplingExhausted(RuntimeError):
    pass


class NotGeneralPosition(ValueError):
    pass


class TooManyPoints(ValueError):
    pass


class NotPsd(ValueError):
    pass


def monomial_matrix(points, d: int) -> np.ndarray:
    """Rows ``v_{n,d}(x)`` for each point, columns in graded-lex order."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    basis = np.array(monomial_vector(P.shape[1], d), dtype=int)
    return np.prod(P[:, None, :] ** basis[None, :, :], axis=2)


def _volumes(V: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """Volume spanned by the normalised rows ``V[s]`` for each subset ``s``."""
    if subsets.shape[1] == 0:
        return np.ones(len(subsets))
    R = V[subsets]
    R = R / np.linalg.norm(R, axis=2, keepdims=True)
    if R.shape[1] == R.shape[2]:
        return np.abs(np.linalg.det(R))
    return np.prod(np.linalg.svd(R, compute_uv=False), axis=1)


def general_position_margin(points, d: int, subsets: Iterable[Sequence[int]] | None = None):
    """Smallest normalised minor over point subsets, and the subset attaining it.

    By default checks every subset of size ``min(N, space_dim(n, d))``; a
    nonzero value for all of them means every subset of at most
    ``space_dim`` lifted points is linearly independent.
    """
    V = monomial_matrix(points, d)
    N, D = V.shape
    if subsets is None:
        m = min(N, D)
        if comb(N, m) > EXHAUSTIVE_LIMIT:
            raise ValueError(f"{comb(N, m)} subsets exceed the exhaustive limit {EXHAUSTIVE_LIMIT}")
        subsets = combinations(range(N), m)
    S = np.array(list(subsets), dtype=int)
    if S.size == 0:
        return 1.0, ()
    vols = _volumes(V, S)
    i = int(np.argmin(vols))
    return float(vols[i]), tuple(int(v) for v in S[i])


@dataclass(frozen=True)
class Configuration:
    """Points of R^n in general linear position for degree-d monomials.

    Construction re-certifies the position: every subset of size
    ``min(N, space_dim(n, d))`` of lifted, row-normalised points must span a
    volume above ``threshold``.
    """

    n: int
    d: int
    points: np.ndarray
    seed: int | None = None
    threshold: float = MINOR_THRESHOLD
    certify: InitVar[bool] = True

    def __post_init__(self, certify: bool = True):
        P = np.array(self.points, dtype=float).reshape(-1, self.n)
        if not np.all(np.isfinite(P)):
            raise ValueError("points must be finite")
        P.setflags(write=False)
        object.__setattr__(self, "points", P)
        if certify and len(P):
            vol, worst = general_position_margin(P, self.d)
            if not vol > self.threshold:
                raise NotGeneralPosition(f"points {list(worst)} have normalised minor {vol:.3e} <= {self.threshold:g}")

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return space_dim(self.n, self.d)

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "seed": self.seed, "points": self.points.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "Configuration":
        return cls(int(data["n"]), int(data["d"]), np.array(data["points"], dtype=float), data.get("seed"))

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        return cls.from_dict(json.loads(text))


def sample_general_position(
    n: int,
    d: int,
    N: int,
    seed: int = 0,
    threshold: float = MINOR_THRESHOLD,
    star_margin: float | None = None,
) -> Configuration:
    """Rejection-sample N points uniformly from [-1, 1]^n in general position.

    A candidate point is accepted when every subset it completes (size
    ``min(j + 1, space_dim)`` with earlier points) has normalised minor above
    ``threshold``.  At most ``100 * N`` candidates are drawn.

    With ``star_margin`` set, a candidate must in addition keep the
    vanishing-square family of the accepted prefix (k = space_dim - 1)
    strictly above ``star_margin`` off each subset, so that the final
    configuration passes :func:`verify_star` at that margin.
    """
    if N < 1:
        raise ValueError("need N >= 1")
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    rng = np.random.default_rng(seed)
    D = space_dim(n, d)
    pts: list[np.ndarray] = []
    attempts = 0
    while len(pts) < N:
        if attempts >= 100 * N:
            raise SamplingExhausted(f"accepted {len(pts)} of {N} points after {attempts} draws")
        attempts += 1
        cand = rng.uniform(-1.0, 1.0, size=n)
        j = len(pts)
        m = min(j + 1, D)
        subsets = [tuple(c) + (j,) for c in combinations(range(j), m - 1)]
        vol, _ = general_position_margin(np.array(pts + [cand]), d, subsets)
        if not vol > threshold:
            continue
        if star_margin is not None and j + 1 > D - 1:
            trial = Configuration(n, d, np.array(pts + [cand]), seed, threshold, certify=False)
            if not verify_star(witness_family(trial), off_tol=star_margin).ok:
                continue
        pts.append(cand)
    return Configuration(n, d, np.array(pts), seed, threshold)


def _first_null_vector(E: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Null vector of E from the first free column of a pivoted row reduction."""
    A = E.astype(float).copy()
    rows, cols = A.shape
    scale = max(float(np.max(np.abs(A))) if A.size else 0.0, 1.0)
    pivots: list[int] = []
    r = 0
    free = None
    for c in range(cols):
        if r < rows:
            p = r + int(np.argmax(np.abs(A[r:, c])))
            if abs(A[p, c]) > tol * scale:
                A[[r, p]] = A[[p, r]]
                A[r] /= A[r, c]
                others = np.arange(rows) != r
                A[others] -= np.outer(A[others, c], A[r])
                pivots.append(c)
                r += 1
                continue
        free = c
        break
    if free is None:
        raise TooManyPoints("evaluation matrix has full column rank")
    v = np.zeros(cols)
    v[free] = 1.0
    for i, c in enumerate(pivots):
        v[c] = -A[i, free]
    return v / v[np.argmax(np.abs(v))]


def _coeffs_to_poly(n: int, d: int, v: np.ndarray) -> SparsePoly:
    return SparsePoly(n, {e: Fraction(float(c)) for e, c in zip(monomial_vector(n, d), v) if c != 0})


def vanishing_poly(config: Configuration, T: Sequence[int], d: int | None = None) -> SparsePoly:
    """Nonzero polynomial of degree <= d vanishing on the points indexed by T.

    Taken from the first free column (graded-lex order) of the row-reduced
    evaluation matrix, scaled so that its largest coefficient is 1.

    Raises
    ------
    TooManyPoints
        If ``|T| >= space_dim(n, d)``.
    """
    d = config.d if d is None else d
    return _coeffs_to_poly(config.n, d, _vanishing_coeffs(config, T, d))


def _vanishing_coeffs(config: Configuration, T: Sequence[int], d: int) -> np.ndarray:
    D = space_dim(config.n, d)
    T = list(T)
    if len(T) > D - 1:
        raise TooManyPoints(f"{len(T)} points but only {D - 1} can be imposed in degree {d}")
    if not T:
        v = np.zeros(D)
        v[0] = 1.0
        return v
    return _first_null_vector(monomial_matrix(config.points[T], d))


@dataclass
class WitnessFamily:
    """Squares ``f_T^2`` indexed by k-subsets T of the configuration.

    ``coeffs[i]`` holds the unsquared ``f_T`` (graded-lex coefficients) for
    ``subsets[i]``; ``polys`` builds the exact squares on demand.
    """

    config: Configuration
    k: int
    subsets: list[tuple[int, ...]]
    coeffs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.subsets)

    def values(self) -> np.ndarray:
        """``f_T(s)`` for every subset (rows) and point (columns)."""
        V = monomial_matrix(self.config.points, self.config.d)
        return (self.coeffs @ V.T) ** 2

    def root(self, T: Sequence[int]) -> SparsePoly:
        i = self.subsets.index(tuple(T))
        return _coeffs_to_poly(self.config.n, self.config.d, self.coeffs[i])

    @property
    def polys(self) -> Mapping[tuple[int, ...], SparsePoly]:
        return _LazySquares(self)

    def replace(self, T: Sequence[int], coeffs) -> "WitnessFamily":
        """Copy with the unsquared polynomial for T swapped out."""
        C = self.coeffs.copy()
        C[self.subsets.index(tuple(T))] = np.asarray(coeffs, dtype=float)
        return WitnessFamily(self.config, self.k, list(self.subsets), C)

    def slack_csv(self) -> str:
        """Table of ``f_T(s)``: one row per T, one column per point."""
        F = self.values()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T"] + [f"s{j}" for j in range(self.config.N)])
        for T, row in zip(self.subsets, F):
            w.writerow([" ".join(map(str, T))] + [repr(float(v)) for v in row])
        return buf.getvalue()


class _LazySquares(Mapping):
    def __init__(self, fam: WitnessFamily):
        self._fam = fam

    def __getitem__(self, T):
        T = tuple(T)
        cache = self._fam._cache
        if T not in cache:
            if T not in self._fam.subsets:
                raise KeyError(T)
            cache[T] = self._fam.root(T) ** 2
        return cache[T]

    def __iter__(self):
        return iter(self._fam.subsets)

    def __len__(self):
        return len(self._fam.subsets)


def witness_family(config: Configuration, k: int | None = None) -> WitnessFamily:
    """Vanishing squares for every k-subset (default ``k = space_dim - 1``).

    Subsets are enumerated in lexicographic order.  When the leading
    ``k x k`` block of the evaluation matrix is well conditioned the first
    free column is ``k`` and the null vector is obtained by a batched solve;
    otherwise the row reduction of :func:`vanishing_poly` is used.
    """
    D = config.dim
    k = D - 1 if k is None else k
    if k < 0 or k > D - 1:
        raise TooManyPoints(f"k = {k} outside [0, {D - 1}]")
    if config.N < k:
        raise ValueError(f"need at least k = {k} points, configuration has {config.N}")
    subsets = list(combinations(range(config.N), k))
    C = np.zeros((len(subsets), D))
    if k == 0:
        C[:, 0] = 1.0
        return WitnessFamily(config, k, subsets, C)
    V = monomial_matrix(config.points, config.d)
    S = np.array(subsets, dtype=int)
    E = V[S]  # (count, k, D)
    lead, rhs = E[:, :, :k], E[:, :, k]
    cond = np.linalg.cond(lead)
    good = cond < 1e8
    if np.any(good):
        sol = np.linalg.solve(lead[good], -rhs[good][..., None])[..., 0]
        block = np.zeros((int(good.sum()), D))
        block[:, :k] = sol
        block[:, k] = 1.0
        idx = np.argmax(np.abs(block), axis=1)
        block /= block[np.arange(len(block)), idx][:, None]
        C[good] = block
    for i in np.flatnonzero(~good):
        C[i] = _first_null_vector(E[i])
    return WitnessFamily(config, k, subsets, C)


@dataclass
class StarReport:
    ok: bool
    worst_in_T: float
    worst_off_T: float
    failures: list[tuple[int, ...]]
    count: int

    def __bool__(self):
        return self.ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "worst_in_T": self.worst_in_T,
            "worst_off_T": self.worst_off_T,
            "failures": [list(T) for T in self.failures],
            "count": self.count,
        }


def verify_star(family: WitnessFamily, in_tol: float = IN_T_TOL, off_tol: float = OFF_T_TOL) -> StarReport:
    """Check the zero pattern of every member against its subset.

    With ``scale = max_s |f_T(s)|`` each ``f_T`` must satisfy
    ``f_T(t) <= in_tol * scale`` on T and ``f_T(s) > off_tol * scale`` off T.
    When T covers every point the scale is the squared largest coefficient
    of the unsquared ``f_T`` instead.
    Margins are reported relative to ``scale``: ``worst_in_T`` is the largest
    in-T value, ``worst_off_T`` the smallest off-T value (0 for a member
    that vanishes identically on S).
    """
    F = family.values()
    N = family.config.N
    worst_in, worst_off = 0.0, np.inf
    failures = []
    for T, row, c in zip(family.subsets, F, family.coeffs):
        mask = np.zeros(N, dtype=bool)
        mask[list(T)] = True
        if mask.all():
            # no point off T: values on S are rounding noise, measure against the coefficients
            scale = float(np.max(np.abs(c))) ** 2 if c.size else 0.0
        else:
            scale = float(np.max(np.abs(row)))
        rel = row / scale if scale > 0 else np.zeros_like(row)
        r_in = float(np.max(np.abs(rel[mask]))) if mask.any() else 0.0
        r_off = float(np.min(rel[~mask])) if (~mask).any() else np.inf
        worst_in = max(worst_in, r_in)
        worst_off = min(worst_off, r_off)
        if scale == 0 or r_in > in_tol or not r_off > off_tol:
            failures.append(T)
    return StarReport(not failures, worst_in, float(worst_off), failures, len(family))


# ---------------------------------------------------------------------------
# PSD matrices with orthogonal images

@dataclass
class OrthogonalityResult:
    inner: float
    orthogonal_images: bool
    consistent: bool
    max_cosine: float
    ranks: tuple[int, int]


def _range_basis(A: np.ndarray, tol: float, name: str) -> np.ndarray:
    evals, evecs = np.linalg.eigh(A)
    norm = max(float(np.max(np.abs(evals))), 0.0) if evals.size else 0.0
    if evals.size and evals[0] < -tol * max(norm, 1.0):
        raise NotPsd(f"{name} has eigenvalue {evals[0]:.3e}")
    return evecs[:, evals > tol * norm]


def psd_orthogonality(A, B, tol: float = 1e-10) -> OrthogonalityResult:
    """Frobenius product of two PSD matrices versus orthogonality of their images.

    ``inner = sum_ij A_ij B_ij``.  The images are spanned by eigenvectors
    with eigenvalue above ``tol * ||.||_2``; they count as orthogonal when
    every cosine between the two bases is at most ``sqrt(tol)``.  For PSD
    inputs ``inner <= tol`` and orthogonal images should coincide;
    ``consistent`` reports whether they did.

    Raises
    ------
    NotPsd
        If either matrix has an eigenvalue below ``-tol * max(1, ||.||_2)``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A and B must be square of equal size")
    A = (A + A.T) / 2
    B = (B + B.T) / 2
    UA = _range_basis(A, tol, "A")
    UB = _range_basis(B, tol, "B")
    inner = float(np.sum(A * B))
    cos = float(np.max(np.abs(UA.T @ UB))) if UA.size and UB.size else 0.0
    ortho = bool(cos <= np.sqrt(tol))
    return OrthogonalityResult(inner, ortho, bool((inner <= tol) == ortho), cos, (UA.shape[1], UB.shape[1]))


# ---------------------------------------------------------------------------
# sums of subspaces

@dataclass
class SubspaceSum:
    basis: np.ndarray  # chosen input vectors, one per row
    sources: list[int]  # which space each basis vector came from
    used: list[int]  # sorted distinct sources, the index set I

    @property
    def dim(self) -> int:
        return len(self.sources)


def subspace_sum_basis(spaces: Sequence, tol: float = 1e-10) -> SubspaceSum:
    """Greedy basis of ``V_0 + V_1 + ...`` drawn from the given bases.

    Vectors are scanned space by space; a vector is kept when its component
    orthogonal to the span so far exceeds ``tol`` times its norm.  The spaces
    contributing a kept vector form ``used``, of size at most the ambient
    dimension.
    """
    mats = [np.atleast_2d(np.asarray(s, dtype=float)) for s in spaces]
    k = next((m.shape[1] for m in mats if m.size), 0)
    Q = np.zeros((0, k))
    chosen, sources = [], []
    for i, M in enumerate(mats):
        if M.size == 0:
            continue
        if M.shape[1] != k:
            raise ValueError("all spaces must live in the same R^k")
        for b in M:
            nb = np.linalg.norm(b)
            if nb == 0:
                continue
            r = b - Q.T @ (Q @ b)
            r = r - Q.T @ (Q @ r)
            nr = np.linalg.norm(r)
            if nr > tol * nb:
                Q = np.vstack([Q, r / nr])
                chosen.append(b)
                sources.append(i)
    basis = np.array(chosen) if chosen else np.zeros((0, k))
    return SubspaceSum(basis, sources, sorted(set(sources)))
