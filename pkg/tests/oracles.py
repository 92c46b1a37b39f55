"""Independent numeric oracles used by the tests.

Nothing here calls into the circuit-number or certificate code of the
package: polynomials are handled as plain (exponent, coefficient) arrays.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import product

import numpy as np


def poly_arrays(poly):
    """(exponents int array (m, n), coefficients float array (m,))."""
    items = list(poly.terms.items())
    E = np.array([list(e) for e, _ in items], dtype=float).reshape(len(items), poly.nvars)
    c = np.array([float(v) for _, v in items])
    return E, c


def exact_value(poly, x) -> Fraction:
    """Exact rational value of the polynomial at the float point ``x``."""
    xs = [Fraction(float(v)) for v in x]
    total = Fraction(0)
    for e, c in poly.terms.items():
        term = Fraction(c)
        for xi, k in zip(xs, e):
            term *= xi ** k
        total += term
    return total


def _descend(ratio, S, Y, bound, iters):
    """Projected normalised-gradient descent with a per-start adaptive step."""
    r, g = ratio(S, Y, grad=True)
    step = np.full(len(Y), 0.5)
    for _ in range(iters):
        gn = np.linalg.norm(g, axis=1)
        active = (gn > 1e-14) & (step > 1e-10)
        if not np.any(active):
            break
        Yn = np.clip(Y - step[:, None] * g / np.maximum(gn, 1e-300)[:, None], -bound, bound)
        rn, gnew = ratio(S, Yn, grad=True)
        better = (rn < r) & active
        Y[better], r[better], g[better] = Yn[better], rn[better], gnew[better]
        step = np.where(better, step * 1.5, step * 0.5)
    return Y


def multistart_min(poly, starts: int = 50, seed: int = 0, bound: float = 12.0, samples: int = 2000, iters: int = 300):
    """Multi-start local minimisation of ``poly`` over R^n.

    Works in signed log-coordinates ``x = s * exp(y)``, ``y`` in
    ``[-bound, bound]^n``, on two sign-preserving ratios:

    * ``p(x) / sum_a |c_a x^a|``, scale free (for positive vertex terms of a
      circuit polynomial it is monotone in a convex function of ``y``);
    * ``p(x) / (1 + sum_a |c_a x^a|)``, which does not reward driving all
      monomials to zero.

    Each ratio is refined from ``starts`` points: half drawn at random
    (``y ~ N(0, 2^2)``, random sign pattern), half the best of ``samples``
    such draws.  The five lowest endpoints (in floating point) are
    re-evaluated exactly; returns the smallest exact value and its point.
    """
    E, c = poly_arrays(poly)
    n = poly.nvars
    rng = np.random.default_rng(seed)
    signs = np.array(list(product([1.0, -1.0], repeat=n)))
    ac = np.abs(c)[None, :]

    def make_ratio(one):
        def ratio(S, Y, grad=False):
            parity = np.prod(np.where((E[None, :, :] % 2 == 1), S[:, None, :], 1.0), axis=2)
            sc = parity * c[None, :]
            W = np.exp(Y @ E.T)
            num = np.sum(sc * W, axis=1)
            den = one + np.sum(ac * W, axis=1)
            r = num / den
            if not grad:
                return r
            dnum = (sc * W) @ E
            dden = (ac * W) @ E
            return r, (dnum * den[:, None] - num[:, None] * dden) / (den ** 2)[:, None]
        return ratio

    points = []
    for one in (0.0, 1.0):
        ratio = make_ratio(one)
        S = signs[rng.integers(0, len(signs), size=samples)]
        Y = np.clip(rng.normal(0.0, 2.0, size=(samples, n)), -bound, bound)
        half = starts // 2
        pick = np.concatenate([np.arange(half), half + np.argsort(ratio(S[half:], Y[half:]), kind="stable")[: starts - half]])
        S, Y = S[pick], Y[pick].copy()
        Y = _descend(ratio, S, Y, bound, iters)
        points.extend(s * np.exp(y) for s, y in zip(S, Y))
    X = np.array(points)
    approx = np.prod(X[:, None, :] ** E[None, :, :], axis=2) @ c
    best, best_x = None, None
    for i in np.argsort(approx, kind="stable")[:5]:
        x = X[i]
        v = exact_value(poly, x)
        if best is None or v < best:
            best, best_x = v, x
    return best, best_x


def grid_min(f, lo: float = -2.0, hi: float = 2.0, steps: int = 401) -> float:
    """Minimum of a bivariate callable on a uniform grid."""
    t = np.linspace(lo, hi, steps)
    X, Y = np.meshgrid(t, t)
    return float(np.min(f(X, Y)))


def theta_float(coeffs, weights) -> float:
    """Circuit number by the plain product formula in double precision."""
    return float(np.prod([(float(c) / float(w)) ** float(w) for c, w in zip(coeffs, weights)]))


def random_circuit_data(rng, max_n: int = 3, max_half_degree: int = 4):
    """Random admissible circuit: even affinely independent vertices, lattice beta inside.

    Returns (vertices, beta, weights as Fractions), all derived here with
    exact rational Gaussian elimination independent of the package.
    """
    while True:
        n = int(rng.integers(1, max_n + 1))
        k = int(rng.integers(1, n + 1))
        D = 2 * max_half_degree
        verts = []
        for _ in range(k + 1):
            while True:
                v = 2 * rng.integers(0, max_half_degree + 1, size=n)
                if v.sum() <= D:
                    break
            verts.append(tuple(int(a) for a in v))
        if len(set(verts)) < k + 1:
            continue
        # candidate interior lattice points: integer combos inside bounding box
        lo = np.min(verts, axis=0)
        hi = np.max(verts, axis=0)
        pts = list(product(*[range(int(a), int(b) + 1) for a, b in zip(lo, hi)]))
        rng.shuffle(pts)
        for beta in pts[:400]:
            lam = _bary(verts, beta)
            if lam is None:
                break  # degenerate simplex
            if lam and all(l > 0 for l in lam) and tuple(beta) not in verts:
                return verts, tuple(int(b) for b in beta), lam


def _bary(verts, beta):
    """Exact barycentric coordinates; None if degenerate, [] if beta off the affine hull."""
    k = len(verts) - 1
    n = len(beta)
    rows = [[Fraction(verts[j][i]) for j in range(k + 1)] + [Fraction(beta[i])] for i in range(n)]
    rows.append([Fraction(1)] * (k + 1) + [Fraction(1)])
    # Gaussian elimination on (n+1) x (k+2)
    r = 0
    piv_cols = []
    for col in range(k + 1):
        p = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if p is None:
            return None
        rows[r], rows[p] = rows[p], rows[r]
        rows[r] = [v / rows[r][col] for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        piv_cols.append(col)
        r += 1
    if any(rows[i][-1] != 0 for i in range(r, len(rows))):
        return []
    return [rows[i][-1] for i in range(k + 1)]
