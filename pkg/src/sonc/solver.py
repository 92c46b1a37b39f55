"""Primal-dual interior-point solver for linear + second-order cone programs.

The program ``maximize obj.x  s.t.  A x = b,  x in cones`` is rewritten as::

    minimize c.x   s.t.  A x = b,  G x + s = h,  s in K      (c = -obj)

with ``K`` a product of nonnegative orthants and Lorentz cones (rotated
blocks are mapped onto Lorentz cones by a fixed orthogonal transform) and
solved through the homogeneous self-dual embedding, so that infeasible and
unbounded programs terminate with a certificate instead of stalling.

Search directions use Nesterov-Todd scaling and Mehrotra's
predictor-corrector; the KKT system is factored densely once per
iteration.  Everything is deterministic: the starting point is the
identity element of each cone and no randomisation is involved.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .socrep import ConeProgram

__all__ = [
    "SolverOptions",
    "SolveResult",
    "FeasibilityReport",
    "IllFormedProgram",
    "solve",
    "check_feasibility",
]

SQRT2 = np.sqrt(2.0)


class IllFormedProgram(ValueError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    feas_tol: float = 1e-8
    verbose: bool = False
    step: float = 0.99
    reg: float = 1e-10
    refine: int = 3


@dataclass(frozen=True)
class SolveResult:
    status: str  # optimal | infeasible | unbounded | max_iter | numerical
    primal: np.ndarray
    dual: np.ndarray
    objective: float
    iterations: int
    residuals: dict
    dual_objective: float = float("nan")
    cone_dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    report: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# cone algebra on the slack space

class _Cones:
    """Slack-space layout: nonnegatives first, then Lorentz blocks grouped by size."""

    def __init__(self, prog: ConeProgram):
        lp_vars = [v for blk in prog.cones if blk.kind == "nonneg" for v in blk.vars]
        soc = [blk for blk in prog.cones if blk.kind != "nonneg"]
        self.nl = len(lp_vars)
        rows: list[tuple[int, int, float]] = [(i, v, 1.0) for i, v in enumerate(lp_vars)]
        self.groups: list[tuple[int, int, int]] = []  # (dim, offset, count)
        off = self.nl
        for dim in sorted({len(b.vars) for b in soc}):
            blks = [b for b in soc if len(b.vars) == dim]
            self.groups.append((dim, off, len(blks)))
            for b in blks:
                if b.kind == "soc":
                    rows.extend((off + i, v, 1.0) for i, v in enumerate(b.vars))
                else:  # (u, v, z...) -> ((u+v)/sqrt2, (u-v)/sqrt2, z...)
                    u, w, *zs = b.vars
                    rows += [(off, u, 1 / SQRT2), (off, w, 1 / SQRT2), (off + 1, u, 1 / SQRT2), (off + 1, w, -1 / SQRT2)]
                    rows.extend((off + 2 + i, v, 1.0) for i, v in enumerate(zs))
                off += dim
        self.m = off
        self.degree = self.nl + sum(cnt for _, _, cnt in self.groups)
        # s = T x  (so G = -T, h = 0)
        self.T = np.zeros((self.m, prog.nvar))
        for i, j, v in rows:
            self.T[i, j] += v

    def blocks(self, v):
        for dim, off, cnt in self.groups:
            yield v[off: off + dim * cnt].reshape(cnt, dim)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.nl] = 1.0
        for blk in self.blocks(e):
            blk[:, 0] = 1.0
        return e

    def interior(self, v) -> bool:
        if np.any(v[: self.nl] <= 0):
            return False
        for blk in self.blocks(v):
            if np.any(blk[:, 0] <= 0) or np.any(blk[:, 0] ** 2 - np.sum(blk[:, 1:] ** 2, axis=1) <= 0):
                return False
        return True

    def product(self, u, v) -> np.ndarray:
        out = np.empty(self.m)
        out[: self.nl] = u[: self.nl] * v[: self.nl]
        for bu, bv, bo in zip(self.blocks(u), self.blocks(v), self.blocks(out)):
            bo[:, 0] = np.sum(bu * bv, axis=1)
            bo[:, 1:] = bu[:, :1] * bv[:, 1:] + bv[:, :1] * bu[:, 1:]
        return out

    def divide(self, lam, v) -> np.ndarray:
        """Solve lam o x = v for x."""
        out = np.empty(self.m)
        out[: self.nl] = v[: self.nl] / lam[: self.nl]
        for bl, bv, bo in zip(self.blocks(lam), self.blocks(v), self.blocks(out)):
            rho = bl[:, 0] ** 2 - np.sum(bl[:, 1:] ** 2, axis=1)
            x0 = (bl[:, 0] * bv[:, 0] - np.sum(bl[:, 1:] * bv[:, 1:], axis=1)) / rho
            bo[:, 0] = x0
            bo[:, 1:] = (bv[:, 1:] - x0[:, None] * bl[:, 1:]) / bl[:, :1]
        return out

    def max_step(self, v, dv) -> float:
        """Largest alpha with v + alpha dv in the cone (inf if unbounded)."""
        alpha = np.inf
        neg = dv[: self.nl] < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-v[: self.nl][neg] / dv[: self.nl][neg])))
        for bv, bd in zip(self.blocks(v), self.blocks(dv)):
            a = bd[:, 0] ** 2 - np.sum(bd[:, 1:] ** 2, axis=1)
            b = bv[:, 0] * bd[:, 0] - np.sum(bv[:, 1:] * bd[:, 1:], axis=1)
            c = np.maximum(bv[:, 0] ** 2 - np.sum(bv[:, 1:] ** 2, axis=1), 0.0)
            alpha = min(alpha, _first_root(a, b, c))
        return alpha

    def nt_scaling(self, s, z) -> "_Scaling":
        return _Scaling(self, s, z)


def _first_root(a, b, c) -> float:
    """Smallest positive root over all quadratics a t^2 + 2 b t + c (c >= 0), inf if none."""
    out = np.full(a.shape, np.inf)
    lin = a == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        m = lin & (b < 0)
        out[m] = -c[m] / (2 * b[m])
        disc = b * b - a * c
        ok = ~lin & (disc >= 0)
        q = -(b + np.copysign(np.sqrt(np.where(ok, disc, 0.0)), b))
        r1 = np.where(q != 0, q / a, 0.0)
        r2 = np.where(q != 0, c / q, np.inf)
        r1 = np.where(ok & (r1 > 0), r1, np.inf)
        r2 = np.where(ok & (r2 > 0), r2, np.inf)
    out = np.minimum(out, np.minimum(r1, r2))
    return float(out.min()) if out.size else np.inf


class _Scaling:
    """Nesterov-Todd scaling W (symmetric) with W z = W^-1 s = lambda."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        nl = cones.nl
        self.d = np.sqrt(s[:nl] / z[:nl])
        self.eta = []
        self.wbar = []
        for bs, bz in zip(cones.blocks(s), cones.blocks(z)):
            sres = bs[:, 0] ** 2 - np.sum(bs[:, 1:] ** 2, axis=1)
            zres = bz[:, 0] ** 2 - np.sum(bz[:, 1:] ** 2, axis=1)
            if np.any(sres <= 0) or np.any(zres <= 0):
                raise FloatingPointError("iterate left the cone interior")
            sn = bs / np.sqrt(sres)[:, None]
            zn = bz / np.sqrt(zres)[:, None]
            gamma = np.sqrt((1 + np.sum(sn * zn, axis=1)) / 2)
            w = np.empty_like(sn)
            w[:, 0] = sn[:, 0] + zn[:, 0]
            w[:, 1:] = sn[:, 1:] - zn[:, 1:]
            w /= (2 * gamma)[:, None]
            self.wbar.append(w)
            self.eta.append((sres / zres) ** 0.25)
        self.lam = self.apply(z)

    def _apply_blocks(self, v, inverse: bool):
        out = np.empty(self.cones.m)
        nl = self.cones.nl
        out[:nl] = v[:nl] / self.d if inverse else v[:nl] * self.d
        for w, eta, bv, bo in zip(self.wbar, self.eta, self.cones.blocks(v), self.cones.blocks(out)):
            w0, w1 = w[:, 0], w[:, 1:]
            v0, v1 = bv[:, 0], bv[:, 1:]
            if inverse:
                v1 = -v1
            dot = np.sum(w1 * v1, axis=1)
            o0 = w0 * v0 + dot
            o1 = v1 + (v0 + dot / (1 + w0))[:, None] * w1
            if inverse:
                bo[:, 0] = o0 / eta
                bo[:, 1:] = -o1 / eta[:, None]
            else:
                bo[:, 0] = o0 * eta
                bo[:, 1:] = o1 * eta[:, None]
        return out

    def apply(self, v):
        return self._apply_blocks(v, inverse=False)

    def apply_inv(self, v):
        return self._apply_blocks(v, inverse=True)

    def squared(self) -> np.ndarray:
        """Dense W^2 (block diagonal)."""
        m, nl = self.cones.m, self.cones.nl
        W2 = np.zeros((m, m))
        W2[np.arange(nl), np.arange(nl)] = self.d ** 2
        for w, eta, (dim, off, cnt) in zip(self.wbar, self.eta, self.cones.groups):
            J = -np.eye(dim)
            J[0, 0] = 1.0
            blk = 2 * np.einsum("bi,bj->bij", w, w) - J[None]
            blk *= (eta ** 2)[:, None, None]
            for k in range(cnt):
                o = off + k * dim
                W2[o: o + dim, o: o + dim] = blk[k]
        return W2


# ---------------------------------------------------------------------------
# preprocessing

def _prune_equalities(A, b, report):
    """Drop zero and linearly dependent rows; detect inconsistency."""
    keep = []
    for i in range(A.shape[0]):
        if not np.any(A[i]):
            if abs(b[i]) > 1e-12:
                report.append(f"equality row {i} is 0 = {b[i]:g}")
                return None
            report.append(f"dropped zero equality row {i}")
        else:
            keep.append(i)
    A, b = A[keep], b[keep]
    if A.shape[0] == 0:
        return A, b
    _, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * max(diag[0], 1.0)))
    if rank < A.shape[0]:
        indep = np.sort(piv[:rank])
        dep = np.sort(piv[rank:])
        w, *_ = np.linalg.lstsq(A[indep].T, A[dep].T, rcond=None)
        if np.max(np.abs(w.T @ b[indep] - b[dep])) > 1e-9 * (1 + np.max(np.abs(b))):
            report.append("dependent equality rows are inconsistent")
            return None
        report.append(f"dropped {len(dep)} dependent equality rows {[keep[i] for i in dep]}")
        A, b = A[indep], b[indep]
    return A, b


# ---------------------------------------------------------------------------
# main loop

def _log_header():
    print(f"{'it':>4} {'pcost':>14} {'dcost':>14} {'gap':>10} {'pres':>10} {'dres':>10} {'k/t':>10} {'step':>8}", file=sys.stderr)


def _log_row(it, pcost, dcost, gap, pres, dres, kt, step):
    print(f"{it:>4} {pcost:>14.6e} {dcost:>14.6e} {gap:>10.2e} {pres:>10.2e} {dres:>10.2e} {kt:>10.2e} {step:>8.4f}", file=sys.stderr)


def solve(prog: ConeProgram, opts: SolverOptions | None = None) -> SolveResult:
    """Solve a :class:`ConeProgram` (maximisation).

    On ``optimal`` the primal, equality duals and objective refer to the
    original program, and the cone-constrained coordinates of the primal
    are taken from the interior slack so they lie inside their cones.  On
    ``infeasible`` the dual fields hold a Farkas
    certificate, on ``unbounded`` the primal holds an improving ray.
    """
    opts = opts or SolverOptions()
    try:
        prog.validate()
    except ValueError as exc:
        raise IllFormedProgram(str(exc)) from None

    report: list[str] = []
    n = prog.nvar
    c = -np.asarray(prog.objective, dtype=float)
    pruned = _prune_equalities(prog.eq_matrix(), np.asarray(prog.eq_rhs, dtype=float), report)
    if pruned is None:
        nan = float("nan")
        return SolveResult("infeasible", np.full(n, nan), np.zeros(prog.n_eq), nan, 0,
                           {"primal": nan, "dual": nan, "gap": nan}, report=tuple(report))
    A, b = pruned
    p = A.shape[0]
    cones = _Cones(prog)
    m = cones.m
    G = -cones.T
    h = np.zeros(m)

    x = np.zeros(n)
    y = np.zeros(p)
    s = cones.identity()
    z = cones.identity()
    tau = kappa = 1.0
    e = cones.identity()

    nb, nc, nh = 1 + np.linalg.norm(b), 1 + np.linalg.norm(c), 1 + np.linalg.norm(h)
    cscale = float(np.max(np.abs(c), initial=0.0))  # gap is measured in objective units
    N = n + p + m
    base = np.zeros((N, N))
    base[:n, n: n + p] = A.T
    base[:n, n + p:] = G.T
    base[n: n + p, :n] = A
    base[n + p:, :n] = G
    reg = np.concatenate([np.full(n, opts.reg), np.full(p, -opts.reg), np.full(m, -opts.reg)])

    if opts.verbose:
        _log_header()

    status = "max_iter"
    it = 0
    step = 0.0
    res = {"primal": np.inf, "dual": np.inf, "gap": np.inf}
    pcost = dcost = float("nan")
    while True:
        rx = A.T @ y + G.T @ z + c * tau
        ry = -A @ x + b * tau
        rz = -G @ x + h * tau - s
        rt = -c @ x - b @ y - h @ z - kappa
        mu = (s @ z + tau * kappa) / (cones.degree + 1)

        pcost = c @ x / tau
        dcost = (-b @ y - h @ z) / tau
        pres = max(np.linalg.norm(ry) / nb, np.linalg.norm(rz) / nh) / tau
        dres = np.linalg.norm(rx) / nc / tau
        gap = max(abs(pcost - dcost), (s @ z) / tau ** 2) / max(1 + abs(pcost), cscale)
        res = {"primal": float(pres), "dual": float(dres), "gap": float(gap)}
        if opts.verbose:
            _log_row(it, -pcost, -dcost, gap, pres, dres, kappa / tau, step)

        if pres <= opts.tol and dres <= opts.tol and gap <= opts.tol:
            status = "optimal"
            break
        byhz = b @ y + h @ z
        if byhz < 0 and np.linalg.norm(A.T @ y + G.T @ z) / -byhz <= opts.feas_tol:
            status = "infeasible"
            break
        cx = c @ x
        if cx < 0 and max(np.linalg.norm(A @ x), np.linalg.norm(G @ x + s)) / -cx <= opts.feas_tol:
            status = "unbounded"
            break
        if it >= opts.max_iter:
            break
        it += 1

        try:
            W = cones.nt_scaling(s, z)
        except FloatingPointError as exc:
            report.append(str(exc))
            status = "numerical"
            break
        lam = W.lam
        K = base.copy()
        K[n + p:, n + p:] = -W.squared()
        try:
            lu = sla.lu_factor(K + np.diag(reg), check_finite=True)
        except (ValueError, sla.LinAlgError) as exc:
            report.append(f"KKT factorisation failed: {exc}")
            status = "numerical"
            break

        def kkt_solve(rhs):
            u = sla.lu_solve(lu, rhs, check_finite=False)
            for _ in range(opts.refine):
                r = rhs - K @ u
                if np.linalg.norm(r) <= 1e-14 * (1 + np.linalg.norm(rhs)):
                    break
                u = u + sla.lu_solve(lu, r, check_finite=False)
            return u

        u2 = kkt_solve(np.concatenate([-c, b, h]))
        q2 = c @ u2[:n] + b @ u2[n: n + p] + h @ u2[n + p:]

        def direction(sigma, ds_target, dk_target):
            lds = cones.divide(lam, ds_target)
            rhs = np.concatenate([-(1 - sigma) * rx, (1 - sigma) * ry, (1 - sigma) * rz - W.apply(lds)])
            u1 = kkt_solve(rhs)
            q1 = c @ u1[:n] + b @ u1[n: n + p] + h @ u1[n + p:]
            dtau = (-(1 - sigma) * rt + q1 + dk_target / tau) / (kappa / tau - q2)
            u = u1 + dtau * u2
            dx, dy, dz = u[:n], u[n: n + p], u[n + p:]
            ds = W.apply(lds - W.apply(dz))
            dkappa = (dk_target - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def max_alpha(dz, ds, dtau, dkappa):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        with np.errstate(all="raise"):
            try:
                # predictor
                aff = direction(0.0, -cones.product(lam, lam), -tau * kappa)
                alpha_aff = min(1.0, max_alpha(aff[2], aff[3], aff[4], aff[5]))
                sigma = (1 - alpha_aff) ** 3
                # corrector
                corr = cones.product(W.apply_inv(aff[3]), W.apply(aff[2]))
                ds_t = -cones.product(lam, lam) - corr + sigma * mu * e
                dk_t = -tau * kappa - aff[4] * aff[5] + sigma * mu
                dx, dy, dz, ds, dtau, dkappa = direction(sigma, ds_t, dk_t)
                step = min(1.0, opts.step * max_alpha(dz, ds, dtau, dkappa))
            except FloatingPointError as exc:
                report.append(f"floating point failure: {exc}")
                status = "numerical"
                break
        if not np.isfinite(step) or step < 1e-12:
            report.append(f"step length {step:.2e} too small")
            status = "numerical"
            break

        x = x + step * dx
        y = y + step * dy
        z = z + step * dz
        s = s + step * ds
        tau = tau + step * dtau
        kappa = kappa + step * dkappa
        if not (cones.interior(s) and cones.interior(z) and tau > 0 and kappa > 0):
            report.append("iterate left the cone interior")
            status = "numerical"
            break

    if status == "infeasible":
        scale = -(b @ y + h @ z)
        return SolveResult(status, np.full(n, np.nan), y / scale, float("nan"), it, res,
                           float("nan"), z / scale, tuple(report))
    if status == "unbounded":
        scale = -(c @ x)
        return SolveResult(status, x / scale, np.full(p, np.nan), float("inf"), it, res,
                           float("nan"), np.zeros(m), tuple(report))
    xo = x / tau
    if status == "optimal":
        # cone coordinates from the slack, which is strictly interior; T is
        # orthogonal on the (disjoint) cone blocks so T^T inverts it there
        inside = cones.T.any(axis=0)
        xo[inside] = (cones.T.T @ (s / tau))[inside]
    return SolveResult(status, xo, y / tau, float(-pcost), it, res, float(-dcost), z / tau, tuple(report))


# ---------------------------------------------------------------------------
# feasibility report

@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    eq_violations: np.ndarray
    cone_margins: tuple[float, ...]
    violations: tuple[str, ...]

    @property
    def max_eq_violation(self) -> float:
        return float(np.max(np.abs(self.eq_violations), initial=0.0))

    @property
    def min_margin(self) -> float:
        return min(self.cone_margins, default=float("inf"))


def check_feasibility(prog: ConeProgram, point, tol: float = 1e-8) -> FeasibilityReport:
    """Equality residuals and per-block cone margins of ``point``.

    A margin is ``min(x)`` for nonnegative blocks, ``z - ||u||`` for
    Lorentz blocks and the same quantity after the rotation for rotated
    blocks; negative margins are violations.
    """
    x = np.asarray(point, dtype=float)
    if x.shape != (prog.nvar,):
        raise ValueError(f"point has shape {x.shape}, expected ({prog.nvar},)")
    eq = prog.eq_matrix() @ x - prog.eq_rhs
    margins = []
    viol = []
    for i in np.flatnonzero(np.abs(eq) > tol):
        viol.append(f"equality {i}: residual {eq[i]:.3e}")
    for k, blk in enumerate(prog.cones):
        v = x[list(blk.vars)]
        if blk.kind == "nonneg":
            mg = float(np.min(v))
        elif blk.kind == "soc":
            mg = float(v[0] - np.linalg.norm(v[1:]))
        else:
            u, w = v[0], v[1]
            mg = float((u + w) / SQRT2 - np.linalg.norm(np.concatenate([[(u - w) / SQRT2], v[2:]])))
        margins.append(mg)
        if mg < -tol:
            viol.append(f"cone block {k} ({blk.kind}): margin {mg:.3e}")
    return FeasibilityReport(not viol, eq, tuple(margins), tuple(viol))
