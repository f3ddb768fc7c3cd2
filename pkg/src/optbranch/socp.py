"""Primal-dual interior-point solver for second-order cone programs.

Problems are given in the form used by cvxopt's ``conelp``::

    minimize    c'x
    subject to  G x + s = h,   A x = b,   s in K

where ``K`` is a product of a nonnegative orthant of dimension ``dims["l"]``
followed by second-order cones of dimensions ``dims["q"]``.  Components of
``x`` that do not appear in ``G`` are free.

The iteration works on the homogeneous self-dual embedding with
Nesterov-Todd scaling and a Mehrotra predictor-corrector step, so an
infeasible or unbounded problem ends with a certificate instead of an
iteration limit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"
NUMERICAL_FAILURE = "numerical_failure"


class ProblemFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    tol_gap: float = 1e-8
    max_iterations: int = 200
    regularization: float = 1e-9
    step_fraction: float = 0.99

    def __post_init__(self):
        for name in ("tol_primal", "tol_dual", "tol_gap", "regularization"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class ConicProblem:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    dims: dict
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.dims = {"l": int(self.dims.get("l", 0)), "q": [int(d) for d in self.dims.get("q", [])]}
        self.validate()

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def cone_size(self) -> int:
        return self.dims["l"] + sum(self.dims["q"])

    def validate(self):
        if self.G.shape[0] != self.h.size:
            raise ProblemFormatError(f"G has {self.G.shape[0]} rows but h has {self.h.size}")
        if self.A.shape[0] != self.b.size:
            raise ProblemFormatError(f"A has {self.A.shape[0]} rows but b has {self.b.size}")
        if self.cone_size != self.h.size:
            raise ProblemFormatError(f"cone dimensions sum to {self.cone_size}, h has {self.h.size}")
        if self.dims["l"] < 0 or any(d < 2 for d in self.dims["q"]):
            raise ProblemFormatError("second-order cones need dimension >= 2")
        if self.names and len(self.names) != self.n:
            raise ProblemFormatError("variable name map does not match c")

    def to_json(self) -> str:
        """Self-describing dump, for cross-checking against another solver."""
        return json.dumps(
            {
                "form": "min c'x s.t. Gx + s = h, Ax = b, s in K",
                "dims": self.dims,
                "c": self.c.tolist(),
                "G": self.G.tolist(),
                "h": self.h.tolist(),
                "A": self.A.tolist(),
                "b": self.b.tolist(),
                "names": list(self.names),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ConicProblem":
        d = json.loads(text)
        return cls(c=d["c"], G=d["G"], h=d["h"], dims=d["dims"], A=d["A"], b=d["b"], names=d.get("names", []))


@dataclass
class ConicSolution:
    status: str
    x: Optional[np.ndarray]
    s: Optional[np.ndarray]
    y: Optional[np.ndarray]
    z: Optional[np.ndarray]
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# --- cone arithmetic -------------------------------------------------------


class _Cones:
    """Index bookkeeping and Jordan-algebra helpers for the product cone.

    Second-order cones of equal dimension are handled together: ``groups``
    maps a dimension ``k`` to an ``(count, k)`` index array into the slack.
    """

    def __init__(self, dims):
        self.l = dims["l"]
        self.q = list(dims["q"])
        self.slices = []
        off = self.l
        starts = {}
        for d in self.q:
            self.slices.append(slice(off, off + d))
            starts.setdefault(d, []).append(off)
            off += d
        self.groups = [np.asarray(st)[:, None] + np.arange(k) for k, st in starts.items()]
        self.degree = self.l + len(self.q)

    def identity(self, size):
        e = np.zeros(size)
        e[: self.l] = 1.0
        for idx in self.groups:
            e[idx[:, 0]] = 1.0
        return e

    def margin(self, u):
        """Smallest 'eigenvalue' of u; positive iff u is interior."""
        vals = [np.inf]
        if self.l:
            vals.append(u[: self.l].min())
        for idx in self.groups:
            U = u[idx]
            vals.append(np.min(U[:, 0] - np.linalg.norm(U[:, 1:], axis=1)))
        return min(vals)

    def product(self, u, v):
        w = np.empty_like(u)
        w[: self.l] = u[: self.l] * v[: self.l]
        for idx in self.groups:
            U, V = u[idx], v[idx]
            w[idx[:, 0]] = np.einsum("ij,ij->i", U, V)
            w[idx[:, 1:]] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        return w

    def divide(self, lam, r):
        """Solve lam o x = r for x."""
        x = np.empty_like(r)
        x[: self.l] = r[: self.l] / lam[: self.l]
        for idx in self.groups:
            L, R = lam[idx], r[idx]
            l0, l1, r0, r1 = L[:, 0], L[:, 1:], R[:, 0], R[:, 1:]
            det = l0 * l0 - np.einsum("ij,ij->i", l1, l1)
            x0 = (l0 * r0 - np.einsum("ij,ij->i", l1, r1)) / det
            x[idx[:, 0]] = x0
            x[idx[:, 1:]] = (r1 - x0[:, None] * l1) / l0[:, None]
        return x

    def max_step(self, u, du):
        """Largest alpha with u + alpha*du in the cone (u interior)."""
        alpha = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if neg.any():
                alpha = min(alpha, np.min(-u[: self.l][neg] / du[: self.l][neg]))
        for idx in self.groups:
            alpha = min(alpha, _soc_steps(u[idx], du[idx]))
        return alpha


def _jdot(U, V):
    return U[:, 0] * V[:, 0] - np.einsum("ij,ij->i", U[:, 1:], V[:, 1:])


def _det_roots(U) -> np.ndarray:
    """sqrt(u0^2 - |u1|^2) per row, factored to limit cancellation; raises at the boundary."""
    n1 = np.linalg.norm(U[:, 1:], axis=1)
    det = (U[:, 0] - n1) * (U[:, 0] + n1)
    if not np.all(det > 0):
        raise FloatingPointError("iterate reached the cone boundary")
    return np.sqrt(det)


def _soc_steps(U, D) -> float:
    """Largest step keeping every row of U + alpha D in its cone."""
    a = _jdot(D, D)
    b = 2.0 * _jdot(U, D)
    c = _jdot(U, U)
    if np.any(c <= 0):
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
        q = -0.5 * (b + np.copysign(sq, b))
        lin = np.where((np.abs(a) < 1e-300) & (b < 0), -c / b, np.inf)
        r1 = np.where((disc >= 0) & (q != 0) & (np.abs(a) >= 1e-300), q / a, np.inf)
        r2 = np.where((disc >= 0) & (q != 0) & (np.abs(a) >= 1e-300), c / q, np.inf)
    cand = np.concatenate([lin, r1, r2])
    cand = cand[cand > 0]
    return float(cand.min()) if cand.size else np.inf


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lam."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        l = cones.l
        self.d = np.sqrt(s[:l] / z[:l])
        self.blocks = []  # per group: (count, k, k) stacks of W and W^-1
        self.inv_blocks = []
        lam = np.empty_like(s)
        lam[:l] = np.sqrt(s[:l] * z[:l])
        for idx in cones.groups:
            S, Z = s[idx], z[idx]
            sn, zn = _det_roots(S), _det_roots(Z)
            sb, zb = S / sn[:, None], Z / zn[:, None]
            gamma = np.sqrt(0.5 * (1.0 + np.einsum("ij,ij->i", sb, zb)))
            wb = sb.copy()
            wb[:, 0] += zb[:, 0]
            wb[:, 1:] -= zb[:, 1:]
            wb /= 2.0 * gamma[:, None]
            eta = np.sqrt(sn / zn)
            w0, w1 = wb[:, 0], wb[:, 1:]
            cnt, k = idx.shape
            core = np.empty((cnt, k, k))
            core[:, 0, 0] = w0
            core[:, 0, 1:] = w1
            core[:, 1:, 0] = w1
            core[:, 1:, 1:] = np.eye(k - 1) + np.einsum("ci,cj->cij", w1, w1) / (1.0 + w0)[:, None, None]
            inv = core.copy()
            inv[:, 0, 1:] = -w1
            inv[:, 1:, 0] = -w1
            W = eta[:, None, None] * core
            Winv = inv / eta[:, None, None]
            self.blocks.append(W)
            self.inv_blocks.append(Winv)
            lam[idx] = np.einsum("cij,cj->ci", W, Z)
        self.lam = lam

    def inverse_matrix(self):
        """W^-1 as a sparse block-diagonal matrix."""
        l = self.cones.l
        rows, cols, vals = [np.arange(l)], [np.arange(l)], [1.0 / self.d]
        for idx, Wi in zip(self.cones.groups, self.inv_blocks):
            k = idx.shape[1]
            rows.append(np.repeat(idx, k, axis=1).ravel())
            cols.append(np.tile(idx, (1, k)).ravel())
            vals.append(Wi.ravel())
        m = self.lam.size
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))

    def _apply(self, diag, stacks, u):
        out = np.empty_like(u)
        l = self.cones.l
        out[:l] = diag[:, None] * u[:l] if u.ndim == 2 else diag * u[:l]
        sub = "cij,cjn->cin" if u.ndim == 2 else "cij,cj->ci"
        for idx, M in zip(self.cones.groups, stacks):
            out[idx] = np.einsum(sub, M, u[idx])
        return out

    def apply(self, u):
        return self._apply(self.d, self.blocks, u)

    def apply_inv(self, u):
        return self._apply(1.0 / self.d, self.inv_blocks, u)


DENSE_MAX = 400  # KKT size up to which a dense factorization is used


class _KKT:
    """Solver for [[0,A',G'],[A,0,0],[G,0,-W'W]] through the scaled system
    [[0,A',B'],[A,0,0],[B,0,-I]] with B = W^-1 G and u = W z, which avoids the
    squared conditioning of the normal equations.  The system is factored
    sparse with static regularization, which iterative refinement removes."""

    def __init__(self, A, G, scaling: _Scaling, reg: float, refine: int = 3):
        self.A, self.G = A, G
        self.scaling = scaling
        self.refine = refine
        n, p, m = A.shape[1], A.shape[0], G.shape[0]
        self.n, self.p = n, p
        if n + p + m <= DENSE_MAX:
            # small systems: sparse bookkeeping costs more than a dense LU
            Ad = A.toarray() if sp.issparse(A) else A
            B = scaling.apply_inv(G.toarray() if sp.issparse(G) else G)
            K = np.block(
                [
                    [reg * np.eye(n), Ad.T, B.T],
                    [Ad, -reg * np.eye(p), np.zeros((p, m))],
                    [B, np.zeros((m, p)), -(1.0 + reg) * np.eye(m)],
                ]
            )
            lu = la.lu_factor(K, check_finite=True)
            self._solve = lambda rhs: la.lu_solve(lu, rhs)
            return
        B = scaling.inverse_matrix() @ G
        K = sp.bmat(
            [
                [sp.identity(n) * reg, A.T, B.T],
                [A, sp.identity(p) * -reg, None],
                [B, None, sp.identity(m) * -(1.0 + reg)],
            ],
            format="csc",
        )
        try:
            self._solve = spla.splu(K).solve
        except RuntimeError as exc:
            raise la.LinAlgError(str(exc)) from None

    def _reduced(self, r1, r2, r3):
        W = self.scaling
        sol = self._solve(np.concatenate([r1, r2, W.apply_inv(r3)]))
        n, p = self.n, self.p
        return sol[:n], sol[n : n + p], W.apply_inv(sol[n + p :])

    def _residual(self, r1, r2, r3, x, y, z):
        W = self.scaling
        return (
            r1 - self.A.T @ y - self.G.T @ z,
            r2 - self.A @ x,
            r3 - self.G @ x + W.apply(W.apply(z)),
        )

    def solve(self, r1, r2, r3):
        """Solve [[0,A',G'],[A,0,0],[G,0,-W'W]] (x,y,z) = (r1,r2,r3)."""
        x, y, z = self._reduced(r1, r2, r3)
        scale = 1.0 + max(np.abs(r1).max(initial=0), np.abs(r2).max(initial=0), np.abs(r3).max(initial=0))
        for _ in range(self.refine):
            e1, e2, e3 = self._residual(r1, r2, r3, x, y, z)
            err = max(np.abs(e1).max(initial=0), np.abs(e2).max(initial=0), np.abs(e3).max(initial=0))
            if err <= 1e-14 * scale:
                break
            dx, dy, dz = self._reduced(e1, e2, e3)
            x, y, z = x + dx, y + dy, z + dz
        return x, y, z


def solve(prob: ConicProblem, settings: Optional[SolverSettings] = None) -> ConicSolution:
    """Solve ``prob``; see the module docstring for the problem form.

    The returned status is one of ``optimal``, ``infeasible`` (``y, z`` hold a
    Farkas certificate with ``b'y + h'z = -1``), ``unbounded`` (``x, s`` hold an
    improving ray with ``c'x = -1``), ``max_iter`` or ``numerical_failure``.
    """
    settings = settings or SolverSettings()
    cones = _Cones(prob.dims)
    c, G, h, A, b = prob.c, prob.G, prob.h, prob.A, prob.b
    n, m, p = prob.n, h.size, b.size
    e = cones.identity(m)
    if n + m + p <= DENSE_MAX:
        As, Gs = A, G
    else:
        As, Gs = sp.csr_matrix(A), sp.csr_matrix(G)

    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    def failure(status, it, x=None, s=None, y=None, z=None):
        return ConicSolution(status, x, s, y, z, np.nan, np.nan, np.inf, np.inf, np.inf, it)

    # starting point: least-squares primal and least-norm dual, pushed into the cone
    try:
        kkt = _KKT(As, Gs, _Scaling(cones, e.copy(), e.copy()), settings.regularization)
        x, _, zz = kkt.solve(np.zeros(n), b, h)
        s = -zz
        _, y, z = kkt.solve(-c, np.zeros(p), np.zeros(m))
    except (la.LinAlgError, ValueError):
        return failure(NUMERICAL_FAILURE, 0)
    for vec in (s, z):
        alpha = -cones.margin(vec)
        if alpha >= -1e-8 * max(1.0, np.abs(vec).max(initial=0.0)):
            vec += (1.0 + alpha) * e
    tau = kappa = 1.0
    best, best_score = None, np.inf

    def stalled(it):
        # precision floor before the tolerances were met: hand back the best iterate for inspection
        if best is not None:
            return replace(best, status=NUMERICAL_FAILURE, iterations=it)
        return failure(NUMERICAL_FAILURE, it, x / tau, s / tau, y / tau, z / tau)

    for it in range(settings.max_iterations + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        cx, by, hz = c @ x, b @ y, h @ z
        rt = kappa + cx + by + hz
        sz = s @ z
        mu = (sz + tau * kappa) / (cones.degree + 1)

        pcost, dcost = cx / tau, -(by + hz) / tau
        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        gap = sz / tau**2
        relgap = gap / max(abs(pcost), abs(dcost), 1.0)
        current = ConicSolution(OPTIMAL, x / tau, s / tau, y / tau, z / tau, pcost, dcost, pres, dres, gap, it)
        if pres <= settings.tol_primal and dres <= settings.tol_dual and (gap <= settings.tol_gap or relgap <= settings.tol_gap):
            return current
        # rounding can make the residuals grow again near the optimum; remember the best iterate
        score = max(pres / settings.tol_primal, dres / settings.tol_dual, min(gap, relgap) / settings.tol_gap)
        if score < best_score:
            best, best_score = current, score

        if hz + by < 0:
            pinf = np.linalg.norm(A.T @ y + G.T @ z) / resx0 / (-(hz + by))
            if pinf <= settings.tol_primal:
                scale = -(hz + by)
                return ConicSolution(INFEASIBLE, None, None, y / scale, z / scale, np.inf, np.inf, pinf, np.inf, np.inf, it)
        if cx < 0:
            dinf = max(np.linalg.norm(A @ x) / resy0, np.linalg.norm(G @ x + s) / resz0) / (-cx)
            if dinf <= settings.tol_dual:
                return ConicSolution(UNBOUNDED, x / -cx, s / -cx, None, None, -np.inf, -np.inf, np.inf, dinf, np.inf, it)

        if it == settings.max_iterations:
            break

        try:
            W = _Scaling(cones, s, z)
            kkt = _KKT(As, Gs, W, settings.regularization)
            x1, y1, z1 = kkt.solve(-c, b, h)
        except (la.LinAlgError, ValueError, FloatingPointError, ZeroDivisionError):
            return stalled(it)
        lam = W.lam
        denom = c @ x1 + b @ y1 + h @ z1 - kappa / tau

        def newton(frac, rs, rk):
            d1, d2, d3, d4 = -frac * rx, -frac * ry, -frac * rz, -frac * rt
            u = cones.divide(lam, rs)
            x2, y2, z2 = kkt.solve(d1, d2, d3 - W.apply(u))
            dtau = (d4 - rk / tau - c @ x2 - b @ y2 - h @ z2) / denom
            dx, dy, dz = x2 + dtau * x1, y2 + dtau * y1, z2 + dtau * z1
            ds = d3 + h * dtau - G @ dx  # primal equation kept exact; rounding goes to centrality
            dkappa = (rk - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_length(dz, ds, dtau, dkappa):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        lamlam = cones.product(lam, lam)
        aff = newton(1.0, -lamlam, -tau * kappa)
        alpha_aff = min(1.0, step_length(*aff[2:]))
        sigma = (1.0 - alpha_aff) ** 3

        dsa = W.apply_inv(aff[3])
        dza = W.apply(aff[2])
        rs = -lamlam - cones.product(dsa, dza) + sigma * mu * e
        rk = -tau * kappa - aff[4] * aff[5] + sigma * mu
        dx, dy, dz, ds, dtau, dkappa = newton(1.0 - sigma, rs, rk)
        alpha = min(1.0, settings.step_fraction * step_length(dz, ds, dtau, dkappa))
        if not np.isfinite(alpha) or alpha < 1e-12:
            return stalled(it)

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            return stalled(it)

    return ConicSolution(MAX_ITER, x / tau, s / tau, y / tau, z / tau, c @ x / tau, -(b @ y + h @ z) / tau, pres, dres, gap, settings.max_iterations)
