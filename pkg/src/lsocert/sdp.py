"""Primal-dual interior-point solver for conic programs with free, nonnegative
and positive-semidefinite blocks.

Standard form:

    minimize    c' x
    subject to  A x = b,   x in K = free(n0) x nonneg(n1) x psd(m1) x ...

PSD blocks are vectorized with sqrt(2) scaling on off-diagonal entries
(svec), so the vector inner product equals the matrix trace inner product
and the dual is exact.

The engine runs a Mehrotra predictor-corrector iteration with
Nesterov-Todd scaling inside a homogeneous self-dual embedding

    A x           = b tau
    A' y + s      = c tau
    -c' x + b' y  = kappa

so primal or dual infeasibility surfaces as a certificate (tau -> 0 with
kappa > 0) instead of a divergent iterate.  Free variables are eliminated
exactly against the equality system before the embedding (their dual slack
is identically zero), and dependent equality rows are removed by
rank-revealing QR.  All linear algebra is dense: the Gram blocks produced
by the SOS layer stay small at desk scale, and a dense Cholesky of the
Schur complement is both simpler and faster there.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

_TRACE = os.environ.get("LSOCERT_SDP_TRACE") == "1"

# ----------------------------------------------------------------------
# program description
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Cone:
    kind: str  # "free" | "nonneg" | "psd"
    size: int  # vector length (free/nonneg) or matrix side (psd)

    def __post_init__(self):
        if self.kind not in ("free", "nonneg", "psd"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.size <= 0:
            raise ValueError("cone size must be positive")

    @property
    def veclen(self) -> int:
        if self.kind == "psd":
            return self.size * (self.size + 1) // 2
        return self.size


def free(n: int) -> Cone:
    return Cone("free", n)


def nonneg(n: int) -> Cone:
    return Cone("nonneg", n)


def psd(n: int) -> Cone:
    return Cone("psd", n)


@dataclass
class ConicProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: list[Cone]

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        total = sum(c.veclen for c in self.cones)
        if self.c.shape[0] != total:
            raise ValueError(f"c has length {self.c.shape[0]}, cones describe {total}")
        if self.A.size == 0:
            self.A = np.zeros((0, total))
        if self.A.shape != (self.b.shape[0], total):
            raise ValueError(f"A shape {self.A.shape} inconsistent with b/cones")

    @property
    def block_slices(self) -> list[slice]:
        out = []
        ofs = 0
        for cone in self.cones:
            out.append(slice(ofs, ofs + cone.veclen))
            ofs += cone.veclen
        return out


@dataclass(frozen=True)
class SolverSettings:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.99
    presolve_pivot_tol: float = 1e-10

    def __post_init__(self):
        if min(self.tol_gap, self.tol_feas, self.step_fraction) <= 0 or self.max_iter <= 0:
            raise ValueError("solver settings must be positive")


@dataclass
class ConicSolution:
    status: str  # optimal | primal_infeasible | dual_infeasible | max_iter | numerical_failure
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    objective: float
    gap: float
    primal_infeas: float
    dual_infeas: float
    iterations: int
    eliminated_rows: list[int] = field(default_factory=list)


# ----------------------------------------------------------------------
# symmetric vectorization
# ----------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_svec_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _svec_index(n: int):
    """(rows, cols, scale) arrays for the upper-triangle svec of side n."""
    if n not in _svec_cache:
        rows, cols = np.triu_indices(n)
        scale = np.where(rows == cols, 1.0, _SQRT2)
        _svec_cache[n] = (rows, cols, scale)
    return _svec_cache[n]


def svec(M: np.ndarray) -> np.ndarray:
    n = M.shape[-1]
    rows, cols, scale = _svec_index(n)
    return M[..., rows, cols] * scale


def smat(v: np.ndarray, n: int) -> np.ndarray:
    rows, cols, scale = _svec_index(n)
    vals = np.asarray(v) / scale
    M = np.zeros(v.shape[:-1] + (n, n))
    M[..., rows, cols] = vals
    M[..., cols, rows] = vals
    return M


# ----------------------------------------------------------------------
# cone-wise helpers for the HSD core (nonneg + psd blocks only)
# ----------------------------------------------------------------------


class _ConeOps:
    """Blockwise operations over the proper-cone part of the variable vector."""

    def __init__(self, cones: list[Cone]):
        self.cones = cones
        self.slices = []
        ofs = 0
        for c in cones:
            self.slices.append(slice(ofs, ofs + c.veclen))
            ofs += c.veclen
        self.dim = ofs
        self.degree = sum(c.size for c in cones)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        for cone, sl in zip(self.cones, self.slices):
            if cone.kind == "nonneg":
                e[sl] = 1.0
            else:
                e[sl] = svec(np.eye(cone.size))
        return e

    def in_cone(self, v: np.ndarray, tol: float = 0.0) -> bool:
        for cone, sl in zip(self.cones, self.slices):
            if cone.kind == "nonneg":
                if np.min(v[sl], initial=np.inf) < -tol:
                    return False
            else:
                w = np.linalg.eigvalsh(smat(v[sl], cone.size))
                if w.min() < -tol:
                    return False
        return True


def _safe_factor(M: np.ndarray) -> np.ndarray:
    """Square factor L with L L' = M (eigenvalue-clipped when Cholesky fails).

    Near the central-path boundary the iterates are PD in exact arithmetic
    but may lose definiteness to roundoff; clipping keeps the scaling usable.
    """
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(M)
        floor = max(w.max(), 0.0) * 1e-14 + 1e-300
        return V * np.sqrt(np.clip(w, floor, None))


class _Scaling:
    """Nesterov-Todd scaling for one iterate (nonneg weights + psd factors)."""

    def __init__(self, ops: _ConeOps, x: np.ndarray, s: np.ndarray):
        self.ops = ops
        self.w = {}  # nonneg: sqrt(x/s)
        self.R = {}  # psd: lam = R^{-1} X R^{-T} = R' S R
        self.Rinv = {}
        self.lam = np.zeros(ops.dim)
        for idx, (cone, sl) in enumerate(zip(ops.cones, ops.slices)):
            if cone.kind == "nonneg":
                wi = np.sqrt(x[sl] / s[sl])
                self.w[idx] = wi
                self.lam[sl] = np.sqrt(x[sl] * s[sl])
            else:
                n = cone.size
                X = smat(x[sl], n)
                S = smat(s[sl], n)
                Lx = _safe_factor(X)
                Ls = _safe_factor(S)
                U, sig, Vt = np.linalg.svd(Ls.T @ Lx)
                sig = np.maximum(sig, 1e-150)
                R = Lx @ Vt.T / np.sqrt(sig)
                self.R[idx] = R
                self.Rinv[idx] = np.linalg.inv(R)
                self.lam[sl] = svec(np.diag(sig))

    # W u = svec(R' mat(u) R); W^{-T} u = svec(R^{-1} mat(u) R^{-T})
    def apply_W(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        for idx, (cone, sl) in enumerate(zip(self.ops.cones, self.ops.slices)):
            if cone.kind == "nonneg":
                out[sl] = self.w[idx] * u[sl]
            else:
                R = self.R[idx]
                out[sl] = svec(R.T @ smat(u[sl], cone.size) @ R)
        return out

    def apply_WinvT(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        for idx, (cone, sl) in enumerate(zip(self.ops.cones, self.ops.slices)):
            if cone.kind == "nonneg":
                out[sl] = u[sl] / self.w[idx]
            else:
                Ri = self.Rinv[idx]
                out[sl] = svec(Ri @ smat(u[sl], cone.size) @ Ri.T)
        return out

    def apply_Winv(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        for idx, (cone, sl) in enumerate(zip(self.ops.cones, self.ops.slices)):
            if cone.kind == "nonneg":
                out[sl] = u[sl] / self.w[idx]
            else:
                Ri = self.Rinv[idx]
                out[sl] = svec(Ri.T @ smat(u[sl], cone.size) @ Ri)
        return out

    def apply_Hinv(self, u: np.ndarray) -> np.ndarray:
        """H^{-1} = W W' with T = R R': u -> svec(T mat(u) T)."""
        out = np.empty_like(u)
        for idx, (cone, sl) in enumerate(zip(self.ops.cones, self.ops.slices)):
            if cone.kind == "nonneg":
                out[sl] = (self.w[idx] ** 2) * u[sl]
            else:
                R = self.R[idx]
                T = R @ R.T
                out[sl] = svec(T @ smat(u[sl], cone.size) @ T)
        return out

    def scaled_rows(self, A: np.ndarray) -> np.ndarray:
        """Row-wise W' A' as a matrix, so that A H^{-1} A' = (W'A')' (W'A')."""
        p = A.shape[0]
        out = np.empty((p, self.ops.dim))
        for idx, (cone, sl) in enumerate(zip(self.ops.cones, self.ops.slices)):
            if cone.kind == "nonneg":
                out[:, sl] = A[:, sl] * self.w[idx][None, :]
            else:
                mats = smat(A[:, sl], cone.size)  # (p, n, n)
                R = self.R[idx]
                out[:, sl] = svec(R.T @ mats @ R)
        return out


def _jordan_product(ops: _ConeOps, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    for cone, sl in zip(ops.cones, ops.slices):
        if cone.kind == "nonneg":
            out[sl] = u[sl] * v[sl]
        else:
            U = smat(u[sl], cone.size)
            V = smat(v[sl], cone.size)
            out[sl] = svec(0.5 * (U @ V + V @ U))
    return out


def _jordan_solve_lambda(ops: _ConeOps, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve lam o g = d for g, with lam the (diagonal) scaled point."""
    out = np.empty_like(d)
    for cone, sl in zip(ops.cones, ops.slices):
        if cone.kind == "nonneg":
            out[sl] = d[sl] / lam[sl]
        else:
            lv = smat(lam[sl], cone.size).diagonal()
            D = smat(d[sl], cone.size)
            out[sl] = svec(2.0 * D / (lv[:, None] + lv[None, :]))
    return out


def _step_to_boundary(ops: _ConeOps, v: np.ndarray, dv: np.ndarray) -> float:
    """sup { a >= 0 : v + a dv in K } for v strictly interior."""
    alpha = np.inf
    for cone, sl in zip(ops.cones, ops.slices):
        if cone.kind == "nonneg":
            neg = dv[sl] < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-v[sl][neg] / dv[sl][neg]))
        else:
            n = cone.size
            V = smat(v[sl], n)
            L = _safe_factor(V)
            M = np.linalg.solve(L, smat(dv[sl], n))
            M = np.linalg.solve(L, M.T)
            wmin = np.linalg.eigvalsh(0.5 * (M + M.T)).min()
            if wmin < 0:
                alpha = min(alpha, -1.0 / wmin)
    return alpha


# ----------------------------------------------------------------------
# main entry point
# ----------------------------------------------------------------------


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve a conic program; deterministic for identical inputs."""
    settings = settings or SolverSettings()
    n_total = prog.c.shape[0]
    slices = prog.block_slices

    free_cols = np.concatenate(
        [np.arange(sl.start, sl.stop) for cone, sl in zip(prog.cones, slices) if cone.kind == "free"]
        or [np.array([], dtype=int)]
    ).astype(int)
    cone_cols = np.concatenate(
        [np.arange(sl.start, sl.stop) for cone, sl in zip(prog.cones, slices) if cone.kind != "free"]
        or [np.array([], dtype=int)]
    ).astype(int)
    cone_list = [c for c in prog.cones if c.kind != "free"]
    ops = _ConeOps(cone_list)

    A_f = prog.A[:, free_cols]
    A_c = prog.A[:, cone_cols]
    c_f = prog.c[free_cols]
    c_c = prog.c[cone_cols]
    p = prog.A.shape[0]

    def finish(status, x_c, y_red, s_c, iters, elim, Q2=None, y0=None, qr_f=None):
        x = np.zeros(n_total)
        s = np.zeros(n_total)
        y = np.zeros(p)
        if len(cone_cols):
            x[cone_cols] = x_c
            s[cone_cols] = s_c
        if status in ("optimal", "max_iter", "numerical_failure"):
            if len(free_cols):
                rhs = prog.b - A_c @ x_c
                x[free_cols] = _lstsq_via_qr(qr_f, rhs)
            if Q2 is not None and y_red is not None and Q2.shape[1] == len(y_red):
                y = Q2 @ y_red
            if y0 is not None:
                y = y + y0
        else:
            # infeasibility certificates live in the reduced space
            if Q2 is not None and y_red is not None and Q2.shape[1] == len(y_red):
                y = Q2 @ y_red
        pin, din, gap = residuals(prog, ConicSolution(
            status=status, x=x, y=y, s=s, objective=float(prog.c @ x),
            gap=0.0, primal_infeas=0.0, dual_infeas=0.0, iterations=iters,
        ))
        return ConicSolution(
            status=status,
            x=x,
            y=y,
            s=s,
            objective=float(prog.c @ x),
            gap=gap,
            primal_infeas=pin,
            dual_infeas=din,
            iterations=iters,
            eliminated_rows=elim,
        )

    # ---- free-variable elimination -----------------------------------
    obj_const = 0.0
    y0 = None
    Q2 = None
    qr_f = None
    if len(free_cols):
        qr_f = sla.qr(A_f, mode="full", pivoting=True)
        Q, Rf, piv = qr_f
        rank_f = _qr_rank(Rf, settings.presolve_pivot_tol)
        # dual feasibility requires A_f' y = c_f to be solvable
        y0, res_norm = _lstsq_dual(qr_f, rank_f, c_f)
        if res_norm > 1e-9 * (1.0 + np.linalg.norm(c_f)):
            sol = finish("dual_infeasible", np.zeros(ops.dim), None, np.zeros(ops.dim), 0, [])
            return sol
        Q2 = Q[:, rank_f:]
        A_red = Q2.T @ A_c if ops.dim else np.zeros((Q2.shape[1], 0))
        b_red = Q2.T @ prog.b
        c_red = c_c - A_c.T @ y0
        obj_const = float(y0 @ prog.b)
    else:
        Q2 = np.eye(p)
        A_red = A_c
        b_red = prog.b
        c_red = c_c

    # ---- pure-free program (no cone part) ----------------------------
    if ops.dim == 0:
        feasible = np.linalg.norm(b_red) <= settings.tol_feas * (1 + np.linalg.norm(prog.b))
        if not feasible:
            return finish("primal_infeasible", np.zeros(0), None, np.zeros(0), 0, [], Q2=Q2)
        return finish("optimal", np.zeros(0), np.zeros(Q2.shape[1]), np.zeros(0), 0, [],
                      Q2=Q2, y0=y0, qr_f=qr_f)

    # ---- drop dependent equality rows ---------------------------------
    ref_scale = max(1.0, float(np.abs(prog.A).max(initial=0.0)))
    A_red, b_red, keep, elim, consistent = _drop_dependent_rows(
        A_red, b_red, settings.presolve_pivot_tol, ref_scale
    )
    if not consistent:
        return finish("primal_infeasible", np.zeros(ops.dim), None, np.zeros(ops.dim), 0, elim, Q2=Q2)
    Q2k = Q2[:, keep]

    core = _scaled_core_with_restarts(c_red, A_red, b_red, ops, settings)

    y_red = core.y
    return finish(core.status, core.x, y_red, core.s, core.iterations, elim, Q2=Q2k, y0=y0, qr_f=qr_f)


def _equilibrate(c, A, b, ops: _ConeOps):
    """Ruiz equilibration with block-uniform column scales (cone preserving).

    PSD blocks must be scaled by a single positive scalar (a congruence with
    a multiple of the identity) or the cone structure would be destroyed.
    """
    p, n = A.shape
    d_r = np.ones(p)
    d_c = np.ones(n)
    if p and n:
        As = A.copy()
        for _ in range(10):
            row_max = np.max(np.abs(As), axis=1)
            row_max[row_max == 0] = 1.0
            r = 1.0 / np.sqrt(row_max)
            col_scale = np.ones(n)
            for cone, sl in zip(ops.cones, ops.slices):
                blk_max = np.max(np.abs(As[:, sl])) if As[:, sl].size else 0.0
                if blk_max == 0:
                    blk_max = 1.0
                col_scale[sl] = 1.0 / np.sqrt(blk_max)
            As = As * r[:, None] * col_scale[None, :]
            d_r *= r
            d_c *= col_scale
    c_s = c * d_c
    b_s = b * d_r
    sig_c = max(1.0, np.max(np.abs(c_s), initial=0.0))
    sig_b = max(1.0, np.max(np.abs(b_s), initial=0.0))
    return (
        c_s / sig_c,
        A * d_r[:, None] * d_c[None, :],
        b_s / sig_b,
        d_r,
        d_c,
        sig_b,
        sig_c,
    )


def _scaled_core_with_restarts(c, A, b, ops: _ConeOps, settings: SolverSettings) -> _CoreResult:
    """Equilibrate, run the HSD core, retry from other start points on failure."""
    c_s, A_s, b_s, d_r, d_c, sig_b, sig_c = _equilibrate(c, A, b, ops)
    attempts = (
        dict(init_scale=1.0, step_fraction=settings.step_fraction),
        dict(init_scale=100.0, step_fraction=settings.step_fraction),
        dict(init_scale=0.01, step_fraction=min(settings.step_fraction, 0.95)),
        dict(init_scale=10.0, step_fraction=0.9),
    )
    best = None
    for attempt in attempts:
        local = SolverSettings(
            tol_gap=settings.tol_gap,
            tol_feas=settings.tol_feas,
            max_iter=settings.max_iter,
            step_fraction=attempt["step_fraction"],
            presolve_pivot_tol=settings.presolve_pivot_tol,
        )
        core = _hsd_core(c_s, A_s, b_s, ops, local, init_scale=attempt["init_scale"])
        if (
            best is None
            or core.status == "optimal"
            or (
                best.status not in ("optimal", "primal_infeasible", "dual_infeasible")
                and (
                    core.status in ("primal_infeasible", "dual_infeasible")
                    or core.merit < best.merit
                )
            )
        ):
            best = core
        if core.status in ("optimal", "primal_infeasible", "dual_infeasible"):
            break
    # undo the scaling on the selected iterate
    x = best.x * d_c * sig_b
    y = best.y * d_r * sig_c
    s = (best.s / d_c) * sig_c
    return _CoreResult(best.status, x, y, s, best.iterations)


def _qr_rank(R: np.ndarray, tol: float, ref_scale: float | None = None) -> int:
    if R.size == 0:
        return 0
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0:
        return 0
    # ref_scale guards against projected matrices that are pure roundoff:
    # their own largest pivot must not set the yardstick
    threshold = tol * (d[0] if ref_scale is None else max(d[0], ref_scale))
    return int(np.sum(d > threshold))


def _lstsq_via_qr(qr_f, rhs: np.ndarray) -> np.ndarray:
    Q, R, piv = qr_f
    rank = _qr_rank(R, 1e-12)
    nf = R.shape[1]
    z = Q.T[:rank] @ rhs
    sol_p = sla.solve_triangular(R[:rank, :rank], z, lower=False)
    x = np.zeros(nf)
    x[piv[:rank]] = sol_p
    return x


def _lstsq_dual(qr_f, rank: int, c_f: np.ndarray):
    """Minimum-norm y0 with A_f' y0 ~= c_f, plus the residual norm."""
    Q, R, piv = qr_f
    cp = c_f[piv[:rank]]
    w = sla.solve_triangular(R[:rank, :rank].T, cp, lower=True)
    y0 = Q[:, :rank] @ w
    res = np.linalg.norm(R[:rank, rank:].T @ w - c_f[piv[rank:]]) if R.shape[1] > rank else 0.0
    return y0, res


def _drop_dependent_rows(A: np.ndarray, b: np.ndarray, pivot_tol: float, ref_scale: float = 1.0):
    """Rank-revealing QR on A' selects independent rows; checks b consistency."""
    p = A.shape[0]
    if p == 0:
        return A, b, np.array([], dtype=int), [], True
    Q, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
    rank = _qr_rank(R, pivot_tol, ref_scale)
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    if rank == p:
        return A, b, np.arange(p), [], True
    A_keep = A[keep]
    b_keep = b[keep]
    # dropped rows must be consistent combinations of the kept ones
    if len(drop):
        W, *_ = np.linalg.lstsq(A_keep.T, A[drop].T, rcond=None)
        recon_err = np.abs(W.T @ b_keep - b[drop])
        scale = 1.0 + np.max(np.abs(b)) if b.size else 1.0
        if np.max(recon_err, initial=0.0) > 1e-7 * scale:
            return A_keep, b_keep, keep, list(map(int, drop)), False
    return A_keep, b_keep, keep, list(map(int, drop)), True


# ----------------------------------------------------------------------
# HSD predictor-corrector core (proper cones only)
# ----------------------------------------------------------------------


@dataclass
class _CoreResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    iterations: int
    merit: float = np.inf  # best max(pres, dres, relgap) seen


def _hsd_core(c, A, b, ops: _ConeOps, settings: SolverSettings, init_scale: float = 1.0) -> _CoreResult:
    p = A.shape[0]
    x = init_scale * ops.identity()
    s = init_scale * ops.identity()
    y = np.zeros(p)
    tau = 1.0
    kappa = 1.0
    nu = ops.degree + 1
    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)

    best = None
    best_merit = np.inf
    stall = 0
    e0 = ops.identity()
    it = 0
    for it in range(settings.max_iter):
        res_p = A @ x - b * tau
        res_d = A.T @ y + s - c * tau
        res_g = float(c @ x - b @ y + kappa)
        mu = (float(x @ s) + tau * kappa) / nu

        # convergence bookkeeping on the de-homogenized point
        xh = x / tau
        yh = y / tau
        sh = s / tau
        pres = np.linalg.norm(A @ xh - b) / norm_b
        dres = np.linalg.norm(A.T @ yh + sh - c) / norm_c
        pobj = float(c @ xh)
        dobj = float(b @ yh)
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        merit = max(pres, dres, relgap)
        if merit < 0.99 * best_merit:
            stall = 0
        else:
            stall += 1
        if merit < best_merit:
            best_merit = merit
            best = (xh, yh, sh)
        if _TRACE:
            print(
                f"    [sdp] it={it} pres={pres:.2e} dres={dres:.2e} gap={relgap:.2e} "
                f"mu={mu:.2e} tau={tau:.3e} kappa={kappa:.3e} obj={pobj:.6f}"
            )
        if pres <= settings.tol_feas and dres <= settings.tol_feas and relgap <= settings.tol_gap:
            return _CoreResult("optimal", xh, yh, sh, it, merit)
        if stall >= 15 and best_merit < 1e-4:
            # converged to a double-precision plateau above the tolerances
            return _CoreResult("numerical_failure", *best, it, best_merit)

        # infeasibility certificates from the homogeneous iterate
        by = float(b @ y)
        cx = float(c @ x)
        if by > 0:
            pinf = np.linalg.norm(A.T @ y + s) * norm_b / by
            if pinf <= settings.tol_feas and tau <= 1e-6 * max(1.0, kappa):
                return _CoreResult("primal_infeasible", x, y / by, s, it)
        if cx < 0:
            dinf = np.linalg.norm(A @ x) * norm_c / (-cx)
            if dinf <= settings.tol_feas and tau <= 1e-6 * max(1.0, kappa):
                return _CoreResult("dual_infeasible", x / (-cx), y, s, it)

        try:
            scal = _Scaling(ops, x, s)
        except np.linalg.LinAlgError:
            return _CoreResult("numerical_failure", *best, it, best_merit)

        As = scal.scaled_rows(A)  # W' A' row-wise
        hic = scal.apply_Hinv(c)
        schur = As @ As.T
        factor = None
        if p > 0:
            denom_reg = 0.0
            for attempt in range(4):
                try:
                    factor = sla.cho_factor(
                        schur + denom_reg * np.eye(p), lower=True, check_finite=False
                    )
                    break
                except np.linalg.LinAlgError:
                    denom_reg = max(denom_reg * 100.0, 1e-12 * (1.0 + np.trace(schur) / p))
            if factor is None:
                return _CoreResult("numerical_failure", *best, it, best_merit)

        lam = scal.lam
        lam_lam = _jordan_product(ops, lam, lam)

        def schur_solve(rhs):
            if p == 0:
                return np.zeros(0)
            # iterative refinement keeps the Newton equations accurate once
            # the scaling becomes ill-conditioned near the optimum
            sol = sla.cho_solve(factor, rhs, check_finite=False)
            for _ in range(2):
                resid = rhs - schur @ sol
                sol = sol + sla.cho_solve(factor, resid, check_finite=False)
            return sol

        def solve_kkt(rhs_p, rhs_d, rhs_g, d4, d5):
            g4 = _jordan_solve_lambda(ops, lam, d4)
            wg4 = scal.apply_Winv(g4)
            u1 = scal.apply_Hinv(wg4 - rhs_d)
            y2 = schur_solve(b + A @ hic)
            y1 = schur_solve(rhs_p - A @ u1)
            x2 = scal.apply_Hinv(A.T @ y2) - hic
            x1 = scal.apply_Hinv(A.T @ y1) + u1
            den = float(c @ x2 - b @ y2 - kappa / tau)
            num = rhs_g - float(c @ x1) + float(b @ y1) - d5 / tau
            if abs(den) < 1e-14:
                den = -1e-14
            dtau = num / den
            dy = y1 + dtau * y2
            dx = x1 + dtau * x2
            # recover ds from dual feasibility so that equation holds exactly;
            # the KKT solve error then only perturbs the centering equation
            ds = rhs_d - A.T @ dy + c * dtau
            dkappa = (d5 - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        # predictor (affine scaling direction)
        dx_a, dy_a, ds_a, dtau_a, dkap_a = solve_kkt(
            -res_p, -res_d, -res_g, -lam_lam, -tau * kappa
        )
        alpha_a = _max_step(ops, x, s, tau, kappa, dx_a, ds_a, dtau_a, dkap_a)
        mu_aff = (
            float((x + alpha_a * dx_a) @ (s + alpha_a * ds_a))
            + (tau + alpha_a * dtau_a) * (kappa + alpha_a * dkap_a)
        ) / nu
        # capped Mehrotra heuristic: sigma = 1 would stop all residual progress
        sigma = min(0.8, max(0.0, mu_aff / mu) ** 3)

        # combined corrector step
        corr = _jordan_product(
            ops, scal.apply_WinvT(dx_a), scal.apply_W(ds_a)
        )
        d4 = sigma * mu * e0 - lam_lam - corr
        d5 = sigma * mu - tau * kappa - dtau_a * dkap_a
        eta = 1.0 - sigma
        dx, dy, ds, dtau, dkappa = solve_kkt(
            -eta * res_p, -eta * res_d, -eta * res_g, d4, d5
        )
        alpha = settings.step_fraction * _max_step(ops, x, s, tau, kappa, dx, ds, dtau, dkappa)
        alpha = min(1.0, alpha)
        if not np.isfinite(alpha) or alpha <= 1e-10:
            # stalled combined step: fall back to a pure centering direction
            dx, dy, ds, dtau, dkappa = solve_kkt(
                np.zeros_like(res_p), np.zeros_like(res_d), 0.0, mu * e0 - lam_lam, mu - tau * kappa
            )
            alpha = min(
                1.0, settings.step_fraction * _max_step(ops, x, s, tau, kappa, dx, ds, dtau, dkappa)
            )
            if not np.isfinite(alpha) or alpha <= 1e-10:
                return _CoreResult("numerical_failure", *best, it, best_merit)

        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not np.isfinite(x).all() or tau <= 0 or kappa < 0:
            return _CoreResult("numerical_failure", *best, it, best_merit)

    # final iterate was updated after the last loop-top check
    xh, yh, sh = x / tau, y / tau, s / tau
    pres = np.linalg.norm(A @ xh - b) / norm_b
    dres = np.linalg.norm(A.T @ yh + sh - c) / norm_c
    pobj, dobj = float(c @ xh), float(b @ yh)
    relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    merit = max(pres, dres, relgap)
    if merit <= min(settings.tol_feas, settings.tol_gap):
        return _CoreResult("optimal", xh, yh, sh, settings.max_iter, merit)
    if pres <= settings.tol_feas and dres <= settings.tol_feas and relgap <= settings.tol_gap:
        return _CoreResult("optimal", xh, yh, sh, settings.max_iter, merit)
    return _CoreResult("max_iter", *best, settings.max_iter, best_merit)


def _max_step(ops, x, s, tau, kappa, dx, ds, dtau, dkappa) -> float:
    alpha = min(_step_to_boundary(ops, x, dx), _step_to_boundary(ops, s, ds))
    if dtau < 0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0:
        alpha = min(alpha, -kappa / dkappa)
    return alpha


# ----------------------------------------------------------------------
# independent residual recomputation and the text dump format
# ----------------------------------------------------------------------


def residuals(prog: ConicProgram, sol: ConicSolution) -> tuple[float, float, float]:
    """(primal infeasibility, dual infeasibility, complementarity gap).

    Recomputed from scratch: ||Ax - b||, ||A'y + s - c||, |c'x - b'y|.
    """
    rp = float(np.linalg.norm(prog.A @ sol.x - prog.b))
    rd = float(np.linalg.norm(prog.A.T @ sol.y + sol.s - prog.c))
    gap = float(abs(prog.c @ sol.x - prog.b @ sol.y))
    return rp, rd, gap


def dump_program(prog: ConicProgram, path) -> None:
    """Plain-text sparse dump, one line per nonzero, for external cross-checks.

    Entries are in natural matrix units (the svec sqrt(2) scaling is undone);
    for PSD blocks an entry (r, c) with r <= c denotes the symmetric
    coefficient F_rc = F_cr.  Constraint index 0 is the objective; indices
    1..p are equality rows with right-hand sides on `rhs` lines.
    """
    lines = [f"SDPDUMP 1 cones={len(prog.cones)} rows={prog.A.shape[0]}"]
    for i, cone in enumerate(prog.cones):
        lines.append(f"cone {i} {cone.kind} {cone.size}")
    for i, v in enumerate(prog.b):
        if v != 0.0:
            lines.append(f"rhs {i + 1} {float(v)!r}")

    def emit(con_idx, vec):
        ofs = 0
        for bi, cone in enumerate(prog.cones):
            ln = cone.veclen
            blk = vec[ofs : ofs + ln]
            if cone.kind == "psd":
                rows, cols, scale = _svec_index(cone.size)
                vals = blk / scale
                for r, cc, v in zip(rows, cols, vals):
                    if v != 0.0:
                        lines.append(f"entry {con_idx} {bi} {r} {cc} {float(v)!r}")
            else:
                for r, v in enumerate(blk):
                    if v != 0.0:
                        lines.append(f"entry {con_idx} {bi} {r} 0 {float(v)!r}")
            ofs += ln

    emit(0, prog.c)
    for i in range(prog.A.shape[0]):
        emit(i + 1, prog.A[i])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_program(path) -> ConicProgram:
    """Inverse of dump_program (round-trip helper for the dump format)."""
    with open(path) as fh:
        header = fh.readline().split()
        ncones = int(header[2].split("=")[1])
        nrows = int(header[3].split("=")[1])
        cones = []
        entries = []
        rhs = {}
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "cone":
                cones.append(Cone(parts[2], int(parts[3])))
            elif parts[0] == "rhs":
                rhs[int(parts[1])] = float(parts[2])
            elif parts[0] == "entry":
                entries.append(
                    (int(parts[1]), int(parts[2]), int(parts[3]), int(parts[4]), float(parts[5]))
                )
    assert len(cones) == ncones
    total = sum(c.veclen for c in cones)
    offsets = np.cumsum([0] + [c.veclen for c in cones])
    c_vec = np.zeros(total)
    A = np.zeros((nrows, total))
    b = np.zeros(nrows)
    for i, v in rhs.items():
        b[i - 1] = v
    for con, bi, r, cc, v in entries:
        cone = cones[bi]
        if cone.kind == "psd":
            rows, cols, scale = _svec_index(cone.size)
            flat = int(np.nonzero((rows == r) & (cols == cc))[0][0])
            val = v * scale[flat]
        else:
            flat = r
            val = v
        j = offsets[bi] + flat
        if con == 0:
            c_vec[j] = val
        else:
            A[con - 1, j] = val
    return ConicProgram(c=c_vec, A=A, b=b, cones=cones)
