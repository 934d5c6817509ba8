"""Independent ground truth: finite-difference PDE solutions and policy rollouts.

The desirability PDE is linear, so a second-order central-difference
discretization gives a trustworthy reference at desk scale.  Richardson
extrapolation between a grid and its refinement turns the reference into a
certified comparator: the nodewise discretization-error estimate
|psi_h - psi_{h/2}| / 3 (exact for a second-order scheme) bounds how far
the reference may sit from the true solution.

Monte Carlo rollouts integrate the controlled SDE with Euler-Maruyama under
the policy extracted from a candidate desirability and report the realized
cost, an empirical upper bound on the optimal cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from . import _kernels
from ._kernels import build_tables
from ._kernels import _rollout_py
from .errors import OracleError
from .model import SOCProblem, face_axis_value
from .pde import DesirabilityPDE
from .poly import Polynomial


@dataclass
class GridSolution:
    axes: list[np.ndarray]  # per-axis node coordinates (boundaries included)
    values: np.ndarray  # desirability at nodes, shape (len(axes[0]), ...)
    order_note: str = "second-order central differences"
    tol_fd: float | None = None  # Richardson error estimate, when computed

    def nodes(self) -> np.ndarray:
        """All grid nodes as an (npts, dim) array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _boundary_value_maps(problem: SOCProblem, lam: float):
    """Map each axis-aligned face (axis, value) to its terminal-cost polynomial."""
    faces = {}
    for piece in problem.boundary:
        aa = face_axis_value(piece)
        if aa is None:
            raise OracleError("finite differences need axis-aligned boundary faces")
        faces[aa] = piece.terminal_cost
    return faces


def _find_face(faces, axis, value):
    for (ax, val), phi in faces.items():
        if ax == axis and abs(val - value) <= 1e-9 * max(1.0, abs(value)):
            return phi
    raise OracleError(f"no boundary piece covers the face x_{axis} = {value}")


def _peclet_guard(fmax: float, h: float, sigma_min: float, axis: int):
    if sigma_min <= 0:
        raise OracleError("diffusion coefficient must be positive for the FD oracle")
    if fmax * h / sigma_min >= 2.0:
        n_min = int(math.ceil(2.0 * fmax / sigma_min / 2.0)) + 2
        raise OracleError(
            f"cell Peclet criterion |f| h / sigma < 2 violated on axis {axis}; "
            f"use at least ~{n_min} nodes"
        )


def fd_solve_1d(problem: SOCProblem, n: int, dirichlet: tuple[float, float] | None = None) -> GridSolution:
    """Second-order FD solution of the first-exit desirability PDE in 1D.

    `n` counts all grid nodes including both boundaries.  Dirichlet data
    defaults to the desirability transform exp(-phi/lambda) of the boundary
    costs; pass `dirichlet` to override (manufactured-solution tests).
    """
    if problem.space.dim != 1:
        raise OracleError("fd_solve_1d needs a one-dimensional problem")
    if problem.horizon.kind != "first_exit":
        raise OracleError("fd_solve_1d supports first-exit problems only")
    if n < 3:
        raise OracleError("need at least 3 nodes")
    pde = DesirabilityPDE.from_problem(problem)
    lo, hi = problem.domain.bounding_box[0]
    xs = np.linspace(lo, hi, n)
    h = (hi - lo) / (n - 1)
    pts = xs[:, None]
    fvals = problem.dynamics.f[0].evaluate_many(pts)
    qvals = problem.cost.q.evaluate_many(pts)
    svals = pde.sigma_t[0][0].evaluate_many(pts)
    _peclet_guard(np.abs(fvals).max(), h, svals.min(), axis=0)

    if dirichlet is None:
        faces = _boundary_value_maps(problem, pde.lam)
        left = math.exp(-_find_face(faces, 0, lo).evaluate([lo]) / pde.lam)
        right = math.exp(-_find_face(faces, 0, hi).evaluate([hi]) / pde.lam)
    else:
        left, right = dirichlet

    # (q/lam) psi = f psi' + (sigma/2) psi'' on interior nodes
    m = n - 2
    diff = svals[1:-1] / (2 * h * h)
    adv = fvals[1:-1] / (2 * h)
    lower = diff - adv  # couples to psi_{i-1}
    upper = diff + adv  # couples to psi_{i+1}
    center = -2.0 * diff - qvals[1:-1] / pde.lam
    rhs = np.zeros(m)
    rhs[0] -= lower[0] * left
    rhs[-1] -= upper[-1] * right
    ab = np.zeros((3, m))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = center
    ab[2, :-1] = lower[1:]
    try:
        interior = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"singular FD system: {exc}") from exc
    values = np.concatenate([[left], interior, [right]])
    if not np.all(np.isfinite(values)):
        raise OracleError("FD solution contains non-finite values")
    return GridSolution(axes=[xs], values=values)


def fd_solve_2d(problem: SOCProblem, nx: int, ny: int,
                dirichlet=None) -> GridSolution:
    """Five-point-stencil FD solution on a rectangular 2D domain.

    Requires a diagonal diffusion matrix; Dirichlet data is the exact
    (generally non-polynomial) boundary desirability exp(-phi/lambda).
    `dirichlet` may be a callable (x, y) -> value overriding all faces.
    """
    if problem.space.dim != 2:
        raise OracleError("fd_solve_2d needs a two-dimensional problem")
    if problem.horizon.kind != "first_exit":
        raise OracleError("fd_solve_2d supports first-exit problems only")
    pde = DesirabilityPDE.from_problem(problem)
    if not pde.sigma_t[0][1].is_zero() or not pde.sigma_t[1][0].is_zero():
        raise OracleError("fd_solve_2d requires a diagonal diffusion matrix")
    (x_lo, x_hi), (y_lo, y_hi) = problem.domain.bounding_box
    xs = np.linspace(x_lo, x_hi, nx)
    ys = np.linspace(y_lo, y_hi, ny)
    hx = (x_hi - x_lo) / (nx - 1)
    hy = (y_hi - y_lo) / (ny - 1)

    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    f1 = problem.dynamics.f[0].evaluate_many(pts).reshape(nx, ny)
    f2 = problem.dynamics.f[1].evaluate_many(pts).reshape(nx, ny)
    qv = problem.cost.q.evaluate_many(pts).reshape(nx, ny)
    s1 = pde.sigma_t[0][0].evaluate_many(pts).reshape(nx, ny)
    s2 = pde.sigma_t[1][1].evaluate_many(pts).reshape(nx, ny)
    _peclet_guard(np.abs(f1).max(), hx, s1.min(), axis=0)
    _peclet_guard(np.abs(f2).max(), hy, s2.min(), axis=1)

    values = np.zeros((nx, ny))
    if dirichlet is None:
        faces = _boundary_value_maps(problem, pde.lam)

        def bc(axis, fixed, var_pts):
            phi = _find_face(faces, axis, fixed)
            return np.exp(-phi.evaluate_many(var_pts) / pde.lam)

        left_pts = np.stack([np.full(ny, x_lo), ys], axis=1)
        right_pts = np.stack([np.full(ny, x_hi), ys], axis=1)
        bot_pts = np.stack([xs, np.full(nx, y_lo)], axis=1)
        top_pts = np.stack([xs, np.full(nx, y_hi)], axis=1)
        values[0, :] = bc(0, x_lo, left_pts)
        values[-1, :] = bc(0, x_hi, right_pts)
        values[:, 0] = bc(1, y_lo, bot_pts)
        values[:, -1] = bc(1, y_hi, top_pts)
        # corners are never referenced by interior stencils; average the two
        # adjacent face values for cosmetic continuity in exports
        for ci, cx in ((0, x_lo), (-1, x_hi)):
            for cj, cy in ((0, y_lo), (-1, y_hi)):
                vx = bc(0, cx, np.array([[cx, cy]]))[0]
                vy = bc(1, cy, np.array([[cx, cy]]))[0]
                values[ci, cj] = 0.5 * (vx + vy)
    else:
        values[0, :] = [dirichlet(x_lo, y) for y in ys]
        values[-1, :] = [dirichlet(x_hi, y) for y in ys]
        values[:, 0] = [dirichlet(x, y_lo) for x in xs]
        values[:, -1] = [dirichlet(x, y_hi) for x in xs]

    mx, my = nx - 2, ny - 2
    N = mx * my

    def idx(i, j):
        return (i - 1) * my + (j - 1)

    rows, cols, data = [], [], []
    rhs = np.zeros(N)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            k = idx(i, j)
            dx = s1[i, j] / (2 * hx * hx)
            dy = s2[i, j] / (2 * hy * hy)
            ax = f1[i, j] / (2 * hx)
            ay = f2[i, j] / (2 * hy)
            center = -2 * dx - 2 * dy - qv[i, j] / pde.lam
            rows.append(k); cols.append(k); data.append(center)
            for (ii, jj, coef) in (
                (i - 1, j, dx - ax),
                (i + 1, j, dx + ax),
                (i, j - 1, dy - ay),
                (i, j + 1, dy + ay),
            ):
                if ii in (0, nx - 1) or jj in (0, ny - 1):
                    rhs[k] -= coef * values[ii, jj]
                else:
                    rows.append(k); cols.append(idx(ii, jj)); data.append(coef)
    A = sp.csr_matrix((data, (rows, cols)), shape=(N, N))
    try:
        interior = spla.spsolve(A, rhs)
    except RuntimeError as exc:
        raise OracleError(f"singular FD system: {exc}") from exc
    if not np.all(np.isfinite(interior)):
        raise OracleError("FD solution contains non-finite values")
    values[1:-1, 1:-1] = interior.reshape(mx, my)
    return GridSolution(axes=[xs, ys], values=values)


def richardson_1d(problem: SOCProblem, n: int, **kw) -> GridSolution:
    """fd_solve_1d at n and 2n-1 nodes; attaches the nodewise error estimate.

    For a second-order scheme the coarse-grid error is |coarse - fine| / 3
    at shared nodes (fine nodes at even indices); tol_fd is its maximum.
    """
    coarse = fd_solve_1d(problem, n, **kw)
    fine = fd_solve_1d(problem, 2 * n - 1, **kw)
    coarse.tol_fd = float((np.abs(coarse.values - fine.values[::2]) / 3.0).max())
    return coarse


def richardson_2d(problem: SOCProblem, nx: int, ny: int, **kw) -> GridSolution:
    coarse = fd_solve_2d(problem, nx, ny, **kw)
    fine = fd_solve_2d(problem, 2 * nx - 1, 2 * ny - 1, **kw)
    coarse.tol_fd = float((np.abs(coarse.values - fine.values[::2, ::2]) / 3.0).max())
    return coarse


@dataclass
class BoundsReport:
    passed: bool
    tol_fd: float
    max_low_violation: float  # max(low - ref), should be <= tol_fd
    max_up_violation: float  # max(ref - up), should be <= tol_fd
    low_margin: float  # min(ref - low): slack of the lower bound
    up_margin: float  # min(up - ref)
    n_nodes: int


def verify_bounds(low: Polynomial, up: Polynomial, ref: GridSolution,
                  tol_fd: float | None = None) -> BoundsReport:
    """Check low <= ref + tol_fd and up >= ref - tol_fd at every grid node."""
    if tol_fd is None:
        tol_fd = ref.tol_fd if ref.tol_fd is not None else 0.0
    nodes = ref.nodes()
    ref_vals = ref.values.ravel()
    low_vals = low.evaluate_many(nodes)
    up_vals = up.evaluate_many(nodes)
    low_viol = float((low_vals - ref_vals).max())
    up_viol = float((ref_vals - up_vals).max())
    return BoundsReport(
        passed=(low_viol <= tol_fd and up_viol <= tol_fd),
        tol_fd=tol_fd,
        max_low_violation=low_viol,
        max_up_violation=up_viol,
        low_margin=float((ref_vals - low_vals).min()),
        up_margin=float((up_vals - ref_vals).min()),
        n_nodes=len(nodes),
    )


# ----------------------------------------------------------------------
# Monte Carlo rollouts
# ----------------------------------------------------------------------


@dataclass
class RolloutReport:
    mean_cost: float
    stderr: float  # sample std / sqrt(count)
    n_traj: int
    exit_fractions: dict[int, float]  # boundary piece index -> fraction exited there
    mean_exit_time: float
    capped: int  # trajectories that hit the step cap without exiting
    clamped_steps: int  # policy evaluations that hit the desirability clamp
    seed: int
    kernel: str
    costs: np.ndarray = field(repr=False, default=None)


def rollout(problem: SOCProblem, psi: Polynomial, x0, dt: float, n_traj: int,
            seed: int, max_steps: int = 1_000_000, block: int = 8192,
            kernel: str | None = None) -> RolloutReport:
    """Euler-Maruyama rollouts of the policy extracted from `psi`.

    Accumulates q dt + u'Ru dt / 2 until the state first leaves the domain
    (cost of the exiting step prorated linearly, terminal cost at the
    clipped crossing point) or, for finite horizons, until t = T.
    Per-trajectory RNG streams derive from (seed, trajectory index), so
    parallel and serial execution agree exactly.
    """
    if problem.horizon.kind == "average":
        raise OracleError("rollout supports first-exit and finite horizons")
    x0 = np.asarray(x0, dtype=float)
    if not problem.domain.contains(x0[None, :])[0]:
        raise OracleError(f"x0 = {x0} is outside the domain")
    pde = DesirabilityPDE.from_problem(problem)
    tables = build_tables(problem, psi, pde.lam)
    if kernel == "python":
        run_block = _rollout_py.run_block
        kernel_name = "python"
    elif kernel == "cython":
        from . import _kernels as _k

        if _k.KERNEL_NAME != "cython":  # pragma: no cover - env dependent
            raise OracleError("compiled kernel unavailable")
        run_block = _k.run_block
        kernel_name = "cython"
    else:
        run_block = _kernels.run_block
        kernel_name = _kernels.KERNEL_NAME

    if problem.horizon.kind == "finite":
        max_steps = min(max_steps, int(round(problem.horizon.T / dt)))

    g_polys = problem.domain.inequalities
    costs = np.empty(n_traj)
    exit_piece = np.full(n_traj, -1, dtype=int)
    exit_times = np.full(n_traj, np.nan)
    capped = 0
    clamped_total = 0
    for ti in range(n_traj):
        rng = np.random.default_rng(np.random.PCG64(np.random.SeedSequence((seed, ti))))
        x = np.array(x0, dtype=float)
        g_now = np.array([g.evaluate(x) for g in g_polys], dtype=float)
        cost = 0.0
        steps_done = 0
        done = False
        while steps_done < max_steps:
            nblk = min(block, max_steps - steps_done)
            xi = rng.standard_normal((nblk, tables.k))
            exited, used, cost, theta, piece, phi, exit_x, clamped = run_block(
                x, g_now, xi, dt, tables, cost
            )
            clamped_total += clamped
            steps_done += used
            if exited:
                costs[ti] = cost
                exit_piece[ti] = piece
                exit_times[ti] = (steps_done - 1 + theta) * dt
                done = True
                break
        if not done:
            if problem.horizon.kind == "finite":
                # terminal face: the piece fixing the time variable, else plain cost
                term = _terminal_cost_at_T(problem)
                cost += term.evaluate(x) if term is not None else 0.0
                exit_times[ti] = max_steps * dt
            else:
                capped += 1
                exit_times[ti] = max_steps * dt
            costs[ti] = cost
    fractions = {
        pi: float(np.mean(exit_piece == pi)) for pi in range(len(problem.boundary))
    }
    exited_mask = exit_piece >= 0
    mean_exit = float(np.mean(exit_times[exited_mask])) if exited_mask.any() else math.nan
    mean = float(np.mean(costs))
    stderr = float(np.std(costs, ddof=1) / math.sqrt(n_traj)) if n_traj > 1 else 0.0
    return RolloutReport(
        mean_cost=mean,
        stderr=stderr,
        n_traj=n_traj,
        exit_fractions=fractions,
        mean_exit_time=mean_exit,
        capped=capped,
        clamped_steps=clamped_total,
        seed=seed,
        kernel=kernel_name,
        costs=costs,
    )


def _terminal_cost_at_T(problem: SOCProblem):
    if problem.time_index is None:
        return None
    for piece in problem.boundary:
        aa = face_axis_value(piece)
        if aa is not None and aa[0] == problem.time_index:
            return piece.terminal_cost
    return None
