"""FD oracle order of accuracy, rollout statistics, kernel equivalence."""

import math

import numpy as np
import pytest

from lsocert.errors import OracleError
from lsocert.model import (
    BoundaryPiece,
    CostModel,
    Dynamics,
    HorizonSpec,
    SemialgebraicSet,
    SOCProblem,
)
from lsocert.oracle import (
    fd_solve_1d,
    fd_solve_2d,
    richardson_1d,
    richardson_2d,
    rollout,
    verify_bounds,
)
from lsocert.poly import Polynomial, VariableSpace, parse
from lsocert import _kernels


def diffusion_problem_1d(f_str="0", q_str="0", gain=1.0, phi=("0", "0")):
    """1D first-exit problem with G = B = gain (so lambda = 1, sigma = gain^2)."""
    space = VariableSpace(("x",))
    g = Polynomial.constant(space, gain)
    dyn = Dynamics(f=(parse(f_str, space),), G=((g,),), B=((g,),), noise_scale=np.eye(1))
    right = BoundaryPiece(
        face=SemialgebraicSet(equalities=(parse("1*x - 1", space),)),
        terminal_cost=parse(phi[0], space),
    )
    left = BoundaryPiece(
        face=SemialgebraicSet(equalities=(parse("1*x + 1", space),)),
        terminal_cost=parse(phi[1], space),
    )
    return SOCProblem(
        dynamics=dyn,
        cost=CostModel(q=parse(q_str, space), R=np.eye(1)),
        domain=SemialgebraicSet(
            inequalities=(parse("1 - 1*x^2", space),), bounding_box=np.array([[-1.0, 1.0]])
        ),
        boundary=(right, left),
        horizon=HorizonSpec(kind="first_exit"),
    )


def diffusion_problem_2d(q_str="0", gain=1.0):
    space = VariableSpace(("x", "y"))
    g = Polynomial.constant(space, gain)
    zero = parse("0", space)
    dyn = Dynamics(
        f=(zero, zero),
        G=((g, zero), (zero, g)),
        B=((g, zero), (zero, g)),
        noise_scale=np.eye(2),
    )
    faces = []
    for eq, lateral in (
        ("1*x - 1", "1 - 1*y^2"),
        ("1*x + 1", "1 - 1*y^2"),
        ("1*y - 1", "1 - 1*x^2"),
        ("1*y + 1", "1 - 1*x^2"),
    ):
        faces.append(
            BoundaryPiece(
                face=SemialgebraicSet(
                    equalities=(parse(eq, space),), inequalities=(parse(lateral, space),)
                ),
                terminal_cost=zero,
            )
        )
    return SOCProblem(
        dynamics=dyn,
        cost=CostModel(q=parse(q_str, space), R=np.eye(2)),
        domain=SemialgebraicSet(
            inequalities=(parse("1 - 1*x^2", space), parse("1 - 1*y^2", space)),
            bounding_box=np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        ),
        boundary=tuple(faces),
        horizon=HorizonSpec(kind="first_exit"),
    )


def test_fd1d_laplace_linear():
    # f = 0, q = 0 with Dirichlet 0 / 1: the solution is linear
    prob = diffusion_problem_1d()
    grid = fd_solve_1d(prob, 101, dirichlet=(0.0, 1.0))
    mid = grid.values[50]
    assert mid == pytest.approx(0.5, abs=1e-10)
    assert np.allclose(grid.values, (grid.axes[0] + 1) / 2, atol=1e-10)


def test_fd1d_constant_coefficient_analytic():
    # sigma = 2, q = 1, lambda = 1 -> psi'' = psi; cosh solves it
    prob = diffusion_problem_1d(q_str="1", gain=math.sqrt(2.0))
    exact = np.cosh
    grid = fd_solve_1d(prob, 201, dirichlet=(exact(-1.0), exact(1.0)))
    err = np.max(np.abs(grid.values - exact(grid.axes[0])))
    assert err < 5e-5
    grid2 = fd_solve_1d(prob, 401, dirichlet=(exact(-1.0), exact(1.0)))
    err2 = np.max(np.abs(grid2.values - exact(grid2.axes[0])))
    factor = err / err2
    assert 3.5 <= factor <= 4.5  # second order


def test_fd1d_order_scalar_example(scalar_problem):
    ref = richardson_1d(scalar_problem, 1001)
    assert ref.tol_fd is not None and ref.tol_fd < 1e-6
    fine = richardson_1d(scalar_problem, 2001)
    factor = ref.tol_fd / fine.tol_fd
    assert 3.0 <= factor <= 5.5  # Richardson estimate itself shrinks at O(h^2)


def test_fd1d_peclet_guard():
    prob = diffusion_problem_1d(f_str="100*x", q_str="1")
    with pytest.raises(OracleError, match="Peclet"):
        fd_solve_1d(prob, 21)


def test_fd2d_maximum_principle_constant():
    prob = diffusion_problem_2d()
    grid = fd_solve_2d(prob, 41, 41, dirichlet=lambda x, y: 1.0)
    assert np.allclose(grid.values, 1.0, atol=1e-10)


def test_fd2d_manufactured_exponential():
    # q = 2, sigma = 2 I, lambda = 1: psi_xx + psi_yy = 2 psi,
    # solved exactly by psi = exp(x + y)
    prob = diffusion_problem_2d(q_str="2", gain=math.sqrt(2.0))
    exact = lambda x, y: math.exp(x + y)
    errs = []
    for n in (21, 41, 81):
        grid = fd_solve_2d(prob, n, n, dirichlet=exact)
        X, Y = np.meshgrid(grid.axes[0], grid.axes[1], indexing="ij")
        errs.append(np.max(np.abs(grid.values - np.exp(X + Y))))
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    assert 3.5 <= errs[1] / errs[2] <= 4.5


def test_verify_bounds_trivial(scalar_problem):
    ref = richardson_1d(scalar_problem, 401)
    space = scalar_problem.space
    low = Polynomial.zero(space)  # psi* > 0 everywhere
    up = Polynomial.constant(space, float(ref.values.max()) + 0.1)
    rep = verify_bounds(low, up, ref)
    assert rep.passed
    bad_low = Polynomial.constant(space, float(ref.values.max()))
    rep2 = verify_bounds(bad_low, up, ref)
    assert not rep2.passed


# ---- rollouts ----------------------------------------------------------


def test_rollout_terminal_cost_only():
    # q = 0 and a constant candidate (zero policy): cost is exactly phi = 3
    prob = diffusion_problem_1d(phi=("3", "3"))
    psi = Polynomial.constant(prob.space, 1.0)
    rep = rollout(prob, psi, [0.0], dt=1e-3, n_traj=64, seed=7)
    assert rep.mean_cost == 3.0
    assert rep.stderr == 0.0
    assert rep.capped == 0


def test_rollout_clt_scaling(scalar_problem):
    psi = parse("0.5 + 0.25*x", scalar_problem.space)
    r1 = rollout(scalar_problem, psi, [0.0], dt=1e-3, n_traj=250, seed=11)
    r2 = rollout(scalar_problem, psi, [0.0], dt=1e-3, n_traj=1000, seed=11)
    # quadrupling the trajectories halves the standard error within 20 percent
    ratio = r1.stderr / r2.stderr
    assert 2.0 * 0.8 <= ratio <= 2.0 * 1.25


def test_rollout_seeded_determinism(scalar_problem):
    psi = parse("0.5 + 0.25*x", scalar_problem.space)
    a = rollout(scalar_problem, psi, [0.0], dt=1e-3, n_traj=50, seed=3)
    b = rollout(scalar_problem, psi, [0.0], dt=1e-3, n_traj=50, seed=3)
    assert a.mean_cost == b.mean_cost
    assert a.stderr == b.stderr
    assert np.array_equal(a.costs, b.costs)
    c = rollout(scalar_problem, psi, [0.0], dt=1e-3, n_traj=50, seed=4)
    assert not np.array_equal(a.costs, c.costs)


def test_rollout_exit_statistics(scalar_problem):
    # the drift pushes strongly toward x = +1 (piece 0)
    psi = parse("0.5 + 0.25*x", scalar_problem.space)
    rep = rollout(scalar_problem, psi, [0.5], dt=1e-3, n_traj=200, seed=5)
    assert rep.exit_fractions[0] > 0.95
    assert sum(rep.exit_fractions.values()) == pytest.approx(1.0)
    assert rep.mean_exit_time > 0


def test_rollout_rejects_outside_start(scalar_problem):
    psi = Polynomial.constant(scalar_problem.space, 1.0)
    with pytest.raises(OracleError):
        rollout(scalar_problem, psi, [2.0], dt=1e-3, n_traj=10, seed=0)


@pytest.mark.skipif(_kernels.KERNEL_NAME != "cython", reason="compiled kernel unavailable")
def test_kernel_equivalence_bitwise(scalar_problem):
    """Compiled and pure-Python kernels produce identical trajectories."""
    psi = parse("0.5 + 0.25*x + 0.125*x^2", scalar_problem.space)
    fast = rollout(scalar_problem, psi, [0.0], dt=1e-3, n_traj=40, seed=21, kernel="cython")
    slow = rollout(scalar_problem, psi, [0.0], dt=1e-3, n_traj=40, seed=21, kernel="python")
    assert fast.kernel == "cython" and slow.kernel == "python"
    assert np.array_equal(fast.costs, slow.costs)
    assert fast.mean_exit_time == slow.mean_exit_time
    assert fast.exit_fractions == slow.exit_fractions


@pytest.mark.skipif(_kernels.KERNEL_NAME != "cython", reason="compiled kernel unavailable")
def test_kernel_equivalence_2d(twodim_problem):
    psi = parse("0.4 + 0.1*x - 0.05*y + 0.02*x*y", twodim_problem.space)
    fast = rollout(twodim_problem, psi, [0.2, -0.3], dt=1e-3, n_traj=20, seed=9, kernel="cython")
    slow = rollout(twodim_problem, psi, [0.2, -0.3], dt=1e-3, n_traj=20, seed=9, kernel="python")
    assert np.array_equal(fast.costs, slow.costs)
