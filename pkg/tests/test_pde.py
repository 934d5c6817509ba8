"""Desirability PDE operator: symbolic correctness, linearity, numeric agreement."""

import numpy as np
import pytest

from lsocert.model import (
    BoundaryPiece,
    CostModel,
    Dynamics,
    HorizonSpec,
    SemialgebraicSet,
    SOCProblem,
)
from lsocert.pde import DesirabilityPDE
from lsocert.poly import Polynomial, VariableSpace, monomial_basis, parse

X1 = VariableSpace(("x",))
X2 = VariableSpace(("x", "y"))


def make_problem(space, f_strs, q_str, horizon=None, boundary_phi="0"):
    one = parse("1", space)
    zero = parse("0", space)
    n = space.dim
    f = tuple(parse(s, space) for s in f_strs)
    G = tuple(tuple(one if i == j else zero for j in range(n)) for i in range(n))
    dyn = Dynamics(f=f, G=G, B=G, noise_scale=np.eye(n))
    first = space.names[0]
    piece = BoundaryPiece(
        face=SemialgebraicSet(equalities=(parse(f"1*{first} - 1", space),)),
        terminal_cost=parse(boundary_phi, space),
    )
    return SOCProblem(
        dynamics=dyn,
        cost=CostModel(q=parse(q_str, space), R=np.eye(n)),
        domain=SemialgebraicSet(
            inequalities=tuple(parse(f"1 - 1*{v}^2", space) for v in space.names),
            bounding_box=np.array([[-1.0, 1.0]] * n),
        ),
        boundary=(piece,),
        horizon=horizon or HorizonSpec(kind="first_exit"),
    )


@pytest.fixture(scope="module")
def scalar_pde(request):
    problem = make_problem(X1, ["1*x^3 + 5*x^2 + 1*x"], "1")
    return DesirabilityPDE.from_problem(problem)


def test_apply_L_scalar_example(scalar_pde):
    psi = parse("1*x^2", X1)
    assert scalar_pde.apply_L(psi) == parse("2*x^4 + 10*x^3 + 2*x^2 + 1", X1)


def test_apply_L_constant(scalar_pde):
    assert scalar_pde.apply_L(parse("3", X1)).is_zero()


def test_apply_L_pure_diffusion():
    pde = DesirabilityPDE.from_problem(make_problem(X2, ["0", "0"], "1"))
    assert pde.apply_L(parse("1*x^2 + 1*y^2", X2)) == parse("2", X2)


def test_residual_first_exit_constant(scalar_pde):
    assert scalar_pde.residual(parse("1", X1)) == parse("1", X1)


def test_residual_zero_psi(scalar_pde):
    assert scalar_pde.residual(parse("0", X1)).is_zero()


def test_residual_average_horizon_constant():
    problem = make_problem(X1, ["1*x"], "1", horizon=HorizonSpec(kind="average", c=1.0))
    pde = DesirabilityPDE.from_problem(problem)
    # steady constant: (q/lambda) Psi - c Psi - L(Psi) = 0 when c = q / lambda
    assert pde.residual(parse("1", X1)).is_zero()


def test_residual_finite_horizon_time_derivative():
    space = VariableSpace(("x", "t"))
    one = parse("1", space)
    zero = parse("0", space)
    dyn = Dynamics(f=(parse("1*x", space),), G=((one,),), B=((one,),), noise_scale=np.eye(1))
    piece = BoundaryPiece(
        face=SemialgebraicSet(equalities=(parse("1*t - 1", space),)),
        terminal_cost=zero,
    )
    problem = SOCProblem(
        dynamics=dyn,
        cost=CostModel(q=parse("1", space), R=np.eye(1)),
        domain=SemialgebraicSet(
            inequalities=(parse("1 - 1*x^2", space), parse("1*t - 1*t^2", space)),
            bounding_box=np.array([[-1.0, 1.0], [0.0, 1.0]]),
        ),
        boundary=(piece,),
        horizon=HorizonSpec(kind="finite", T=1.0),
        time_index=1,
    )
    pde = DesirabilityPDE.from_problem(problem)
    psi = parse("1*t", space)
    # q/lambda * t - dt(t) - L(t) = t - 1
    assert pde.residual(psi) == parse("1*t - 1", space)


def test_linearity_coefficient_exact(scalar_pde):
    rng = np.random.default_rng(2)
    basis = monomial_basis(X1, 6)
    for _ in range(10):
        # small integer coefficients and power-of-two weights keep doubles exact
        p = Polynomial(X1, {m: float(rng.integers(-8, 9)) for m in basis})
        q = Polynomial(X1, {m: float(rng.integers(-8, 9)) for m in basis})
        a, b = 2.0, -0.5
        left = scalar_pde.residual(p.scale(a) + q.scale(b))
        right = scalar_pde.residual(p).scale(a) + scalar_pde.residual(q).scale(b)
        assert left == right


def test_apply_L_matches_finite_differences():
    """Symbolic L(Psi) vs finite-difference assembly at 100 random points."""
    problem = make_problem(X2, ["-2*x - 1*x^3 - 5*y - 1*y^3", "6*x + 1*x^3 - 3*y - 1*y^3"], "0.1")
    pde = DesirabilityPDE.from_problem(problem)
    rng = np.random.default_rng(4)
    basis = monomial_basis(X2, 6)
    psi = Polynomial(X2, {m: rng.uniform(-2, 2) for m in basis})
    lpsi = pde.apply_L(psi)
    h = 1e-5
    pts = rng.uniform(-0.9, 0.9, size=(100, 2))
    for pt in pts:
        grad_fd = np.array(
            [
                (psi.evaluate(pt + h * e) - psi.evaluate(pt - h * e)) / (2 * h)
                for e in np.eye(2)
            ]
        )
        hess_fd = np.empty((2, 2))
        for i, ei in enumerate(np.eye(2)):
            for j, ej in enumerate(np.eye(2)):
                hess_fd[i, j] = (
                    psi.evaluate(pt + h * ei + h * ej)
                    - psi.evaluate(pt + h * ei - h * ej)
                    - psi.evaluate(pt - h * ei + h * ej)
                    + psi.evaluate(pt - h * ei - h * ej)
                ) / (4 * h * h)
        fvec = np.array([p.evaluate(pt) for p in problem.dynamics.f])
        sig = np.array([[p.evaluate(pt) for p in row] for row in pde.sigma_t])
        expected = fvec @ grad_fd + 0.5 * np.trace(hess_fd @ sig)
        got = lpsi.evaluate(pt)
        assert abs(got - expected) / max(1.0, abs(expected)) <= 1e-5


def test_residual_degree_bound(scalar_pde):
    """deg(residual) <= deg(Psi) + max(deg q, deg f - 1, max deg sigma - 2)."""
    problem = scalar_pde.problem
    deg_f = max(p.degree() for p in problem.dynamics.f)
    deg_q = problem.cost.q.degree()
    deg_sig = max(max(p.degree() for p in row) for row in scalar_pde.sigma_t)
    bump = max(deg_q, deg_f - 1, deg_sig - 2)
    rng = np.random.default_rng(9)
    for d in (2, 4, 6, 8):
        psi = Polynomial(X1, {m: rng.uniform(-1, 1) for m in monomial_basis(X1, d)})
        assert scalar_pde.residual(psi).degree() <= psi.degree() + bump
