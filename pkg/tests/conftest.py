"""Shared fixtures: the two bundled example problems, built directly in code."""

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
from lsocert.poly import VariableSpace, parse


def make_scalar_problem():
    """dx = (x^3 + 5x^2 + x + u) dt + dw on [-1, 1]; q = 1, R = 1, phi(-1)=10, phi(1)=0."""
    space = VariableSpace(("x",))
    one = parse("1", space)
    f = (parse("1*x^3 + 5*x^2 + 1*x", space),)
    dyn = Dynamics(f=f, G=((one,),), B=((one,),), noise_scale=np.eye(1))
    cost = CostModel(q=parse("1", space), R=np.eye(1))
    box = np.array([[-1.0, 1.0]])
    domain = SemialgebraicSet(inequalities=(parse("1 - 1*x^2", space),), bounding_box=box)
    right = BoundaryPiece(
        face=SemialgebraicSet(equalities=(parse("1*x - 1", space),), bounding_box=np.array([[1.0, 1.0]])),
        terminal_cost=parse("0", space),
    )
    left = BoundaryPiece(
        face=SemialgebraicSet(equalities=(parse("1*x + 1", space),), bounding_box=np.array([[-1.0, -1.0]])),
        terminal_cost=parse("10", space),
    )
    return SOCProblem(
        dynamics=dyn,
        cost=cost,
        domain=domain,
        boundary=(right, left),
        horizon=HorizonSpec(kind="first_exit"),
        name="scalar1d",
    )


def make_twodim_problem():
    """First-exit problem on [-1,1]^2 with cubic drift; q = 0.1, R = I."""
    space = VariableSpace(("x", "y"))
    one = parse("1", space)
    zero = parse("0", space)
    f = (
        parse("-2*x - 1*x^3 - 5*y - 1*y^3", space),
        parse("6*x + 1*x^3 - 3*y - 1*y^3", space),
    )
    dyn = Dynamics(
        f=f,
        G=((one, zero), (zero, one)),
        B=((one, zero), (zero, one)),
        noise_scale=np.eye(2),
    )
    cost = CostModel(q=parse("0.1", space), R=np.eye(2))
    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    gx = parse("1 - 1*x^2", space)
    gy = parse("1 - 1*y^2", space)
    domain = SemialgebraicSet(inequalities=(gx, gy), bounding_box=box)

    def face(eq, lateral, fixed_axis, fixed_val, phi):
        b = box.copy()
        b[fixed_axis] = (fixed_val, fixed_val)
        return BoundaryPiece(
            face=SemialgebraicSet(
                equalities=(parse(eq, space),),
                inequalities=(parse(lateral, space),),
                bounding_box=b,
            ),
            terminal_cost=parse(phi, space),
        )

    boundary = (
        face("1*x - 1", "1 - 1*y^2", 0, 1.0, "2*y - 1*y^2"),  # phi = 1 - (y-1)^2
        face("1*x + 1", "1 - 1*y^2", 0, -1.0, "1"),
        face("1*y - 1", "1 - 1*x^2", 1, 1.0, "1"),
        face("1*y + 1", "1 - 1*x^2", 1, -1.0, "1"),
    )
    return SOCProblem(
        dynamics=dyn,
        cost=cost,
        domain=domain,
        boundary=boundary,
        horizon=HorizonSpec(kind="first_exit"),
        name="twodim",
    )


@pytest.fixture(scope="session")
def scalar_problem():
    return make_scalar_problem()


@pytest.fixture(scope="session")
def twodim_problem():
    return make_twodim_problem()
