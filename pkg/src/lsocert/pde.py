"""The linear desirability PDE operator for all three horizon types.

With Sigma_t = B Sigma_eps B' the second-order operator

    L(Psi) = f' grad(Psi) + Tr(hess(Psi) Sigma_t) / 2

drives the desirability equations: first-exit (1/lambda) q Psi = L(Psi),
finite horizon (1/lambda) q Psi - dPsi/dt = L(Psi), and average cost
(1/lambda) q Psi - c Psi = L(Psi).  `residual` returns the signed defect
(left side minus right side); it vanishes exactly on solutions.

The operators accept plain polynomials and, for program assembly, any
polynomial-like object with the same differentiate / multiply / scale
surface (see sos.ParamPolynomial).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ModelValidationError
from .model import PolyMatrix, SOCProblem, validate_noise_assumption
from .poly import Polynomial, VariableSpaceMismatch


@dataclass(frozen=True)
class DesirabilityPDE:
    problem: SOCProblem
    lam: float
    sigma_t: PolyMatrix

    @staticmethod
    def from_problem(problem: SOCProblem, tol: float = 1e-9) -> "DesirabilityPDE":
        """Validate the noise assumption and freeze Sigma_t.

        Sigma_t is stored once (from B and L); the equivalent
        lambda G R^{-1} G' form is only cross-checked here.
        """
        res = validate_noise_assumption(problem.dynamics, problem.cost.R, tol=tol)
        if res.max_residual > 1e-9:
            raise ModelValidationError(
                f"Sigma_t cross-check failed: residual {res.max_residual:.3e}"
            )
        n = problem.dynamics.n
        for i in range(n):
            for j in range(i + 1, n):
                if res.sigma_t[i][j] != res.sigma_t[j][i]:
                    raise ModelValidationError("Sigma_t is not symmetric")
        return DesirabilityPDE(problem=problem, lam=res.lam, sigma_t=res.sigma_t)

    def apply_L(self, psi):
        """L(Psi) = f' grad(Psi) + Tr(hess(Psi) Sigma_t) / 2, spatial variables only."""
        problem = self.problem
        if isinstance(psi, Polynomial) and psi.space != problem.space:
            raise VariableSpaceMismatch("Psi is over a different variable space")
        state = problem.state_indices
        dyn = problem.dynamics
        out = None
        for row, i in enumerate(state):
            term = psi.differentiate(i) * dyn.f[row]
            out = term if out is None else out + term
        for row, i in enumerate(state):
            for col, j in enumerate(state):
                sij = self.sigma_t[row][col]
                if sij.is_zero():
                    continue
                term = (psi.differentiate(i).differentiate(j) * sij).scale(0.5)
                out = term if out is None else out + term
        return out

    def residual(self, psi):
        """Signed PDE defect for the problem's horizon; zero iff Psi solves the PDE."""
        problem = self.problem
        horizon = problem.horizon
        defect = psi * problem.cost.q
        defect = defect.scale(1.0 / self.lam)
        if horizon.kind == "finite":
            if problem.time_index is None:
                raise ModelValidationError("finite horizon requires a time indeterminate")
            defect = defect - psi.differentiate(problem.time_index)
        elif horizon.kind == "average":
            defect = defect - psi.scale(horizon.c)
        return defect - self.apply_L(psi)
