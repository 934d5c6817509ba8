"""Problem definition and validation for linearly-solvable stochastic control.

A problem consists of control-affine dynamics driven by Brownian noise,

    dx = (f(x) + G(x) u) dt + B(x) L dw,

a running cost q(x) + u'Ru/2, a compact semialgebraic domain with terminal
costs on its boundary faces, and a horizon type.  The compatibility
condition

    lambda * G(x) R^{-1} G(x)' = B(x) Sigma_eps B(x)'   (Sigma_eps = L L')

must hold as a polynomial matrix identity; the scalar lambda it defines
links the value function V to the desirability Psi = exp(-V / lambda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ModelValidationError, NonPositiveLambda, NoValidLambda
from .poly import Polynomial, VariableSpace

EPS_CLAMP = 1e-12  # desirability floor for policy / value evaluation

PolyMatrix = tuple[tuple[Polynomial, ...], ...]


def _as_poly_matrix(rows) -> PolyMatrix:
    return tuple(tuple(row) for row in rows)


@dataclass(eq=False)
class Dynamics:
    """Drift f (length n), control gain G (n x m), noise gain B (n x k), noise scale L (k x k)."""

    f: tuple[Polynomial, ...]
    G: PolyMatrix
    B: PolyMatrix
    noise_scale: np.ndarray

    def __post_init__(self):
        self.f = tuple(self.f)
        self.G = _as_poly_matrix(self.G)
        self.B = _as_poly_matrix(self.B)
        self.noise_scale = np.asarray(self.noise_scale, dtype=float)
        n = len(self.f)
        if len(self.G) != n or len(self.B) != n:
            raise ModelValidationError("G and B must have one row per state variable")
        m = len(self.G[0])
        k = len(self.B[0])
        if any(len(r) != m for r in self.G) or any(len(r) != k for r in self.B):
            raise ModelValidationError("ragged G or B matrix")
        if self.noise_scale.shape != (k, k):
            raise ModelValidationError(
                f"noise scale must be {k}x{k}, got {self.noise_scale.shape}"
            )
        spaces = {p.space for p in self.all_entries()}
        if len(spaces) != 1:
            raise ModelValidationError("dynamics entries use mixed variable spaces")

    def all_entries(self):
        yield from self.f
        for row in self.G:
            yield from row
        for row in self.B:
            yield from row

    @property
    def space(self) -> VariableSpace:
        return self.f[0].space

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def m(self) -> int:
        return len(self.G[0])

    @property
    def k(self) -> int:
        return len(self.B[0])

    def __eq__(self, other):
        if not isinstance(other, Dynamics):
            return NotImplemented
        return (
            self.f == other.f
            and self.G == other.G
            and self.B == other.B
            and np.array_equal(self.noise_scale, other.noise_scale)
        )


@dataclass(eq=False)
class CostModel:
    """State cost q >= 0 on the domain, control penalty R (symmetric PD)."""

    q: Polynomial
    R: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        if self.R.ndim != 2 or self.R.shape[0] != self.R.shape[1]:
            raise ModelValidationError("R must be square")
        if not np.allclose(self.R, self.R.T, atol=1e-12):
            raise ModelValidationError("R must be symmetric")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ModelValidationError("R must be positive definite")

    def __eq__(self, other):
        if not isinstance(other, CostModel):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.R, other.R)


@dataclass(eq=False)
class SemialgebraicSet:
    """{x : g_i(x) >= 0, h_j(x) = 0}; the problem domain carries a bounding box."""

    inequalities: tuple[Polynomial, ...] = ()
    equalities: tuple[Polynomial, ...] = ()
    bounding_box: np.ndarray | None = None

    def __post_init__(self):
        self.inequalities = tuple(self.inequalities)
        self.equalities = tuple(self.equalities)
        if not self.inequalities and not self.equalities:
            raise ModelValidationError("semialgebraic set needs at least one generator")
        if self.bounding_box is not None:
            self.bounding_box = np.asarray(self.bounding_box, dtype=float)

    @property
    def space(self) -> VariableSpace:
        gens = self.inequalities or self.equalities
        return gens[0].space

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean membership mask for an (npts, dim) array."""
        points = np.atleast_2d(points)
        mask = np.ones(points.shape[0], dtype=bool)
        for g in self.inequalities:
            mask &= g.evaluate_many(points) >= -tol
        for h in self.equalities:
            mask &= np.abs(h.evaluate_many(points)) <= tol
        return mask

    def __eq__(self, other):
        if not isinstance(other, SemialgebraicSet):
            return NotImplemented
        boxes_equal = (
            (self.bounding_box is None and other.bounding_box is None)
            or (
                self.bounding_box is not None
                and other.bounding_box is not None
                and np.array_equal(self.bounding_box, other.bounding_box)
            )
        )
        return (
            self.inequalities == other.inequalities
            and self.equalities == other.equalities
            and boxes_equal
        )


@dataclass(eq=True)
class BoundaryPiece:
    """One face of the domain boundary with its terminal cost."""

    face: SemialgebraicSet
    terminal_cost: Polynomial

    def __post_init__(self):
        if len(self.face.equalities) != 1:
            raise ModelValidationError("a boundary face needs exactly one equality")


@dataclass(frozen=True)
class HorizonSpec:
    kind: str  # "finite" | "first_exit" | "average"
    T: float | None = None
    c: float | None = None  # average-cost constant, user supplied

    def __post_init__(self):
        if self.kind not in ("finite", "first_exit", "average"):
            raise ModelValidationError(f"unknown horizon kind {self.kind!r}")
        if self.kind == "finite" and (self.T is None or self.T <= 0):
            raise ModelValidationError("finite horizon requires T > 0")
        if self.kind == "average" and self.c is None:
            raise ModelValidationError("average-cost horizon requires the constant c")


@dataclass(eq=True)
class SOCProblem:
    """A complete stochastic optimal control problem over one variable space."""

    dynamics: Dynamics
    cost: CostModel
    domain: SemialgebraicSet
    boundary: tuple[BoundaryPiece, ...]
    horizon: HorizonSpec
    time_index: int | None = None
    name: str = ""

    def __post_init__(self):
        self.boundary = tuple(self.boundary)
        space = self.dynamics.space
        for p in (self.cost.q, *self.domain.inequalities, *self.domain.equalities):
            if p.space != space:
                raise ModelValidationError("cost/domain polynomials use a different space")
        for piece in self.boundary:
            for p in (*piece.face.inequalities, *piece.face.equalities, piece.terminal_cost):
                if p.space != space:
                    raise ModelValidationError("boundary polynomials use a different space")
        if self.cost.R.shape[0] != self.dynamics.m:
            raise ModelValidationError("R size must match the control dimension")
        if self.horizon.kind == "finite" and self.time_index is None:
            raise ModelValidationError("finite-horizon problems need a time indeterminate")
        if self.domain.bounding_box is None:
            raise ModelValidationError("problem domain must provide a bounding box")
        if self.domain.bounding_box.shape != (space.dim, 2):
            raise ModelValidationError("bounding box must be (dim, 2)")

    @property
    def space(self) -> VariableSpace:
        return self.dynamics.space

    @property
    def state_indices(self) -> list[int]:
        return [i for i in range(self.space.dim) if i != self.time_index]


class LambdaResult(NamedTuple):
    lam: float
    sigma_t: PolyMatrix  # B Sigma_eps B', used by the PDE module
    max_residual: float


def validate_noise_assumption(dyn: Dynamics, R: np.ndarray, tol: float = 1e-9) -> LambdaResult:
    """Fit the unique lambda with lambda*G R^{-1} G' = B Sigma_eps B'.

    All coefficient-wise equations of the matrix identity are collected and
    solved for lambda by least squares; residuals above `tol` reject the
    problem as not linearly solvable.
    """
    R = np.asarray(R, dtype=float)
    Rinv = np.linalg.inv(R)
    sigma_eps = dyn.noise_scale @ dyn.noise_scale.T
    n = dyn.n
    space = dyn.space
    zero = Polynomial.zero(space)

    def quad_form(M, W):
        out = [[zero for _ in range(n)] for _ in range(n)]
        ncols = len(M[0])
        for i in range(n):
            for j in range(i, n):
                acc = zero
                for a in range(ncols):
                    for b in range(ncols):
                        w = W[a, b]
                        if w != 0.0:
                            acc = acc + (M[i][a] * M[j][b]).scale(w)
                out[i][j] = acc
                out[j][i] = acc
        return out

    P1 = quad_form(dyn.G, Rinv)
    P2 = quad_form(dyn.B, sigma_eps)

    num = 0.0
    den = 0.0
    for i in range(n):
        for j in range(n):
            monos = set(P1[i][j].terms) | set(P2[i][j].terms)
            for mth in monos:
                a = P1[i][j].coefficient(mth)
                b = P2[i][j].coefficient(mth)
                num += a * b
                den += a * a
    if den == 0.0:
        raise NoValidLambda("G R^{-1} G' is identically zero; lambda is undetermined")
    lam = num / den

    max_res = 0.0
    for i in range(n):
        for j in range(n):
            diff = P1[i][j].scale(lam) - P2[i][j]
            max_res = max(max_res, diff.max_abs_coefficient())
    if max_res > tol:
        raise NoValidLambda(
            f"no scalar satisfies the noise/control identity (max residual {max_res:.3e})",
            max_residual=max_res,
        )
    if lam <= 0:
        raise NonPositiveLambda(f"fitted lambda = {lam:.6g} is not positive")
    return LambdaResult(lam=lam, sigma_t=_as_poly_matrix(P2), max_residual=max_res)


def validate_problem(problem: SOCProblem, n_samples: int = 10_000, seed: int = 0) -> None:
    """Sampled checks: q >= 0 on the domain, domain contained in its bounding box.

    Violations are hard errors.  Rejection sampling uses the problem's
    bounding box; the containment check samples an inflated shell around the
    box and rejects points that still satisfy every domain inequality.
    """
    rng = np.random.default_rng(seed)
    box = problem.domain.bounding_box
    lo, hi = box[:, 0], box[:, 1]
    if np.any(hi <= lo):
        idx = int(np.argmax(hi <= lo))
        raise ModelValidationError(f"bounding box degenerate on axis {idx}")

    pts = rng.uniform(lo, hi, size=(n_samples, problem.space.dim))
    inside = problem.domain.contains(pts)
    if inside.any():
        qvals = problem.cost.q.evaluate_many(pts[inside])
        if qvals.min() < 0:
            worst = pts[inside][int(np.argmin(qvals))]
            raise ModelValidationError(
                f"state cost q is negative on the domain (q={qvals.min():.6g} at {worst})"
            )

    width = hi - lo
    shell_lo = lo - 0.25 * width
    shell_hi = hi + 0.25 * width
    shell = rng.uniform(shell_lo, shell_hi, size=(4 * n_samples, problem.space.dim))
    outside_box = np.any((shell < lo) | (shell > hi), axis=1)
    shell = shell[outside_box][:n_samples]
    if len(shell) and problem.domain.contains(shell).any():
        raise ModelValidationError(
            "domain is not contained in its bounding box; compactness assumption fails"
        )


@dataclass(frozen=True)
class BoundaryFit:
    """One-sided polynomial bound on the boundary desirability exp(-phi/lambda).

    `poly` is already shifted by `remainder`, so poly <= exp(-phi/lambda) on
    the face for direction="lower" and >= for direction="upper".
    """

    poly: Polynomial
    remainder: float
    direction: str


def face_axis_value(piece: BoundaryPiece) -> tuple[int, float] | None:
    from ._kernels.tables import axis_aligned_face

    return axis_aligned_face(piece.face.equalities[0])


def desirability_boundary(
    piece: BoundaryPiece,
    lam: float,
    fit_degree: int = 8,
    direction: str = "lower",
    n_check: int = 10_000,
) -> BoundaryFit:
    """One-sided polynomial fit of exp(-phi/lambda) on a boundary face.

    Constant terminal costs give the exact constant with zero remainder.
    Otherwise the face must be axis-aligned with a single free variable; the
    fit is a Chebyshev interpolant of the transformed cost over the face's
    box, shifted by a certified sup-norm remainder (dense sampling plus a
    derivative-based padding for the gaps between samples).
    """
    if direction not in ("lower", "upper"):
        raise ValueError("direction must be 'lower' or 'upper'")
    if fit_degree < 0:
        raise ValueError("fit_degree must be >= 0")
    phi = piece.terminal_cost
    space = phi.space
    aa = face_axis_value(piece)
    if aa is not None:
        axis, value = aa
        phi_face = phi.substitute(axis, value)
    else:
        axis, value = None, None
        phi_face = phi

    free_vars = [i for i in range(space.dim) if phi_face.uses_variable(i)]
    if not free_vars:
        const = math.exp(-phi_face.constant_term / lam)
        return BoundaryFit(Polynomial.constant(space, const), 0.0, direction)

    if len(free_vars) > 1 or axis is None:
        raise ModelValidationError(
            "boundary fit supports constant terminal costs or a single free face variable"
        )
    if piece.face.bounding_box is None:
        raise ModelValidationError("face needs a bounding box for the boundary fit")

    v = free_vars[0]
    lo, hi = piece.face.bounding_box[v]
    if not hi > lo:
        raise ModelValidationError("face bounding box is degenerate in the free variable")

    # Chebyshev interpolation on [lo, hi], composed back into the face variable.
    def target(y):
        return np.exp(-phi_face.evaluate_many(_embed_points(y, space.dim, v, axis, value)) / lam)

    cheb = np.polynomial.chebyshev.Chebyshev.interpolate(
        lambda t: target(0.5 * (hi - lo) * (t + 1.0) + lo), deg=fit_degree
    )
    power_coefs = np.polynomial.chebyshev.cheb2poly(cheb.coef)
    # p(y) = sum_k a_k t(y)^k with t(y) = (2y - lo - hi) / (hi - lo)
    t_poly = Polynomial(
        space,
        {
            tuple(1 if i == v else 0 for i in range(space.dim)): 2.0 / (hi - lo),
            (0,) * space.dim: -(lo + hi) / (hi - lo),
        },
    )
    fit = Polynomial.zero(space)
    t_pow = Polynomial.constant(space, 1.0)
    for a_k in power_coefs:
        fit = fit + t_pow.scale(float(a_k))
        t_pow = t_pow * t_poly

    ys = np.linspace(lo, hi, n_check)
    pts = _embed_points(ys, space.dim, v, axis, value)
    exact = np.exp(-phi_face.evaluate_many(pts) / lam)
    approx = fit.evaluate_many(pts)
    err = approx - exact
    eps_samp = float(np.max(np.abs(err)))

    dphi = phi_face.differentiate(v)
    d_exact = -dphi.evaluate_many(pts) / lam * exact
    d_approx = fit.differentiate(v).evaluate_many(pts)
    lip = float(np.max(np.abs(d_approx - d_exact)))
    spacing = (hi - lo) / (n_check - 1)
    pad = 0.75 * spacing * lip
    eps = eps_samp + pad

    shift = -eps if direction == "lower" else eps
    return BoundaryFit(fit + shift, eps, direction)


def _embed_points(ys, dim, free_var, axis, value):
    pts = np.zeros((len(ys), dim))
    pts[:, free_var] = ys
    if axis is not None:
        pts[:, axis] = value
    return pts


class ValueResult(NamedTuple):
    value: float
    clamped: bool


def value_from_desirability(psi: Polynomial, lam: float, point: Sequence[float]) -> ValueResult:
    """V = -lambda * log(Psi); non-positive desirability reports +inf, flagged."""
    val = psi.evaluate(point)
    if val <= EPS_CLAMP:
        return ValueResult(math.inf, True)
    return ValueResult(-lam * math.log(val), False)


class PolicyResult(NamedTuple):
    u: np.ndarray
    clamped: bool


def extract_policy(psi: Polynomial, problem: SOCProblem, point: Sequence[float]) -> PolicyResult:
    """Analytic minimizer u* = lambda R^{-1} G(x)' grad(Psi)(x) / Psi(x).

    Composition of u* = -R^{-1} G' V_x with V = -lambda log Psi.  Psi is
    clamped below at EPS_CLAMP (flagged) so the policy stays finite.
    """
    lam_res = validate_noise_assumption(problem.dynamics, problem.cost.R)
    return _policy_with_lambda(psi, problem, point, lam_res.lam)


def _policy_with_lambda(psi, problem, point, lam):
    point = np.asarray(point, dtype=float)
    psi_val = psi.evaluate(point)
    clamped = psi_val <= EPS_CLAMP
    if clamped:
        psi_val = EPS_CLAMP
    grad = np.array([psi.differentiate(i).evaluate(point) for i in range(problem.space.dim)])
    grad = grad[problem.state_indices] if problem.time_index is not None else grad
    Gx = np.array(
        [[g.evaluate(point) for g in row] for row in problem.dynamics.G]
    )
    Rinv = np.linalg.inv(problem.cost.R)
    u = lam * Rinv @ (Gx.T @ grad) / psi_val
    return PolicyResult(u, clamped)
