"""Sum-of-squares compilation of the desirability PDE bounds.

A candidate desirability polynomial with unknown coefficients is constrained
so that its PDE defect keeps one sign on the domain (the weak maximum
principle then makes it a certified lower or upper bound of the true
desirability) while a scalar gap variable dominates both the defect
magnitude and the boundary mismatch.  Minimizing the gap yields the tightest
certificate at the chosen degrees.

Each "p >= 0 on {g_i >= 0, h_j = 0}" constraint is truncated Putinar style,

    p = sigma_0 + sum_i s_i g_i + sum_j t_j h_j  (+ sum r_ij g_i g_j),

with sigma_0, s_i, r_ij sums of squares of bounded degree and t_j free
polynomials.  Sums of squares are encoded by Gram matrices: p = z'Qz with
Q >= 0 over a monomial basis z.  The coefficient-matching equations are
linear in all decision variables, so the whole program compiles to one
conic program over free, nonneg and PSD blocks.

Boundary faces that fix one coordinate are substituted out instead of
carried as equality multipliers: the constraint then lives on a smaller
variable space, which keeps the Gram blocks small and the identity exact.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisInsufficient, DegreeInconsistency, InfeasibleProgram
from .model import (
    BoundaryFit,
    SemialgebraicSet,
    SOCProblem,
    desirability_boundary,
    face_axis_value,
)
from .pde import DesirabilityPDE
from .poly import Monomial, Polynomial, VariableSpace, grlex_key, monomial_basis
from .sdp import Cone, ConicProgram, ConicSolution, SolverSettings, smat, solve, svec

_SQRT2 = math.sqrt(2.0)


# ----------------------------------------------------------------------
# affine expressions and parametric polynomials
# ----------------------------------------------------------------------


class LinExpr:
    """Affine expression sum(coeff_i * var_i) + const over decision variables."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict[int, float] | None = None, const: float = 0.0):
        self.coeffs = coeffs or {}
        self.const = const

    @staticmethod
    def variable(var_id: int, scale: float = 1.0) -> "LinExpr":
        return LinExpr({var_id: scale})

    @staticmethod
    def constant(value: float) -> "LinExpr":
        return LinExpr({}, value)

    def __add__(self, other: "LinExpr") -> "LinExpr":
        coeffs = dict(self.coeffs)
        for v, c in other.coeffs.items():
            coeffs[v] = coeffs.get(v, 0.0) + c
        return LinExpr(coeffs, self.const + other.const)

    def scale(self, alpha: float) -> "LinExpr":
        return LinExpr({v: alpha * c for v, c in self.coeffs.items()}, alpha * self.const)

    def is_zero(self) -> bool:
        return self.const == 0.0 and all(c == 0.0 for c in self.coeffs.values())

    def value(self, assignment: np.ndarray) -> float:
        return self.const + sum(c * assignment[v] for v, c in self.coeffs.items())


class ParamPolynomial:
    """Polynomial whose coefficients are affine expressions in decision variables.

    Supports the same differentiate / multiply-by-polynomial / scale surface
    as Polynomial, so the PDE operators apply unchanged.
    """

    __slots__ = ("space", "terms")

    def __init__(self, space: VariableSpace, terms: dict[Monomial, LinExpr]):
        self.space = space
        self.terms = {m: e for m, e in terms.items() if not e.is_zero()}

    @staticmethod
    def from_polynomial(p: Polynomial) -> "ParamPolynomial":
        return ParamPolynomial(
            p.space, {m: LinExpr.constant(c) for m, c in p.terms.items()}
        )

    @staticmethod
    def from_coefficients(space: VariableSpace, monos: list[Monomial], var_ids: list[int]):
        return ParamPolynomial(
            space, {m: LinExpr.variable(v) for m, v in zip(monos, var_ids)}
        )

    def degree(self) -> int:
        if not self.terms:
            return -1
        return max(sum(m) for m in self.terms)

    def __add__(self, other):
        if isinstance(other, Polynomial):
            other = ParamPolynomial.from_polynomial(other)
        if self.space != other.space:
            raise ValueError("variable spaces differ")
        terms = dict(self.terms)
        for m, e in other.terms.items():
            terms[m] = terms[m] + e if m in terms else e
        return ParamPolynomial(self.space, terms)

    def __sub__(self, other):
        if isinstance(other, Polynomial):
            other = ParamPolynomial.from_polynomial(other)
        return self + other.scale(-1.0)

    def scale(self, alpha: float) -> "ParamPolynomial":
        return ParamPolynomial(self.space, {m: e.scale(alpha) for m, e in self.terms.items()})

    def __mul__(self, p: Polynomial) -> "ParamPolynomial":
        if not isinstance(p, Polynomial):
            raise TypeError("ParamPolynomial can only be multiplied by a fixed Polynomial")
        if p.space != self.space:
            raise ValueError("variable spaces differ")
        terms: dict[Monomial, LinExpr] = {}
        for m1, e in self.terms.items():
            for m2, c in p.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                add = e.scale(c)
                terms[m] = terms[m] + add if m in terms else add
        return ParamPolynomial(self.space, terms)

    __rmul__ = __mul__

    def differentiate(self, var: int) -> "ParamPolynomial":
        terms: dict[Monomial, LinExpr] = {}
        for m, e in self.terms.items():
            k = m[var]
            if k == 0:
                continue
            dm = list(m)
            dm[var] = k - 1
            dm = tuple(dm)
            add = e.scale(float(k))
            terms[dm] = terms[dm] + add if dm in terms else add
        return ParamPolynomial(self.space, terms)

    def substitute(self, var: int, value: float) -> "ParamPolynomial":
        terms: dict[Monomial, LinExpr] = {}
        for m, e in self.terms.items():
            nm = list(m)
            k = nm[var]
            nm[var] = 0
            nm = tuple(nm)
            add = e.scale(float(value) ** k)
            terms[nm] = terms[nm] + add if nm in terms else add
        return ParamPolynomial(self.space, terms)

    def restrict(self, subspace: VariableSpace, var_map: list[int]) -> "ParamPolynomial":
        keep = set(var_map)
        terms: dict[Monomial, LinExpr] = {}
        for m, e in self.terms.items():
            for i, k in enumerate(m):
                if k and i not in keep:
                    raise ValueError(f"variable {self.space.names[i]} still present")
            nm = tuple(m[j] for j in var_map)
            terms[nm] = terms[nm] + e if nm in terms else e
        return ParamPolynomial(subspace, terms)

    def evaluate_numeric(self, assignment: np.ndarray) -> Polynomial:
        """Substitute decision values, yielding a plain polynomial."""
        return Polynomial(
            self.space, {m: e.value(assignment) for m, e in self.terms.items()}
        )


# ----------------------------------------------------------------------
# certificate configuration and program assembly
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CertificateConfig:
    """Degrees of the candidate and its Positivstellensatz multipliers.

    deg_mult defaults to deg_psi (matching degrees); include_products adds
    the pairwise generator products r_ij g_i g_j to the truncation.
    """

    deg_psi: int
    deg_mult: int | None = None
    deg_eq_mult: int | None = None
    include_products: bool = False

    def __post_init__(self):
        if self.deg_psi < 0:
            raise DegreeInconsistency("deg_psi must be >= 0")
        if self.deg_mult is None:
            object.__setattr__(self, "deg_mult", self.deg_psi)
        if self.deg_eq_mult is None:
            object.__setattr__(self, "deg_eq_mult", self.deg_mult)
        if self.deg_mult < 0 or self.deg_eq_mult < 0:
            raise DegreeInconsistency("multiplier degrees must be >= 0")


@dataclass
class GramBlock:
    """One PSD block: s(x) = z' Q z over the monomial basis z."""

    basis: list[Monomial]
    space: VariableSpace
    cone_index: int  # index into the conic program's cone list
    multiplier: Polynomial | None  # g_i it multiplies; None for sigma_0


@dataclass
class EqMultiplier:
    """Free polynomial multiplier t_j for an equality generator h_j."""

    h: Polynomial
    basis: list[Monomial]
    var_ids: list[int]


@dataclass
class SOSConstraint:
    """One 'p >= 0 on set' constraint compiled into Gram blocks + equations."""

    role: str
    target: ParamPolynomial  # p, over the constraint's (possibly reduced) space
    grams: list[GramBlock]
    eq_mults: list[EqMultiplier]
    point_slack: int | None = None  # nonneg variable for zero-dimensional faces


class _Builder:
    """Accumulates decision variables, cones and coefficient-matching rows.

    Variable layout: one free block (all scalar decision variables), one
    nonneg block (point-constraint slacks), then one PSD block per Gram
    matrix, in allocation order.
    """

    def __init__(self):
        self.n_free = 0
        self.n_slack = 0
        self.gram_sizes: list[int] = []
        self.rows: list[dict] = []  # {'cols': {...}, 'rhs': float}
        self.objective: dict[int, float] = {}

    def new_free(self, count: int = 1) -> list[int]:
        ids = list(range(self.n_free, self.n_free + count))
        self.n_free += count
        return ids

    def new_slack(self) -> int:
        self.n_slack += 1
        return self.n_slack - 1

    def new_gram(self, size: int) -> int:
        self.gram_sizes.append(size)
        return len(self.gram_sizes) - 1

    def add_row(self, free_cols: dict[int, float], slack_cols: dict[int, float],
                gram_cols: dict[tuple[int, int], float], rhs: float):
        self.rows.append(
            {"free": free_cols, "slack": slack_cols, "gram": gram_cols, "rhs": rhs}
        )

    def compile(self) -> ConicProgram:
        cones: list[Cone] = []
        offsets = {}
        total = 0
        if self.n_free:
            cones.append(Cone("free", self.n_free))
            offsets["free"] = 0
            total += self.n_free
        if self.n_slack:
            cones.append(Cone("nonneg", self.n_slack))
            offsets["slack"] = total
            total += self.n_slack
        gram_offsets = []
        for size in self.gram_sizes:
            cones.append(Cone("psd", size))
            gram_offsets.append(total)
            total += size * (size + 1) // 2
        A = np.zeros((len(self.rows), total))
        b = np.zeros(len(self.rows))
        for r, row in enumerate(self.rows):
            for v, cval in row["free"].items():
                A[r, v] += cval
            for v, cval in row["slack"].items():
                A[r, offsets["slack"] + v] += cval
            for (g, k), cval in row["gram"].items():
                A[r, gram_offsets[g] + k] += cval
            b[r] = row["rhs"]
        c = np.zeros(total)
        for v, cval in self.objective.items():
            c[v] = cval
        prog = ConicProgram(c=c, A=A, b=b, cones=cones)
        self.gram_offsets = gram_offsets
        self.slack_offset = offsets.get("slack", 0)
        return prog


def _svec_column(basis_len: int, i: int, j: int) -> tuple[int, float]:
    """svec index and equation weight for Gram entry (i <= j).

    The monomial z_i z_j appears with weight Q_ij (i == j) or 2 Q_ij
    (i < j); with v = svec(Q) the weight on v_ij is sqrt(2).
    """
    if i > j:
        i, j = j, i
    # upper-triangle svec in row-major pair order matches sdp._svec_index
    k = i * basis_len - i * (i - 1) // 2 + (j - i)
    return k, (1.0 if i == j else _SQRT2)


def gram_encode(p: ParamPolynomial, basis: list[Monomial], builder: _Builder,
                multiplier: Polynomial | None = None,
                check_support: bool = True) -> tuple[GramBlock, dict]:
    """Introduce Q >= 0 with p = z'Qz (times `multiplier` when given).

    Returns the Gram block plus the per-monomial contribution map
    {monomial: {(block, svec_index): weight}} for the identity equations.
    With check_support, raises BasisInsufficient if p has support outside
    the pairwise products; Putinar assembly disables the check because
    other multiplier terms (or forced coefficient cancellations) may cover
    the remaining monomials.
    """
    block_idx = builder.new_gram(len(basis))
    contrib: dict[Monomial, dict] = {}
    mult_terms = multiplier.terms if multiplier is not None else {tuple([0] * len(basis[0])): 1.0}
    for i in range(len(basis)):
        for j in range(i, len(basis)):
            pair_mono = tuple(a + b for a, b in zip(basis[i], basis[j]))
            k, w = _svec_column(len(basis), i, j)
            for gm, gc in mult_terms.items():
                m = tuple(a + b for a, b in zip(pair_mono, gm))
                cols = contrib.setdefault(m, {})
                cols[(block_idx, k)] = cols.get((block_idx, k), 0.0) + w * gc
    if check_support and multiplier is None:
        reachable = set(contrib)
        missing = [m for m in p.terms if m not in reachable]
        if missing:
            raise BasisInsufficient(
                f"monomials {missing[:3]} not representable over the Gram basis"
            )
    gram = GramBlock(
        basis=basis, space=p.space, cone_index=block_idx, multiplier=multiplier
    )
    return gram, contrib


def putinar_constraint(p: ParamPolynomial, sa_set: SemialgebraicSet,
                       cfg: CertificateConfig, builder: _Builder, role: str) -> SOSConstraint:
    """Encode 'p >= 0 on sa_set' with truncated Positivstellensatz multipliers."""
    space = p.space
    gens = list(sa_set.inequalities)
    eqs = list(sa_set.equalities)
    deg_p = max(p.degree(), 0)
    s_deg = 2 * (cfg.deg_mult // 2)
    identity_deg = deg_p
    for g in gens:
        identity_deg = max(identity_deg, s_deg + g.degree())
    for h in eqs:
        identity_deg = max(identity_deg, cfg.deg_eq_mult + h.degree())
    products = []
    if cfg.include_products:
        for a in range(len(gens)):
            for b in range(a + 1, len(gens)):
                gg = gens[a] * gens[b]
                products.append(gg)
                identity_deg = max(identity_deg, s_deg + gg.degree())

    contrib_total: dict[Monomial, dict] = {}

    def merge(contrib):
        for m, cols in contrib.items():
            dst = contrib_total.setdefault(m, {})
            for key, w in cols.items():
                dst[key] = dst.get(key, 0.0) + w

    # sigma_0 spans the full identity degree: the strongest (and numerically
    # healthiest) truncation with the s_i capped at deg_mult.  Capping
    # sigma_0 at deg_mult as well would mimic weaker historical truncations
    # but chokes the candidate degree through the matching equations.
    sigma0_basis = monomial_basis(space, identity_deg // 2)
    gram0, contrib0 = gram_encode(p, sigma0_basis, builder, multiplier=None,
                                  check_support=False)
    merge(contrib0)
    grams = [gram0]

    mult_basis = monomial_basis(space, s_deg // 2)
    for g in gens + products:
        gram, contrib = gram_encode(p, mult_basis, builder, multiplier=g,
                                    check_support=False)
        merge(contrib)
        grams.append(gram)

    eq_mults = []
    for h in eqs:
        t_basis = monomial_basis(space, cfg.deg_eq_mult)
        ids = builder.new_free(len(t_basis))
        eq_mults.append(EqMultiplier(h=h, basis=t_basis, var_ids=ids))

    # coefficient-matching equations: p[m] - sigma0[m] - sum s_i g_i [m] - sum t_j h_j [m] = 0
    all_monos = set(contrib_total) | set(p.terms)
    for em in eq_mults:
        for bm in em.basis:
            for hm in em.h.terms:
                all_monos.add(tuple(a + b for a, b in zip(bm, hm)))

    for m in sorted(all_monos, key=grlex_key):
        expr = p.terms.get(m)
        free_cols: dict[int, float] = {}
        rhs = 0.0
        if expr is not None:
            for v, cval in expr.coeffs.items():
                free_cols[v] = free_cols.get(v, 0.0) + cval
            rhs = -expr.const
        gram_cols = {key: -w for key, w in contrib_total.get(m, {}).items()}
        for em in eq_mults:
            for bi, bm in enumerate(em.basis):
                for hm, hc in em.h.terms.items():
                    if tuple(a + b for a, b in zip(bm, hm)) == m:
                        v = em.var_ids[bi]
                        free_cols[v] = free_cols.get(v, 0.0) - hc
        builder.add_row(free_cols, {}, gram_cols, rhs)

    return SOSConstraint(role=role, target=p, grams=grams, eq_mults=eq_mults)


def point_constraint(p: ParamPolynomial, builder: _Builder, role: str) -> SOSConstraint:
    """p >= 0 at a single point (zero free variables): one nonneg slack."""
    if p.degree() > 0:
        raise DegreeInconsistency(f"point constraint {role} still has free variables")
    expr = p.terms.get(tuple([0] * p.space.dim), LinExpr.constant(0.0))
    slack = builder.new_slack()
    free_cols = dict(expr.coeffs)
    builder.add_row(free_cols, {slack: -1.0}, {}, -expr.const)
    return SOSConstraint(role=role, target=p, grams=[], eq_mults=[], point_slack=slack)


# ----------------------------------------------------------------------
# the bound program
# ----------------------------------------------------------------------


@dataclass
class FaceConstraintInfo:
    piece_index: int
    fit_low: BoundaryFit
    fit_up: BoundaryFit
    space: VariableSpace
    var_map: list[int]  # reduced-variable -> problem-variable index
    axis: int | None
    value: float | None
    scored: bool = True  # False: mismatch excluded from the gap objective


def _face_corners(problem: SOCProblem, piece) -> list[np.ndarray]:
    """Corner points of an axis-aligned face (its bounding box extremes)."""
    aa = face_axis_value(piece)
    if aa is None or piece.face.bounding_box is None:
        return []
    axis, value = aa
    box = np.array(piece.face.bounding_box, dtype=float)
    free_axes = [i for i in range(len(box)) if i != axis and box[i][0] < box[i][1]]
    corners = [np.array([value if i == axis else box[i][0] for i in range(len(box))])]
    out = []
    for mask in range(1 << len(free_axes)):
        pt = corners[0].copy()
        for bit, i in enumerate(free_axes):
            pt[i] = box[i][1] if (mask >> bit) & 1 else box[i][0]
        out.append(pt)
    return out


def corner_incompatible_faces(problem: SOCProblem, lam: float, direction: str,
                              rel_tol: float = 1e-6) -> set[int]:
    """Faces whose boundary-mismatch sup is forced large by a data jump.

    When two faces meet at a corner with different terminal data, a
    continuous candidate cannot match both: a lower bound is capped by the
    smaller value (cursing the larger-data face), an upper bound is floored
    by the larger value (cursing the smaller-data face).  Those faces keep
    their one-sided bound constraints but are excluded from the gap
    objective, and are reported as unscored.
    """
    vals = []
    for piece in problem.boundary:
        corners = _face_corners(problem, piece)
        data = {}
        for pt in corners:
            data[tuple(np.round(pt, 12))] = math.exp(
                -piece.terminal_cost.evaluate(pt) / lam
            )
        vals.append(data)
    cursed: set[int] = set()
    for a in range(len(vals)):
        for b in range(a + 1, len(vals)):
            shared = set(vals[a]) & set(vals[b])
            for pt in shared:
                da, db = vals[a][pt], vals[b][pt]
                scale = max(abs(da), abs(db), 1e-30)
                if abs(da - db) <= rel_tol * scale:
                    continue
                hi_face, lo_face = (a, b) if da > db else (b, a)
                cursed.add(hi_face if direction == "lower" else lo_face)
    return cursed


@dataclass
class AssembledProgram:
    problem: SOCProblem
    pde: DesirabilityPDE
    config: CertificateConfig
    direction: str
    enforce_positivity: bool
    fit_degree: int
    psi: ParamPolynomial
    psi_monos: list[Monomial]
    psi_var_ids: list[int]
    gamma_var: int
    constraints: list[SOSConstraint]
    faces: list[FaceConstraintInfo]
    conic: ConicProgram
    gram_offsets: list[int]
    slack_offset: int
    flags: list[str] = field(default_factory=list)

    @property
    def decision_count(self) -> int:
        return self.conic.c.shape[0]


def build_bound_program(problem: SOCProblem, cfg: CertificateConfig, direction: str,
                        enforce_positivity: bool = False, fit_degree: int = 8,
                        lambda_tol: float = 1e-9,
                        gamma_fixed: float | None = None) -> AssembledProgram:
    """Compile the gap-minimization program for one bound direction.

    direction="lower": the candidate is constrained to be a PDE subsolution
    lying below the boundary data, so it underestimates the desirability;
    "upper" reverses every inequality.  The gap variable dominates the PDE
    defect magnitude on the domain and the boundary mismatch on every face;
    its minimum is the certified pointwise quality of the bound.
    """
    if direction not in ("lower", "upper"):
        raise ValueError("direction must be 'lower' or 'upper'")
    pde = DesirabilityPDE.from_problem(problem, tol=lambda_tol)
    space = problem.space
    builder = _Builder()
    flags = []

    psi_monos = monomial_basis(space, cfg.deg_psi)
    psi_ids = builder.new_free(len(psi_monos))
    psi = ParamPolynomial.from_coefficients(space, psi_monos, psi_ids)
    (gamma_var,) = builder.new_free(1)
    gamma = ParamPolynomial(space, {space.zero_monomial(): LinExpr.variable(gamma_var)})
    if gamma_fixed is None:
        builder.objective = {gamma_var: 1.0}
    else:
        # feasibility mode: pin the gap and look for any interior certificate
        builder.add_row({gamma_var: 1.0}, {}, {}, float(gamma_fixed))

    defect = pde.residual(psi)
    sign = -1.0 if direction == "lower" else 1.0
    # signed defect >= 0 on the domain preserves the bound direction;
    # gamma - signed defect >= 0 makes gamma a certified defect bound
    constraints = [
        putinar_constraint(defect.scale(sign), problem.domain, cfg, builder, "pde_" + direction),
        putinar_constraint(gamma - defect.scale(sign), problem.domain, cfg, builder, "gap"),
    ]

    if fit_degree > cfg.deg_psi:
        flags.append(
            f"boundary fit degree {fit_degree} exceeds deg_psi {cfg.deg_psi}"
        )

    # Gap semantics per direction: the upper program's boundary inequalities
    # already force a nontrivial candidate, so gamma is the pure PDE-defect
    # bound there; the lower program would admit the trivial candidate with
    # zero defect, so gamma additionally dominates the boundary mismatch on
    # corner-compatible faces.
    if direction == "lower":
        unscored = corner_incompatible_faces(problem, pde.lam, direction)
        for pi in sorted(unscored):
            flags.append(
                f"face {pi} excluded from the gap objective: its terminal data "
                f"jumps at a shared corner, so no continuous candidate can match it"
            )
    else:
        unscored = set(range(len(problem.boundary)))

    faces = []
    for pi, piece in enumerate(problem.boundary):
        fit_low = desirability_boundary(piece, pde.lam, fit_degree, "lower")
        fit_up = desirability_boundary(piece, pde.lam, fit_degree, "upper")
        aa = face_axis_value(piece)
        if aa is not None:
            axis, value = aa
            psi_face_full = psi.substitute(axis, value)
            low_full = fit_low.poly.substitute(axis, value)
            up_full = fit_up.poly.substitute(axis, value)
            used = sorted(
                set(
                    i
                    for src in (psi_face_full.terms, low_full.terms, up_full.terms,
                                *(g.terms for g in piece.face.inequalities))
                    for m in src
                    for i, e in enumerate(m)
                    if e
                )
            )
            if not used:
                info = FaceConstraintInfo(
                    pi, fit_low, fit_up, space, [], axis, value, scored=pi not in unscored
                )
                if direction == "lower":
                    bound_p = ParamPolynomial.from_polynomial(low_full) - psi_face_full
                    gap_p = (gamma - ParamPolynomial.from_polynomial(up_full)) + psi_face_full
                else:
                    bound_p = psi_face_full - up_full
                    gap_p = (gamma - psi_face_full) + ParamPolynomial.from_polynomial(low_full)
                constraints.append(point_constraint(bound_p, builder, f"boundary:{pi}"))
                if info.scored:
                    constraints.append(point_constraint(gap_p, builder, f"boundary_gap:{pi}"))
                faces.append(info)
                continue
            sub = VariableSpace(tuple(space.names[i] for i in used))
            var_map = used
            face_set = SemialgebraicSet(
                inequalities=tuple(
                    g.substitute(axis, value).restrict(sub, var_map)
                    for g in piece.face.inequalities
                ),
                bounding_box=None,
            )
            psi_face = psi_face_full.restrict(sub, var_map)
            low_r = low_full.restrict(sub, var_map)
            up_r = up_full.restrict(sub, var_map)
            gamma_face = ParamPolynomial(
                sub, {sub.zero_monomial(): LinExpr.variable(gamma_var)}
            )
            info = FaceConstraintInfo(
                pi, fit_low, fit_up, sub, var_map, axis, value, scored=pi not in unscored
            )
        else:
            # general face: keep the full space, carry h with an equality multiplier
            face_set = piece.face
            psi_face = psi
            low_r = fit_low.poly
            up_r = fit_up.poly
            gamma_face = gamma
            info = FaceConstraintInfo(
                pi, fit_low, fit_up, space, list(range(space.dim)), None, None,
                scored=pi not in unscored,
            )

        if direction == "lower":
            bound_p = ParamPolynomial.from_polynomial(low_r) - psi_face
            gap_p = (gamma_face - ParamPolynomial.from_polynomial(up_r)) + psi_face
        else:
            bound_p = psi_face - up_r
            gap_p = (gamma_face - psi_face) + ParamPolynomial.from_polynomial(low_r)
        constraints.append(putinar_constraint(bound_p, face_set, cfg, builder, f"boundary:{pi}"))
        if info.scored:
            constraints.append(putinar_constraint(gap_p, face_set, cfg, builder, f"boundary_gap:{pi}"))
        faces.append(info)

    if enforce_positivity:
        constraints.append(putinar_constraint(psi, problem.domain, cfg, builder, "positivity"))

    conic = builder.compile()
    return AssembledProgram(
        problem=problem,
        pde=pde,
        config=cfg,
        direction=direction,
        enforce_positivity=enforce_positivity,
        fit_degree=fit_degree,
        psi=psi,
        psi_monos=psi_monos,
        psi_var_ids=psi_ids,
        gamma_var=gamma_var,
        constraints=constraints,
        faces=faces,
        conic=conic,
        gram_offsets=builder.gram_offsets,
        slack_offset=builder.slack_offset,
        flags=flags,
    )


# ----------------------------------------------------------------------
# solution extraction and certificate verification
# ----------------------------------------------------------------------


@dataclass
class Certificate:
    """Numeric Gram matrices and multipliers for every constraint."""

    entries: list[dict]  # per constraint: role, sigma0, mults, eq_polys, slack


@dataclass
class BoundSolution:
    psi: Polynomial
    gamma: float
    direction: str
    certificate: Certificate
    status: str
    iterations: int
    solver_gap: float
    primal_infeas: float
    dual_infeas: float
    wall_time: float
    program: AssembledProgram

    @property
    def lam(self) -> float:
        return self.program.pde.lam


def extract_solution(program: AssembledProgram, conic_sol: ConicSolution,
                     wall_time: float = 0.0) -> BoundSolution:
    """Reassemble the candidate, gap and Gram certificates from the conic solution."""
    if conic_sol.status in ("primal_infeasible", "dual_infeasible"):
        raise InfeasibleProgram(
            f"bound program is {conic_sol.status} "
            f"(certificate residuals: primal {conic_sol.primal_infeas:.2e}, "
            f"dual {conic_sol.dual_infeas:.2e})",
            solution=conic_sol,
        )
    x = conic_sol.x
    psi = Polynomial(
        program.problem.space,
        {m: x[v] for m, v in zip(program.psi_monos, program.psi_var_ids)},
    )
    gamma = float(x[program.gamma_var])
    entries = []
    for con in program.constraints:
        entry = {"role": con.role, "sigma0": None, "mults": [], "eq_polys": [], "slack": None}
        for gi, gram in enumerate(con.grams):
            size = len(gram.basis)
            ofs = program.gram_offsets[gram.cone_index]
            Q = smat(x[ofs : ofs + size * (size + 1) // 2], size)
            if gi == 0:
                entry["sigma0"] = (gram.basis, gram.space, Q)
            else:
                entry["mults"].append((gram.basis, gram.space, Q, gram.multiplier))
        for em in con.eq_mults:
            tpoly = Polynomial(
                con.target.space, {m: x[v] for m, v in zip(em.basis, em.var_ids)}
            )
            entry["eq_polys"].append((em.h, tpoly))
        if con.point_slack is not None:
            entry["slack"] = float(x[program.slack_offset + con.point_slack])
        entries.append(entry)
    return BoundSolution(
        psi=psi,
        gamma=gamma,
        direction=program.direction,
        certificate=Certificate(entries),
        status=conic_sol.status,
        iterations=conic_sol.iterations,
        solver_gap=conic_sol.gap,
        primal_infeas=conic_sol.primal_infeas,
        dual_infeas=conic_sol.dual_infeas,
        wall_time=wall_time,
        program=program,
    )


@dataclass
class CertificateReport:
    passed: bool
    max_coeff_mismatch: float
    min_gram_eigenvalue: float
    per_constraint: list[dict]


def verify_certificate(sol: BoundSolution, tol_eq: float = 1e-6,
                       tol_psd: float = 1e-7) -> CertificateReport:
    """Independently recheck every SOS identity from the returned certificate.

    Each constraint's right-hand side (z'Qz terms, multiplier products,
    equality multipliers, point slacks) is re-expanded symbolically and
    compared coefficient by coefficient against the target polynomial with
    the numeric decisions substituted; Gram blocks are checked for PSD-ness
    by eigenvalue.
    """
    x = np.concatenate([sol_coefficients(sol)])
    max_mismatch = 0.0
    min_eig = np.inf
    per_con = []
    for con, entry in zip(sol.program.constraints, sol.certificate.entries):
        target = con.target.evaluate_numeric(x)
        if entry["slack"] is not None:
            built = Polynomial.constant(target.space, entry["slack"])
            eig_min = entry["slack"]
        else:
            built = Polynomial.zero(target.space)
            eig_min = np.inf
            basis, space, Q = entry["sigma0"]
            built = built + _gram_poly(space, basis, Q)
            eig_min = min(eig_min, float(np.linalg.eigvalsh(Q).min()))
            for basis, space, Q, mult in entry["mults"]:
                built = built + _gram_poly(space, basis, Q) * mult
                eig_min = min(eig_min, float(np.linalg.eigvalsh(Q).min()))
            for h, tpoly in entry["eq_polys"]:
                built = built + tpoly * h
        diff = target - built
        mismatch = diff.max_abs_coefficient()
        per_con.append(
            {"role": con.role, "mismatch": mismatch, "min_eig": float(eig_min)}
        )
        max_mismatch = max(max_mismatch, mismatch)
        min_eig = min(min_eig, eig_min)
    passed = max_mismatch <= tol_eq and min_eig >= -tol_psd
    return CertificateReport(
        passed=passed,
        max_coeff_mismatch=max_mismatch,
        min_gram_eigenvalue=float(min_eig),
        per_constraint=per_con,
    )


def sol_coefficients(sol: BoundSolution) -> np.ndarray:
    """Decision-variable assignment vector (free block) implied by a solution."""
    n_free = max(
        [sol.program.gamma_var]
        + sol.program.psi_var_ids
        + [v for con in sol.program.constraints for em in con.eq_mults for v in em.var_ids]
    ) + 1
    x = np.zeros(n_free)
    for m, v in zip(sol.program.psi_monos, sol.program.psi_var_ids):
        x[v] = sol.psi.coefficient(m)
    x[sol.program.gamma_var] = sol.gamma
    for con, entry in zip(sol.program.constraints, sol.certificate.entries):
        for em, (h, tpoly) in zip(con.eq_mults, entry["eq_polys"]):
            for m, v in zip(em.basis, em.var_ids):
                x[v] = tpoly.coefficient(m)
    return x


def _gram_poly(space: VariableSpace, basis: list[Monomial], Q: np.ndarray) -> Polynomial:
    terms: dict[Monomial, float] = {}
    for i in range(len(basis)):
        for j in range(len(basis)):
            m = tuple(a + b for a, b in zip(basis[i], basis[j]))
            terms[m] = terms.get(m, 0.0) + Q[i, j]
    return Polynomial(space, terms)


def sample_defect_sandwich(sol: BoundSolution, n_points: int = 1000, seed: int = 0,
                           tol: float = 1e-6) -> dict:
    """Check 0 <= signed defect <= gamma + tol at random interior points."""
    problem = sol.program.problem
    pde = sol.program.pde
    rng = np.random.default_rng(seed)
    box = problem.domain.bounding_box
    pts = []
    attempts = 0
    while len(pts) < n_points and attempts < 100 * n_points:
        cand = rng.uniform(box[:, 0], box[:, 1], size=(n_points, problem.space.dim))
        mask = problem.domain.contains(cand)
        pts.extend(cand[mask][: n_points - len(pts)])
        attempts += n_points
    pts = np.asarray(pts)
    defect = pde.residual(sol.psi)
    sign = -1.0 if sol.direction == "lower" else 1.0
    vals = sign * defect.evaluate_many(pts)
    low_violation = float(max(0.0, -vals.min())) if len(vals) else 0.0
    high_violation = float(max(0.0, vals.max() - sol.gamma)) if len(vals) else 0.0
    return {
        "n_points": len(pts),
        "min_signed_defect": float(vals.min()) if len(vals) else 0.0,
        "max_signed_defect": float(vals.max()) if len(vals) else 0.0,
        "low_violation": low_violation,
        "high_violation": high_violation,
        "passed": low_violation <= tol and high_violation <= tol,
    }


def sample_positivity(sol: BoundSolution, n_points: int = 1000, seed: int = 1) -> dict:
    """Post-solve positivity report for the candidate desirability."""
    problem = sol.program.problem
    rng = np.random.default_rng(seed)
    box = problem.domain.bounding_box
    cand = rng.uniform(box[:, 0], box[:, 1], size=(4 * n_points, problem.space.dim))
    cand = cand[problem.domain.contains(cand)][:n_points]
    vals = sol.psi.evaluate_many(cand)
    return {
        "n_points": len(cand),
        "min_psi": float(vals.min()) if len(cand) else 0.0,
        "fraction_negative": float(np.mean(vals < 0.0)) if len(cand) else 0.0,
    }


SOS_SOLVER_SETTINGS = SolverSettings(tol_gap=1e-7, tol_feas=1e-7, max_iter=100)


def solve_bound(problem: SOCProblem, cfg: CertificateConfig, direction: str,
                enforce_positivity: bool = False, fit_degree: int = 8,
                settings=None) -> BoundSolution:
    """build_bound_program + conic solve + extraction in one call.

    SOS coefficient systems are frequently degenerate (forced singular Gram
    blocks), so the default solve targets 1e-7 residuals; the independent
    certificate check at 1e-6 remains the acceptance gate for solutions.
    """
    t0 = time.perf_counter()
    program = build_bound_program(
        problem, cfg, direction, enforce_positivity=enforce_positivity, fit_degree=fit_degree
    )
    conic_sol = solve(program.conic, settings or SOS_SOLVER_SETTINGS)
    return extract_solution(program, conic_sol, wall_time=time.perf_counter() - t0)


def solve_bound_certified(problem: SOCProblem, cfg: CertificateConfig, direction: str,
                          enforce_positivity: bool = False, fit_degree: int = 8,
                          settings=None, tol_eq: float = 1e-6, tol_psd: float = 1e-7,
                          ) -> tuple[BoundSolution, CertificateReport]:
    """Solve the bound program, retrying in feasibility mode until the
    certificate verifies.

    Degenerate configurations (multiplier degrees far below the candidate
    degree) may have an unattained infimum; backing the gap off by a small
    margin restores an interior certificate.  The reported gap is then
    slightly conservative but fully verified.
    """
    t0 = time.perf_counter()
    sol = solve_bound(
        problem, cfg, direction, enforce_positivity=enforce_positivity,
        fit_degree=fit_degree, settings=settings,
    )
    report = verify_certificate(sol, tol_eq=tol_eq, tol_psd=tol_psd)
    if report.passed and sol.status == "optimal":
        return sol, report

    def try_gamma(target):
        program = build_bound_program(
            problem, cfg, direction, enforce_positivity=enforce_positivity,
            fit_degree=fit_degree, gamma_fixed=target,
        )
        conic_sol = solve(program.conic, settings or SOS_SOLVER_SETTINGS)
        if conic_sol.status != "optimal":
            return None
        cand = extract_solution(program, conic_sol, wall_time=time.perf_counter() - t0)
        cand_report = verify_certificate(cand, tol_eq=tol_eq, tol_psd=tol_psd)
        return (cand, cand_report) if cand_report.passed else None

    # The optimizing solve broke down (typically a degenerate or unattained
    # optimum); the iterate's gap may sit on either side of feasibility.
    # Locate the smallest gap with a verifiable interior certificate by a
    # directed search plus bisection on gamma-feasibility programs.
    scale = max(1.0, abs(sol.gamma))
    lo = sol.gamma
    hi = None
    found = None
    if report.passed:
        hi = sol.gamma
        found = (sol, report)
        for step in (1e-4, 1e-3, 1e-2, 0.1):
            hit = try_gamma(sol.gamma - step * scale)
            if hit is None:
                lo = sol.gamma - step * scale
                break
            hi = sol.gamma - step * scale
            found = hit
        else:
            lo = hi  # kept passing all the way down; accept the last
    else:
        for step in (1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 1.0, 3.0):
            hit = try_gamma(sol.gamma + step * scale)
            if hit is not None:
                hi = sol.gamma + step * scale
                found = hit
                break
            lo = sol.gamma + step * scale
    if found is None:
        return sol, report  # caller sees the failed report and decides
    while hi - lo > 1e-5 * scale:
        mid = 0.5 * (lo + hi)
        hit = try_gamma(mid)
        if hit is not None:
            hi = mid
            found = hit
        else:
            lo = mid
    return found
