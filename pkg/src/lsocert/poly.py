"""Sparse multivariate polynomial algebra with exact float coefficients.

A polynomial is a finite map from monomials (exponent tuples, one entry per
indeterminate) to double-precision coefficients.  Zero coefficients are never
stored; coefficients that cancel to exactly 0.0 are dropped, but there is no
epsilon pruning, so small coefficients produced by the SOS pipeline survive
intact.

All ordering (term iteration, monomial bases, text rendering) follows a fixed
graded-lexicographic order so downstream Gram matrices and reports are
byte-for-byte reproducible.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]


class VariableSpaceMismatch(ValueError):
    """Two polynomials over different variable spaces were combined."""


class PolynomialParseError(ValueError):
    """A polynomial string does not conform to the canonical grammar."""


@dataclass(frozen=True)
class VariableSpace:
    """Ordered set of indeterminate names, fixed for the life of a problem."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise ValueError("variable space needs at least one name")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate variable names in {self.names}")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def zero_monomial(self) -> Monomial:
        return (0,) * self.dim


def grlex_key(mono: Monomial) -> tuple:
    """Sort key for graded lex: total degree first, then earlier variables bigger."""
    return (sum(mono), tuple(-e for e in mono))


def monomial_basis(space: VariableSpace, max_degree: int) -> list[Monomial]:
    """All monomials of total degree <= max_degree in graded-lex order.

    Count is C(n + d, d) for n variables.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    n = space.dim
    out: list[Monomial] = []

    def extend(prefix: list[int], remaining: int, pos: int):
        if pos == n - 1:
            prefix.append(remaining)
            out.append(tuple(prefix))
            prefix.pop()
            return
        for e in range(remaining, -1, -1):
            prefix.append(e)
            extend(prefix, remaining - e, pos + 1)
            prefix.pop()

    for d in range(max_degree + 1):
        extend([], d, 0)
    return out


class Polynomial:
    """Immutable sparse polynomial over a fixed :class:`VariableSpace`."""

    __slots__ = ("space", "terms", "_hash")

    def __init__(self, space: VariableSpace, terms: Mapping[Monomial, float]):
        cleaned: dict[Monomial, float] = {}
        n = space.dim
        for mono, coef in terms.items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != n:
                raise ValueError(f"monomial {mono} has wrong arity for {space.names}")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            c = float(coef)
            if c != 0.0:
                cleaned[mono] = cleaned.get(mono, 0.0) + c
        # fix iteration order for reproducibility
        ordered = {m: cleaned[m] for m in sorted(cleaned, key=grlex_key) if cleaned[m] != 0.0}
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "terms", ordered)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, *a):  # pragma: no cover - guard only
        raise AttributeError("Polynomial is immutable")

    # -- constructors -------------------------------------------------
    @staticmethod
    def zero(space: VariableSpace) -> "Polynomial":
        return Polynomial(space, {})

    @staticmethod
    def constant(space: VariableSpace, value: float) -> "Polynomial":
        return Polynomial(space, {space.zero_monomial(): value})

    @staticmethod
    def variable(space: VariableSpace, index: int) -> "Polynomial":
        mono = [0] * space.dim
        mono[index] = 1
        return Polynomial(space, {tuple(mono): 1.0})

    @staticmethod
    def monomial(space: VariableSpace, mono: Monomial, coef: float = 1.0) -> "Polynomial":
        return Polynomial(space, {tuple(mono): coef})

    # -- basic queries ------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1 by convention."""
        if not self.terms:
            return -1
        return max(sum(m) for m in self.terms)

    def coefficient(self, mono: Monomial) -> float:
        return self.terms.get(tuple(mono), 0.0)

    @property
    def constant_term(self) -> float:
        return self.terms.get(self.space.zero_monomial(), 0.0)

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def uses_variable(self, index: int) -> bool:
        return any(m[index] > 0 for m in self.terms)

    # -- arithmetic ---------------------------------------------------
    def _check_space(self, other: "Polynomial"):
        if self.space != other.space:
            raise VariableSpaceMismatch(
                f"variable spaces differ: {self.space.names} vs {other.space.names}"
            )

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.space, other)
        self._check_space(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return Polynomial(self.space, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.space, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        self._check_space(other)
        terms: dict[Monomial, float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                terms[m] = terms.get(m, 0.0) + c1 * c2
        return Polynomial(self.space, terms)

    __rmul__ = __mul__

    def scale(self, alpha: float) -> "Polynomial":
        return Polynomial(self.space, {m: alpha * c for m, c in self.terms.items()})

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(self.space, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.space == other.space and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(
                self, "_hash", hash((self.space, tuple(self.terms.items())))
            )
        return self._hash

    # -- calculus -----------------------------------------------------
    def differentiate(self, var: int) -> "Polynomial":
        """Formal partial derivative with respect to variable `var`."""
        if not 0 <= var < self.space.dim:
            raise IndexError(f"variable index {var} out of range")
        terms: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            e = m[var]
            if e == 0:
                continue
            dm = list(m)
            dm[var] = e - 1
            dm = tuple(dm)
            terms[dm] = terms.get(dm, 0.0) + c * e
        return Polynomial(self.space, terms)

    def evaluate(self, point: Sequence[float]) -> float:
        """Evaluate at a point via per-variable power tables."""
        if len(point) != self.space.dim:
            raise ValueError(
                f"point dimension {len(point)} != space dimension {self.space.dim}"
            )
        if not self.terms:
            return 0.0
        maxdeg = [0] * self.space.dim
        for m in self.terms:
            for i, e in enumerate(m):
                if e > maxdeg[i]:
                    maxdeg[i] = e
        powers = []
        for i, x in enumerate(point):
            row = [1.0]
            for _ in range(maxdeg[i]):
                row.append(row[-1] * float(x))
            powers.append(row)
        total = 0.0
        for m, c in self.terms.items():
            t = c
            for i, e in enumerate(m):
                if e:
                    t *= powers[i][e]
            total += t
        return total

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at an (npoints, dim) array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.space.dim:
            raise ValueError("point array has wrong dimension")
        if not self.terms:
            return np.zeros(points.shape[0])
        exps = np.array(list(self.terms.keys()), dtype=np.int64)
        coefs = np.array(list(self.terms.values()))
        mono_vals = np.prod(points[:, None, :] ** exps[None, :, :], axis=2)
        return mono_vals @ coefs

    # -- substitution -------------------------------------------------
    def substitute(self, var: int, value: float) -> "Polynomial":
        """Fix one variable to a constant; the space keeps its arity."""
        terms: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            e = m[var]
            nm = list(m)
            nm[var] = 0
            nm = tuple(nm)
            terms[nm] = terms.get(nm, 0.0) + c * (float(value) ** e)
        return Polynomial(self.space, terms)

    def restrict(self, subspace: VariableSpace, var_map: Sequence[int]) -> "Polynomial":
        """Reinterpret over `subspace`; var_map[i] is the old index of new var i.

        All dropped variables must have exponent zero (substitute them first).
        """
        keep = set(var_map)
        terms: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            for i, e in enumerate(m):
                if e and i not in keep:
                    raise ValueError(f"variable {self.space.names[i]} still present")
            nm = tuple(m[j] for j in var_map)
            terms[nm] = terms.get(nm, 0.0) + c
        return Polynomial(subspace, terms)

    def embed(self, superspace: VariableSpace) -> "Polynomial":
        """Lift into a larger space that contains this one's variables by name."""
        var_map = [superspace.index(nm) for nm in self.space.names]
        terms: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            nm = [0] * superspace.dim
            for i, e in enumerate(m):
                nm[var_map[i]] = e
            terms[tuple(nm)] = c
        return Polynomial(superspace, terms)

    # -- text form ----------------------------------------------------
    def __repr__(self):
        return f"Polynomial({render(self)!r})"

    def __str__(self):
        return render(self)


def render(p: Polynomial) -> str:
    """Canonical text form, e.g. ``2*x^3 + 5*x^2 + 1*x``.

    Terms appear in descending graded-lex order and every term carries an
    explicit coefficient.  ``render`` and :func:`parse` round-trip exactly.
    """
    if not p.terms:
        return "0"
    parts = []
    for mono in sorted(p.terms, key=grlex_key, reverse=True):
        coef = p.terms[mono]
        factors = [format_float(abs(coef))]
        for name, e in zip(p.space.names, mono):
            if e == 1:
                factors.append(name)
            elif e > 1:
                factors.append(f"{name}^{e}")
        term = "*".join(factors)
        if not parts:
            parts.append(term if coef >= 0 else f"-{term}")
        else:
            parts.append(f"+ {term}" if coef >= 0 else f"- {term}")
    return " ".join(parts)


def format_float(x: float) -> str:
    """Shortest decimal form that round-trips to the same double."""
    if x == math.floor(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>[0-9]+(?:\.[0-9]*)?(?:[eE][+-]?[0-9]+)?|\.[0-9]+(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[*^+\-()]))"
)


def parse(text: str, space: VariableSpace) -> Polynomial:
    """Parse the canonical polynomial grammar (plus whitespace and bare terms).

    Grammar: ``poly := [+-] term (('+'|'-') term)*`` where
    ``term := number | [number '*'] factor ('*' factor)*`` and
    ``factor := name ['^' int]``.  Names must belong to `space`.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise PolynomialParseError(f"bad character at {text[pos:]!r}")
            break
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
    if not tokens:
        raise PolynomialParseError("empty polynomial string")

    terms: dict[Monomial, float] = {}
    i = 0
    n_tok = len(tokens)

    def parse_term(sign: float):
        nonlocal i
        coef = sign
        mono = [0] * space.dim
        saw_factor = False
        expect_factor = True
        while i < n_tok:
            kind, val = tokens[i]
            if kind == "num":
                if not expect_factor:
                    break
                coef *= float(val)
                saw_factor = True
                i += 1
                expect_factor = False
            elif kind == "name":
                if not expect_factor:
                    break
                if val not in space.names:
                    raise PolynomialParseError(f"unknown variable {val!r}")
                exp = 1
                i += 1
                if i < n_tok and tokens[i] == ("op", "^"):
                    i += 1
                    if i >= n_tok or tokens[i][0] != "num":
                        raise PolynomialParseError("expected integer after '^'")
                    exp_text = tokens[i][1]
                    if "." in exp_text or "e" in exp_text or "E" in exp_text:
                        raise PolynomialParseError(f"non-integer exponent {exp_text!r}")
                    exp = int(exp_text)
                    i += 1
                mono[space.index(val)] += exp
                saw_factor = True
                expect_factor = False
            elif kind == "op" and val == "*":
                if expect_factor:
                    raise PolynomialParseError("unexpected '*'")
                expect_factor = True
                i += 1
            else:
                break
        if expect_factor and saw_factor:
            raise PolynomialParseError("dangling '*'")
        if not saw_factor:
            raise PolynomialParseError("empty term")
        key = tuple(mono)
        terms[key] = terms.get(key, 0.0) + coef

    # leading sign
    sign = 1.0
    if tokens[i] == ("op", "+"):
        i += 1
    elif tokens[i] == ("op", "-"):
        sign = -1.0
        i += 1
    parse_term(sign)
    while i < n_tok:
        kind, val = tokens[i]
        if kind == "op" and val in "+-":
            i += 1
            parse_term(1.0 if val == "+" else -1.0)
        else:
            raise PolynomialParseError(f"expected '+' or '-', got {val!r}")
    return Polynomial(space, terms)
