"""Flat array tables driving the rollout stepping kernels.

Both the compiled and the pure-Python kernel read the same packed
representation: every polynomial (drift entries, control/noise gains, state
cost, desirability and its gradient, domain generators, face equalities and
terminal costs) becomes a slice of one global (exponents, coefficients)
table, addressed by polynomial id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..poly import Polynomial


@dataclass
class SimTables:
    n: int  # state dimension
    m: int  # control dimension
    k: int  # noise dimension
    exps: np.ndarray  # (T, n) int64
    coefs: np.ndarray  # (T,) float64
    offsets: np.ndarray  # (npolys + 1,) int64
    f_ids: np.ndarray  # (n,)
    G_ids: np.ndarray  # (n, m)
    B_ids: np.ndarray  # (n, k)
    q_id: int
    psi_id: int
    dpsi_ids: np.ndarray  # (n,)
    dom_ids: np.ndarray  # (ndom,)
    h_ids: np.ndarray  # (npieces,)
    phi_ids: np.ndarray  # (npieces,)
    piece_axis: np.ndarray  # (npieces,) int64, -1 when face not axis-aligned
    piece_value: np.ndarray  # (npieces,) float64
    Rmat: np.ndarray  # (m, m)
    Rinv: np.ndarray  # (m, m)
    Lmat: np.ndarray  # (k, k)
    lam: float
    eps_clamp: float
    box_lo: np.ndarray  # (n,)
    box_hi: np.ndarray  # (n,)
    maxdeg: np.ndarray  # (n,) int64


class _TableBuilder:
    def __init__(self, n: int):
        self.n = n
        self.exps: list[tuple[int, ...]] = []
        self.coefs: list[float] = []
        self.offsets = [0]

    def add(self, p: Polynomial) -> int:
        for mono, coef in p.terms.items():
            self.exps.append(mono)
            self.coefs.append(coef)
        self.offsets.append(len(self.coefs))
        return len(self.offsets) - 2

    def add_matrix(self, rows) -> np.ndarray:
        return np.array([[self.add(p) for p in row] for row in rows], dtype=np.int64)

    def finish(self):
        if self.exps:
            exps = np.array(self.exps, dtype=np.int64)
        else:
            exps = np.zeros((0, self.n), dtype=np.int64)
        coefs = np.array(self.coefs, dtype=np.float64)
        offsets = np.array(self.offsets, dtype=np.int64)
        return exps, coefs, offsets


def axis_aligned_face(h: Polynomial) -> tuple[int, float] | None:
    """Return (axis, value) when h = c1*x_axis + c0, else None."""
    axis = None
    c1 = 0.0
    c0 = 0.0
    for mono, coef in h.terms.items():
        deg = sum(mono)
        if deg == 0:
            c0 = coef
        elif deg == 1:
            i = next(j for j, e in enumerate(mono) if e == 1)
            if axis is not None and axis != i:
                return None
            axis = i
            c1 = coef
        else:
            return None
    if axis is None or c1 == 0.0:
        return None
    return axis, -c0 / c1


def build_tables(problem, psi: Polynomial, lam: float, eps_clamp: float = 1e-12) -> SimTables:
    """Pack an SOCProblem plus a desirability polynomial into kernel tables."""
    space = problem.space
    n = len(problem.dynamics.f)
    m = len(problem.dynamics.G[0])
    k = len(problem.dynamics.B[0])
    tb = _TableBuilder(space.dim)

    f_ids = np.array([tb.add(p) for p in problem.dynamics.f], dtype=np.int64)
    G_ids = tb.add_matrix(problem.dynamics.G)
    B_ids = tb.add_matrix(problem.dynamics.B)
    q_id = tb.add(problem.cost.q)
    psi_id = tb.add(psi)
    dpsi_ids = np.array([tb.add(psi.differentiate(i)) for i in range(n)], dtype=np.int64)
    dom_ids = np.array([tb.add(g) for g in problem.domain.inequalities], dtype=np.int64)

    h_ids, phi_ids, axes, values = [], [], [], []
    for piece in problem.boundary:
        h = piece.face.equalities[0]
        h_ids.append(tb.add(h))
        phi_ids.append(tb.add(piece.terminal_cost))
        aa = axis_aligned_face(h)
        axes.append(aa[0] if aa else -1)
        values.append(aa[1] if aa else 0.0)

    exps, coefs, offsets = tb.finish()
    maxdeg = exps.max(axis=0) if len(exps) else np.zeros(space.dim, dtype=np.int64)
    R = np.asarray(problem.cost.R, dtype=float)
    box = np.asarray(problem.domain.bounding_box, dtype=float)

    return SimTables(
        n=n,
        m=m,
        k=k,
        exps=np.ascontiguousarray(exps),
        coefs=np.ascontiguousarray(coefs),
        offsets=offsets,
        f_ids=f_ids,
        G_ids=G_ids,
        B_ids=B_ids,
        q_id=q_id,
        psi_id=psi_id,
        dpsi_ids=dpsi_ids,
        dom_ids=dom_ids,
        h_ids=np.array(h_ids, dtype=np.int64),
        phi_ids=np.array(phi_ids, dtype=np.int64),
        piece_axis=np.array(axes, dtype=np.int64),
        piece_value=np.array(values, dtype=np.float64),
        Rmat=np.ascontiguousarray(R),
        Rinv=np.ascontiguousarray(np.linalg.inv(R)),
        Lmat=np.ascontiguousarray(np.asarray(problem.dynamics.noise_scale, dtype=float)),
        lam=float(lam),
        eps_clamp=float(eps_clamp),
        box_lo=np.ascontiguousarray(box[:, 0]),
        box_hi=np.ascontiguousarray(box[:, 1]),
        maxdeg=np.ascontiguousarray(maxdeg.astype(np.int64)),
    )
