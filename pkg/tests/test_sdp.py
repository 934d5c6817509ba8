"""Conic solver: analytic mini-problems, random SDPs with known optima,
infeasibility certificates, determinism, and the text dump round-trip."""

import numpy as np
import pytest

from lsocert.sdp import (
    Cone,
    ConicProgram,
    SolverSettings,
    dump_program,
    free,
    load_program,
    nonneg,
    psd,
    residuals,
    smat,
    solve,
    svec,
)


def test_svec_preserves_inner_product():
    rng = np.random.default_rng(0)
    for n in (2, 3, 5):
        A = rng.normal(size=(n, n))
        A = A + A.T
        B = rng.normal(size=(n, n))
        B = B + B.T
        assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B), rel=1e-12)
        assert np.allclose(smat(svec(A), n), A)


def test_lp_min_x_subject_x_ge_1():
    # min x s.t. x - s = 1, s >= 0, x free
    prog = ConicProgram(
        c=np.array([1.0, 0.0]),
        A=np.array([[1.0, -1.0]]),
        b=np.array([1.0]),
        cones=[free(1), nonneg(1)],
    )
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


def test_psd_trace_minimization():
    # min X11 + X22 over 2x2 PSD X with X11 = 1 -> objective 1, X22 = 0
    c = svec(np.eye(2))
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1.0
    prog = ConicProgram(c=c, A=svec(e11)[None, :], b=np.array([1.0]), cones=[psd(2)])
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    X = smat(sol.x, 2)
    assert X[0, 0] == pytest.approx(1.0, abs=1e-7)
    assert X[1, 1] == pytest.approx(0.0, abs=1e-7)


def test_max_gamma_smallest_eigenvalue():
    # max gamma s.t. diag(1, 2) - gamma I >= 0  -> gamma* = 1
    # variables: gamma (free), S (psd 2x2); S + gamma I = diag(1, 2)
    rows = []
    rhs = []
    for i, j, v in ((0, 0, 1.0), (0, 1, 0.0), (1, 1, 2.0)):
        E = np.zeros((2, 2))
        E[i, j] = E[j, i] = 1.0
        coef = svec(E)
        if i != j:
            coef = coef / 2.0  # entry equation, not the symmetrized pair sum
        gcoef = 1.0 if i == j else 0.0
        rows.append(np.concatenate([[gcoef], coef]))
        rhs.append(v)
    prog = ConicProgram(
        c=np.concatenate([[-1.0], np.zeros(3)]),
        A=np.array(rows),
        b=np.array(rhs),
        cones=[free(1), psd(2)],
    )
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)


def test_residuals_exact_lp():
    prog = ConicProgram(
        c=np.array([1.0, 0.0]),
        A=np.array([[1.0, -1.0]]),
        b=np.array([1.0]),
        cones=[free(1), nonneg(1)],
    )
    sol = solve(prog)
    rp, rd, gap = residuals(prog, sol)
    assert rp <= 1e-8 and rd <= 1e-8 and gap <= 1e-6
    sol.x = sol.x + 1e-3
    rp2, _, _ = residuals(prog, sol)
    assert rp2 == pytest.approx(0.0, abs=1e-12)  # x - s = 1 preserved by uniform shift
    sol.x = sol.x + np.array([1e-3, 0.0])
    rp3, _, _ = residuals(prog, sol)
    assert rp3 == pytest.approx(1e-3, rel=1e-6)


def random_sdp_with_known_optimum(rng, n_psd=2, n_nonneg=3, p=6):
    """Build c, A, b from a strictly complementary primal-dual pair."""
    cones = [nonneg(n_nonneg)] + [psd(n_psd), psd(n_psd + 1)]
    dim = sum(c.veclen for c in cones)
    A = rng.normal(size=(p, dim))

    x_parts, s_parts = [], []
    # nonneg block: complementary partition with interior values
    mask = rng.random(n_nonneg) < 0.5
    xs = np.where(mask, rng.uniform(0.5, 2.0, n_nonneg), 0.0)
    ss = np.where(~mask, rng.uniform(0.5, 2.0, n_nonneg), 0.0)
    if mask.all():
        ss[0] = 0.0
    x_parts.append(xs)
    s_parts.append(ss)
    for cone in cones[1:]:
        n = cone.size
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        split = rng.integers(1, n)
        dx = np.concatenate([rng.uniform(0.5, 2.0, split), np.zeros(n - split)])
        ds = np.concatenate([np.zeros(split), rng.uniform(0.5, 2.0, n - split)])
        x_parts.append(svec(Q @ np.diag(dx) @ Q.T))
        s_parts.append(svec(Q @ np.diag(ds) @ Q.T))
    x_star = np.concatenate(x_parts)
    s_star = np.concatenate(s_parts)
    y_star = rng.normal(size=p)
    b = A @ x_star
    c = A.T @ y_star + s_star
    return ConicProgram(c=c, A=A, b=b, cones=cones), float(c @ x_star)


def test_random_sdps_reach_known_optimum():
    rng = np.random.default_rng(1234)
    for trial in range(30):
        prog, opt = random_sdp_with_known_optimum(rng)
        sol = solve(prog)
        assert sol.status == "optimal", f"trial {trial}: {sol.status}"
        scale = 1.0 + abs(opt)
        assert abs(sol.objective - opt) / scale <= 1e-6, f"trial {trial}"


def test_primal_infeasible_detected():
    # x >= 1 and x <= 0: x - s1 = 1, x + s2 = 0
    prog = ConicProgram(
        c=np.array([1.0, 0.0, 0.0]),
        A=np.array([[1.0, -1.0, 0.0], [1.0, 0.0, 1.0]]),
        b=np.array([1.0, 0.0]),
        cones=[free(1), nonneg(1), nonneg(1)],
    )
    sol = solve(prog)
    assert sol.status == "primal_infeasible"


def test_dual_infeasible_detected():
    # min -x with x >= 0 and no equalities binding it: unbounded below
    prog = ConicProgram(
        c=np.array([-1.0, 0.0]),
        A=np.array([[0.0, 1.0]]),
        b=np.array([1.0]),
        cones=[nonneg(1), nonneg(1)],
    )
    sol = solve(prog)
    assert sol.status == "dual_infeasible"


def test_infeasible_psd_diagonal():
    # X >= 0 with X11 = -1 is infeasible
    e11 = np.zeros((2, 2))
    e11[0, 0] = 1.0
    prog = ConicProgram(
        c=svec(np.eye(2)), A=svec(e11)[None, :], b=np.array([-1.0]), cones=[psd(2)]
    )
    sol = solve(prog)
    assert sol.status == "primal_infeasible"


def test_determinism_bitwise():
    rng = np.random.default_rng(7)
    prog, _ = random_sdp_with_known_optimum(rng)
    s1 = solve(prog)
    s2 = solve(prog)
    assert s1.status == s2.status
    assert np.array_equal(s1.x, s2.x)
    assert np.array_equal(s1.y, s2.y)
    assert np.array_equal(s1.s, s2.s)
    assert s1.iterations == s2.iterations


def test_objective_scaling_sanity():
    rng = np.random.default_rng(21)
    prog, opt = random_sdp_with_known_optimum(rng)
    sol1 = solve(prog)
    prog2 = ConicProgram(c=prog.c * 4.0, A=prog.A, b=prog.b, cones=prog.cones)
    sol2 = solve(prog2)
    assert sol2.objective == pytest.approx(4.0 * sol1.objective, rel=1e-6, abs=1e-6)
    assert np.max(np.abs(sol1.x - sol2.x)) <= 1e-5 * (1 + np.max(np.abs(sol1.x)))


def test_presolve_removes_dependent_rows():
    # duplicate equality rows must be eliminated and reported
    prog = ConicProgram(
        c=np.array([1.0, 0.0]),
        A=np.array([[1.0, -1.0], [2.0, -2.0]]),
        b=np.array([1.0, 2.0]),
        cones=[free(1), nonneg(1)],
    )
    sol = solve(prog)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert len(sol.eliminated_rows) == 1


def test_presolve_detects_inconsistent_dependent_rows():
    prog = ConicProgram(
        c=np.array([1.0, 0.0]),
        A=np.array([[1.0, -1.0], [2.0, -2.0]]),
        b=np.array([1.0, 3.0]),
        cones=[free(1), nonneg(1)],
    )
    sol = solve(prog)
    assert sol.status == "primal_infeasible"


def test_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    prog, _ = random_sdp_with_known_optimum(rng, p=4)
    prog = ConicProgram(
        c=np.concatenate([np.array([0.5]), prog.c]),
        A=np.hstack([np.ones((4, 1)), prog.A]),
        b=prog.b,
        cones=[free(1)] + prog.cones,
    )
    path = tmp_path / "prog.sdp"
    dump_program(prog, path)
    loaded = load_program(path)
    assert [(
        c.kind, c.size) for c in loaded.cones] == [(c.kind, c.size) for c in prog.cones]
    # the svec sqrt(2) descaling costs at most one ulp per entry
    assert np.allclose(loaded.c, prog.c, rtol=1e-14, atol=0)
    assert np.allclose(loaded.A, prog.A, rtol=1e-14, atol=0)
    assert np.array_equal(loaded.b, prog.b)


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(tol_gap=0.0)
    with pytest.raises(ValueError):
        Cone("weird", 3)
