# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rollout stepping kernel.

Mirrors _rollout_py.run_block operation for operation; both kernels must
produce bitwise-identical trajectories from the same noise stream.  Compile
without -ffast-math / -march so no FMA contraction changes the arithmetic.
"""

from libc.math cimport sqrt, fabs

import numpy as np

KERNEL_NAME = "cython"


def run_block(double[::1] x, double[::1] g_now, double[:, ::1] xi, double dt,
              tables, double cost_in):
    """Advance one trajectory by at most xi.shape[0] Euler-Maruyama steps."""
    cdef Py_ssize_t n = tables.n
    cdef Py_ssize_t m = tables.m
    cdef Py_ssize_t k = tables.k
    cdef long long[:, ::1] exps = tables.exps
    cdef double[::1] coefs = tables.coefs
    cdef long long[::1] offsets = tables.offsets
    cdef long long[::1] f_ids = tables.f_ids
    cdef long long[:, ::1] G_ids = tables.G_ids
    cdef long long[:, ::1] B_ids = tables.B_ids
    cdef long long[::1] dpsi_ids = tables.dpsi_ids
    cdef long long[::1] dom_ids = tables.dom_ids
    cdef long long[::1] h_ids = tables.h_ids
    cdef long long[::1] phi_ids = tables.phi_ids
    cdef long long[::1] piece_axis = tables.piece_axis
    cdef double[::1] piece_value = tables.piece_value
    cdef double[:, ::1] Rmat = tables.Rmat
    cdef double[:, ::1] Rinv = tables.Rinv
    cdef double[:, ::1] Lmat = tables.Lmat
    cdef double[::1] box_lo = tables.box_lo
    cdef double[::1] box_hi = tables.box_hi
    cdef long long[::1] maxdeg = tables.maxdeg
    cdef long long q_id = tables.q_id
    cdef long long psi_id = tables.psi_id
    cdef double lam = tables.lam
    cdef double eps_clamp = tables.eps_clamp
    cdef Py_ssize_t ndom = dom_ids.shape[0]
    cdef Py_ssize_t npieces = h_ids.shape[0]
    cdef Py_ssize_t nsteps = xi.shape[0]
    cdef double sqrt_dt = sqrt(dt)

    cdef Py_ssize_t maxp = 0
    cdef Py_ssize_t v, e, i, j, l, l2, d, p, step, t
    for v in range(n):
        if maxdeg[v] + 1 > maxp:
            maxp = maxdeg[v] + 1

    xp_arr = np.ones((n, maxp), dtype=np.float64)
    grad_arr = np.zeros(n, dtype=np.float64)
    fv_arr = np.zeros(n, dtype=np.float64)
    Gm_arr = np.zeros((n, m), dtype=np.float64)
    Bm_arr = np.zeros((n, k), dtype=np.float64)
    gtg_arr = np.zeros(m, dtype=np.float64)
    u_arr = np.zeros(m, dtype=np.float64)
    xnew_arr = np.zeros(n, dtype=np.float64)
    oldx_arr = np.zeros(n, dtype=np.float64)
    exitx_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] xp = xp_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] fv = fv_arr
    cdef double[:, ::1] Gm = Gm_arr
    cdef double[:, ::1] Bm = Bm_arr
    cdef double[::1] gtg = gtg_arr
    cdef double[::1] u = u_arr
    cdef double[::1] x_new = xnew_arr
    cdef double[::1] old_x = oldx_arr
    cdef double[::1] exit_x = exitx_arr

    cdef double cost = cost_in
    cdef long clamped = 0
    cdef double psi, qv, val, tv, acc, gg, ru, ucost, rate, drift, bn, w
    cdef double g_new, g_old, denom, th, theta, xc, xv, hv, best_h, phi
    cdef bint exited
    cdef Py_ssize_t best
    cdef long long ex_e

    for v in range(n):
        xv = x[v]
        for e in range(1, maxdeg[v] + 1):
            xp[v, e] = xp[v, e - 1] * xv

    for step in range(nsteps):
        psi = _peval(psi_id, offsets, coefs, exps, xp, n)
        if psi < eps_clamp:
            psi = eps_clamp
            clamped += 1
        for i in range(n):
            grad[i] = _peval(dpsi_ids[i], offsets, coefs, exps, xp, n)
        for i in range(n):
            fv[i] = _peval(f_ids[i], offsets, coefs, exps, xp, n)
        qv = _peval(q_id, offsets, coefs, exps, xp, n)
        for i in range(n):
            for j in range(m):
                Gm[i, j] = _peval(G_ids[i, j], offsets, coefs, exps, xp, n)
        for i in range(n):
            for l in range(k):
                Bm[i, l] = _peval(B_ids[i, l], offsets, coefs, exps, xp, n)

        for l in range(m):
            gg = 0.0
            for i in range(n):
                gg += Gm[i, l] * grad[i]
            gtg[l] = gg
        for j in range(m):
            acc = 0.0
            for l in range(m):
                acc += Rinv[j, l] * gtg[l]
            u[j] = lam * acc / psi

        ucost = 0.0
        for j in range(m):
            ru = 0.0
            for l in range(m):
                ru += Rmat[j, l] * u[l]
            ucost += u[j] * ru
        rate = qv + 0.5 * ucost

        for i in range(n):
            drift = fv[i]
            for j in range(m):
                drift += Gm[i, j] * u[j]
            bn = 0.0
            for l in range(k):
                w = 0.0
                for l2 in range(k):
                    w += Lmat[l, l2] * xi[step, l2]
                bn += Bm[i, l] * w
            x_new[i] = x[i] + drift * dt + bn * sqrt_dt

        for i in range(n):
            old_x[i] = x[i]
            x[i] = x_new[i]
        for v in range(n):
            xv = x[v]
            for e in range(1, maxdeg[v] + 1):
                xp[v, e] = xp[v, e - 1] * xv

        exited = False
        theta = 1.0
        for d in range(ndom):
            g_new = _peval(dom_ids[d], offsets, coefs, exps, xp, n)
            g_old = g_now[d]
            if g_new < 0.0:
                exited = True
                denom = g_old - g_new
                th = g_old / denom if denom > 0.0 else 0.0
                if th < theta:
                    theta = th
            g_now[d] = g_new

        if not exited:
            cost += rate * dt
            continue

        if theta < 0.0:
            theta = 0.0
        cost += rate * dt * theta
        for i in range(n):
            xc = old_x[i] + theta * (x_new[i] - old_x[i])
            if xc < box_lo[i]:
                xc = box_lo[i]
            elif xc > box_hi[i]:
                xc = box_hi[i]
            exit_x[i] = xc

        for v in range(n):
            xv = exit_x[v]
            for e in range(1, maxdeg[v] + 1):
                xp[v, e] = xp[v, e - 1] * xv
        best = 0
        best_h = fabs(_peval(h_ids[0], offsets, coefs, exps, xp, n))
        for p in range(1, npieces):
            hv = fabs(_peval(h_ids[p], offsets, coefs, exps, xp, n))
            if hv < best_h:
                best_h = hv
                best = p
        if piece_axis[best] >= 0:
            exit_x[piece_axis[best]] = piece_value[best]
            for v in range(n):
                xv = exit_x[v]
                for e in range(1, maxdeg[v] + 1):
                    xp[v, e] = xp[v, e - 1] * xv
        phi = _peval(phi_ids[best], offsets, coefs, exps, xp, n)
        cost += phi
        return True, step + 1, cost, theta, best, phi, list(exit_x), clamped

    return False, nsteps, cost, 0.0, -1, 0.0, list(x), clamped


cdef inline double _peval(long long pid, long long[::1] offsets, double[::1] coefs,
                          long long[:, ::1] exps, double[:, ::1] xp, Py_ssize_t n):
    cdef double val = 0.0
    cdef double tv
    cdef Py_ssize_t t, v
    cdef long long e
    for t in range(offsets[pid], offsets[pid + 1]):
        tv = coefs[t]
        for v in range(n):
            e = exps[t, v]
            if e:
                tv *= xp[v, e]
        val += tv
    return val
