"""Pure-Python rollout stepping kernel.

Reference implementation of the Euler-Maruyama first-exit stepper.  The
compiled kernel in _rollout_cy.pyx performs the identical sequence of IEEE
double operations, so both kernels produce bitwise-identical trajectories
from the same noise stream.  Keep the two in sync when editing.
"""

from __future__ import annotations

import math

KERNEL_NAME = "python"


def run_block(x, g_now, xi, dt, tables, cost_in):
    """Advance one trajectory by at most len(xi) Euler-Maruyama steps.

    `x` and `g_now` (domain generator values at `x`) are mutated in place.
    Returns (exited, steps_used, cost, theta, piece, phi, exit_x, clamped)
    where theta is the linear crossing fraction of the exiting step.
    """
    n, m, k = tables.n, tables.m, tables.k
    exps = tables.exps.tolist()
    coefs = tables.coefs.tolist()
    offsets = tables.offsets.tolist()
    f_ids = tables.f_ids.tolist()
    G_ids = tables.G_ids.tolist()
    B_ids = tables.B_ids.tolist()
    dpsi_ids = tables.dpsi_ids.tolist()
    dom_ids = tables.dom_ids.tolist()
    h_ids = tables.h_ids.tolist()
    phi_ids = tables.phi_ids.tolist()
    piece_axis = tables.piece_axis.tolist()
    piece_value = tables.piece_value.tolist()
    Rmat = tables.Rmat.tolist()
    Rinv = tables.Rinv.tolist()
    Lmat = tables.Lmat.tolist()
    box_lo = tables.box_lo.tolist()
    box_hi = tables.box_hi.tolist()
    maxdeg = tables.maxdeg.tolist()
    q_id = tables.q_id
    psi_id = tables.psi_id
    lam = tables.lam
    eps_clamp = tables.eps_clamp
    ndom = len(dom_ids)
    npieces = len(h_ids)
    nsteps = xi.shape[0]
    xi_rows = xi.tolist()
    sqrt_dt = math.sqrt(dt)

    xp = [[1.0] * (maxdeg[v] + 1) for v in range(n)]

    def fill_powers(state):
        for v in range(n):
            row = xp[v]
            xv = state[v]
            for e in range(1, maxdeg[v] + 1):
                row[e] = row[e - 1] * xv

    def peval(pid):
        val = 0.0
        for t in range(offsets[pid], offsets[pid + 1]):
            tv = coefs[t]
            ex = exps[t]
            for v in range(n):
                e = ex[v]
                if e:
                    tv *= xp[v][e]
            val += tv
        return val

    cost = cost_in
    clamped = 0
    fill_powers(x)

    for step in range(nsteps):
        psi = peval(psi_id)
        if psi < eps_clamp:
            psi = eps_clamp
            clamped += 1
        grad = [peval(dpsi_ids[i]) for i in range(n)]
        fv = [peval(f_ids[i]) for i in range(n)]
        qv = peval(q_id)
        Gm = [[peval(G_ids[i][j]) for j in range(m)] for i in range(n)]
        Bm = [[peval(B_ids[i][l]) for l in range(k)] for i in range(n)]

        gtg = [0.0] * m
        for l in range(m):
            gg = 0.0
            for i in range(n):
                gg += Gm[i][l] * grad[i]
            gtg[l] = gg
        u = [0.0] * m
        for j in range(m):
            acc = 0.0
            for l in range(m):
                acc += Rinv[j][l] * gtg[l]
            u[j] = lam * acc / psi

        ucost = 0.0
        for j in range(m):
            ru = 0.0
            for l in range(m):
                ru += Rmat[j][l] * u[l]
            ucost += u[j] * ru
        rate = qv + 0.5 * ucost

        xi_row = xi_rows[step]
        x_new = [0.0] * n
        for i in range(n):
            drift = fv[i]
            for j in range(m):
                drift += Gm[i][j] * u[j]
            bn = 0.0
            for l in range(k):
                w = 0.0
                for l2 in range(k):
                    w += Lmat[l][l2] * xi_row[l2]
                bn += Bm[i][l] * w
            x_new[i] = x[i] + drift * dt + bn * sqrt_dt

        old_x = list(x)
        for i in range(n):
            x[i] = x_new[i]
        fill_powers(x)

        exited = False
        theta = 1.0
        for d in range(ndom):
            g_new = peval(dom_ids[d])
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
        exit_x = [0.0] * n
        for i in range(n):
            xc = old_x[i] + theta * (x_new[i] - old_x[i])
            if xc < box_lo[i]:
                xc = box_lo[i]
            elif xc > box_hi[i]:
                xc = box_hi[i]
            exit_x[i] = xc

        for v in range(n):
            row = xp[v]
            xv = exit_x[v]
            for e in range(1, maxdeg[v] + 1):
                row[e] = row[e - 1] * xv
        best = 0
        best_h = abs(peval(h_ids[0]))
        for p in range(1, npieces):
            hv = abs(peval(h_ids[p]))
            if hv < best_h:
                best_h = hv
                best = p
        if piece_axis[best] >= 0:
            exit_x[piece_axis[best]] = piece_value[best]
            for v in range(n):
                row = xp[v]
                xv = exit_x[v]
                for e in range(1, maxdeg[v] + 1):
                    row[e] = row[e - 1] * xv
        phi = peval(phi_ids[best])
        cost += phi
        return True, step + 1, cost, theta, best, phi, exit_x, clamped

    return False, nsteps, cost, 0.0, -1, 0.0, list(x), clamped
