"""Compiled kernels for quadratic observables on Levi-Civita charts.

Every observable handled here has the separable form

    F(x, p) = sum_i c_i(lam(x)) p_i**2,
    c_i = (a_h / 2 + sum_j w_j Pi_i(t_j)) * u_i,
    u_i = 1 / |Pi_i(lam_i)|            (metric g)
    u_i = lam_1...lam_n lam_i / |Pi_i(lam_i)|   (metric gbar, ``bar=True``)

with Pi_i(t) = prod_{j != i} (lam_j - t) and lam_i = lam_i(x_i).  This covers
the geodesic Hamiltonians of both metrics, every I_t and every linear
combination of them, with exact first and second derivatives.

Profiles are packed row-wise as ``[kind, offset, amplitude, frequency, phase]``
with kind 0 = constant, 1 = affine, 2 = sin, 3 = cos.
"""

import math

import numpy as np
from numba import njit

KIND_CODES = {"constant": 0, "affine": 1, "sin": 2, "cos": 3}


@njit(cache=True)
def profiles(prof, x, lam, d1, d2):
    n = x.shape[0]
    for i in range(n):
        kind = int(prof[i, 0])
        off = prof[i, 1]
        amp = prof[i, 2]
        fr = prof[i, 3]
        ph = prof[i, 4]
        if kind == 0:
            lam[i] = off
            d1[i] = 0.0
            d2[i] = 0.0
        elif kind == 1:
            lam[i] = off + amp * x[i]
            d1[i] = amp
            d2[i] = 0.0
        elif kind == 2:
            s = math.sin(fr * x[i] + ph)
            c = math.cos(fr * x[i] + ph)
            lam[i] = off + amp * s
            d1[i] = amp * fr * c
            d2[i] = -amp * fr * fr * s
        else:
            s = math.sin(fr * x[i] + ph)
            c = math.cos(fr * x[i] + ph)
            lam[i] = off + amp * c
            d1[i] = -amp * fr * s
            d2[i] = -amp * fr * fr * c


@njit(cache=True)
def _prod_except(lam, t, a, b, c):
    # product of (lam_l - t) over l not in {a, b, c}; pass -1 for unused slots
    r = 1.0
    for l in range(lam.shape[0]):
        if l != a and l != b and l != c:
            r *= lam[l] - t
    return r


@njit(cache=True)
def quad_coeffs(lam, a_h, w, ts, bar, c, dc, d2c):
    """Fill c[i], dc[i, k] = dc_i/dlam_k and d2c[i, k, q]."""
    n = lam.shape[0]
    m = ts.shape[0]
    dN = np.zeros(n)
    d2N = np.zeros((n, n))
    G = np.zeros(n)
    Q = np.zeros((n, n))
    prod_all = 1.0
    for l in range(n):
        prod_all *= lam[l]
    for i in range(n):
        N = 0.5 * a_h
        dN[:] = 0.0
        d2N[:, :] = 0.0
        for j in range(m):
            t = ts[j]
            wj = w[j]
            N += wj * _prod_except(lam, t, i, -1, -1)
            for k in range(n):
                if k == i:
                    continue
                dN[k] += wj * _prod_except(lam, t, i, k, -1)
                for q in range(n):
                    if q == i or q == k:
                        continue
                    d2N[k, q] += wj * _prod_except(lam, t, i, k, q)

        b = 1.0
        G[:] = 0.0
        Q[:, :] = 0.0
        for j in range(n):
            if j == i:
                continue
            d = lam[j] - lam[i]
            b *= abs(d)
            inv = 1.0 / d
            inv2 = inv * inv
            G[j] -= inv
            G[i] += inv
            Q[j, j] += inv2
            Q[i, i] += inv2
            Q[i, j] -= inv2
            Q[j, i] -= inv2
        u = 1.0 / b
        if bar:
            u *= prod_all * lam[i]
            for l in range(n):
                G[l] += 1.0 / lam[l]
                Q[l, l] -= 1.0 / (lam[l] * lam[l])
            G[i] += 1.0 / lam[i]
            Q[i, i] -= 1.0 / (lam[i] * lam[i])

        c[i] = N * u
        for k in range(n):
            du_k = u * G[k]
            dc[i, k] = dN[k] * u + N * du_k
            for q in range(n):
                du_q = u * G[q]
                d2u = u * (G[k] * G[q] + Q[k, q])
                d2c[i, k, q] = d2N[k, q] * u + dN[k] * du_q + dN[q] * du_k + N * d2u


@njit(cache=True)
def value(prof, a_h, w, ts, bar, x, p):
    n = x.shape[0]
    lam = np.empty(n)
    d1 = np.empty(n)
    d2 = np.empty(n)
    c = np.empty(n)
    dc = np.empty((n, n))
    d2c = np.empty((n, n, n))
    profiles(prof, x, lam, d1, d2)
    quad_coeffs(lam, a_h, w, ts, bar, c, dc, d2c)
    s = 0.0
    for i in range(n):
        s += c[i] * p[i] * p[i]
    return s


@njit(cache=True)
def grad(prof, a_h, w, ts, bar, x, p, gx, gp):
    n = x.shape[0]
    lam = np.empty(n)
    d1 = np.empty(n)
    d2 = np.empty(n)
    c = np.empty(n)
    dc = np.empty((n, n))
    d2c = np.empty((n, n, n))
    profiles(prof, x, lam, d1, d2)
    quad_coeffs(lam, a_h, w, ts, bar, c, dc, d2c)
    for k in range(n):
        s = 0.0
        for i in range(n):
            s += p[i] * p[i] * dc[i, k]
        gx[k] = d1[k] * s
        gp[k] = 2.0 * c[k] * p[k]


@njit(cache=True)
def hess(prof, a_h, w, ts, bar, x, p, H):
    """Hessian in the (x, p) ordering, shape (2n, 2n)."""
    n = x.shape[0]
    lam = np.empty(n)
    d1 = np.empty(n)
    d2 = np.empty(n)
    c = np.empty(n)
    dc = np.empty((n, n))
    d2c = np.empty((n, n, n))
    profiles(prof, x, lam, d1, d2)
    quad_coeffs(lam, a_h, w, ts, bar, c, dc, d2c)
    H[:, :] = 0.0
    for k in range(n):
        for l in range(n):
            s = 0.0
            for i in range(n):
                s += p[i] * p[i] * d2c[i, k, l]
            H[k, l] = d1[k] * d1[l] * s
        s1 = 0.0
        for i in range(n):
            s1 += p[i] * p[i] * dc[i, k]
        H[k, k] += d2[k] * s1
        for i in range(n):
            v = 2.0 * p[i] * d1[k] * dc[i, k]
            H[k, n + i] = v
            H[n + i, k] = v
        H[n + k, n + k] = 2.0 * c[k]


@njit(cache=True)
def value_batch(prof, a_h, w, ts, bar, X, P):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        out[r] = value(prof, a_h, w, ts, bar, X[r], P[r])
    return out


@njit(cache=True)
def grad_batch(prof, a_h, w, ts, bar, X, P):
    GX = np.empty_like(X)
    GP = np.empty_like(P)
    for r in range(X.shape[0]):
        grad(prof, a_h, w, ts, bar, X[r], P[r], GX[r], GP[r])
    return GX, GP


@njit(cache=True)
def midpoint_step(prof, a_h, w, ts, bar, x, p, h, tol, maxit, x1, p1):
    """One implicit midpoint step; returns sweeps used or -1 on non-convergence."""
    n = x.shape[0]
    gx = np.empty(n)
    gp = np.empty(n)
    xm = np.empty(n)
    pm = np.empty(n)
    grad(prof, a_h, w, ts, bar, x, p, gx, gp)
    for k in range(n):
        x1[k] = x[k] + h * gp[k]
        p1[k] = p[k] - h * gx[k]
    for it in range(maxit):
        for k in range(n):
            xm[k] = 0.5 * (x[k] + x1[k])
            pm[k] = 0.5 * (p[k] + p1[k])
        grad(prof, a_h, w, ts, bar, xm, pm, gx, gp)
        ok = True
        for k in range(n):
            xn = x[k] + h * gp[k]
            pn = p[k] - h * gx[k]
            if abs(xn - x1[k]) > tol * (1.0 + abs(xn)):
                ok = False
            if abs(pn - p1[k]) > tol * (1.0 + abs(pn)):
                ok = False
            x1[k] = xn
            p1[k] = pn
        if ok:
            return it + 1
    return -1


@njit(cache=True)
def run(prof, a_h, w, ts, bar, x0, p0, h, nsteps, stride, tol, maxit, X, P, xf, pf):
    """Integrate ``nsteps`` steps recording every ``stride``; returns steps completed.

    The last accepted state is left in ``xf``, ``pf``.
    """
    n = x0.shape[0]
    x = x0.copy()
    p = p0.copy()
    x1 = np.empty(n)
    p1 = np.empty(n)
    X[0] = x
    P[0] = p
    xf[:] = x
    pf[:] = p
    r = 1
    for s in range(nsteps):
        it = midpoint_step(prof, a_h, w, ts, bar, x, p, h, tol, maxit, x1, p1)
        if it < 0:
            return s
        x[:] = x1
        p[:] = p1
        xf[:] = x
        pf[:] = p
        if (s + 1) % stride == 0:
            X[r] = x
            P[r] = p
            r += 1
    return nsteps


@njit(cache=True)
def tangent_step(prof, a_h, w, ts, bar, x, p, d, h, tol, maxit, x1, p1, d1):
    """Advance (x, p) and the displacement ``d`` by the exact Jacobian of the step.

    The Jacobian of the implicit midpoint map is the Cayley transform
    (I - h/2 A)^-1 (I + h/2 A) with A = J Hess F at the converged midpoint.
    """
    n = x.shape[0]
    it = midpoint_step(prof, a_h, w, ts, bar, x, p, h, tol, maxit, x1, p1)
    if it < 0:
        return it
    m = 2 * n
    xm = 0.5 * (x + x1)
    pm = 0.5 * (p + p1)
    Hm = np.empty((m, m))
    hess(prof, a_h, w, ts, bar, xm, pm, Hm)
    B = np.eye(m)
    C = np.eye(m)
    for r in range(n):
        for c in range(m):
            B[r, c] -= 0.5 * h * Hm[n + r, c]
            C[r, c] += 0.5 * h * Hm[n + r, c]
            B[n + r, c] += 0.5 * h * Hm[r, c]
            C[n + r, c] -= 0.5 * h * Hm[r, c]
    d1[:] = np.linalg.solve(B, C @ d)
    return it


@njit(cache=True)
def step_jacobian(prof, a_h, w, ts, bar, x, p, h, tol, maxit):
    """Full (2n, 2n) Jacobian of one step; used by the symplecticity audit."""
    n = x.shape[0]
    m = 2 * n
    J = np.empty((m, m))
    x1 = np.empty(n)
    p1 = np.empty(n)
    d1 = np.empty(m)
    e = np.zeros(m)
    for c in range(m):
        e[:] = 0.0
        e[c] = 1.0
        tangent_step(prof, a_h, w, ts, bar, x, p, e, h, tol, maxit, x1, p1, d1)
        J[:, c] = d1
    return J


@njit(cache=True)
def run_tangent(prof, a_h, w, ts, bar, x0, p0, d0, h, per_interval, nintervals,
                tol, maxit, logs, XS, PS):
    """Tangent flow with renormalisation after every ``per_interval`` steps."""
    n = x0.shape[0]
    x = x0.copy()
    p = p0.copy()
    d = d0.copy()
    x1 = np.empty(n)
    p1 = np.empty(n)
    dn = np.empty(2 * n)
    for k in range(nintervals):
        for s in range(per_interval):
            it = tangent_step(prof, a_h, w, ts, bar, x, p, d, h, tol, maxit, x1, p1, dn)
            if it < 0:
                return k
            x[:] = x1
            p[:] = p1
            d[:] = dn
        nrm = math.sqrt(np.sum(d * d))
        logs[k] = math.log(nrm)
        d /= nrm
        XS[k] = x
        PS[k] = p
    return nintervals


@njit(cache=True)
def run_two_orbit(prof, a_h, w, ts, bar, x0, p0, d0, eps, h, per_interval, nintervals,
                  tol, maxit, logs, XS, PS):
    """Two nearby orbits with separation reset to ``eps`` after every interval."""
    n = x0.shape[0]
    x = x0.copy()
    p = p0.copy()
    y = x0 + eps * d0[:n]
    q = p0 + eps * d0[n:]
    x1 = np.empty(n)
    p1 = np.empty(n)
    y1 = np.empty(n)
    q1 = np.empty(n)
    d = np.empty(2 * n)
    for k in range(nintervals):
        for s in range(per_interval):
            if midpoint_step(prof, a_h, w, ts, bar, x, p, h, tol, maxit, x1, p1) < 0:
                return k
            if midpoint_step(prof, a_h, w, ts, bar, y, q, h, tol, maxit, y1, q1) < 0:
                return k
            x[:] = x1
            p[:] = p1
            y[:] = y1
            q[:] = q1
        for i in range(n):
            d[i] = (y[i] - x[i]) / eps
            d[n + i] = (q[i] - p[i]) / eps
        nrm = math.sqrt(np.sum(d * d))
        logs[k] = math.log(nrm)
        for i in range(n):
            y[i] = x[i] + eps * d[i] / nrm
            q[i] = p[i] + eps * d[n + i] / nrm
        XS[k] = x
        PS[k] = p
    return nintervals
