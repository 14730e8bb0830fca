"""Compiled numerical kernels for the weighted hinge + ridge problem.

All kernels work on the *signed design* ``A`` whose rows are
``a_i = y_i * (1, x_i)`` so that the margin of row ``i`` is ``a_i @ beta`` and
its hinge residual is ``r_i = 1 - a_i @ beta``.  The objective is

    F(beta) = sum_i C_i * max(r_i, 0) + lam / 2 * ||beta[1:]||^2

with per-row caps ``C_i >= 0`` (already divided by the instance count).

Row status codes used by the exact solver and the leave-one-out homotopy:

    0  R  r_i < 0, multiplier c_i = 0
    1  E  r_i = 0, multiplier 0 <= c_i <= C_i
    2  L  r_i > 0, multiplier c_i = C_i
"""

import numpy as np
from numba import njit

STATUS_R = 0
STATUS_E = 1
STATUS_L = 2

# pivot magnitude below which the small KKT systems are treated as singular
_PIVOT_EPS = 1e-13


@njit(cache=True)
def residuals(A, beta):
    m, d = A.shape
    r = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(d):
            s += A[i, j] * beta[j]
        r[i] = 1.0 - s
    return r


@njit(cache=True)
def objective(A, C, lam, beta, mu):
    """Smoothed objective; ``mu = 0`` gives the exact hinge objective."""
    m, d = A.shape
    f = 0.0
    for i in range(m):
        s = 0.0
        for j in range(d):
            s += A[i, j] * beta[j]
        r = 1.0 - s
        if r >= mu:
            f += C[i] * r
        elif mu > 0.0 and r > -mu:
            f += C[i] * (r + mu) * (r + mu) / (4.0 * mu)
    pen = 0.0
    for j in range(1, d):
        pen += beta[j] * beta[j]
    return f + 0.5 * lam * pen


@njit(cache=True)
def _lu_solve(K, b):
    """Gaussian elimination with partial pivoting. Returns (x, ok)."""
    n = K.shape[0]
    M = K.copy()
    x = b.copy()
    scale = 0.0
    for i in range(n):
        for j in range(n):
            v = abs(M[i, j])
            if v > scale:
                scale = v
    if scale == 0.0:
        return x, False
    for col in range(n):
        piv = col
        best = abs(M[col, col])
        for row in range(col + 1, n):
            v = abs(M[row, col])
            if v > best:
                best = v
                piv = row
        if best <= _PIVOT_EPS * scale:
            return x, False
        if piv != col:
            for j in range(n):
                tmp = M[col, j]
                M[col, j] = M[piv, j]
                M[piv, j] = tmp
            tmp = x[col]
            x[col] = x[piv]
            x[piv] = tmp
        inv = 1.0 / M[col, col]
        for row in range(col + 1, n):
            f = M[row, col] * inv
            if f != 0.0:
                for j in range(col, n):
                    M[row, j] -= f * M[col, j]
                x[row] -= f * x[col]
    for col in range(n - 1, -1, -1):
        s = x[col]
        for j in range(col + 1, n):
            s -= M[col, j] * x[j]
        x[col] = s / M[col, col]
    return x, True


@njit(cache=True)
def newton_stage(A, C, lam, beta, mu, max_iter, best_beta, best_obj, history, n_hist):
    """Damped Newton on the smoothed objective at fixed ``mu``.

    Updates ``beta`` in place.  After every iteration the exact objective of
    the iterate is compared with the incumbent (``best_beta``/``best_obj[0]``)
    and the incumbent value is appended to ``history``.  Returns the number
    of iterations run and the final Newton decrement.
    """
    m, d = A.shape
    g = np.empty(d)
    H = np.empty((d, d))
    step = np.empty(d)
    trial = np.empty(d)
    dec = np.inf
    it = 0
    f_cur = objective(A, C, lam, beta, mu)
    while it < max_iter:
        for j in range(d):
            g[j] = lam * beta[j] if j > 0 else 0.0
            for k in range(d):
                H[j, k] = 0.0
            if j > 0:
                H[j, j] = lam
        inv2mu = 1.0 / (2.0 * mu)
        for i in range(m):
            s = 0.0
            for j in range(d):
                s += A[i, j] * beta[j]
            r = 1.0 - s
            if r >= mu:
                for j in range(d):
                    g[j] -= C[i] * A[i, j]
            elif r > -mu:
                w = C[i] * (r + mu) * inv2mu
                h = C[i] * inv2mu
                for j in range(d):
                    g[j] -= w * A[i, j]
                    aij = A[i, j] * h
                    for k in range(j, d):
                        H[j, k] += aij * A[i, k]
        tr = 0.0
        for j in range(d):
            for k in range(j):
                H[j, k] = H[k, j]
            tr += H[j, j]
        ridge = 1e-12 * (tr + 1.0)
        for j in range(d):
            H[j, j] += ridge
        rhs = -g
        sol, ok = _lu_solve(H, rhs)
        if not ok:
            for j in range(d):
                sol[j] = -g[j] / (H[j, j] + 1.0)
        dec = 0.0
        for j in range(d):
            step[j] = sol[j]
            dec -= g[j] * step[j]
        it += 1
        if dec <= 1e-16 * (1.0 + abs(f_cur)):
            break
        t = 1.0
        accepted = False
        for _ in range(60):
            for j in range(d):
                trial[j] = beta[j] + t * step[j]
            f_new = objective(A, C, lam, trial, mu)
            if f_new <= f_cur - 1e-4 * t * dec:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        for j in range(d):
            beta[j] = trial[j]
        f_cur = f_new
        f_true = objective(A, C, lam, beta, 0.0)
        if f_true < best_obj[0]:
            best_obj[0] = f_true
            for j in range(d):
                best_beta[j] = beta[j]
        if n_hist[0] < history.shape[0]:
            history[n_hist[0]] = best_obj[0]
            n_hist[0] += 1
    return it, dec


@njit(cache=True)
def polish(A, C, lam, beta, tau, tol):
    """Exact solve of the KKT system for the partition implied by ``beta``.

    Rows with ``|r_i| <= tau`` form the margin set E.  Returns
    ``(beta_exact, status, c, ok)``; ``ok`` is False when the partition does
    not yield a verified optimum.
    """
    m, d = A.shape
    r = residuals(A, beta)
    status = np.empty(m, dtype=np.int8)
    c = np.zeros(m)
    E = np.empty(m, dtype=np.int64)
    e = 0
    gL = np.zeros(d)
    for i in range(m):
        if r[i] > tau:
            status[i] = STATUS_L
            c[i] = C[i]
            for j in range(d):
                gL[j] += C[i] * A[i, j]
        elif r[i] < -tau:
            status[i] = STATUS_R
        else:
            status[i] = STATUS_E
            E[e] = i
            e += 1
    if e == 0 or e > d or lam <= 0.0:
        return beta.copy(), status, c, False
    n = d + e
    K = np.zeros((n, n))
    rhs = np.zeros(n)
    for j in range(1, d):
        K[j, j] = lam
    for q in range(e):
        i = E[q]
        for j in range(d):
            K[j, d + q] = -A[i, j]
            K[d + q, j] = A[i, j]
        rhs[d + q] = 1.0
    for j in range(d):
        rhs[j] = gL[j]
    sol, ok = _lu_solve(K, rhs)
    if not ok:
        return beta.copy(), status, c, False
    new_beta = sol[:d].copy()
    cmax = 0.0
    for i in range(m):
        if C[i] > cmax:
            cmax = C[i]
    for q in range(e):
        i = E[q]
        ci = sol[d + q]
        if ci < -tol * cmax or ci > C[i] + tol * cmax:
            return beta.copy(), status, c, False
        c[i] = min(max(ci, 0.0), C[i])
    r_new = residuals(A, new_beta)
    for i in range(m):
        if status[i] == STATUS_L and r_new[i] < -tol:
            return beta.copy(), status, c, False
        if status[i] == STATUS_R and r_new[i] > tol:
            return beta.copy(), status, c, False
    return new_beta, status, c, True


@njit(cache=True)
def duality_gap(A, C, lam, beta, c):
    """``sum_i C_i [r_i]_+ - c_i r_i`` for multipliers consistent with ``beta``."""
    m, d = A.shape
    r = residuals(A, beta)
    gap = 0.0
    for i in range(m):
        gap += C[i] * max(r[i], 0.0) - c[i] * r[i]
    return gap


@njit(cache=True)
def _decrement_path(A, C, lam, beta, status, c, order, rho, k, delta, max_events,
                    touched, n_touched, old_status, old_c):
    """Follow the exact solution while the cap of row ``k`` drops by ``delta``.

    ``beta``, ``status`` and ``c`` are modified in place; every row whose
    status or multiplier changes is logged in ``touched`` together with its
    previous values so the caller can restore the base state.  ``order``
    sorts rows by ``rho_i = |r_i| / ||a_i||`` of the base state: a row can
    only reach the margin once the path has moved ``beta`` by at least
    ``rho_i`` (Cauchy-Schwarz), so each segment scans a prefix of ``order``.
    Returns ``(ok, n_events)``.
    """
    m, d = A.shape
    if status[k] == STATUS_R:
        return True, 0
    remaining = delta
    if status[k] == STATUS_E:
        slack = C[k] - c[k]
        if slack >= remaining:
            return True, 0
        remaining -= slack
    # row k now has c_k tied to its shrinking cap
    touched[n_touched[0]] = k
    old_status[n_touched[0]] = status[k]
    old_c[n_touched[0]] = c[k]
    n_touched[0] += 1
    status[k] = 3
    E = np.empty(d + 1, dtype=np.int64)
    e = 0
    # the base E set is the prefix of ``order`` with rho == 0
    for j in range(m):
        i = order[j]
        if rho[i] > 0.0:
            break
        if status[i] == STATUS_E:
            if e >= d:
                return False, 0
            E[e] = i
            e += 1
    beta_base = beta.copy()
    n_events = 0
    dbeta = np.empty(d)
    while remaining > 0.0:
        if e == 0:
            return False, n_events
        n = d + e
        K = np.zeros((n, n))
        rhs = np.zeros(n)
        for j in range(1, d):
            K[j, j] = lam
        moved = 0.0
        for j in range(d):
            moved += (beta[j] - beta_base[j]) ** 2
        moved = np.sqrt(moved)
        for q in range(e):
            i = E[q]
            for j in range(d):
                K[j, d + q] = -A[i, j]
                K[d + q, j] = A[i, j]
        for j in range(d):
            rhs[j] = -A[k, j]
        sol, ok = _lu_solve(K, rhs)
        if not ok:
            return False, n_events
        nrm = 0.0
        for j in range(d):
            dbeta[j] = sol[j]
            nrm += sol[j] * sol[j]
        nrm = np.sqrt(nrm)
        drk = 0.0
        for j in range(d):
            drk -= A[k, j] * dbeta[j]
        if drk < -1e-9 * (1.0 + abs(drk)):
            return False, n_events
        tau = remaining
        ev = -1
        ev_q = -1
        ev_kind = 0
        for q in range(e):
            i = E[q]
            dc = sol[d + q]
            if dc < 0.0:
                t = -c[i] / dc
                if t < tau:
                    tau = t if t > 0.0 else 0.0
                    ev = i
                    ev_q = q
                    ev_kind = 2
            elif dc > 0.0:
                t = (C[i] - c[i]) / dc
                if t < tau:
                    tau = t if t > 0.0 else 0.0
                    ev = i
                    ev_q = q
                    ev_kind = 3
        for jj in range(m):
            i = order[jj]
            if rho[i] > moved + nrm * tau:
                break
            st = status[i]
            if st != STATUS_L and st != STATUS_R:
                continue
            s = 0.0
            t_dr = 0.0
            for j in range(d):
                s += A[i, j] * beta[j]
                t_dr -= A[i, j] * dbeta[j]
            ri = 1.0 - s
            if (st == STATUS_L and t_dr < 0.0) or (st == STATUS_R and t_dr > 0.0):
                t = -ri / t_dr
                if t < tau:
                    tau = t if t > 0.0 else 0.0
                    ev = i
                    ev_q = -1
                    ev_kind = 1
        for j in range(d):
            beta[j] += tau * dbeta[j]
        for q in range(e):
            i = E[q]
            c[i] += tau * sol[d + q]
        c[k] -= tau
        remaining -= tau
        if ev < 0:
            break
        n_events += 1
        if n_events > max_events or n_touched[0] >= touched.shape[0]:
            return False, n_events
        touched[n_touched[0]] = ev
        old_status[n_touched[0]] = status[ev]
        old_c[n_touched[0]] = c[ev]
        n_touched[0] += 1
        if ev_kind == 1:
            if e >= d:
                return False, n_events
            E[e] = ev
            e += 1
            status[ev] = STATUS_E
        else:
            if ev_kind == 2:
                status[ev] = STATUS_R
                c[ev] = 0.0
            else:
                status[ev] = STATUS_L
                c[ev] = C[ev]
            E[ev_q] = E[e - 1]
            e -= 1
    # multipliers of E rows drift along the path; log them for restoration
    return True, n_events


@njit(cache=True)
def loo_residuals(A, C, lam, beta, status, c, rows, deltas, max_events):
    """Held-out residuals ``1 - a_k @ beta^{[-k]}`` for each query row.

    Each query lowers the cap of ``rows[q]`` by ``deltas[q]`` starting from
    the same exact solution ``(beta, status, c)``.  ``ok[q]`` is False when
    the path could not be followed; the caller then refits that query
    another way.
    """
    m, d = A.shape
    nq = rows.shape[0]
    out = np.empty(nq)
    ok = np.zeros(nq, dtype=np.bool_)
    r0 = residuals(A, beta)
    rho = np.empty(m)
    for i in range(m):
        nrm = 0.0
        for j in range(d):
            nrm += A[i, j] * A[i, j]
        rho[i] = 0.0 if status[i] == STATUS_E else abs(r0[i]) / np.sqrt(nrm)
    order = np.argsort(rho)
    st = status.copy()
    cc = c.copy()
    cap = 4 * max_events + 8
    touched = np.empty(cap, dtype=np.int64)
    old_status = np.empty(cap, dtype=np.int8)
    old_c = np.empty(cap)
    n_touched = np.zeros(1, dtype=np.int64)
    base_E = np.empty(m, dtype=np.int64)
    n_base_E = 0
    for i in range(m):
        if status[i] == STATUS_E:
            base_E[n_base_E] = i
            n_base_E += 1
    for q in range(nq):
        k = rows[q]
        b = beta.copy()
        n_touched[0] = 0
        good, _ = _decrement_path(A, C, lam, b, st, cc, order, rho, k, deltas[q],
                                  max_events, touched, n_touched, old_status, old_c)
        ok[q] = good
        s = 0.0
        for j in range(d):
            s += A[k, j] * b[j]
        out[q] = 1.0 - s
        for t in range(n_touched[0] - 1, -1, -1):
            i = touched[t]
            st[i] = old_status[t]
            cc[i] = old_c[t]
        for t in range(n_base_E):
            i = base_E[t]
            cc[i] = c[i]
            st[i] = status[i]
    return out, ok
