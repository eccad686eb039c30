"""Compiled kernels for linear quantile regression.

The LP solved by the interior point is the bounded dual of the tick-loss
problem,

    max_a  y'a   s.t.  X'a = (1 - tau) X'1,   0 <= a <= 1,

whose equality multiplier is the regression coefficient.  The interior
point stops at a relative duality gap of ``tol``; the simplex descent that
follows moves the iterate to an exact vertex (``d`` zero residuals) and
only accepts strictly descending edges, so it cannot cycle.
"""

import numpy as np
from numba import njit

OK = 0
IP_MAXITER = 1
SIMPLEX_MAXITER = 2
SINGULAR = 3
IP_STALLED = 4  # interior point stopped early; the descent still certifies optimality

_STEP_FRACTION = 0.99995


@njit(cache=True, nogil=True)
def solve_small(A, b):
    """Gaussian elimination with partial pivoting; returns (x, ok)."""
    d = A.shape[0]
    M = A.copy()
    x = b.copy()
    scale = 0.0
    for i in range(d):
        for j in range(d):
            v = abs(M[i, j])
            if v > scale:
                scale = v
    if scale == 0.0:
        return x, False
    for c in range(d):
        p = c
        best = abs(M[c, c])
        for r in range(c + 1, d):
            if abs(M[r, c]) > best:
                best = abs(M[r, c])
                p = r
        if best <= 1e-13 * scale:
            return x, False
        if p != c:
            for j in range(d):
                tmp = M[c, j]
                M[c, j] = M[p, j]
                M[p, j] = tmp
            tmp = x[c]
            x[c] = x[p]
            x[p] = tmp
        for r in range(c + 1, d):
            f = M[r, c] / M[c, c]
            if f != 0.0:
                for j in range(c, d):
                    M[r, j] -= f * M[c, j]
                x[r] -= f * x[c]
    for c in range(d - 1, -1, -1):
        acc = x[c]
        for j in range(c + 1, d):
            acc -= M[c, j] * x[j]
        x[c] = acc / M[c, c]
    return x, True


@njit(cache=True, nogil=True)
def tick_loss(X, y, theta, tau):
    n, d = X.shape
    total = 0.0
    for i in range(n):
        fit = 0.0
        for j in range(d):
            fit += X[i, j] * theta[j]
        u = y[i] - fit
        if u < 0.0:
            total += u * (tau - 1.0)
        else:
            total += u * tau
    return total


@njit(cache=True, nogil=True)
def _max_step(v, dv, sign):
    t = 1e300
    for i in range(v.shape[0]):
        step = sign * dv[i]
        if step < 0.0:
            cand = -v[i] / step
            if cand < t:
                t = cand
    return t


@njit(cache=True, nogil=True)
def _newton(X, a, s, z, w, invD, rp, rd, c1, c2, da, dz, dw):
    """Solve the reduced normal equations; fills da, dz, dw and returns dbeta."""
    n, d = X.shape
    M = np.zeros((d, d))
    rhs = np.zeros(d)
    rhat = np.empty(n)
    for i in range(n):
        rh = rd[i] - c2[i] / s[i] + c1[i] / a[i]
        rhat[i] = rh
        wi = invD[i]
        ri = rh * wi
        for j in range(d):
            xw = X[i, j] * wi
            rhs[j] += X[i, j] * ri
            for k in range(j + 1):
                M[j, k] += xw * X[i, k]
    for j in range(d):
        rhs[j] -= rp[j]
        for k in range(j + 1, d):
            M[j, k] = M[k, j]
    dbeta, ok = solve_small(M, rhs)
    for i in range(n):
        fit = 0.0
        for j in range(d):
            fit += X[i, j] * dbeta[j]
        dai = (rhat[i] - fit) * invD[i]
        da[i] = dai
        dz[i] = (c1[i] - z[i] * dai) / a[i]
        dw[i] = (c2[i] + w[i] * dai) / s[i]
    return dbeta, ok


@njit(cache=True, nogil=True)
def interior_point(X, y, tau, tol, max_iter):
    """Primal-dual predictor-corrector; returns (beta, status, iterations)."""
    n, d = X.shape
    a = np.full(n, 1.0 - tau)
    s = np.full(n, tau)
    b = np.zeros(d)
    XtX = np.zeros((d, d))
    Xty = np.zeros(d)
    for i in range(n):
        for j in range(d):
            b[j] += (1.0 - tau) * X[i, j]
            Xty[j] += X[i, j] * y[i]
            for k in range(d):
                XtX[j, k] += X[i, j] * X[i, k]
    beta, ok = solve_small(XtX, Xty)
    if not ok:
        return beta, SINGULAR, 0

    r = np.empty(n)
    for i in range(n):
        fit = 0.0
        for j in range(d):
            fit += X[i, j] * beta[j]
        r[i] = y[i] - fit
    scale = np.mean(np.abs(r))
    if scale <= 0.0:
        scale = 1.0
    w = np.maximum(r, 0.0) + scale
    z = np.maximum(-r, 0.0) + scale

    rp = np.empty(d)
    rd = np.empty(n)
    invD = np.empty(n)
    c1 = np.empty(n)
    c2 = np.empty(n)
    da = np.empty(n)
    dz = np.empty(n)
    dw = np.empty(n)
    ynorm = 1.0 + np.max(np.abs(y))
    for it in range(max_iter):
        for j in range(d):
            rp[j] = b[j]
        gap = 0.0
        obj = 0.0
        rd_max = 0.0
        for i in range(n):
            fit = 0.0
            for j in range(d):
                fit += X[i, j] * beta[j]
                rp[j] -= X[i, j] * a[i]
            rdi = y[i] - fit - w[i] + z[i]
            rd[i] = rdi
            if abs(rdi) > rd_max:
                rd_max = abs(rdi)
            gap += a[i] * z[i] + s[i] * w[i]
            obj += y[i] * a[i]
            invD[i] = 1.0 / (z[i] / a[i] + w[i] / s[i])
            c1[i] = -a[i] * z[i]
            c2[i] = -s[i] * w[i]
        if gap <= tol * (1.0 + abs(obj)) and rd_max <= tol * ynorm:
            return beta, OK, it
        mu = gap / (2.0 * n)

        dbeta, ok = _newton(X, a, s, z, w, invD, rp, rd, c1, c2, da, dz, dw)
        if not ok:
            # normal equations degenerate as weights concentrate on a vertex
            return beta, IP_STALLED, it
        ap = min(1.0, min(_max_step(a, da, 1.0), _max_step(s, da, -1.0)))
        ad = min(1.0, min(_max_step(z, dz, 1.0), _max_step(w, dw, 1.0)))
        mu_aff = 0.0
        for i in range(n):
            mu_aff += (a[i] + ap * da[i]) * (z[i] + ad * dz[i])
            mu_aff += (s[i] - ap * da[i]) * (w[i] + ad * dw[i])
        mu_aff /= 2.0 * n
        sigma = (mu_aff / mu) ** 3
        for i in range(n):
            c1[i] = sigma * mu - a[i] * z[i] - da[i] * dz[i]
            c2[i] = sigma * mu - s[i] * w[i] + da[i] * dw[i]

        dbeta, ok = _newton(X, a, s, z, w, invD, rp, rd, c1, c2, da, dz, dw)
        if not ok:
            return beta, IP_STALLED, it
        ap = min(1.0, _STEP_FRACTION * min(_max_step(a, da, 1.0), _max_step(s, da, -1.0)))
        ad = min(1.0, _STEP_FRACTION * min(_max_step(z, dz, 1.0), _max_step(w, dw, 1.0)))
        for i in range(n):
            a[i] += ap * da[i]
            s[i] -= ap * da[i]
            z[i] += ad * dz[i]
            w[i] += ad * dw[i]
        for j in range(d):
            beta[j] += ad * dbeta[j]
    return beta, IP_MAXITER, max_iter


@njit(cache=True, nogil=True)
def _pick_basis(X, r):
    """Greedy choice of d rows with smallest |r| that are linearly independent."""
    n, d = X.shape
    order = np.argsort(np.abs(r), kind="mergesort")
    basis = np.empty(d, dtype=np.int64)
    Q = np.zeros((d, d))
    cnt = 0
    for idx in order:
        v = X[idx].copy()
        nx = np.sqrt(v @ v)
        if nx == 0.0:
            continue
        for q in range(cnt):
            v -= (Q[q] @ v) * Q[q]
        nv = np.sqrt(v @ v)
        if nv > 1e-9 * nx:
            Q[cnt] = v / nv
            basis[cnt] = idx
            cnt += 1
            if cnt == d:
                break
    return basis, cnt == d


@njit(cache=True, nogil=True)
def vertex_descent(X, y, tau, theta0, max_pivots):
    """Move to a vertex near ``theta0`` and descend edges until optimal.

    Returns (theta, status, pivots).
    """
    n, d = X.shape
    r = y - X @ theta0
    basis, ok = _pick_basis(X, r)
    if not ok:
        return theta0.copy(), SINGULAR, 0
    Xh = np.empty((d, d))
    yh = np.empty(d)
    for j in range(d):
        Xh[j] = X[basis[j]]
        yh[j] = y[basis[j]]
    theta, ok = solve_small(Xh, yh)
    if not ok:
        return theta0.copy(), SINGULAR, 0

    is_basic = np.zeros(n, dtype=np.bool_)
    for j in range(d):
        is_basic[basis[j]] = True
    eye = np.eye(d)
    ynorm = 1.0 + np.max(np.abs(y))
    eps_r = 1e-11 * ynorm
    u = np.empty(n)
    tbuf = np.empty(n)
    wbuf = np.empty(n)
    ibuf = np.empty(n, dtype=np.int64)

    for piv in range(max_pivots):
        Xh_inv = np.empty((d, d))
        for j in range(d):
            col, ok = solve_small(Xh, eye[:, j])
            if not ok:
                return theta, SINGULAR, piv
            Xh_inv[:, j] = col
        r = y - X @ theta

        best_slope = 0.0
        best_j = -1
        best_sign = 0.0
        for j in range(d):
            s_plus = 1.0 - tau
            s_minus = tau
            mass = 1.0
            for i in range(n):
                ui = 0.0
                for k in range(d):
                    ui += X[i, k] * Xh_inv[k, j]
                u[i] = ui
                if is_basic[i]:
                    continue
                mass += abs(ui)
                ri = r[i]
                if ri > eps_r:
                    s_plus -= ui * tau
                    s_minus += ui * tau
                elif ri < -eps_r:
                    s_plus -= ui * (tau - 1.0)
                    s_minus += ui * (tau - 1.0)
                elif ui > 0.0:
                    s_plus += ui * (1.0 - tau)
                    s_minus += ui * tau
                else:
                    s_plus -= ui * tau
                    s_minus -= ui * (1.0 - tau)
            thresh = -1e-12 * mass
            if s_plus < thresh and s_plus < best_slope:
                best_slope = s_plus
                best_j = j
                best_sign = 1.0
            if s_minus < thresh and s_minus < best_slope:
                best_slope = s_minus
                best_j = j
                best_sign = -1.0
        if best_j < 0:
            return theta, OK, piv

        # line search along v = sign * Xh_inv[:, best_j]
        v = best_sign * Xh_inv[:, best_j]
        m = 0
        for i in range(n):
            if is_basic[i]:
                continue
            ri = r[i]
            if abs(ri) <= eps_r:
                continue
            ui = 0.0
            for k in range(d):
                ui += X[i, k] * v[k]
            if ui == 0.0:
                continue
            t = ri / ui
            if t > 0.0:
                tbuf[m] = t
                wbuf[m] = abs(ui)
                ibuf[m] = i
                m += 1
        if m == 0:
            return theta, SINGULAR, piv
        order = np.argsort(tbuf[:m], kind="mergesort")
        slope = best_slope
        enter = -1
        t_star = 0.0
        for q in range(m):
            k = order[q]
            slope += wbuf[k]
            if slope >= 0.0:
                enter = ibuf[k]
                t_star = tbuf[k]
                break
        if enter < 0:
            return theta, SINGULAR, piv

        theta = theta + t_star * v
        leave = basis[best_j]
        is_basic[leave] = False
        is_basic[enter] = True
        basis[best_j] = enter
        Xh[best_j] = X[enter]
        # re-solve on the new basis to keep the vertex exact
        for j in range(d):
            yh[j] = y[basis[j]]
        theta_exact, ok = solve_small(Xh, yh)
        if ok:
            theta = theta_exact
    return theta, SIMPLEX_MAXITER, max_pivots


@njit(cache=True, nogil=True)
def fit_one(X, y, tau, tol, max_iter):
    """Interior point followed by vertex descent; returns (theta, obj, status, iters)."""
    beta, status, iters = interior_point(X, y, tau, tol, max_iter)
    if status == SINGULAR:
        return beta, np.inf, status, iters
    # the interior point only supplies a warm start: the descent stops at a
    # vertex with no descending edge, which is optimal for the LP
    theta, st2, piv = vertex_descent(X, y, tau, beta, 20 * X.shape[0] + 100)
    if st2 == SINGULAR:
        return theta, np.inf, st2, iters + piv
    return theta, tick_loss(X, y, theta, tau), st2, iters + piv


@njit(cache=True, nogil=True)
def fit_grid(X, y, taus, tol, max_iter):
    m = taus.shape[0]
    d = X.shape[1]
    coefs = np.empty((m, d))
    objs = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    iters = np.empty(m, dtype=np.int64)
    for q in range(m):
        theta, obj, st, it = fit_one(X, y, taus[q], tol, max_iter)
        coefs[q] = theta
        objs[q] = obj
        status[q] = st
        iters[q] = it
    return coefs, objs, status, iters
