"""Log-barrier Newton kernels for small dense problems.

All problems share one shape: variables ``w`` in R^n, linear rows
``A w <= b`` and optionally a ball ``|w[:nb]|^2 <= rho^2``. Phase 1 appends a
margin variable ``s`` (last coordinate) that shrinks every constraint by its
Euclidean scale; phase 2 minimizes a linear objective from a strictly
feasible point.
"""

import numpy as np
from numba import njit

NEWTON_TOL = 1e-10
MAX_NEWTON = 80
GAP_TOL = 1e-8
MU = 50.0


@njit(cache=True)
def _cholesky_solve(H, g, n):
    # in-place Cholesky with a tiny jitter fallback
    L = np.zeros((n, n))
    jitter = 0.0
    for attempt in range(6):
        ok = True
        for j in range(n):
            s = H[j, j] + jitter
            for k in range(j):
                s -= L[j, k] * L[j, k]
            if s <= 0.0:
                ok = False
                break
            L[j, j] = np.sqrt(s)
            for i in range(j + 1, n):
                v = H[i, j]
                for k in range(j):
                    v -= L[i, k] * L[j, k]
                L[i, j] = v / L[j, j]
        if ok:
            break
        scale = 0.0
        for j in range(n):
            scale = max(scale, abs(H[j, j]))
        jitter = max(jitter * 100.0, 1e-14 * max(scale, 1.0))
    y = np.zeros(n)
    for i in range(n):
        v = -g[i]
        for k in range(i):
            v -= L[i, k] * y[k]
        y[i] = v / L[i, i]
    d = np.zeros(n)
    for i in range(n - 1, -1, -1):
        v = y[i]
        for k in range(i + 1, n):
            v -= L[k, i] * d[k]
        d[i] = v / L[i, i]
    return d


@njit(cache=True)
def _barrier_value(c, A, b, m, n, nb, rho, sidx, w, t):
    # returns +inf outside the domain
    val = 0.0
    for j in range(n):
        val += t * c[j] * w[j]
    for i in range(m):
        s = b[i]
        for j in range(n):
            s -= A[i, j] * w[j]
        if s <= 0.0:
            return np.inf
        val -= np.log(s)
    if nb > 0:
        q = rho
        if sidx >= 0:
            q = rho - w[sidx]
        if q <= 0.0:
            return np.inf
        f = q * q
        for j in range(nb):
            f -= w[j] * w[j]
        if f <= 0.0:
            return np.inf
        val -= np.log(f)
    return val


@njit(cache=True)
def _center(c, A, b, m, n, nb, rho, sidx, w, t):
    g = np.zeros(n)
    H = np.zeros((n, n))
    sl = np.zeros(m)
    for it in range(MAX_NEWTON):
        for j in range(n):
            g[j] = t * c[j]
            for k in range(n):
                H[j, k] = 0.0
        for i in range(m):
            s = b[i]
            for j in range(n):
                s -= A[i, j] * w[j]
            sl[i] = s
            inv = 1.0 / s
            for j in range(n):
                aij = A[i, j] * inv
                if aij != 0.0:
                    g[j] += aij
                    for k in range(j + 1):
                        H[j, k] += aij * A[i, k] * inv
        if nb > 0:
            q = rho
            if sidx >= 0:
                q = rho - w[sidx]
            f = q * q
            for j in range(nb):
                f -= w[j] * w[j]
            finv = 1.0 / f
            for j in range(nb):
                g[j] += 2.0 * w[j] * finv
                H[j, j] += 2.0 * finv
                for k in range(j + 1):
                    H[j, k] += 4.0 * w[j] * w[k] * finv * finv
            if sidx >= 0:
                g[sidx] += 2.0 * q * finv
                for j in range(nb):
                    H[sidx, j] += 4.0 * w[j] * q * finv * finv
                H[sidx, sidx] += 4.0 * q * q * finv * finv - 2.0 * finv
        for j in range(n):
            for k in range(j + 1, n):
                H[j, k] = H[k, j]
        d = _cholesky_solve(H, g, n)
        lam2 = 0.0
        for j in range(n):
            lam2 -= g[j] * d[j]
        if lam2 * 0.5 <= NEWTON_TOL:
            break
        f0 = _barrier_value(c, A, b, m, n, nb, rho, sidx, w, t)
        alpha = 1.0
        wn = w.copy()
        for ls in range(60):
            for j in range(n):
                wn[j] = w[j] + alpha * d[j]
            fn = _barrier_value(c, A, b, m, n, nb, rho, sidx, wn, t)
            if fn <= f0 - 0.25 * alpha * lam2:
                break
            alpha *= 0.5
        else:
            break
        for j in range(n):
            w[j] = wn[j]
    return w


@njit(cache=True)
def phase1(A, b, m, n, nb, rho, w0, stop_margin):
    """Maximize the uniform margin ``s``.

    Returns ``(w, s, status)`` with status 1 when a strictly feasible point
    with margin close to the optimum is found, 0 when the optimal margin is
    certified below ``stop_margin``, 2 when converged to a tiny margin.
    """
    n1 = n + 1
    A1 = np.zeros((m, n1))
    scale = 0.0
    for i in range(m):
        nrm = 0.0
        for j in range(n):
            A1[i, j] = A[i, j]
            nrm += A[i, j] * A[i, j]
        nrm = np.sqrt(nrm)
        A1[i, n] = nrm
    w = np.zeros(n1)
    s0 = np.inf
    for j in range(n):
        w[j] = w0[j]
    for i in range(m):
        sl = b[i]
        for j in range(n):
            sl -= A[i, j] * w[j]
        s0 = min(s0, sl / A1[i, n])
    if nb > 0:
        un = 0.0
        for j in range(nb):
            un += w[j] * w[j]
        s0 = min(s0, rho - np.sqrt(un))
        scale = rho
    else:
        scale = 1.0
    w[n] = s0 - max(1.0, scale)
    c1 = np.zeros(n1)
    c1[n] = -1.0
    mtot = m + (2 if nb > 0 else 0)
    t = 1.0 / max(scale, 1e-3)
    for outer in range(60):
        w = _center(c1, A1, b, m, n1, nb, rho, n if nb > 0 else -1, w, t)
        s = w[n]
        gap = mtot / t
        if s > 1e-10 and gap <= 0.2 * s:
            return w[:n].copy(), s, 1
        if s + gap < stop_margin:
            return w[:n].copy(), s, 0
        if gap < 1e-14 * max(scale, 1.0):
            break
        t *= MU
    s = w[n]
    return w[:n].copy(), s, 2


@njit(cache=True)
def phase2(c, A, b, m, n, nb, rho, w0, gap_tol):
    """Minimize ``c . w`` from a strictly feasible ``w0``."""
    w = w0.copy()
    mtot = m + (1 if nb > 0 else 0)
    t = 1.0
    for outer in range(40):
        w = _center(c, A, b, m, n, nb, rho, -1, w, t)
        if mtot / t < gap_tol:
            break
        t *= MU
    return w


@njit(cache=True)
def analytic_center(A, b, m, n, nb, rho, w0):
    c = np.zeros(n)
    return _center(c, A, b, m, n, nb, rho, -1, w0.copy(), 1.0)


@njit(cache=True)
def _drop_zero_rows(A, b, m, n):
    # returns (A', b', m', ok); ok false if a zero row has a negative offset
    keep = np.zeros(m, dtype=np.bool_)
    mm = 0
    for i in range(m):
        nrm = 0.0
        for j in range(n):
            nrm += A[i, j] * A[i, j]
        if nrm > 1e-24:
            keep[i] = True
            mm += 1
        elif b[i] < -1e-12:
            return A, b, 0, False
    A2 = np.zeros((mm, n))
    b2 = np.zeros(mm)
    k = 0
    for i in range(m):
        if keep[i]:
            for j in range(n):
                A2[k, j] = A[i, j]
            b2[k] = b[i]
            k += 1
    return A2, b2, mm, True


@njit(cache=True)
def solve_lp(c, A, b, nb, rho, w0, inflate):
    """Phase 1 then phase 2 with degenerate-margin inflation.

    Returns ``(w, status, margin)``; status 1 solved, 0 infeasible.
    """
    n = c.size
    A2, b2, m, ok = _drop_zero_rows(A, b, A.shape[0], n)
    if not ok:
        return w0.copy(), 0, -np.inf
    w, s, st = phase1(A2, b2, m, n, nb, rho, w0, -inflate)
    if st != 1:
        if s < -inflate:
            return w, 0, s
        # flat or nearly flat: relax every constraint by ``inflate``
        bb = b2.copy()
        for i in range(m):
            nrm = 0.0
            for j in range(n):
                nrm += A2[i, j] * A2[i, j]
            bb[i] += 2.0 * inflate * np.sqrt(nrm)
        rr = rho + 2.0 * inflate
        w, s2, st2 = phase1(A2, bb, m, n, nb, rr, w, -inflate)
        if st2 != 1:
            return w, 0, s
        w = phase2(c, A2, bb, m, n, nb, rr, w, GAP_TOL)
        return w, 1, s
    w = phase2(c, A2, b2, m, n, nb, rho, w, GAP_TOL)
    return w, 1, s


@njit(cache=True)
def min_pay_batch(Mred, moff, r, Wr, br, nb, rho, order, x_cap, inflate, u0):
    """Min-pay programs for actions in ``order`` with reward pruning.

    Variables are ``(u, x)`` with ``u`` the reduced hidden-vector coordinates.
    Returns ``xs`` (nan when skipped or infeasible) and witnesses ``U``.
    Actions whose reward cannot beat the incumbent value are skipped.
    """
    n_act = r.size
    k = Mred.shape[1]
    mb = Wr.shape[0]
    n = k + 1
    xs = np.full(n_act, np.nan)
    U = np.zeros((n_act, k))
    best = 0.0
    rows = (n_act - 1) + 2 + mb
    A = np.zeros((rows, n))
    bv = np.zeros(rows)
    c = np.zeros(n)
    c[k] = 1.0
    w0 = np.zeros(n)
    for j in range(k):
        w0[j] = u0[j]
    w0[k] = 0.5 * x_cap
    for idx in range(order.size):
        a = order[idx]
        if r[a] <= best + 1e-12:
            continue
        i = 0
        for bb in range(n_act):
            if bb == a:
                continue
            for j in range(k):
                A[i, j] = Mred[a, j] - Mred[bb, j]
            A[i, k] = -(r[a] - r[bb])
            bv[i] = -(moff[a] - moff[bb])
            i += 1
        for j in range(n):
            A[i, j] = 0.0
            A[i + 1, j] = 0.0
        A[i, k] = -1.0
        bv[i] = 0.0
        A[i + 1, k] = 1.0
        bv[i + 1] = x_cap
        i += 2
        for q in range(mb):
            for j in range(k):
                A[i, j] = Wr[q, j]
            A[i, k] = 0.0
            bv[i] = br[q]
            i += 1
        w, st, marg = solve_lp(c, A, bv, nb, rho, w0, inflate)
        if st == 1:
            x = max(w[k], 0.0)
            xs[a] = x
            for j in range(k):
                U[a, j] = w[j]
            v = (1.0 - x) * r[a]
            if v > best:
                best = v
    return xs, U
