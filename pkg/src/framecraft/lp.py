"""Small dense linear programs.

The joint-design routines solve the same tiny obedience LP thousands of
times (one per lattice belief).  A generic solver call costs far more in
setup than in pivoting at these sizes, so this module carries its own
two-phase tableau simplex compiled with numba, plus a batched driver that
builds and solves the obedience program for many beliefs in one compiled
loop.

Problems are taken in standard form::

    minimize    c @ x
    subject to  A @ x == b,  x >= 0

with an optional boolean mask of columns that may never enter the basis
(used to pin forbidden variables at zero).  Entering columns follow Bland's
rule.  The ratio test breaks near-ties toward the larger pivot element and
only then by basic index; the obedience programs are degenerate whenever a
belief coordinate is tiny, and pivoting on a 1e-8 entry at a zero ratio is
what destroys accuracy there.  The obedience driver additionally starts
from a known feasible basis (recommend one belief-optimal action in every
state), which skips phase 1 entirely in the common case.
"""
from __future__ import annotations

import numpy as np
from numba import njit

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITERATION_LIMIT = 3

STATUS_TEXT = {
    OPTIMAL: "optimal",
    INFEASIBLE: "infeasible",
    UNBOUNDED: "unbounded",
    ITERATION_LIMIT: "iteration limit reached",
}

_PIVOT_TOL = 1e-11
_COST_TOL = 1e-11


@njit(cache=True)
def _pivot(T, basis, row, col):
    m1, w = T.shape
    piv = T[row, col]
    for j in range(w):
        T[row, j] /= piv
    for i in range(m1):
        if i != row:
            f = T[i, col]
            if f != 0.0:
                for j in range(w):
                    T[i, j] -= f * T[row, j]
    basis[row] = col


@njit(cache=True)
def _iterate(T, basis, allowed, ncols, max_iter):
    """Run Bland-rule pivots on tableau ``T`` until optimal or stuck.

    The last row of ``T`` holds reduced costs (minimization) and the last
    column holds the right-hand side.
    """
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    for _ in range(max_iter):
        col = -1
        for j in range(ncols):
            if allowed[j] and T[m, j] < -_COST_TOL:
                col = j
                break
        if col < 0:
            return OPTIMAL
        row = -1
        best = np.inf
        for i in range(m):
            a = T[i, col]
            if a > _PIVOT_TOL:
                r = T[i, rhs] / a
                # Near-ties go to the larger pivot element, then to the
                # smaller basic index (Bland).
                if row < 0 or r < best - 1e-14:
                    best = r
                    row = i
                elif abs(r - best) <= 1e-14:
                    cur = T[row, col]
                    if a > cur * (1.0 + 1e-9) or (a >= cur * (1.0 - 1e-9) and basis[i] < basis[row]):
                        best = min(best, r)
                        row = i
        if row < 0:
            return UNBOUNDED
        _pivot(T, basis, row, col)
    return ITERATION_LIMIT


@njit(cache=True)
def _solve_standard(c, A, b, allowed, max_iter, start):
    m, n = A.shape
    T = np.zeros((m + 1, n + m + 1))
    for i in range(m):
        sgn = 1.0 if b[i] >= 0.0 else -1.0
        for j in range(n):
            T[i, j] = sgn * A[i, j]
        T[i, n + m] = sgn * b[i]
    basis = -np.ones(m, dtype=np.int64)

    used = np.zeros(m, dtype=np.bool_)
    if start.shape[0] == m:
        # Caller-supplied feasible basis: install it with artificials as
        # placeholders, then pivot each designated column into its row.
        for i in range(m):
            basis[i] = n + i
            T[i, n + i] = 1.0
        for i in range(m):
            _pivot(T, basis, i, start[i])
        ok = True
        for i in range(m):
            if T[i, n + m] < -1e-12:
                ok = False
        if ok:
            for i in range(m):
                if T[i, n + m] < 0.0:
                    T[i, n + m] = 0.0
                used[i] = True
        else:
            T[:, :] = 0.0
            for i in range(m):
                sgn = 1.0 if b[i] >= 0.0 else -1.0
                for j in range(n):
                    T[i, j] = sgn * A[i, j]
                T[i, n + m] = sgn * b[i]
                basis[i] = -1
    # Reuse unit columns (slacks) as the starting basis where possible.
    for j in range(n):
        if used.all():
            break
        if not allowed[j]:
            continue
        hit = -1
        ok = True
        for i in range(m):
            v = T[i, j]
            if v == 0.0:
                continue
            if v == 1.0 and hit < 0:
                hit = i
            else:
                ok = False
                break
        if ok and hit >= 0 and not used[hit]:
            used[hit] = True
            basis[hit] = j

    n_art = 0
    for i in range(m):
        if basis[i] < 0 or basis[i] >= n:
            basis[i] = n + i
            T[i, n + i] = 1.0
            n_art += 1

    full_allowed = np.zeros(n + m, dtype=np.bool_)
    for j in range(n):
        full_allowed[j] = allowed[j]

    if n_art > 0:
        # Phase 1: minimize the sum of artificials.
        for i in range(m):
            if basis[i] >= n:
                for j in range(n + m + 1):
                    T[m, j] -= T[i, j]
                T[m, basis[i]] = 0.0
        status = _iterate(T, basis, full_allowed, n + m, max_iter)
        if status == ITERATION_LIMIT:
            return status, np.zeros(n), 0.0
        scale = 1.0
        for i in range(m):
            scale = max(scale, abs(b[i]))
        if -T[m, n + m] > 1e-9 * scale:
            return INFEASIBLE, np.zeros(n), 0.0
        # Drive zero-level artificials out of the basis where a real column
        # can replace them; rows where none can are redundant.
        for i in range(m):
            if basis[i] >= n:
                for j in range(n):
                    if allowed[j] and abs(T[i, j]) > 1e-9:
                        _pivot(T, basis, i, j)
                        break

    # Phase 2 objective row.
    for j in range(n + m + 1):
        T[m, j] = 0.0
    for j in range(n):
        T[m, j] = c[j]
    for i in range(m):
        cb = c[basis[i]] if basis[i] < n else 0.0
        if cb != 0.0:
            for j in range(n + m + 1):
                T[m, j] -= cb * T[i, j]
    status = _iterate(T, basis, full_allowed, n, max_iter)
    x = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i, n + m]
    obj = 0.0
    for j in range(n):
        obj += c[j] * x[j]
    return status, x, obj


def solve_standard_form(c, A_eq, b_eq, allowed=None, max_iter=10_000):
    """Minimize ``c @ x`` subject to ``A_eq @ x == b_eq`` and ``x >= 0``.

    Parameters
    ----------
    c : array_like, shape (n,)
    A_eq : array_like, shape (m, n)
    b_eq : array_like, shape (m,)
    allowed : array_like of bool, optional
        Columns marked False are held at zero.
    max_iter : int
        Pivot budget per phase.

    Returns
    -------
    status : int
        One of ``OPTIMAL``, ``INFEASIBLE``, ``UNBOUNDED``, ``ITERATION_LIMIT``.
    x : ndarray
    objective : float
    """
    c = np.ascontiguousarray(c, dtype=np.float64)
    A = np.ascontiguousarray(np.atleast_2d(A_eq), dtype=np.float64)
    b = np.ascontiguousarray(b_eq, dtype=np.float64)
    if allowed is None:
        allowed = np.ones(c.shape[0], dtype=np.bool_)
    allowed = np.ascontiguousarray(allowed, dtype=np.bool_)
    if A.shape != (b.shape[0], c.shape[0]) or allowed.shape != c.shape:
        raise ValueError("inconsistent LP dimensions")
    status, x, obj = _solve_standard(c, A, b, allowed, max_iter, np.empty(0, dtype=np.int64))
    return int(status), x, float(obj)


# --------------------------------------------------------------------------
# Obedience program
# --------------------------------------------------------------------------

@njit(cache=True)
def _obedience_system(mu, prior, u, v, eps, allowed_aw):
    """Standard-form data for the (eps-)obedience LP at belief ``mu``.

    Variables are ``x[a * n_states + w] = pi(a | w)`` followed by one slack
    per ordered action pair.  The objective is negated sender utility.
    """
    n_a, n_w = u.shape
    n_x = n_a * n_w
    n_pairs = n_a * (n_a - 1)
    m = n_pairs + n_w
    n = n_x + n_pairs
    A = np.zeros((m, n))
    b = np.zeros(m)
    c = np.zeros(n)
    allowed = np.ones(n, dtype=np.bool_)
    for a in range(n_a):
        for w in range(n_w):
            c[a * n_w + w] = -prior[w] * u[a, w]
            allowed[a * n_w + w] = allowed_aw[a, w]
    r = 0
    for a in range(n_a):
        for a2 in range(n_a):
            if a2 == a:
                continue
            # -sum_w mu(w) pi(a|w) (v(a,w) - v(a2,w)) + s = eps
            for w in range(n_w):
                A[r, a * n_w + w] = -mu[w] * (v[a, w] - v[a2, w])
            A[r, n_x + r] = 1.0
            b[r] = eps
            r += 1
    for w in range(n_w):
        for a in range(n_a):
            A[n_pairs + w, a * n_w + w] = 1.0
        b[n_pairs + w] = 1.0
    return c, A, b, allowed


@njit(cache=True)
def _min_slack(mu, pi, v):
    n_a, n_w = v.shape
    worst = np.inf
    for a in range(n_a):
        for a2 in range(n_a):
            if a2 == a:
                continue
            s = 0.0
            for w in range(n_w):
                s += mu[w] * pi[w, a] * (v[a, w] - v[a2, w])
            if s < worst:
                worst = s
    if worst == np.inf:
        worst = 0.0
    return worst


@njit(cache=True)
def _tidy_rows(x, n_a, n_w):
    pi = np.zeros((n_w, n_a))
    for w in range(n_w):
        tot = 0.0
        for a in range(n_a):
            val = x[a * n_w + w]
            if val < 0.0:
                val = 0.0
            pi[w, a] = val
            tot += val
        for a in range(n_a):
            pi[w, a] /= tot
    return pi


@njit(cache=True)
def _warm_basis(mu, v, allowed_aw):
    n_a, n_w = v.shape
    best = -np.inf
    a_star = 0
    for a in range(n_a):
        s = 0.0
        for w in range(n_w):
            s += mu[w] * v[a, w]
        if s > best:
            best = s
            a_star = a
    for w in range(n_w):
        if not allowed_aw[a_star, w]:
            return np.empty(0, dtype=np.int64)
    n_pairs = n_a * (n_a - 1)
    start = np.empty(n_pairs + n_w, dtype=np.int64)
    for r in range(n_pairs):
        start[r] = n_a * n_w + r
    for w in range(n_w):
        start[n_pairs + w] = a_star * n_w + w
    return start


@njit(cache=True)
def _obedience_one(mu, prior, u, v, eps, allowed_aw, max_iter):
    c, A, b, allowed = _obedience_system(mu, prior, u, v, eps, allowed_aw)
    start = _warm_basis(mu, v, allowed_aw)
    status, x, obj = _solve_standard(c, A, b, allowed, max_iter, start)
    n_a, n_w = u.shape
    if status != OPTIMAL:
        return status, -np.inf, np.zeros((n_w, n_a)), -np.inf
    pi = _tidy_rows(x, n_a, n_w)
    val = 0.0
    for w in range(n_w):
        for a in range(n_a):
            val += prior[w] * pi[w, a] * u[a, w]
    return status, val, pi, _min_slack(mu, pi, v)


@njit(cache=True)
def _obedience_batch(mus, prior, u, v, eps, allowed_aw, max_iter):
    N = mus.shape[0]
    status = np.zeros(N, dtype=np.int64)
    values = np.empty(N)
    slacks = np.empty(N)
    for k in range(N):
        st, val, _, sl = _obedience_one(mus[k], prior, u, v, eps, allowed_aw, max_iter)
        status[k] = st
        values[k] = val
        slacks[k] = sl
    return status, values, slacks


def _prep(prior, u, v, allowed):
    u = np.ascontiguousarray(u, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    prior = np.ascontiguousarray(prior, dtype=np.float64)
    if allowed is None:
        allowed = np.ones(u.shape, dtype=np.bool_)
    return prior, u, v, np.ascontiguousarray(allowed, dtype=np.bool_)


def _obedience_highs(mu, prior, u, v, eps, allowed):
    # Fallback path through scipy's HiGHS interface.  Only reached when the
    # compiled solver stalls, which in practice means belief entries near
    # machine precision together with forbidden pairs.
    from scipy.optimize import linprog

    n_a, n_w = u.shape
    c = -(prior[None, :] * u).ravel()
    rows = []
    for a in range(n_a):
        for a2 in range(n_a):
            if a2 != a:
                r = np.zeros((n_a, n_w))
                r[a] = -mu * (v[a] - v[a2])
                rows.append(r.ravel())
    A_eq = np.zeros((n_w, n_a * n_w))
    for w in range(n_w):
        A_eq[w, np.arange(n_a) * n_w + w] = 1.0
    bounds = [(0.0, None) if ok else (0.0, 0.0) for ok in allowed.ravel()]
    res = linprog(c, A_ub=np.array(rows) if rows else None,
                  b_ub=np.full(len(rows), eps) if rows else None,
                  A_eq=A_eq, b_eq=np.ones(n_w), bounds=bounds, method="highs")
    if res.status != 0:
        return INFEASIBLE if res.status == 2 else ITERATION_LIMIT, -np.inf, np.zeros((n_w, n_a)), -np.inf
    pi = _tidy_rows(res.x, n_a, n_w)
    val = float(np.sum(prior[:, None] * pi * u.T))
    return OPTIMAL, val, pi, float(_min_slack(mu, pi, v))


def obedience_lp(mu, prior, u, v, eps=0.0, allowed=None, max_iter=10_000):
    """Best direct scheme at receiver belief ``mu``.

    Returns ``(status, value, pi, min_slack)`` where ``pi`` has shape
    ``(n_states, n_actions)`` and ``min_slack`` is the smallest left-hand
    side of the obedience constraints at ``mu``.
    """
    prior, u, v, allowed = _prep(prior, u, v, allowed)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    st, val, pi, sl = _obedience_one(mu, prior, u, v, float(eps), allowed, max_iter)
    if st != OPTIMAL:
        st, val, pi, sl = _obedience_highs(mu, prior, u, v, float(eps), allowed)
    return int(st), float(val), pi, float(sl)


def obedience_values(mus, prior, u, v, eps=0.0, allowed=None, max_iter=10_000):
    """Vectorised :func:`obedience_lp` over the rows of ``mus``.

    Returns arrays ``(status, values, slacks)``; infeasible rows carry
    ``-inf`` as value.
    """
    prior, u, v, allowed = _prep(prior, u, v, allowed)
    mus = np.ascontiguousarray(np.atleast_2d(mus), dtype=np.float64)
    status, values, slacks = _obedience_batch(mus, prior, u, v, float(eps), allowed, max_iter)
    for k in np.flatnonzero(status != OPTIMAL):
        st, val, _, sl = _obedience_highs(mus[k], prior, u, v, float(eps), allowed)
        status[k], values[k], slacks[k] = st, val, sl
    return status, values, slacks


def min_obedience_slack(mu, pi, v):
    """Most violated obedience constraint of direct scheme ``pi`` at ``mu``."""
    return float(_min_slack(np.asarray(mu, dtype=np.float64),
                            np.ascontiguousarray(pi, dtype=np.float64),
                            np.ascontiguousarray(v, dtype=np.float64)))
