"""Compiled inner loops for the subgroup scan.

All likelihood work happens in ``t = log q`` where the Bernoulli
log-likelihood ratio is concave, so every root below is unique.
"""

import math

import numpy as np
from numba import njit

INTERIOR = 0
CAPPED = 1
UNBOUNDED = 2

_T_EXPAND_LIMIT = 700.0


@njit(cache=True)
def _llr(ysum, p, t):
    """ysum * t - sum(log(1 - p + p e^t))."""
    em1 = math.expm1(t)
    acc = 0.0
    for i in range(len(p)):
        acc += math.log1p(p[i] * em1)
    return ysum * t - acc


@njit(cache=True)
def _grad(ysum, p, t):
    """d/dt of the log-likelihood ratio and its (negative) second derivative."""
    et = math.exp(t)
    g = ysum
    h = 0.0
    for i in range(len(p)):
        pi = p[i]
        if pi <= 0.0:
            continue
        s = pi * et / (1.0 - pi + pi * et)
        g -= s
        h -= s * (1.0 - s)
    return g, h


@njit(cache=True)
def score_arrays(y, p, log_qmax):
    """Maximize the LLR over q >= 1.

    Returns ``(F, t, status)``. ``status`` is UNBOUNDED when the supremum is
    the q -> inf limit (then ``t`` is inf), CAPPED when the objective still
    increases at ``q_max``.
    """
    n = len(y)
    ysum = 0.0
    psum = 0.0
    npos = 0
    log_p = 0.0
    for i in range(n):
        ysum += y[i]
        psum += p[i]
        if p[i] > 0.0:
            npos += 1
            log_p += math.log(p[i])
    if n == 0 or ysum - psum <= 0.0:
        return 0.0, 0.0, INTERIOR
    if ysum > npos:
        return _llr(ysum, p, log_qmax), log_qmax, CAPPED
    if ysum == npos:
        return -log_p, math.inf, UNBOUNDED
    g_hi, _ = _grad(ysum, p, log_qmax)
    if g_hi >= 0.0:
        return _llr(ysum, p, log_qmax), log_qmax, CAPPED

    lo = 0.0
    hi = log_qmax
    r = ysum / n
    c = psum / n
    t = math.log(r / (1.0 - r)) - math.log(c / (1.0 - c)) if c < 1.0 else 0.5 * hi
    if not (lo < t < hi):
        t = 0.5 * (lo + hi)
    for _ in range(200):
        g, h = _grad(ysum, p, t)
        if g == 0.0:
            break
        if g > 0.0:
            lo = t
        else:
            hi = t
        t_new = t - g / h if h < 0.0 else 0.5 * (lo + hi)
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-15 * max(1.0, abs(t)):
            t = t_new
            break
        t = t_new
    return _llr(ysum, p, t), t, INTERIOR


@njit(cache=True)
def positive_root(ysum, p):
    """Where a single value's contribution ``ysum*t - sum log(1-p+p e^t)``
    crosses back to zero; 0 if it is never positive, inf if it never returns."""
    psum = 0.0
    npos = 0
    for i in range(len(p)):
        psum += p[i]
        if p[i] > 0.0:
            npos += 1
    if len(p) == 0 or ysum - psum <= 0.0:
        return 0.0
    if ysum >= npos:
        return math.inf
    hi = 1.0
    while _llr(ysum, p, hi) > 0.0:
        hi *= 2.0
        if hi > _T_EXPAND_LIMIT:
            return math.inf
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _llr(ysum, p, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


@njit(cache=True)
def _members(codes, incl):
    n, m = codes.shape
    out = np.ones(n, dtype=np.bool_)
    for i in range(n):
        for j in range(m):
            if not incl[j, codes[i, j]]:
                out[i] = False
                break
    return out


@njit(cache=True)
def _score_mask(y, p, mask, log_qmax):
    k = 0
    for i in range(len(mask)):
        if mask[i]:
            k += 1
    ys = np.empty(k, dtype=np.float64)
    ps = np.empty(k, dtype=np.float64)
    k = 0
    for i in range(len(mask)):
        if mask[i]:
            ys[k] = y[i]
            ps[k] = p[i]
            k += 1
    return score_arrays(ys, ps, log_qmax)


@njit(cache=True)
def optimize_attribute(codes, y, p, incl, attr, n_values, log_qmax):
    """Best value set for ``attr`` with every other attribute held fixed.

    For fixed q the optimal set keeps exactly the values with a positive
    contribution, i.e. those whose positive root exceeds log q, so the
    conditional optimum is one of the prefixes of the values sorted by root.
    Returns the new inclusion row and the resulting score.
    """
    n, m = codes.shape
    nv = n_values[attr]
    cond = np.ones(n, dtype=np.bool_)
    for i in range(n):
        for j in range(m):
            if j != attr and not incl[j, codes[i, j]]:
                cond[i] = False
                break

    current = incl[attr].copy()
    cur_mask = cond.copy()
    for i in range(n):
        if cur_mask[i] and not current[codes[i, attr]]:
            cur_mask[i] = False
    f_cur = _score_mask(y, p, cur_mask, log_qmax)[0]

    counts = np.zeros(nv, dtype=np.int64)
    ysums = np.zeros(nv)
    psums = np.zeros(nv)
    for i in range(n):
        if cond[i]:
            v = codes[i, attr]
            counts[v] += 1
            ysums[v] += y[i]
            psums[v] += p[i]

    roots = np.zeros(nv)
    for v in range(nv):
        if counts[v] == 0:
            continue
        pv = np.empty(counts[v])
        k = 0
        for i in range(n):
            if cond[i] and codes[i, attr] == v:
                pv[k] = p[i]
                k += 1
        roots[v] = positive_root(ysums[v], pv)

    # stable descending sort by root
    order = np.argsort(-roots, kind="mergesort")
    best_f = f_cur
    best_row = current
    chosen = np.zeros(incl.shape[1], dtype=np.bool_)
    for j in range(nv):
        v = order[j]
        if roots[v] <= 0.0:
            break
        chosen[v] = True
        mask = cond.copy()
        for i in range(n):
            if mask[i] and not chosen[codes[i, attr]]:
                mask[i] = False
        f = _score_mask(y, p, mask, log_qmax)[0]
        if f > best_f + 1e-12 * max(1.0, abs(best_f)):
            best_f = f
            best_row = chosen.copy()

    if roots.max() <= 0.0:
        # nothing can score above zero: keep the most promising single value
        best_v = -1
        best_gap = -math.inf
        for v in range(nv):
            if counts[v] == 0:
                continue
            gap = ysums[v] - psums[v]
            # ties go to fewer rows, matching the scan-level tie-break
            if gap > best_gap or (gap == best_gap and counts[v] < counts[best_v]):
                best_gap = gap
                best_v = v
        if best_v >= 0:
            best_row = np.zeros(incl.shape[1], dtype=np.bool_)
            best_row[best_v] = True
            best_f = 0.0
    return best_row, best_f


@njit(cache=True)
def ascend(codes, y, p, incl0, n_values, orders, log_qmax, tol):
    """Coordinate ascent over attributes from ``incl0``.

    ``orders[s]`` is the attribute visiting order of sweep ``s``. Returns the
    final inclusion matrix, its score, and the score after each sweep
    (index 0 is the starting score; unused slots are NaN).
    """
    incl = incl0.copy()
    m = codes.shape[1]
    history = np.full(orders.shape[0] + 1, np.nan)
    f = _score_mask(y, p, _members(codes, incl), log_qmax)[0]
    history[0] = f
    for s in range(orders.shape[0]):
        f_start = f
        for k in range(m):
            attr = orders[s, k]
            row, f = optimize_attribute(codes, y, p, incl, attr, n_values, log_qmax)
            incl[attr] = row
        history[s + 1] = f
        if f - f_start < tol:
            break
    return incl, f, history


@njit(cache=True)
def members(codes, incl):
    return _members(codes, incl)
