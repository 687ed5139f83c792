"""Pure-Python/NumPy kernels. Reference behaviour for the compiled ``_core``.

Every function here has a twin with the same signature in ``_core.pyx``.
Arrays are float64; flows are ``(n, m)`` with types in columns.
"""

import itertools

import numpy as np

CONVERGED = 0
MAX_ITERS = 1
STALLED = 2


def project_simplex(v, total):
    """Euclidean projection of ``v`` onto ``{x >= 0, sum(x) = total}`` (sort method)."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, n + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _project_columns(x, demand):
    """``project_simplex`` applied to every column at once."""
    n = x.shape[0]
    u = -np.sort(-x, axis=0)
    css = np.cumsum(u, axis=0) - demand
    k = np.arange(1, n + 1)[:, None]
    # the condition holds on a prefix of rows, so its count is rho + 1
    rho = (u - css / k > 0).sum(axis=0) - 1
    theta = css[rho, np.arange(x.shape[1])] / (rho + 1)
    return np.maximum(x - theta, 0.0)


def _cost(a, b, f):
    return float((b + (a * f).sum(axis=1)) @ f.sum(axis=1))


def _grad(a, b, f):
    road = f.sum(axis=1)
    lat = b + (a * f).sum(axis=1)
    return lat[:, None] + a * road[:, None]


def pgd(a, b, demand, f0, max_iters, tol, armijo_c=1e-4, shrink=0.5, window=500):
    """Projected gradient descent with Armijo backtracking along the projection arc.

    Returns ``(f, iterations, residual, status)`` where ``residual`` is the
    Frobenius norm of ``f - P(f - grad)``. Stops as stalled once the best
    residual has not improved by 1% for ``window`` iterations; near the
    tolerance that is usually rounding noise in the cost.
    """
    f = np.array(f0, dtype=float)
    t = 1.0
    cost = _cost(a, b, f)
    it = 0
    status = MAX_ITERS
    resid = np.inf
    best = np.inf
    best_it = 0
    while True:
        g = _grad(a, b, f)
        resid = float(np.linalg.norm(f - _project_columns(f - g, demand)))
        if resid <= tol:
            status = CONVERGED
            break
        if it >= max_iters:
            break
        if resid < 0.99 * best:
            best, best_it = resid, it
        elif it - best_it >= window:
            status = STALLED
            break
        while True:
            trial = _project_columns(f - t * g, demand)
            step = trial - f
            tc = _cost(a, b, trial)
            if tc <= cost + armijo_c * float((g * step).sum()):
                break
            t *= shrink
            if t < 1e-30:
                return f, it, resid, STALLED
        f = trial
        cost = tc
        t = min(t / shrink, 1e6)
        it += 1
    return f, it, resid, status


def water_fill(base, slope, total):
    """Split ``total`` over roads with cost ``base + slope * x`` so used roads tie at the minimum."""
    base = np.asarray(base, dtype=float)
    slope = np.asarray(slope, dtype=float)
    order = np.argsort(base, kind="stable")
    n = base.shape[0]
    s1 = 0.0
    s2 = 0.0
    level = base[order[0]]
    for k in range(n):
        idx = order[k]
        s1 += 1.0 / slope[idx]
        s2 += base[idx] / slope[idx]
        level = (total + s2) / s1
        if k == n - 1 or level <= base[order[k + 1]]:
            break
    return np.maximum(level - base, 0.0) / slope


def wardrop_violation(a, b, tolls, f, threshold):
    lat = b + (a * f).sum(axis=1)
    cost = lat[:, None] + tolls
    gap = cost - cost.min(axis=0)
    used = f > threshold
    if not used.any():
        return 0.0
    return float(gap[used].max())


def br_dynamics(a, b, demand, tolls, f0, damping, eps, max_rounds, threshold, window):
    """Damped round-robin best response.

    Returns ``(f, rounds, violation, status)``. ``STALLED`` means the best
    violation failed to improve by 1% over ``window`` consecutive rounds.
    """
    f = np.array(f0, dtype=float)
    n, m = f.shape
    best = np.inf
    mark = np.inf
    mark_round = 0
    rounds = 0
    while True:
        viol = wardrop_violation(a, b, tolls, f, threshold)
        if viol <= eps:
            return f, rounds, viol, CONVERGED
        if viol < best:
            best = viol
        if best < 0.99 * mark:
            mark = best
            mark_round = rounds
        elif rounds - mark_round >= window:
            return f, rounds, viol, STALLED
        if rounds >= max_rounds:
            return f, rounds, viol, MAX_ITERS
        for j in range(m):
            partial = b + (a * f).sum(axis=1) - a[:, j] * f[:, j]
            br = water_fill(partial + tolls[:, j], a[:, j], demand[j])
            f[:, j] = (1.0 - damping) * f[:, j] + damping * br
        rounds += 1


def grid_search(a, b, splits):
    """Exhaustive minimum of the social cost over per-type candidate splits.

    ``splits[j]`` is a ``(K_j, n)`` array of road splits for type ``j``.
    Returns ``(indices, cost)``; the first minimum in lexicographic order wins.
    """
    n, m = a.shape
    best_cost = np.inf
    best_idx = None
    last = splits[m - 1]
    if m == 1:
        costs = _batch_cost(a, b, np.zeros(n), np.zeros(n), None, last, m - 1)
        k = int(np.argmin(costs))
        return (k,), float(costs[k])
    pen = splits[m - 2]
    block = max(1, int(2_000_000 // max(1, last.shape[0] * n)))
    for prefix in itertools.product(*(range(s.shape[0]) for s in splits[:m - 2])):
        road = np.zeros(n)
        weighted = np.zeros(n)
        for j, k in enumerate(prefix):
            road += splits[j][k]
            weighted += a[:, j] * splits[j][k]
        for lo in range(0, pen.shape[0], block):
            chunk = pen[lo:lo + block]
            costs = _batch_cost(a, b, road, weighted, chunk, last, m - 1)
            k = int(np.argmin(costs))
            if costs.flat[k] < best_cost:
                best_cost = float(costs.flat[k])
                p, q = divmod(k, last.shape[0])
                best_idx = prefix + (lo + p, q)
    return best_idx, best_cost


def _batch_cost(a, b, road, weighted, pen, last, jl):
    if pen is None:
        r = road[None, :] + last
        w = weighted[None, :] + a[:, jl] * last
        return ((b + w) * r).sum(axis=-1)
    jp = jl - 1
    r = road + pen[:, None, :] + last[None, :, :]
    w = weighted + (a[:, jp] * pen)[:, None, :] + (a[:, jl] * last)[None, :, :]
    return ((b + w) * r).sum(axis=-1).ravel()
