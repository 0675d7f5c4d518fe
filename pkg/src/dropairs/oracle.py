"""Slow reference maximizers and numerical derivatives, used for verification only."""

import math

import numpy as np

from .core import DroPairsError


class OracleFailureError(DroPairsError, RuntimeError):
    pass


def project_simplex(v):
    """Euclidean projection onto {p >= 0, sum p = 1} by the sorted-threshold rule."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _kl_objective(p, loss, gamma):
    n = p.size
    pos = p > 0
    return float(p @ loss) - gamma * float(np.sum(p[pos] * np.log(n * p[pos])))


def _newton_polish(p, loss, gamma, iters=200):
    # damped Newton on the face of the simplex; p must be strictly positive
    n = p.size
    f = _kl_objective(p, loss, gamma)
    for _ in range(iters):
        g = loss - gamma * (np.log(n * p) + 1.0)
        d = (p / gamma) * (g - (p @ g) / p.sum())
        d -= p * d.sum() / p.sum()
        neg = d < 0
        t = min(1.0, 0.99 * float(np.min(-p[neg] / d[neg]))) if neg.any() else 1.0
        while True:
            q = p + t * d
            q /= q.sum()
            fq = _kl_objective(q, loss, gamma)
            if fq >= f or t < 1e-20:
                break
            t *= 0.5
        if fq < f:
            break
        moved = float(np.abs(q - p).max())
        p, f = q, fq
        if moved < 1e-16:
            break
    return p, f


def simplex_ascent(losses, regularizer="none", gamma=1.0, iters=5000, step=None, polish=True):
    """Projected gradient ascent of ``p.l - gamma KL(p || uniform)`` over the simplex.

    Step size ``step / sqrt(t)`` with default ``step = 0.5 / (max l - min l + gamma)``.
    Returns the best iterate and its value. For ``regularizer="kl"`` the
    iterate is then refined by a damped Newton method restricted to the
    simplex, since Euclidean steps stall on the log term when gamma is small.
    """
    loss = np.asarray(losses, dtype=np.float64)
    n = loss.size
    if n == 0:
        raise ValueError("need at least one loss")
    if regularizer not in ("none", "kl"):
        raise ValueError(f"unknown regularizer {regularizer!r}")
    if not np.all(np.isfinite(loss)):
        raise OracleFailureError("losses must be finite")
    g = gamma if regularizer == "kl" else 0.0
    if n == 1:
        return np.ones(1), float(loss[0])

    def value(p):
        return _kl_objective(p, loss, g) if g else float(p @ loss)

    if step is None:
        step = 0.5 / (float(np.ptp(loss)) + g) if (np.ptp(loss) + g) > 0 else 1.0
    p = np.full(n, 1.0 / n)
    best_p, best = p, value(p)
    checkpoint = best_at_checkpoint = best
    for t in range(1, iters + 1):
        grad = loss - g * (np.log(np.maximum(n * p, 1e-300)) + 1.0) if g else loss
        q = project_simplex(p + step / math.sqrt(t) * grad)
        v = value(q)
        if v > best:
            best_p, best = q, v
        if t % 100 == 0:
            if v < checkpoint - 1e-6 and not g:
                raise OracleFailureError(f"ascent diverged at iteration {t}: {v} < {checkpoint}")
            checkpoint = v
            if best - best_at_checkpoint < 1e-13:
                break
            best_at_checkpoint = best
        if np.array_equal(q, p):
            break
        p = q
    if g and polish:
        start = 0.999 * best_p + 0.001 / n
        p2, v2 = _newton_polish(start, loss, g)
        if v2 > best:
            best_p, best = p2, v2
    return best_p, best


def topk_oracle(losses, K):
    """Mean of the K largest losses by a full sort; K is capped at the count."""
    ordered = sorted((float(x) for x in losses), reverse=True)
    K = min(K, len(ordered))
    return math.fsum(ordered[:K]) / K


def _project_ball_simplex(z, radius, iters=200):
    # argmin ||p - z|| over simplex cap {||p - u|| <= radius}; bisection on the ball multiplier
    n = z.size
    u = np.full(n, 1.0 / n)
    p = project_simplex(z)
    if float(np.linalg.norm(p - u)) <= radius:
        return p
    lo, hi = 0.0, 1.0
    while float(np.linalg.norm(project_simplex((z + hi * u) / (1 + hi)) - u)) > radius:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if float(np.linalg.norm(project_simplex((z + mid * u) / (1 + mid)) - u)) > radius:
            lo = mid
        else:
            hi = mid
    return project_simplex((z + hi * u) / (1 + hi))


def chi2_oracle(losses, rho, grid=100_000, iters=3000):
    """Maximum of p.l over the simplex intersected with the chi-square ball.

    n <= 3: exhaustive search (a line grid for n = 2, the region boundary for
    n = 3). Larger n: projected ascent with an exact
    projection onto the intersection.
    """
    loss = np.asarray(losses, dtype=np.float64)
    n = loss.size
    radius = math.sqrt(2.0 * rho) / n
    u = np.full(n, 1.0 / n)
    if n == 1:
        return float(loss[0])
    if n == 2:
        t = np.linspace(0.0, 1.0, grid + 1)
        cand = np.stack([t, 1 - t], axis=1)
        ok = np.linalg.norm(cand - u, axis=1) <= radius + 1e-15
        return float(np.max(cand[ok] @ loss))
    if n == 3:
        # a linear objective peaks on the boundary of the feasible disc-in-triangle:
        # scan the circle finely and the three triangle edges
        e1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
        e2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
        theta = np.linspace(0.0, 2 * math.pi, grid, endpoint=False)
        circle = u + radius * (np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2)
        t = np.linspace(0.0, 1.0, grid + 1)[:, None]
        z = np.zeros_like(t)
        edges = np.concatenate([np.hstack([t, 1 - t, z]), np.hstack([t, z, 1 - t]),
                                np.hstack([z, t, 1 - t])])
        cand = np.concatenate([circle[circle.min(axis=1) >= 0],
                               edges[np.linalg.norm(edges - u, axis=1) <= radius + 1e-15]])
        return float(np.max(cand @ loss))

    step = 1.0 / (float(np.ptp(loss)) + 1e-12)
    p = u.copy()
    best = float(p @ loss)
    for _ in range(iters):
        q = _project_ball_simplex(p + step * loss, radius)
        v = float(q @ loss)
        best = max(best, v)
        if np.abs(q - p).max() < 1e-15:
            break
        p = q
    return best


def finite_diff_grad(fun, theta, step=1e-5):
    """Central differences of a scalar function, one coordinate at a time."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = grad.reshape(-1)
    base = theta.reshape(-1)
    for i in range(base.size):
        plus = base.copy()
        minus = base.copy()
        plus[i] += step
        minus[i] -= step
        flat[i] = (fun(plus.reshape(theta.shape)) - fun(minus.reshape(theta.shape))) / (2 * step)
    return grad
