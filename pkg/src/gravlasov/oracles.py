"""Brute-force references used by the ``oracle`` command and the test suite.

Each oracle reaches its answer by a route that shares no code with the
production path: plain Python double loops with exact ``math.fsum``,
closed-form antiderivatives, six-dimensional Monte Carlo, and the analytic
circular two-body orbit.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import uniform_block

__all__ = [
    "naive_field",
    "naive_potential",
    "spatial_mass_closed_form",
    "mc_truncated_mass",
    "circular_two_body",
    "two_body_period_error",
]


def naive_field(x, w, queries, eps):
    x = [tuple(map(float, p)) for p in np.asarray(x)]
    w = [float(a) for a in np.asarray(w)]
    out = []
    for q in np.asarray(queries):
        q = tuple(map(float, q))
        comp = ([], [], [])
        for (px, py, pz), m in zip(x, w):
            d = (q[0] - px, q[1] - py, q[2] - pz)
            r2 = d[0] ** 2 + d[1] ** 2 + d[2] ** 2 + eps * eps
            scale = m / r2 ** 1.5
            for c in range(3):
                comp[c].append(-d[c] * scale)
        out.append([math.fsum(c) for c in comp])
    return np.array(out)


def naive_potential(x, w, eps):
    x = [tuple(map(float, p)) for p in np.asarray(x)]
    w = [float(a) for a in np.asarray(w)]
    terms = []
    for i in range(len(x)):
        for j in range(len(x)):
            if i == j:
                continue
            r2 = sum((a - b) ** 2 for a, b in zip(x[i], x[j])) + eps * eps
            terms.append(w[i] * w[j] / math.sqrt(r2))
    return -0.5 * math.fsum(terms)


def spatial_mass_closed_form(alpha: float, radius: float) -> float:
    """``4 pi int_0^R r^2 (1+r)^-alpha dr`` via ``u = 1 + r`` and ``(u-1)^2 = u^2 - 2u + 1``."""

    def prim(u, p):  # antiderivative of u^p
        return math.log(u) if p == -1 else u ** (p + 1) / (p + 1)

    u1 = 1.0 + radius
    total = 0.0
    for coef, p in ((1.0, 2.0 - alpha), (-2.0, 1.0 - alpha), (1.0, -alpha)):
        total += coef * (prim(u1, p) - prim(1.0, p))
    return 4.0 * math.pi * total


def mc_truncated_mass(p, t, samples: int = 2_000_000, seed: int = 12345, chunk: int = 500_000):
    """Six-dimensional Monte Carlo estimate of ``int int f0^N dx dv``.

    Positions are uniform in the spatial ball; velocities are drawn from the
    untruncated Gaussian proposal by Box-Muller, so the estimator is
    ``vol * (pi/lam)^{3/2} * c1 * (1+|x|)^-alpha * 1{|v| <= N}``.
    Returns ``(estimate, standard_error)``.
    """
    R = t.radius
    vol = 4.0 / 3.0 * math.pi * R ** 3
    sigma = math.sqrt(0.5 / p.lam)
    sums = []
    sq = []
    for start in range(0, samples, chunk):
        n = min(chunk, samples - start)
        u = uniform_block(seed, "oracle", start, n)
        # uniform point in the ball: cube-root radius, isotropic direction
        r = R * np.cbrt(u[:, 0])
        # velocity components by Box-Muller from four further words
        g1 = np.sqrt(-2.0 * np.log1p(-u[:, 1])) * np.cos(2 * math.pi * u[:, 2])
        g2 = np.sqrt(-2.0 * np.log1p(-u[:, 1])) * np.sin(2 * math.pi * u[:, 2])
        g3 = np.sqrt(-2.0 * np.log1p(-u[:, 3])) * np.cos(2 * math.pi * u[:, 4])
        speed = sigma * np.sqrt(g1 * g1 + g2 * g2 + g3 * g3)
        val = vol * (math.pi / p.lam) ** 1.5 * p.c1 * (1.0 + r) ** (-p.alpha) * (speed <= t.n_cut)
        sums.append(val.sum())
        sq.append(np.square(val).sum())
    mean = math.fsum(sums) / samples
    var = math.fsum(sq) / samples - mean * mean
    return mean, math.sqrt(max(var, 0.0) / samples)


def circular_two_body(separation: float = 1.0, mass: float = 1.0):
    """Equal masses on a circular orbit about the origin. Returns ``(x, v, w, period)``."""
    a = 0.5 * separation
    # each body: v^2 / a = mass / separation^2
    speed = math.sqrt(mass * a / separation ** 2)
    x = np.array([[a, 0.0, 0.0], [-a, 0.0, 0.0]])
    v = np.array([[0.0, speed, 0.0], [0.0, -speed, 0.0]])
    w = np.array([mass, mass])
    period = 2.0 * math.pi * a / speed
    return x, v, w, period


def two_body_period_error(n_steps: int, integrate_fn) -> float:
    """Position error after one period of the circular orbit.

    ``integrate_fn(x, v, w, t_end, dt)`` must return final positions.
    """
    x, v, w, period = circular_two_body()
    final = integrate_fn(x, v, w, period, period / n_steps)
    return float(np.max(np.linalg.norm(final - x, axis=1)))
