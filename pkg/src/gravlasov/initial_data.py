"""Reference initial datum, its truncation, and equal-weight sampling.

The datum is the decay envelope taken with equality,

    f0(x, v) = c1 * exp(-lam |v|^2) * (1 + |x|)^(-alpha),

and the truncated datum keeps only ``|x| <= n_cut**beta`` and ``|v| <= n_cut``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, special

from .rng import uniform_block

__all__ = [
    "QuadratureError",
    "InitialDataParams",
    "TruncationParams",
    "Ensemble",
    "beta_ceiling",
    "beta_admissible",
    "eval_f0",
    "eval_f0_truncated",
    "velocity_fraction",
    "spatial_mass",
    "truncated_mass",
    "radial_cdf_table",
    "sample_ensemble",
    "restrict_to_support",
    "mean_spacing",
]

QUAD_RTOL = 1e-10
CDF_NODES = 4096


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class InitialDataParams:
    c1: float
    lam: float
    alpha: float

    def __post_init__(self):
        if not self.c1 > 0:
            raise ValueError(f"c1 must be positive, got {self.c1}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.alpha > 1:
            raise ValueError(f"the decay hypothesis requires alpha > 1, got alpha = {self.alpha}")


def beta_ceiling(alpha: float) -> float:
    """Upper limit 2 / (5 (3 - alpha)) on beta; infinite for alpha >= 3."""
    if alpha >= 3:
        return math.inf
    return 2.0 / (5.0 * (3.0 - alpha))


def beta_admissible(alpha: float, beta: float) -> bool:
    return 0 < beta < beta_ceiling(alpha)


@dataclass(frozen=True)
class TruncationParams:
    n_cut: float
    beta: float

    def __post_init__(self):
        if not self.n_cut > 0:
            raise ValueError(f"n_cut must be positive, got {self.n_cut}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def radius(self) -> float:
        """Spatial support radius ``n_cut**beta``."""
        return float(self.n_cut) ** float(self.beta)

    def beta_admissible(self, alpha: float) -> bool:
        return beta_admissible(alpha, self.beta)


@dataclass
class Ensemble:
    """Weighted particles ``(x_i, v_i, w_i)`` representing ``f^N`` as an empirical measure.

    ``ids`` labels each particle by its draw index in the random stream, which
    is what lets runs with different cutoffs be compared particle by particle.
    """

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    params: InitialDataParams | None = None
    trunc: TruncationParams | None = None
    seed: int | None = None
    ids: np.ndarray | None = None
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64).reshape(-1, 3)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64).reshape(-1, 3)
        self.w = np.ascontiguousarray(self.w, dtype=np.float64).reshape(-1)
        n = self.w.shape[0]
        if self.x.shape[0] != n or self.v.shape[0] != n:
            raise ValueError("x, v and w must describe the same number of particles")
        if np.any(self.w < 0):
            raise ValueError("particle weights must be nonnegative")
        if self.ids is None:
            self.ids = np.arange(n, dtype=np.int64)
        else:
            self.ids = np.asarray(self.ids, dtype=np.int64)

    def __len__(self) -> int:
        return self.w.shape[0]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.w)

    def with_state(self, x: np.ndarray, v: np.ndarray, time: float) -> "Ensemble":
        return replace(self, x=x, v=v, time=time)

    def subset(self, mask: np.ndarray) -> "Ensemble":
        return replace(self, x=self.x[mask], v=self.v[mask], w=self.w[mask], ids=self.ids[mask])


def eval_f0(p: InitialDataParams, x, v):
    """Reference datum at positions ``x`` and velocities ``v`` (trailing axis of length 3)."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    s2 = np.sum(np.square(np.asarray(v, dtype=float)), axis=-1)
    return p.c1 * np.exp(-p.lam * s2) * (1.0 + r) ** (-p.alpha)


def eval_f0_truncated(p: InitialDataParams, t: TruncationParams, x, v):
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    s = np.linalg.norm(np.asarray(v, dtype=float), axis=-1)
    inside = (r <= t.radius) & (s <= t.n_cut)
    return np.where(inside, eval_f0(p, x, v), 0.0)


def _quad(fun, a, b, **kw):
    val, err, info = integrate.quad(fun, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=500,
                                    full_output=True, **kw)[:3]
    if not np.isfinite(val) or err > 10 * QUAD_RTOL * abs(val) + 1e-300:
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge (value {val}, error {err})")
    return val


def velocity_fraction(lam: float, n_cut: float) -> float:
    """Fraction of the Maxwellian mass ``int exp(-lam |v|^2) dv`` inside ``|v| <= n_cut``."""
    scale = 1.0 / math.sqrt(lam)
    b = min(n_cut, 40.0 * scale)  # integrand underflows beyond this
    inner = _quad(lambda s: 4.0 * math.pi * s * s * math.exp(-lam * s * s), 0.0, b,
                  points=[scale] if scale < b else None)
    return inner / (math.pi / lam) ** 1.5


def spatial_mass(alpha: float, radius: float) -> float:
    """``4 pi int_0^radius r^2 (1 + r)^(-alpha) dr``."""
    return 4.0 * math.pi * _quad(lambda r: r * r * (1.0 + r) ** (-alpha), 0.0, radius)


def truncated_mass(p: InitialDataParams, t: TruncationParams) -> float:
    """Total mass of the truncated datum, from its factorized form."""
    vel = p.c1 * (math.pi / p.lam) ** 1.5 * velocity_fraction(p.lam, t.n_cut)
    return vel * spatial_mass(p.alpha, t.radius)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@functools.lru_cache(maxsize=64)
def radial_cdf_table(alpha: float, radius: float, nodes: int = CDF_NODES):
    """Normalized CDF of ``|x|`` under ``r^2 (1 + r)^(-alpha)`` on ``[0, radius]``.

    Nodes are 0 followed by log-spaced radii down to ``1e-4 * radius``; each
    interval is integrated with 8-point Gauss-Legendre.
    """
    r = np.concatenate(([0.0], radius * np.geomspace(1e-4, 1.0, nodes - 1)))
    a, b = r[:-1], r[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    s = mid[:, None] + half[:, None] * _GL_X[None, :]
    piece = half * np.sum(_GL_W * s * s * (1.0 + s) ** (-alpha), axis=1)
    cdf = np.concatenate(([0.0], np.cumsum(piece)))
    cdf /= cdf[-1]
    r.setflags(write=False)
    cdf.setflags(write=False)
    return r, cdf


def _unit_vectors(u_cos, u_phi):
    cos_t = 2.0 * u_cos - 1.0
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * math.pi * u_phi
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)


def _draw(p, t, seed, start, count, vel_frac):
    u = uniform_block(seed, "ensemble", start, count)
    r_nodes, cdf = radial_cdf_table(float(p.alpha), float(t.radius))
    r = np.minimum(np.interp(u[:, 0], cdf, r_nodes), t.radius)
    s2 = special.gammaincinv(1.5, u[:, 3] * vel_frac) / p.lam
    s = np.minimum(np.sqrt(s2), t.n_cut)
    x = r[:, None] * _unit_vectors(u[:, 1], u[:, 2])
    v = s[:, None] * _unit_vectors(u[:, 4], u[:, 5])
    return x, v


def sample_ensemble(p: InitialDataParams, t: TruncationParams, count: int, seed: int,
                    chunk: int = 65536) -> Ensemble:
    """Draw ``count`` i.i.d. particles from ``f0^N / M^N`` with equal weights ``M^N / count``.

    Particle ``i`` uses only the random words addressed by ``(seed, i)``, so the
    result is identical for any ``chunk`` size.
    """
    if count < 1:
        raise ValueError("particle count must be at least 1")
    mass = truncated_mass(p, t)
    if not math.isfinite(mass):
        raise QuadratureError(f"truncated mass is not finite: {mass}")
    # closed form here; the quadrature value enters only through the weights
    vel_frac = float(special.gammainc(1.5, p.lam * t.n_cut ** 2))
    xs, vs = [], []
    for start in range(0, count, chunk):
        x, v = _draw(p, t, seed, start, min(chunk, count - start), vel_frac)
        xs.append(x)
        vs.append(v)
    w = np.full(count, mass / count)
    return Ensemble(np.concatenate(xs), np.concatenate(vs), w, params=p, trunc=t, seed=seed,
                    meta={"truncated_mass": mass})


def restrict_to_support(ens: Ensemble, t: TruncationParams) -> Ensemble:
    """Keep the particles lying inside the supports of ``t``; weights and ids unchanged."""
    r = np.linalg.norm(ens.x, axis=1)
    s = np.linalg.norm(ens.v, axis=1)
    out = ens.subset((r <= t.radius) & (s <= t.n_cut))
    out.trunc = t
    return out


def mean_spacing(t: TruncationParams, count: int) -> float:
    """``(support volume / count)^(1/3)`` for the spatial ball of ``t``."""
    vol = 4.0 / 3.0 * math.pi * t.radius ** 3
    return (vol / count) ** (1.0 / 3.0)
