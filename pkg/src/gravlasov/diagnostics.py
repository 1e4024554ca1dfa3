"""Diagnostics evaluated on ensembles and trajectories.

Everything here is a pure function of immutable inputs. Reports that check an
inequality carry the measured margin alongside the verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gravity import SofteningParams, potential_energy

__all__ = [
    "InsufficientStatistics",
    "EnergyReport",
    "GridSpec",
    "DensityField",
    "InterpolationReport",
    "HolderSplit",
    "DecayFit",
    "MaxVelocityTracker",
    "FieldIntegralReport",
    "kinetic_energy",
    "energy_report",
    "density_estimate",
    "interior_cells",
    "interpolation_constant",
    "interpolation_check",
    "holder_split",
    "decay_fit",
    "max_velocity",
    "field_time_integral",
    "loglog_slope",
]


class InsufficientStatistics(ValueError):
    """Too few particles (or too little spread) for a requested fit."""


# ---------------------------------------------------------------- energies

@dataclass(frozen=True)
class EnergyReport:
    kinetic: float
    potential: float
    total: float
    eps: float


def kinetic_energy(ens) -> float:
    if len(ens) == 0:
        return 0.0
    return 0.5 * math.fsum(ens.w * np.einsum("ij,ij->i", ens.v, ens.v))


def energy_report(ens, s: SofteningParams) -> EnergyReport:
    kin = kinetic_energy(ens)
    pot = potential_energy(ens, s) if len(ens) else 0.0
    return EnergyReport(kin, pot, kin + pot, float(s.eps))


# ---------------------------------------------------------------- densities

@dataclass(frozen=True)
class GridSpec:
    lo: tuple
    hi: tuple
    shape: tuple

    @classmethod
    def cube(cls, half_width: float, n: int) -> "GridSpec":
        return cls((-half_width,) * 3, (half_width,) * 3, (n,) * 3)

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.hi, float) - np.asarray(self.lo, float)) / np.asarray(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def centers(self) -> np.ndarray:
        axes = [lo + (np.arange(n) + 0.5) * h
                for lo, n, h in zip(self.lo, self.shape, self.spacing)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)


@dataclass
class DensityField:
    grid: GridSpec
    centers: np.ndarray
    rho: np.ndarray
    k: np.ndarray
    counts: np.ndarray
    mode: str
    bandwidth: float | None = None

    @property
    def cell_volume(self) -> float:
        return self.grid.cell_volume


def _triweight(u):
    return np.where(np.abs(u) < 1.0, (35.0 / 32.0) * (1.0 - u * u) ** 3, 0.0)


def density_estimate(ens, grid: GridSpec, mode: str = "histogram",
                     bandwidth: float | None = None, chunk: int = 4096) -> DensityField:
    """Cell estimates of ``rho = int f dv`` and ``k = int |v|^2 f dv``.

    ``histogram`` mode deposits each weight in its cell (mass conserving);
    ``kernel`` mode smooths with a product triweight kernel of half-width
    ``bandwidth`` evaluated at cell centres.
    """
    if grid.n_cells == 0:
        raise ValueError("density grid has no cells")
    centers = grid.centers()
    vol = grid.cell_volume
    v2 = np.einsum("ij,ij->i", ens.v, ens.v)
    lo = np.asarray(grid.lo, float)
    shape = np.asarray(grid.shape)
    cell = np.floor((ens.x - lo) / grid.spacing).astype(np.int64)
    # a particle exactly on the upper face belongs to the last cell
    on_edge = ens.x == np.asarray(grid.hi, float)
    cell[on_edge] -= 1
    outside = np.any((cell < 0) | (cell >= shape), axis=1)
    counts = None
    if mode == "histogram":
        if outside.any():
            raise ValueError(f"{int(outside.sum())} particles lie outside the density grid")
        flat = np.ravel_multi_index(cell.T, grid.shape)
        mass = np.bincount(flat, weights=ens.w, minlength=grid.n_cells)
        kin = np.bincount(flat, weights=ens.w * v2, minlength=grid.n_cells)
        counts = np.bincount(flat, minlength=grid.n_cells)
        return DensityField(grid, centers, mass / vol, kin / vol, counts, mode)
    if mode == "kernel":
        if not bandwidth or bandwidth <= 0:
            raise ValueError("kernel mode needs a positive bandwidth")
        rho = np.zeros(len(centers))
        kin = np.zeros(len(centers))
        for a in range(0, len(ens), chunk):
            x = ens.x[a:a + chunk]
            u = (centers[:, None, :] - x[None, :, :]) / bandwidth
            kern = np.prod(_triweight(u), axis=2) / bandwidth ** 3
            rho += kern @ ens.w[a:a + chunk]
            kin += kern @ (ens.w[a:a + chunk] * v2[a:a + chunk])
        counts = np.zeros(len(centers), dtype=np.int64)
        if not outside.all():
            flat = np.ravel_multi_index(cell[~outside].T, grid.shape)
            counts = np.bincount(flat, minlength=grid.n_cells)
        return DensityField(grid, centers, rho, kin, counts, mode, bandwidth)
    raise ValueError(f"unknown density mode {mode!r}")


def interior_cells(grid: GridSpec, radius: float) -> np.ndarray:
    """Mask of cells whose eight corners all lie within ``radius`` of the origin."""
    c = grid.centers()
    h = 0.5 * grid.spacing
    far = np.sqrt(np.sum((np.abs(c) + h) ** 2, axis=1))
    return far <= radius


# ---------------------------------------------------------------- interpolation

def interpolation_constant(f_inf: float) -> float:
    """Smallest ``K`` with ``rho^(5/3) <= K k`` whenever ``0 <= f <= f_inf``.

    Splitting ``rho`` at speed ``a`` gives ``rho <= c a^3 + k / a^2`` with
    ``c = (4 pi / 3) f_inf``; the minimum over ``a`` is attained at
    ``a^5 = 2 k / (3 c)`` and yields ``K = (5/3)^(5/3) (3/2)^(2/3) c^(2/3)``.
    """
    if not f_inf > 0:
        raise ValueError("f_inf must be positive")
    c = 4.0 * math.pi / 3.0 * f_inf
    return (5.0 / 3.0) ** (5.0 / 3.0) * 1.5 ** (2.0 / 3.0) * c ** (2.0 / 3.0)


@dataclass
class InterpolationReport:
    K: float
    ratio: np.ndarray   # rho^(5/3) / (K k) per checked cell; <= 1 passes
    margin: np.ndarray  # K k - rho^(5/3)
    cells: np.ndarray   # flat indices of the checked cells
    worst_ratio: float
    passed: bool


def interpolation_check(df: DensityField, f_inf: float, mask: np.ndarray | None = None
                        ) -> InterpolationReport:
    K = interpolation_constant(f_inf)
    cells = np.flatnonzero(np.ones(len(df.rho), bool) if mask is None else mask)
    rho, k = df.rho[cells], df.k[cells]
    lhs = rho ** (5.0 / 3.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lhs == 0, 0.0, lhs / (K * k))
    worst = float(ratio.max()) if len(ratio) else 0.0
    return InterpolationReport(K, ratio, K * k - lhs, cells, worst, bool(worst <= 1.0))


# ---------------------------------------------------------------- Hoelder split

@dataclass(frozen=True)
class HolderSplit:
    near: float        # A: sum over |x_i - x| <= R of w_i / dist
    far: float         # B: sum over |x_i - x| > R
    mass: float
    radius: float
    far_bound: float   # mass / R
    near_bound: float  # K^(3/5) (8 pi)^(2/5) R^(1/5) (2 T)^(3/5)
    kinetic: float

    @property
    def far_ok(self) -> bool:
        return self.far <= self.far_bound

    @property
    def near_ratio(self) -> float:
        return self.near / self.near_bound if self.near_bound > 0 else math.inf


def holder_split(ens, x, R: float, s: SofteningParams = SofteningParams(),
                 f_inf: float | None = None) -> HolderSplit:
    """Near/far split of ``int rho(y) / |x - y| dy`` at radius ``R`` around ``x``.

    The near-field bound uses ``||rho||_{5/3} <= (K * 2T)^(3/5)`` and
    ``|| 1_{|z|<=R} / |z| ||_{5/2} = (8 pi R^(1/2))^(2/5)``. It is reported,
    not enforced. ``f_inf`` defaults to the datum amplitude ``c1``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    d = np.linalg.norm(ens.x - np.asarray(x, float), axis=1)
    soft = np.sqrt(d * d + float(s.eps) ** 2)
    near = d <= R
    with np.errstate(divide="ignore"):
        terms = ens.w / soft
    A = math.fsum(terms[near])
    B = math.fsum(terms[~near])
    mass = ens.total_mass
    if f_inf is None:
        f_inf = ens.params.c1
    T = kinetic_energy(ens)
    K = interpolation_constant(f_inf)
    a_bound = K ** 0.6 * (8.0 * math.pi) ** 0.4 * R ** 0.2 * (2.0 * T) ** 0.6
    return HolderSplit(A, B, mass, R, mass / R, a_bound, T)


# ---------------------------------------------------------------- decay fits

@dataclass
class DecayFit:
    mu: float
    c2: float
    alpha_fit: float
    residuals: dict
    verdict: dict
    bins: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.verdict.get("passed", False))


def _shell_fit(values, weights, edges, min_count, power):
    """Bin ``values`` in shells; return (mean coordinate, log density, counts) for full bins.

    The coordinate is the volume-weighted mean of ``value**power`` over each shell.
    """
    counts, _ = np.histogram(values, bins=edges)
    mass, _ = np.histogram(values, bins=edges, weights=weights)
    lo, hi = edges[:-1], edges[1:]
    vol = 4.0 / 3.0 * math.pi * (hi ** 3 - lo ** 3)
    coord = 3.0 / (3.0 + power) * (hi ** (3 + power) - lo ** (3 + power)) / (hi ** 3 - lo ** 3)
    keep = (counts >= min_count) & (mass > 0)
    return coord[keep], np.log(mass[keep] / vol[keep]), counts[keep]


def decay_fit(ens, alpha_ref: float | None = None, alpha_band: float = 0.1, n_bins: int = 24,
              min_count: int = 50, r_tail: float = 0.0, quantile: float = 0.995) -> DecayFit:
    """Fit ``f ~ c2 exp(-mu |v|^2) (1 + |x|)^(-alpha_fit)`` from binned weights.

    The velocity profile is the spatially integrated density in speed shells,
    regressed as ``log f`` against ``|v|^2``; the spatial profile is the shell
    density ``rho`` regressed against ``log(1 + |x|)`` for ``|x| >= r_tail``.
    Bins with fewer than ``min_count`` particles are dropped and at least three
    bins must survive on each side.
    """
    speed = np.linalg.norm(ens.v, axis=1)
    radius = np.linalg.norm(ens.x, axis=1)
    if len(ens) < 3 * min_count:
        raise InsufficientStatistics(f"{len(ens)} particles cannot fill three bins of {min_count}")
    s_top = np.quantile(speed, quantile)
    if not s_top > 0:
        raise InsufficientStatistics("velocity distribution has no dynamic range")
    v2, logf, vcount = _shell_fit(speed, ens.w, np.linspace(0.0, s_top, n_bins + 1),
                                  min_count, 2)
    if len(v2) < 3:
        raise InsufficientStatistics("fewer than three populated speed bins")
    slope_v, icpt_v = np.polyfit(v2, logf, 1, w=np.sqrt(vcount))
    res_v = logf - (slope_v * v2 + icpt_v)

    r_top = np.quantile(radius, quantile)
    if not r_top > r_tail:
        raise InsufficientStatistics("spatial distribution has no dynamic range beyond r_tail")
    r1, logr, rcount = _shell_fit(radius, ens.w, np.linspace(r_tail, r_top, n_bins + 1),
                                  min_count, 1)
    if len(r1) < 3:
        raise InsufficientStatistics("fewer than three populated radial bins")
    lx = np.log1p(r1)
    slope_r, icpt_r = np.polyfit(lx, logr, 1, w=np.sqrt(rcount))
    res_r = logr - (slope_r * lx + icpt_r)

    mu = float(-slope_v)
    alpha_fit = float(-slope_r)
    # rho = c2 (pi / mu)^(3/2) (1 + r)^(-alpha) for the fitted product form
    c2 = float(math.exp(icpt_r) * (mu / math.pi) ** 1.5) if mu > 0 else math.nan
    verdict = {"mu_positive": mu > 0}
    if alpha_ref is not None:
        verdict["alpha_in_band"] = abs(alpha_fit - alpha_ref) <= alpha_band * alpha_ref
    verdict["passed"] = all(verdict.values())
    residuals = {"velocity_rms": float(np.sqrt(np.mean(res_v ** 2))),
                 "spatial_rms": float(np.sqrt(np.mean(res_r ** 2)))}
    bins = {"v2": v2, "log_f": logf, "log1p_r": lx, "log_rho": logr}
    return DecayFit(mu, c2, alpha_fit, residuals, verdict, bins)


# ---------------------------------------------------------------- velocity & field

@dataclass
class MaxVelocityTracker:
    c3: float
    times: np.ndarray
    series: np.ndarray

    @property
    def final(self) -> float:
        return float(self.series[-1])


def max_velocity(traj, c3: float = 1.0) -> MaxVelocityTracker:
    """Running ``max(c3, sup_{s <= t} max_i |V_i(s)|)`` over the recorded steps."""
    if len(traj.max_speed) == 0:
        raise ValueError("empty trajectory")
    series = np.maximum(c3, np.maximum.accumulate(traj.max_speed))
    return MaxVelocityTracker(float(c3), np.asarray(traj.step_times), series)


@dataclass
class FieldIntegralReport:
    per_particle: np.ndarray
    times: np.ndarray

    @property
    def max(self) -> float:
        return float(self.per_particle.max()) if len(self.per_particle) else 0.0


def field_time_integral(traj) -> FieldIntegralReport:
    """Trapezoidal ``int_0^t |G(X_i(s), s)| ds`` for every particle."""
    if traj.accel_history is None:
        raise ValueError("trajectory was integrated without keep_accel")
    h = traj.accel_history
    dt = np.diff(traj.step_times)
    integral = np.sum(0.5 * (h[1:] + h[:-1]) * dt[:, None], axis=0)
    return FieldIntegralReport(integral, traj.step_times)


def loglog_slope(x, y):
    """Least-squares slope and intercept of ``log y`` against ``log x``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 2:
        raise ValueError("need at least two points for a slope")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx = np.log(x)
    if np.ptp(lx) == 0:
        return math.nan, math.nan
    slope, icpt = np.polyfit(lx, np.log(y), 1)
    return float(slope), float(icpt)
