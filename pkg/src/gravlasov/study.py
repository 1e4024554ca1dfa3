"""Families of truncated runs over increasing velocity cutoffs.

All members of a family share one master sample drawn from the largest
support; member ``N`` keeps exactly the master particles inside its own
support, with unchanged coordinates, weights and ids. Particle ``i`` of a
smaller run is therefore the same characteristic seed ``(x, v)`` in every
larger run, and trajectory gaps can be taken particle by particle.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .characteristics import TrajectoryRecord, integrate, steps_for
from .diagnostics import (InsufficientStatistics, decay_fit, field_time_integral,
                          loglog_slope, max_velocity)
from .gravity import DIRECT_LIMIT, DYNAMICS_THETA, SofteningParams, self_gravity
from .initial_data import (Ensemble, InitialDataParams, TruncationParams, beta_admissible,
                           beta_ceiling, mean_spacing, restrict_to_support, sample_ensemble,
                           truncated_mass)

__all__ = [
    "MAX_PARTICLES",
    "SLOPE_TOL",
    "StudySpec",
    "MemberResult",
    "GapSeries",
    "StudyResult",
    "VelocityVerdict",
    "run_family",
    "convergence_pair",
    "velocity_bound_check",
    "trajectory_gaps",
]

log = logging.getLogger(__name__)

MAX_PARTICLES = 100_000
SLOPE_TOL = 0.15


@dataclass(frozen=True)
class StudySpec:
    """One cutoff family.

    ``particles`` is the sample size at the largest cutoff; smaller members
    hold the subset of it inside their support, so the mass per particle is
    the same across the family. ``eps`` and ``dt`` default to
    ``softening_factor`` and ``dt_factor`` times the mean interparticle
    spacing of the master sample (``dt`` also scaled by the thermal speed
    ``lam**-0.5``) and are shared by every member.
    """

    params: InitialDataParams
    beta: float
    n_list: tuple
    horizon: float = 2.0
    particles: int = 4096
    seed: int = 0
    dt: float | None = None
    eps: float | None = None
    softening_factor: float = 0.02
    dt_factor: float = 0.05
    c3: float = 1.0
    record_every: int = 1
    method: str = "auto"
    theta: float = DYNAMICS_THETA
    direct_limit: int = DIRECT_LIMIT
    assert_bounds: bool = True
    weightless: bool = False

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(float(n) for n in self.n_list))
        ns = self.n_list
        if len(ns) < 1 or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError(f"n_list must be strictly increasing, got {ns}")
        if not 1 < self.params.alpha < 3:
            raise ValueError(f"cutoff studies need 1 < alpha < 3, got alpha = {self.params.alpha}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.assert_bounds and not beta_admissible(self.params.alpha, self.beta):
            raise ValueError(
                f"bound assertions need beta < 2/(5(3-alpha)) = {beta_ceiling(self.params.alpha):.6g},"
                f" got beta = {self.beta}")
        if not 1 <= self.particles <= MAX_PARTICLES:
            raise ValueError(f"particles must lie in [1, {MAX_PARTICLES}]")
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")

    def truncation(self, n: float) -> TruncationParams:
        return TruncationParams(float(n), self.beta)

    @property
    def n_max(self) -> float:
        return self.n_list[-1]

    def master_spacing(self) -> float:
        return mean_spacing(self.truncation(self.n_max), self.particles)

    def softening(self) -> SofteningParams:
        if self.eps is not None:
            return SofteningParams(self.eps)
        return SofteningParams(self.softening_factor * self.master_spacing())

    def time_step(self) -> float:
        if self.dt is not None:
            return float(self.dt)
        raw = self.dt_factor * self.master_spacing() * math.sqrt(self.params.lam)
        if self.horizon == 0:
            return raw
        return self.horizon / math.ceil(self.horizon / raw)

    @property
    def t_exponent_ceiling(self) -> float:
        return 7.0 / 3.0 * self.beta * (3.0 - self.params.alpha)

    @property
    def e0_exponent_ceiling(self) -> float:
        return self.beta * (3.0 - self.params.alpha)


@dataclass
class MemberResult:
    n: float
    count: int
    mass: float
    analytic_mass: float
    kinetic0: float
    potential0: float
    energy0: float
    sup_kinetic: float
    energy_drift: float
    vmax: float
    field_integral_max: float
    decay: object = None
    trajectory: TrajectoryRecord | None = None
    ids: np.ndarray | None = None

    def summary(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "n", "count", "mass", "analytic_mass", "kinetic0", "potential0", "energy0",
            "sup_kinetic", "energy_drift", "vmax", "field_integral_max")}
        if self.decay is not None:
            out["decay"] = {"mu": self.decay.mu, "c2": self.decay.c2,
                            "alpha_fit": self.decay.alpha_fit, **self.decay.verdict}
        return out


@dataclass
class GapSeries:
    n_small: float
    n_large: float
    times: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    shared: int

    @property
    def sup_position(self) -> float:
        return float(self.position.max()) if len(self.position) else 0.0

    @property
    def sup_velocity(self) -> float:
        return float(self.velocity.max()) if len(self.velocity) else 0.0


@dataclass
class StudyResult:
    spec: StudySpec
    eps: float
    dt: float
    members: list
    gaps: list
    slopes: dict
    ceilings: dict
    verdicts: dict
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "eps": self.eps,
            "dt": self.dt,
            "n_list": list(self.spec.n_list),
            "members": [m.summary() for m in self.members],
            "gaps": [{"n_small": g.n_small, "n_large": g.n_large, "shared": g.shared,
                      "sup_position": g.sup_position, "sup_velocity": g.sup_velocity}
                     for g in self.gaps],
            "slopes": self.slopes,
            "ceilings": self.ceilings,
            "verdicts": self.verdicts,
            "notes": self.notes,
        }


def _master(spec: StudySpec) -> Ensemble:
    return sample_ensemble(spec.params, spec.truncation(spec.n_max), spec.particles, spec.seed)


def _member_ensemble(spec: StudySpec, master: Ensemble, n: float) -> Ensemble:
    ens = restrict_to_support(master, spec.truncation(n))
    if spec.weightless:
        ens = replace(ens, w=np.zeros_like(ens.w))
    return ens


def _evolve(spec: StudySpec, ens: Ensemble, s: SofteningParams, dt: float) -> TrajectoryRecord:
    fieldfn = functools.partial(self_gravity, method=spec.method, theta=spec.theta,
                                direct_limit=spec.direct_limit)
    if spec.horizon == 0:
        # degenerate horizon: the record is the initial state alone
        g = fieldfn(ens, s)
        gmag = np.linalg.norm(g, axis=1)
        speed = np.linalg.norm(ens.v, axis=1)
        from .diagnostics import energy_report
        rep = energy_report(ens, s)
        return TrajectoryRecord(np.array([ens.time]), [ens], np.array([ens.time]),
                                np.array([speed.max(initial=0.0)]),
                                np.array([gmag.max(initial=0.0)]),
                                np.array([rep.kinetic]), np.array([rep.potential]),
                                float(s.eps), dt, gmag[None, :])
    n_steps = steps_for(spec.horizon, dt)
    every = spec.record_every if n_steps % spec.record_every == 0 else 1
    return integrate(ens, spec.horizon, dt, s, field=fieldfn, record_every=every)


def _run_member(spec, master, n, s, dt, keep_trajectory=True) -> MemberResult:
    ens = _member_ensemble(spec, master, n)
    log.info("member N=%g: %d particles, eps=%.4g, dt=%.4g", n, len(ens), s.eps, dt)
    traj = _evolve(spec, ens, s, dt)
    e = traj.total
    e0 = float(e[0])
    drift = float(np.max(np.abs(e - e0)) / abs(e0)) if e0 != 0 else math.nan
    decay = None
    try:
        decay = decay_fit(traj.final, alpha_ref=spec.params.alpha)
    except InsufficientStatistics:
        pass
    return MemberResult(
        n=n,
        count=len(ens),
        mass=ens.total_mass,
        analytic_mass=truncated_mass(spec.params, spec.truncation(n)),
        kinetic0=float(traj.kinetic[0]),
        potential0=float(traj.potential[0]),
        energy0=e0,
        sup_kinetic=float(np.max(traj.kinetic)),
        energy_drift=drift,
        vmax=max_velocity(traj, spec.c3).final,
        field_integral_max=field_time_integral(traj).max,
        decay=decay,
        trajectory=traj if keep_trajectory else None,
        ids=ens.ids,
    )


def trajectory_gaps(small: TrajectoryRecord, ids_small, large: TrajectoryRecord, ids_large,
                    n_small=math.nan, n_large=math.nan) -> GapSeries:
    """Max over shared particles of ``|X_small - X_large|`` and ``|V_small - V_large|`` per record time."""
    ids_small = np.asarray(ids_small)
    ids_large = np.asarray(ids_large)
    pos = np.searchsorted(ids_large, ids_small)
    pos = np.minimum(pos, len(ids_large) - 1) if len(ids_large) else pos
    if len(ids_small) and (len(ids_large) == 0 or np.any(ids_large[pos] != ids_small)):
        raise ValueError("seed/support mismatch: smaller run is not nested in the larger one")
    if not np.array_equal(small.times, large.times):
        raise ValueError("runs were recorded at different times")
    dx, dv = [], []
    for a, b in zip(small.snapshots, large.snapshots):
        if len(ids_small) == 0:
            dx.append(0.0)
            dv.append(0.0)
            continue
        dx.append(float(np.max(np.linalg.norm(a.x - b.x[pos], axis=1))))
        dv.append(float(np.max(np.linalg.norm(a.v - b.v[pos], axis=1))))
    return GapSeries(n_small, n_large, np.asarray(small.times), np.asarray(dx), np.asarray(dv),
                     len(ids_small))


def _slope_or_nan(x, y):
    try:
        return loglog_slope(x, y)[0]
    except ValueError:
        return math.nan


def run_family(spec: StudySpec, keep_trajectories: bool = False) -> StudyResult:
    """Run every cutoff of ``spec`` and fit the scaling exponents.

    Fitted on log-log axes against ``N``: ``sup_t T^N`` (ceiling
    ``(7/3) beta (3 - alpha) + SLOPE_TOL``), ``E^N(0)`` (ceiling
    ``beta (3 - alpha) + SLOPE_TOL``) and the maximal velocity at the horizon
    (ceiling ``1 + 0.1``). The field time-integral exponent against the maximal
    velocity is reported without a verdict.
    """
    if len(spec.n_list) < 3:
        raise ValueError("a cutoff family needs at least three cutoffs for exponent fits")
    master = _master(spec)
    s = spec.softening()
    dt = spec.time_step()
    members = []
    prev = None
    gaps = []
    for n in spec.n_list:
        try:
            m = _run_member(spec, master, n, s, dt, keep_trajectory=True)
        except Exception as err:
            raise RuntimeError(f"cutoff family aborted at N = {n:g}: {err}") from err
        if prev is not None:
            gaps.append(trajectory_gaps(prev.trajectory, prev.ids, m.trajectory, m.ids,
                                        prev.n, m.n))
            if not keep_trajectories:
                prev.trajectory = None
        members.append(m)
        prev = m
    if not keep_trajectories and prev is not None:
        prev.trajectory = None

    ns = np.array(spec.n_list)
    notes = []
    slopes = {
        "sup_kinetic": _slope_or_nan(ns, [m.sup_kinetic for m in members]),
        "kinetic0": _slope_or_nan(ns, [m.kinetic0 for m in members]),
        "mass": _slope_or_nan(ns, [m.mass for m in members]),
        "vmax": _slope_or_nan(ns, [m.vmax for m in members]),
        "field_integral_vs_vmax": _slope_or_nan([m.vmax for m in members],
                                                [m.field_integral_max for m in members]),
    }
    e0 = np.array([m.energy0 for m in members])
    positive = e0 > 0
    if positive.sum() >= 2:
        slopes["energy0"] = _slope_or_nan(ns[positive], e0[positive])
        if not positive.all():
            notes.append("E(0) <= 0 for some cutoffs; energy slope fitted on the positive ones")
    else:
        slopes["energy0"] = math.nan
        notes.append("E(0) <= 0 for the whole family; the upper bound holds trivially")

    ceilings = {
        "sup_kinetic": spec.t_exponent_ceiling + SLOPE_TOL,
        "energy0": spec.e0_exponent_ceiling + SLOPE_TOL,
        "vmax": 1.1,
    }
    verdicts = {
        "sup_kinetic": bool(slopes["sup_kinetic"] <= ceilings["sup_kinetic"]),
        "energy0": bool(slopes["energy0"] <= ceilings["energy0"])
        if not math.isnan(slopes["energy0"]) else positive.sum() < 2,
        "vmax": bool(slopes["vmax"] <= ceilings["vmax"]),
        "gaps_zero_at_start": all(g.position[0] == 0 and g.velocity[0] == 0 for g in gaps),
        "gaps_finite": all(np.isfinite(g.position).all() and np.isfinite(g.velocity).all()
                           for g in gaps),
    }
    verdicts["passed"] = all(verdicts.values())
    return StudyResult(spec, float(s.eps), float(dt), members, gaps, slopes, ceilings,
                       verdicts, notes)


def convergence_pair(spec: StudySpec, n_small: float, n_large: float) -> GapSeries:
    """Gap series between the runs at two cutoffs of the same family.

    Both runs are cut from the family's master sample, so they share every
    particle of the smaller support.
    """
    if n_small > n_large:
        raise ValueError("n_small must not exceed n_large")
    if n_large > spec.n_max:
        raise ValueError(f"seed/support mismatch: N = {n_large:g} exceeds the master support "
                         f"N = {spec.n_max:g}")
    master = _master(spec)
    s = spec.softening()
    dt = spec.time_step()
    a = _run_member(spec, master, float(n_small), s, dt)
    b = a if n_large == n_small else _run_member(spec, master, float(n_large), s, dt)
    return trajectory_gaps(a.trajectory, a.ids, b.trajectory, b.ids, n_small, n_large)


@dataclass(frozen=True)
class VelocityVerdict:
    ratios: tuple
    ratio_limit: float
    ratio_ok: bool
    slope: float
    slope_ok: bool

    @property
    def passed(self) -> bool:
        return self.ratio_ok and self.slope_ok


def velocity_bound_check(res: StudyResult, margin: float = 1.0, slope_limit: float = 1.1
                         ) -> VelocityVerdict:
    """Check that the maximal velocity grows at most linearly in ``N``.

    Passes when every ``V^N(T) / N`` stays within ``(1 + margin)`` times its
    value at the smallest cutoff and the log-log slope is at most
    ``slope_limit``.
    """
    if len(res.members) < 3:
        raise ValueError("velocity bound check needs at least three cutoffs")
    ratios = tuple(m.vmax / m.n for m in res.members)
    limit = (1.0 + margin) * ratios[0]
    slope = loglog_slope([m.n for m in res.members], [m.vmax for m in res.members])[0]
    return VelocityVerdict(ratios, limit, bool(max(ratios) <= limit), slope,
                           bool(slope <= slope_limit))
