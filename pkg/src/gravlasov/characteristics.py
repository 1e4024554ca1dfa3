"""Self-consistent particle characteristics of the truncated system.

Positions and velocities follow ``dX/dt = V``, ``dV/dt = G(X, t)`` with the
field recomputed from the evolving ensemble; weights never change, which is
how the phase-space density stays constant along each characteristic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gravity import SofteningParams, potential_energy, self_gravity
from .initial_data import Ensemble

__all__ = ["NumericalError", "TrajectoryRecord", "leapfrog_step", "integrate", "steps_for"]

FieldFn = Callable[[Ensemble, SofteningParams], np.ndarray]


class NumericalError(FloatingPointError):
    def __init__(self, message, index=None, step=None):
        super().__init__(message)
        self.index = index
        self.step = step


def _check_finite(x, v, step=None):
    bad = ~(np.isfinite(x).all(axis=1) & np.isfinite(v).all(axis=1))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        where = f" at step {step}" if step is not None else ""
        raise NumericalError(f"non-finite state for particle {i}{where}", index=i, step=step)


def leapfrog_step(ens: Ensemble, dt: float, field: FieldFn = self_gravity,
                  s: SofteningParams = SofteningParams(), accel: np.ndarray | None = None):
    """One kick-drift-kick step. Returns ``(new_ensemble, field_at_new_positions)``.

    ``accel`` may carry the field at the current positions from the previous
    step; it is recomputed when omitted.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = field(ens, s) if accel is None else accel
    v_half = ens.v + (0.5 * dt) * g
    x_new = ens.x + dt * v_half
    moved = ens.with_state(x_new, v_half, ens.time + dt)
    g_new = field(moved, s)
    v_new = v_half + (0.5 * dt) * g_new
    _check_finite(x_new, v_new)
    return ens.with_state(x_new, v_new, ens.time + dt), g_new


@dataclass
class TrajectoryRecord:
    """Sampled solution of the characteristic system.

    Step-level series (one entry per step, including ``t = 0``) hold the
    maximum speed and field magnitude; ``accel_history`` optionally keeps
    ``|G(X_i(t_k), t_k)|`` for every particle. Snapshots and energies are
    taken every ``record_every`` steps.
    """

    times: np.ndarray
    snapshots: list
    step_times: np.ndarray
    max_speed: np.ndarray
    max_accel: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    eps: float
    dt: float
    accel_history: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> np.ndarray:
        return self.kinetic + self.potential

    @property
    def final(self) -> Ensemble:
        return self.snapshots[-1]


def steps_for(t_end: float, dt: float) -> int:
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"dt = {dt} does not divide t_end = {t_end}")
    return n


def _kinetic(ens):
    return 0.5 * math.fsum(ens.w * np.einsum("ij,ij->i", ens.v, ens.v))


def integrate(ens: Ensemble, t_end: float, dt: float, s: SofteningParams = SofteningParams(),
              field: FieldFn = self_gravity, record_every: int = 1, keep_accel: bool = True,
              energies: bool = True) -> TrajectoryRecord:
    """Advance ``ens`` to ``t_end`` with fixed-step leapfrog, recording diagnostics."""
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    n_steps = steps_for(t_end, dt)
    if record_every < 1 or n_steps % record_every:
        raise ValueError(f"record_every = {record_every} must divide the {n_steps} steps")

    t0 = ens.time
    step_times = t0 + dt * np.arange(n_steps + 1)
    max_speed = np.empty(n_steps + 1)
    max_accel = np.empty(n_steps + 1)
    history = np.empty((n_steps + 1, len(ens))) if keep_accel else None
    times, snaps, kin, pot = [], [], [], []

    def observe(k, e, g):
        gmag = np.sqrt(np.einsum("ij,ij->i", g, g))
        speed = np.sqrt(np.einsum("ij,ij->i", e.v, e.v))
        max_speed[k] = speed.max() if len(e) else 0.0
        max_accel[k] = gmag.max() if len(e) else 0.0
        if history is not None:
            history[k] = gmag
        if k % record_every == 0:
            times.append(step_times[k])
            snaps.append(e)
            if energies:
                kin.append(_kinetic(e))
                pot.append(potential_energy(e, s))

    cur = ens
    try:
        g = field(cur, s)
        _check_finite(cur.x, g, 0)
    except NumericalError as err:
        raise NumericalError(f"initial field evaluation failed: {err}", err.index, 0) from err
    observe(0, cur, g)
    for k in range(1, n_steps + 1):
        try:
            cur, g = leapfrog_step(cur, dt, field, s, accel=g)
        except NumericalError as err:
            raise NumericalError(f"step {k}: {err}", err.index, k) from err
        # keep the time grid exact rather than accumulating dt
        cur.time = step_times[k]
        observe(k, cur, g)

    nan = np.full(len(times), np.nan)
    return TrajectoryRecord(
        times=np.asarray(times),
        snapshots=snaps,
        step_times=step_times,
        max_speed=max_speed,
        max_accel=max_accel,
        kinetic=np.asarray(kin) if energies else nan,
        potential=np.asarray(pot) if energies else nan,
        eps=float(s.eps),
        dt=float(dt),
        accel_history=history,
    )
