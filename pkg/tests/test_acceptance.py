"""Acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> <name>: PASS/FAIL`` line; the lines
are repeated in the pytest terminal summary.
"""
import functools
import math
import time

import numpy as np
import pytest
from scipy import optimize

from conftest import point_masses, record_acceptance
from gravlasov import oracles
from gravlasov.characteristics import integrate
from gravlasov.config import ConfigError, parse_config
from gravlasov.diagnostics import (
    GridSpec, decay_fit, density_estimate, interior_cells, interpolation_check,
    interpolation_constant,
)
from gravlasov.gravity import (
    SofteningParams, default_softening, field_direct, potential_energy, self_gravity,
)
from gravlasov.initial_data import (
    InitialDataParams, TruncationParams, mean_spacing, sample_ensemble, truncated_mass,
)
from gravlasov.study import StudySpec, run_family, velocity_bound_check

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

DEFAULT = InitialDataParams(0.03, 1.0, 2.0)
REPLICATE_SEEDS = (0, 1, 2)


@pytest.mark.slow
def test_conservation():
    t = TruncationParams(16.0, 0.3)
    ens = sample_ensemble(DEFAULT, t, 2048, seed=7)
    s = default_softening(mean_spacing(t, 2048))
    start = time.perf_counter()
    traj = integrate(ens, 2.0, 0.004, s, record_every=10)
    elapsed = time.perf_counter() - start

    weights_ok = all(np.array_equal(sn.w, ens.w) for sn in traj.snapshots)
    mass_ok = all(sn.total_mass == ens.total_mass for sn in traj.snapshots)
    e = traj.total
    drift = float(np.max(np.abs(e - e[0])) / abs(e[0]))
    p0 = (ens.w[:, None] * ens.v).sum(0)
    dp = max(float(np.linalg.norm((sn.w[:, None] * sn.v).sum(0) - p0)) for sn in traj.snapshots)
    dp_limit = 1e-8 * ens.total_mass * float(traj.max_speed.max())
    ok = weights_ok and mass_ok and drift < 1e-3 and dp < dp_limit and elapsed <= 120
    record_acceptance(1, "conservation", ok,
                      f"weights {weights_ok}, mass {mass_ok}, energy drift {drift:.2e} < 1e-3, "
                      f"momentum drift {dp:.1e} < {dp_limit:.1e}, runtime {elapsed:.0f}s <= 120s")
    assert ok


def test_oracles():
    rng = np.random.default_rng(2024)
    field_err = pot_err = 0.0
    for _ in range(3):
        x = rng.normal(size=(128, 3))
        w = rng.random(128)
        ens = point_masses(x, w)
        s = SofteningParams(0.01)
        fast = field_direct(ens, x, s)
        slow = oracles.naive_field(x, w, x, 0.01)
        field_err = max(field_err, float(np.max(
            np.linalg.norm(fast - slow, axis=1) / np.linalg.norm(slow, axis=1))))
        ref = oracles.naive_potential(x, w, 0.01)
        pot_err = max(pot_err, abs(potential_energy(ens, s) - ref) / abs(ref))

    p = InitialDataParams(1.0, 1.0, 2.0)
    t = TruncationParams(5.0, 0.4)
    m = truncated_mass(p, t)
    mc, se = oracles.mc_truncated_mass(p, t, samples=4_000_000, seed=31)
    digits_ok = abs(m - mc) < 0.5 * 10 ** (math.floor(math.log10(m)) - 2)

    direct = functools.partial(self_gravity, method="direct")

    def run(x0, v0, w0, t_end, dt):
        e = point_masses(x0, w0, v0)
        return integrate(e, t_end, dt, SofteningParams(0.0), field=direct, keep_accel=False,
                         energies=False).final.x

    steps = np.array([64, 128, 256, 512])
    errs = [oracles.two_body_period_error(int(n), run) for n in steps]
    slope = float(np.polyfit(np.log(1.0 / steps), np.log(errs), 1)[0])

    ok = field_err <= 1e-12 and pot_err <= 1e-12 and digits_ok and abs(slope - 2) <= 0.2
    record_acceptance(2, "oracles", ok,
                      f"field rel {field_err:.1e}, potential rel {pot_err:.1e}, "
                      f"mass {m:.6g} vs MC {mc:.6g}+-{se:.1g}, two-body slope {slope:.3f}")
    assert ok


def test_interpolation_inequality():
    c = 4 * math.pi / 3
    best = optimize.minimize_scalar(lambda a: c * a ** 3 + 1.0 / a ** 2, bounds=(1e-3, 10),
                                    method="bounded", options={"xatol": 1e-12})
    k_oracle = best.fun ** (5 / 3)  # f_inf = 1, k = 1
    assert interpolation_constant(1.0) == pytest.approx(k_oracle, rel=1e-8)

    parts, ok = [], True
    for alpha in (1.5, 2.0, 2.5):
        p = InitialDataParams(1.0, 1.0, alpha)
        t = TruncationParams(16.0, 0.25)
        ens = sample_ensemble(p, t, 100_000, seed=40 + int(10 * alpha))
        grid = GridSpec.cube(t.radius, 8)
        df = density_estimate(ens, grid)
        # f_inf = c1 is the supremum of the datum
        rep = interpolation_check(df, p.c1, interior_cells(grid, t.radius))
        ok &= rep.passed and len(rep.cells) > 0
        parts.append(f"alpha {alpha}: {len(rep.cells)} cells, worst {rep.worst_ratio:.3f}")
    record_acceptance(3, "interpolation", ok, "; ".join(parts))
    assert ok


def _family_spec(seed):
    return StudySpec(DEFAULT, 0.3, (8.0, 16.0, 32.0, 64.0), horizon=2.0, particles=4096,
                     seed=seed, record_every=4)


@pytest.fixture(scope="module")
def families():
    out = []
    for seed in REPLICATE_SEEDS:
        start = time.perf_counter()
        res = run_family(_family_spec(seed))
        out.append((res, time.perf_counter() - start))
    return out


@pytest.mark.slow
def test_scaling(families):
    ok = True
    parts = []
    for res, elapsed in families:
        vel = velocity_bound_check(res)
        sk, e0, vm = res.slopes["sup_kinetic"], res.slopes["energy0"], res.slopes["vmax"]
        e0_ok = e0 <= 0.3 + 0.15 if not math.isnan(e0) else res.verdicts["energy0"]
        this = sk <= 0.7 + 0.15 and e0_ok and vm <= 1.1 and elapsed <= 1800
        ok &= this
        parts.append(f"seed {res.spec.seed}: T {sk:.3f}, E0 {e0:.3f}, V {vm:.3f}, "
                     f"V/N ratio ok {vel.ratio_ok}, {elapsed:.0f}s")
    record_acceptance(4, "scaling", ok,
                      "ceilings T 0.85, E0 0.45, V 1.1; " + "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_convergence(families):
    results = [res for res, _ in families]
    finite = all(np.isfinite(g.position).all() and np.isfinite(g.velocity).all()
                 for r in results for g in r.gaps)
    zero = all(g.position[0] == 0.0 and g.velocity[0] == 0.0 for r in results for g in r.gaps)
    reps = len(results)
    pos = np.array([[g.sup_position for g in r.gaps] for r in results])
    vel = np.array([[g.sup_velocity for g in r.gaps] for r in results])
    verdict = {}
    for name, arr in (("position", pos), ("velocity", vel)):
        mean = arr.mean(0)
        # standard error of the difference of replicate means
        noise = math.sqrt((arr[:, -2].var(ddof=1) + arr[:, -1].var(ddof=1)) / reps)
        verdict[name] = (bool(mean[-1] <= mean[-2] + 2 * noise), mean, noise)
    ok = finite and zero and all(v[0] for v in verdict.values())
    detail = ", ".join(
        f"{k} means {np.array2string(v[1], precision=3)} noise {v[2]:.3f}"
        for k, v in verdict.items())
    record_acceptance(5, "convergence", ok,
                      f"finite {finite}, zero at t=0 {zero}, {reps} replicates; {detail}")
    assert ok


@pytest.mark.slow
def test_decay():
    t = TruncationParams(16.0, 0.3)
    count = 8192
    ens = sample_ensemble(DEFAULT, t, count, seed=5)
    start = decay_fit(ens, alpha_ref=DEFAULT.alpha)
    s = default_softening(mean_spacing(t, count))
    dt = 2.0 / math.ceil(2.0 / (0.05 * mean_spacing(t, count)))
    final = integrate(ens, 2.0, dt, s, record_every=math.ceil(2.0 / dt),
                      keep_accel=False, energies=False).final
    end = decay_fit(final, alpha_ref=DEFAULT.alpha)
    ok = (abs(start.mu - DEFAULT.lam) <= 0.1 * DEFAULT.lam
          and abs(start.alpha_fit - DEFAULT.alpha) <= 0.1 * DEFAULT.alpha and end.mu > 0)
    record_acceptance(6, "decay", ok,
                      f"t=0 mu {start.mu:.3f} alpha {start.alpha_fit:.3f}; "
                      f"t=T mu {end.mu:.3f} alpha {end.alpha_fit:.3f}")
    assert ok


def test_admissibility_gate():
    cases = {
        "alpha = 1.0": "alpha > 1",
        "alpha = 0.8\nbeta = 0.1": "alpha > 1",
        "alpha = 2.0\nbeta = 0.5": "2/(5(3-alpha))",
        "alpha = 2.0\nbeta = 0.4": "2/(5(3-alpha))",
        "alpha = 2.5\nbeta = 0.8": "2/(5(3-alpha))",
    }
    rejected = 0
    for text, cite in cases.items():
        try:
            parse_config(text)
        except ConfigError as err:
            rejected += cite in str(err)
    accepted = parse_config("alpha = 2.0\nbeta = 0.39").beta == 0.39
    with pytest.raises(ValueError):
        StudySpec(DEFAULT, 0.4, (8.0, 16.0, 32.0))
    ok = rejected == len(cases) and accepted
    record_acceptance(7, "admissibility", ok,
                      f"{rejected}/{len(cases)} inadmissible configs rejected with the cited "
                      f"hypothesis, beta 0.39 accepted")
    assert ok
