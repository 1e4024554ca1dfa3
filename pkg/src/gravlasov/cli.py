"""Command-line front end: ``gravlasov {sample,run,study,check,oracle}``.

Exit codes: 0 success, 1 a verdict failed, 2 usage or configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import functools
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .characteristics import NumericalError, integrate
from .config import ConfigError, RunConfig, load_config, parse_config
from .diagnostics import (GridSpec, InsufficientStatistics, decay_fit, density_estimate,
                          energy_report, interior_cells, interpolation_check, max_velocity)
from .gravity import SofteningParams, field_direct, potential_energy, self_gravity, set_threads
from .initial_data import (QuadratureError, TruncationParams, mean_spacing, sample_ensemble,
                           spatial_mass, truncated_mass)
from .io import (SnapshotError, fmt, read_snapshot, write_json, write_sidecar, write_snapshot,
                 write_trajectory_csv)
from . import oracles
from .study import run_family, velocity_bound_check

log = logging.getLogger("gravlasov")

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _prepare_out(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(cfg.to_text())
    write_json(out / "run_info.json", {"version": __version__, "command": command})
    return out


def _single_run_numerics(cfg: RunConfig, trunc: TruncationParams, count: int):
    spacing = mean_spacing(trunc, count)
    eps = cfg.eps if cfg.eps is not None else cfg.softening_factor * spacing
    dt = cfg.dt
    if dt is None:
        raw = cfg.dt_factor * spacing * math.sqrt(cfg.lam)
        dt = cfg.t_end / math.ceil(cfg.t_end / raw)
    return SofteningParams(eps), dt


def _field_fn(cfg: RunConfig):
    return functools.partial(self_gravity, method=cfg.method, theta=cfg.theta,
                             direct_limit=cfg.direct_limit)


def cmd_sample(cfg, args):
    out = _prepare_out(cfg, "sample")
    ens = sample_ensemble(cfg.initial_params(), cfg.truncation(), cfg.particles, cfg.seed)
    write_snapshot(out / "ensemble.vpen", ens)
    write_sidecar(out / "ensemble.json", ens)
    log.info("wrote %d particles, mass %s", len(ens), fmt(ens.total_mass))
    return EXIT_OK


def _decay_summary(ens, alpha_ref):
    try:
        fit = decay_fit(ens, alpha_ref=alpha_ref)
    except InsufficientStatistics as err:
        return {"skipped": str(err)}, None
    return {"mu": fit.mu, "c2": fit.c2, "alpha_fit": fit.alpha_fit, **fit.verdict,
            "residuals": fit.residuals}, fit


def _steps_ok(t_end, dt, every):
    n = int(round(t_end / dt))
    return n % every == 0


def cmd_run(cfg, args):
    if args.snapshot:
        ens = read_snapshot(args.snapshot)
        trunc = ens.trunc or cfg.truncation()
    else:
        ens = sample_ensemble(cfg.initial_params(), cfg.truncation(), cfg.particles, cfg.seed)
        trunc = cfg.truncation()
    s, dt = _single_run_numerics(cfg, trunc, len(ens))
    out = _prepare_out(cfg, "run")
    ens.meta["eps"] = s.eps
    write_snapshot(out / "initial.vpen", ens)
    traj = integrate(ens, cfg.t_end, dt, s, field=_field_fn(cfg), record_every=cfg.record_every
                     if _steps_ok(cfg.t_end, dt, cfg.record_every) else 1)
    write_trajectory_csv(out / "diagnostics.csv", traj)
    final = traj.final
    final.meta["eps"] = s.eps
    write_snapshot(out / "final.vpen", final)
    write_sidecar(out / "final.json", final)

    e = traj.total
    drift = float(np.max(np.abs(e - e[0])) / abs(e[0])) if e[0] != 0 else float(np.max(np.abs(e)))
    vmax = max_velocity(traj, cfg.c3)
    alpha_ref = ens.params.alpha if ens.params else None
    decay, fit = _decay_summary(final, alpha_ref)
    verdicts = {
        "energy_drift": drift <= cfg.energy_tol,
        "mass_constant": all(np.array_equal(sn.w, ens.w) for sn in traj.snapshots),
    }
    if fit is not None:
        verdicts["decay_mu_positive"] = fit.mu > 0
    summary = {"eps": s.eps, "dt": dt, "particles": len(ens), "energy_drift": drift,
               "initial_energy": {"kinetic": traj.kinetic[0], "potential": traj.potential[0],
                                  "total": e[0]},
               "vmax_final": vmax.final, "decay": decay, "verdicts": verdicts}
    write_json(out / "summary.json", summary)
    return EXIT_OK if all(verdicts.values()) else EXIT_VERDICT


def cmd_study(cfg, args):
    spec = cfg.study_spec()
    out = _prepare_out(cfg, "study")
    res = run_family(spec, keep_trajectories=True)
    for m in res.members:
        sub = out / f"N_{m.n:g}"
        sub.mkdir(exist_ok=True)
        write_trajectory_csv(sub / "diagnostics.csv", m.trajectory)
        first, last = m.trajectory.snapshots[0], m.trajectory.final
        for name, snap in (("initial", first), ("final", last)):
            snap.meta["eps"] = res.eps
            write_snapshot(sub / f"{name}.vpen", snap)
            write_sidecar(sub / f"{name}.json", snap)
        with (sub / "gaps.csv").open("w") as fh:
            fh.write("t,position_gap,velocity_gap\n")
            gap = next((g for g in res.gaps if g.n_small == m.n), None)
            if gap is not None:
                for t, dx, dv in zip(gap.times, gap.position, gap.velocity):
                    fh.write(f"{fmt(t)},{fmt(dx)},{fmt(dv)}\n")
    vel = velocity_bound_check(res)
    summary = res.summary()
    summary["velocity_bound"] = {"ratios": vel.ratios, "ratio_limit": vel.ratio_limit,
                                 "slope": vel.slope, "passed": vel.passed}
    summary["verdicts"]["velocity_bound"] = vel.passed
    summary["verdicts"]["t_exponent"] = summary["verdicts"]["sup_kinetic"]
    passed = res.verdicts["passed"] and vel.passed
    summary["verdicts"]["passed"] = passed
    write_json(out / "summary.json", summary)
    return EXIT_OK if passed else EXIT_VERDICT


def cmd_check(cfg, args):
    ens = read_snapshot(args.snapshot)
    out = _prepare_out(cfg, "check")
    params = ens.params or cfg.initial_params()
    trunc = ens.trunc or cfg.truncation()
    eps = ens.meta.get("eps", cfg.eps if cfg.eps is not None else
                       cfg.softening_factor * mean_spacing(trunc, max(len(ens), 1)))
    rep = energy_report(ens, SofteningParams(eps))
    half = max(trunc.radius, float(np.abs(ens.x).max(initial=0.0)))
    grid = GridSpec.cube(half * (1 + 1e-12), cfg.grid_cells)
    df = density_estimate(ens, grid)
    mask = interior_cells(grid, trunc.radius)
    inter = interpolation_check(df, params.c1, mask)
    with (out / "interpolation.csv").open("w") as fh:
        fh.write("cell,cx,cy,cz,rho,k,ratio\n")
        for cell, ratio in zip(inter.cells, inter.ratio):
            c = df.centers[cell]
            fh.write(",".join([str(cell)] + [fmt(a) for a in (*c, df.rho[cell], df.k[cell],
                                                               ratio)]) + "\n")
    decay, fit = _decay_summary(ens, params.alpha)
    verdicts = {"interpolation": inter.passed}
    if fit is not None:
        verdicts["decay_mu_positive"] = fit.mu > 0
    write_json(out / "check.json", {
        "energy": {"kinetic": rep.kinetic, "potential": rep.potential, "total": rep.total,
                   "eps": rep.eps},
        "interpolation": {"K": inter.K, "worst_ratio": inter.worst_ratio,
                          "cells": int(len(inter.cells))},
        "decay": decay, "verdicts": verdicts})
    return EXIT_OK if all(verdicts.values()) else EXIT_VERDICT


def oracle_report(cfg: RunConfig) -> dict:
    """Run every brute-force oracle and compare with the production path."""
    from .initial_data import Ensemble, InitialDataParams

    rng = np.random.default_rng(cfg.seed)
    report = {}

    src = rng.normal(size=(64, 3))
    w = rng.random(64)
    q = rng.normal(size=(8, 3))
    ens = Ensemble(src, np.zeros_like(src), w)
    fast = field_direct(ens, q, SofteningParams(0.01))
    slow = oracles.naive_field(src, w, q, 0.01)
    err = float(np.max(np.linalg.norm(fast - slow, axis=1) / np.linalg.norm(slow, axis=1)))
    report["field_direct"] = {"max_rel_error": err, "tolerance": 1e-12, "passed": err <= 1e-12}

    x = rng.normal(size=(128, 3))
    w = rng.random(128)
    e128 = Ensemble(x, np.zeros_like(x), w)
    u_fast = potential_energy(e128, SofteningParams(0.01))
    u_slow = oracles.naive_potential(x, w, 0.01)
    err = abs(u_fast - u_slow) / abs(u_slow)
    report["potential_energy"] = {"rel_error": err, "tolerance": 1e-12, "passed": err <= 1e-12}

    p = InitialDataParams(1.0, 1.0, 2.0)
    t = TruncationParams(5.0, 0.4)
    m = truncated_mass(p, t)
    mc, se = oracles.mc_truncated_mass(p, t, samples=4_000_000, seed=cfg.seed)
    closed = oracles.spatial_mass_closed_form(2.0, t.radius)
    rel = abs(m - mc) / m
    report["truncated_mass"] = {
        "quadrature": m, "monte_carlo": mc, "monte_carlo_stderr": se, "rel_diff": rel,
        "spatial_closed_form_rel_diff": abs(spatial_mass(2.0, t.radius) - closed) / closed,
        "passed": rel < 1e-3 and abs(spatial_mass(2.0, t.radius) - closed) <= 1e-9 * closed}

    def run2(x0, v0, w0, t_end, dt):
        e = Ensemble(x0, v0, w0)
        return integrate(e, t_end, dt, SofteningParams(0.0), field=functools.partial(
            self_gravity, method="direct"), keep_accel=False, energies=False).final.x

    steps = [64, 128, 256, 512]
    errs = [oracles.two_body_period_error(n, run2) for n in steps]
    slope = float(np.polyfit(np.log(1.0 / np.array(steps)), np.log(errs), 1)[0])
    report["two_body"] = {"steps": steps, "errors": errs, "slope": slope,
                          "passed": abs(slope - 2.0) <= 0.2}
    report["passed"] = all(v["passed"] for v in report.values())
    return report


def cmd_oracle(cfg, args):
    out = _prepare_out(cfg, "oracle")
    report = oracle_report(cfg)
    write_json(out / "oracle.json", report)
    for name, item in report.items():
        if isinstance(item, dict):
            log.info("%-18s %s", name, "pass" if item["passed"] else "FAIL")
    return EXIT_OK if report["passed"] else EXIT_VERDICT


COMMANDS = {"sample": cmd_sample, "run": cmd_run, "study": cmd_study, "check": cmd_check,
            "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides config and GRAVLASOV_OUT)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="gravlasov", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common], help="write an initial-ensemble snapshot")
    p = sub.add_parser("run", parents=[common], help="integrate one truncated system")
    p.add_argument("--snapshot", help="start from this snapshot instead of sampling")
    sub.add_parser("study", parents=[common], help="run a cutoff family")
    p = sub.add_parser("check", parents=[common], help="diagnostics on a snapshot")
    p.add_argument("snapshot")
    sub.add_parser("oracle", parents=[common], help="run the brute-force oracles")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    set_threads(int(os.environ.get("GRAVLASOV_THREADS", "0") or 0))
    overrides = {"seed": args.seed, "out": args.out or os.environ.get("GRAVLASOV_OUT")}
    try:
        if args.config:
            if not Path(args.config).is_file():
                raise UsageError(f"config file not found: {args.config}")
            cfg = load_config(args.config, **overrides)
        else:
            cfg = parse_config("", **overrides)
        if getattr(args, "snapshot", None) and not Path(args.snapshot).is_file():
            raise UsageError(f"snapshot not found: {args.snapshot}")
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError, SnapshotError) as err:
        print(f"gravlasov: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, QuadratureError, FloatingPointError) as err:
        print(f"gravlasov: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
