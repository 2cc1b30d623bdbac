"""Command-line front end.

    qcollapse simulate   --engine {spde,filter,prior} ... --out traj.csv
    qcollapse stationary --kappa -1 --lambda 1
    qcollapse ensemble   --engine filter --trajectories 1000 ... --out ens.csv
    qcollapse converge   --engine filter --levels 4 ...

Exit codes: 0 success, 1 numerical failure (partial output kept), 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .convergence import filter_strong, prior_order, riccati_order, spde_spatial, spde_strong
from .ensemble import EnsembleSummary, filter_ensemble, spde_ensemble, summarize
from .errors import NoStationaryLimitError, QCollapseError, ValidationError
from .gaussian_filter import GaussianState, simulate_filter
from .manifest import RunManifest, manifest_path, now_iso
from .model import GridSpec, ModelParams, auto_grid, gaussian_wavefunction, quadratic_potential
from .noise import NoiseStream
from .prior import PriorMoments, prior_series_as_trajectory, run_prior
from .riccati import asymptotic_dispersions, ground_state_variance
from .series import write_csv
from .spde import SpdeConfig, SpdeRunError, run_spde


def _common_flags():
    p = argparse.ArgumentParser(add_help=False)
    phys = p.add_argument_group("physics")
    phys.add_argument("--m", type=float, default=1.0, help="mass")
    phys.add_argument("--hbar", type=float, default=1.0)
    phys.add_argument("--kappa", type=float, default=0.0, help="k/hbar; <0 oscillator, >0 accelerator")
    phys.add_argument("--g", type=float, default=0.0, help="uniform acceleration")
    phys.add_argument("--lambda", dest="lam", type=float, default=0.0, help="measurement accuracy")
    init = p.add_argument_group("initial packet")
    init.add_argument("--q0", type=float, default=0.0)
    init.add_argument("--p0", type=float, default=0.0)
    init.add_argument("--sigma-q2", type=float, default=1.0)
    run = p.add_argument_group("run")
    run.add_argument("--dt", type=float, default=1e-3)
    run.add_argument("--t-final", type=float, default=1.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--trajectory-index", type=int, default=0)
    run.add_argument("--trajectories", type=int, default=100)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--grid-n", type=int, default=512)
    run.add_argument("--x-min", type=float, default=None)
    run.add_argument("--x-max", type=float, default=None)
    run.add_argument("--scheme", choices=("em", "splitstep"), default="splitstep")
    run.add_argument("--sample-every", type=int, default=1)
    run.add_argument("--out", default=None, help="output CSV path")
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="qcollapse", description=__doc__.splitlines()[0])
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="one trajectory to CSV")
    sim.add_argument("--engine", choices=("spde", "filter", "prior"), default="filter")

    sub.add_parser("stationary", parents=[common], help="asymptotic watchdog widths")

    ens = sub.add_parser("ensemble", parents=[common], help="many trajectories vs prior moments")
    ens.add_argument("--engine", choices=("filter", "spde"), default="filter")

    conv = sub.add_parser("converge", parents=[common], help="step-halving convergence study")
    conv.add_argument("--engine", choices=("filter", "spde", "prior"), default="filter")
    conv.add_argument("--levels", type=int, default=4)
    return parser


def _params(args):
    return ModelParams(m=args.m, hbar=args.hbar, kappa=args.kappa, g=args.g, lam=args.lam)


def _grid(args, params):
    if (args.x_min is None) != (args.x_max is None):
        raise ValidationError("grid", "give both --x-min and --x-max or neither")
    if args.x_min is not None:
        return GridSpec(args.x_min, args.x_max, args.grid_n)
    sigma = math.sqrt(args.sigma_q2)
    try:
        sigma = max(sigma, math.sqrt(asymptotic_dispersions(params)[0]))
    except NoStationaryLimitError:
        pass
    return auto_grid(args.q0, sigma, args.grid_n)


def _manifest(args, argv, params, config, scheme=None):
    return RunManifest(
        command=args.command,
        params={"m": params.m, "hbar": params.hbar, "kappa": params.kappa,
                "g": params.g, "lambda": params.lam},
        config=config,
        seed=args.seed,
        scheme=scheme,
        command_line=["qcollapse", *argv],
    )


def _require_out(args):
    if not args.out:
        raise ValidationError("out", "--out PATH is required")
    if args.sample_every < 1:
        raise ValidationError("sample_every", "must be >= 1")


def cmd_simulate(args, argv):
    _require_out(args)
    params = _params(args)
    config = {"engine": args.engine, "dt": args.dt, "t_final": args.t_final,
              "q0": args.q0, "p0": args.p0, "sigma_q2": args.sigma_q2,
              "trajectory_index": args.trajectory_index, "sample_every": args.sample_every}
    scheme = None
    status = 0
    if args.engine == "spde":
        grid = _grid(args, params)
        scheme = args.scheme
        config.update(x_min=grid.x_min, x_max=grid.x_max, grid_n=grid.n)
        cfg = SpdeConfig(args.dt, args.t_final, scheme, fit_every=args.sample_every)
        init = gaussian_wavefunction(args.q0, args.p0, args.sigma_q2, grid, params)
        noise = NoiseStream(args.seed, args.trajectory_index, args.dt)
        manifest = _manifest(args, argv, params, config, scheme)
        try:
            series = run_spde(init, noise, cfg, quadratic_potential(params), params).series
        except SpdeRunError as exc:
            series = exc.partial.series
            manifest.status = f"failed at step {exc.step}: {exc.cause}"
            print(f"error: {exc}", file=sys.stderr)
            status = 1
    elif args.engine == "filter":
        manifest = _manifest(args, argv, params, config)
        init = GaussianState.from_packet(args.q0, args.p0, args.sigma_q2, params)
        noise = NoiseStream(args.seed, args.trajectory_index, args.dt)
        series, _ = simulate_filter(init, noise, args.t_final, params)
    else:
        manifest = _manifest(args, argv, params, config)
        init = PriorMoments.from_packet(args.q0, args.p0, args.sigma_q2, params)
        series = prior_series_as_trajectory(run_prior(init, args.dt, args.t_final, params))

    write_csv(series.thinned(args.sample_every), args.out)
    if status == 0:
        manifest.status = "ok"
    manifest.end_time = now_iso()
    manifest.write(manifest_path(args.out))
    if status == 0 and len(series):
        print(f"wrote {args.out}: t={series.t[-1]:.6g} q_hat={series.q_hat[-1]:.6g} "
              f"p_hat={series.p_hat[-1]:.6g} tau_q2={series.tau_q2[-1]:.6g}")
    return status


def cmd_stationary(args, argv):
    params = _params(args)
    try:
        tq, tp = asymptotic_dispersions(params)
    except NoStationaryLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rows = [("tau_q2_inf", tq), ("tau_p2_inf", tp), ("uncertainty_product", tq * tp),
            ("hbar2_over_4", params.hbar ** 2 / 4)]
    if params.kappa < 0:
        case, ground = "(a) harmonic oscillator", ground_state_variance(params)
        rows.append(("unobserved_ground_tau_q2", ground))
        verdict = "narrowed" if tq < ground * (1 - 1e-12) else "unchanged"
    elif params.kappa == 0:
        case, verdict = "(b) homogeneous field / free particle", "localized"
    else:
        case, verdict = "(c) harmonic accelerator", "localized"
    print(f"{'case':<26}{case}")
    for name, value in rows:
        print(f"{name:<26}{value:.17g}")
    print(f"{'verdict':<26}{verdict}")
    return 0


def cmd_ensemble(args, argv):
    _require_out(args)
    params = _params(args)
    if args.trajectories < 2:
        raise ValidationError("trajectories", "need at least 2")
    config = {"engine": args.engine, "dt": args.dt, "t_final": args.t_final,
              "q0": args.q0, "p0": args.p0, "sigma_q2": args.sigma_q2,
              "trajectories": args.trajectories, "sample_every": args.sample_every}
    scheme = None
    if args.engine == "filter":
        init = GaussianState.from_packet(args.q0, args.p0, args.sigma_q2, params)
        data = filter_ensemble(init, args.seed, args.trajectories, args.dt, args.t_final,
                               params, sample_every=args.sample_every, workers=args.workers)
    else:
        grid = _grid(args, params)
        scheme = args.scheme
        config.update(x_min=grid.x_min, x_max=grid.x_max, grid_n=grid.n)
        init = gaussian_wavefunction(args.q0, args.p0, args.sigma_q2, grid, params)
        cfg = SpdeConfig(args.dt, args.t_final, scheme)
        data = spde_ensemble(init, args.seed, args.trajectories, cfg, quadratic_potential(params),
                             params, sample_every=args.sample_every, workers=args.workers)
    manifest = _manifest(args, argv, params, config, scheme)
    summary = summarize(data, PriorMoments.from_packet(args.q0, args.p0, args.sigma_q2, params),
                        args.dt, params)
    _write_summary(summary, args.out)
    manifest.status = "ok"
    manifest.notes = {"failed_trajectories": [int(i) for i, _ in data.failed]}
    manifest.end_time = now_iso()
    manifest.write(manifest_path(args.out))
    print(f"wrote {args.out}: M={summary.trajectories} "
          f"max|z_mean|={np.max(np.abs(summary.z_mean)):.3f} "
          f"max|z_var|={np.max(np.abs(summary.z_var)):.3f}")
    return 0


def _write_summary(summary: EnsembleSummary, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(EnsembleSummary.COLUMNS) + "\n")
        for row in summary.rows():
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def cmd_converge(args, argv):
    params = _params(args)
    if args.levels < 3:
        raise ValidationError("levels", "need at least 3 levels")
    a = args
    if a.engine == "filter":
        reports = [filter_strong(params, a.q0, a.p0, a.sigma_q2, a.dt, a.t_final, a.levels,
                                 a.seed, a.trajectory_index),
                   riccati_order(params, a.sigma_q2, a.dt, a.t_final, a.levels)]
    elif a.engine == "prior":
        reports = [prior_order(params, a.q0, a.p0, a.sigma_q2, a.dt, a.t_final, a.levels)]
    else:
        grid = _grid(a, params)
        finest_dt = a.dt / 2 ** (a.levels - 1)
        reports = [spde_strong(params, grid, a.q0, a.p0, a.sigma_q2, a.dt, a.t_final, a.levels,
                               a.scheme, a.seed, a.trajectory_index),
                   spde_spatial(params, grid.x_min, grid.x_max, grid.n, a.sigma_q2,
                                finest_dt, a.t_final, a.levels)]
    for r in reports:
        print("\n".join(r.lines()))
    return 0 if all(r.monotone for r in reports) else 1


COMMANDS = {"simulate": cmd_simulate, "stationary": cmd_stationary,
            "ensemble": cmd_ensemble, "converge": cmd_converge}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, argv)
    except ValidationError as exc:
        parser.error(str(exc))
    except QCollapseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
