"""Command-line entry points: single runs, sweeps, tables, and self-checks.

Exit codes follow the usual convention: ``0`` success, ``1`` runtime
failure (a run blew up, a check failed, output could not be written), and
``2`` usage or configuration errors.  The thread-pool width comes from
``--threads`` unless the ``NEMATIC_THREADS`` environment variable
overrides it.
"""

import argparse
import dataclasses
import logging
import os
import sys
import time

import numpy as np

from ..errors import ConfigError, NemalignError
from ..simulator import export_snapshot, run, warm_up
from .config import default_settings, load_config
from .sweeps import SweepSpec, run_potential_scan, run_sweep

__all__ = ["cli_main", "main"]

_COEFF_COLUMNS = (
    "rho",
    "eta",
    "S2",
    "K",
    "Pi2",
    "c_1_2",
    "c_3_2",
    "d_2_0",
    "d_0_2",
    "d_2_2",
    "d_4_0",
    "d_0_4",
    "d_4_2",
    "d_2_4",
)


def _add_common(sub):
    sub.add_argument("--config", metavar="PATH", help="INI configuration file")
    sub.add_argument(
        "--out", metavar="DIR", default=".", help="output directory (default: .)"
    )
    sub.add_argument("--seed", type=int, default=None, help="override the run seed")
    sub.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker threads (NEMATIC_THREADS overrides)",
    )
    sub.add_argument(
        "--deterministic",
        action="store_true",
        help="fixed-order force accumulation for byte-identical reruns",
    )
    sub.add_argument(
        "--full",
        action="store_true",
        help="production-scale defaults instead of the reduced CI scale",
    )


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nemalign",
        description="Anisotropic-particle alignment simulations and "
        "continuum coefficient tables.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("simulate", help="one run -> trajectory CSV")
    _add_common(p)
    p.add_argument(
        "--snapshots",
        action="store_true",
        help="also write the final particle state",
    )

    p = sub.add_parser("sweep", help="grid of runs -> trajectory/heatmap CSVs")
    _add_common(p)
    p.add_argument(
        "--axis1",
        required=True,
        metavar="NAME=V1,V2,...",
        help="first sweep axis, e.g. lambda=16,256,512",
    )
    p.add_argument("--axis2", metavar="NAME=V1,V2,...", help="optional second axis")
    p.add_argument(
        "--samples", type=int, default=8, help="replicas per cell (default: 8)"
    )
    p.add_argument("--base-seed", type=int, default=0, help="seed of the first run")

    p = sub.add_parser(
        "coeffs", help="continuum coefficient table over a density grid"
    )
    _add_common(p)
    p.add_argument("--rho-min", type=float, default=None)
    p.add_argument("--rho-max", type=float, default=None)
    p.add_argument("--rho-points", type=int, default=64)
    p.add_argument(
        "--grid-size",
        type=int,
        default=256,
        help="collocation grid for the response profiles",
    )

    p = sub.add_parser(
        "potential-scan",
        help="sweep the potential exponent with rescaled coupling",
    )
    _add_common(p)
    p.add_argument(
        "--xi",
        default="0,0.5,1",
        metavar="X1,X2,...",
        help="exponents to scan; 0, 0.5 and 1 are always included",
    )
    p.add_argument(
        "--samples", type=int, default=8, help="replicas per exponent (default: 8)"
    )
    p.add_argument("--base-seed", type=int, default=0, help="seed of the first run")

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    _add_common(p)

    return parser


def _resolve_threads(args):
    env = os.environ.get("NEMATIC_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"NEMATIC_THREADS must be an integer, got {env!r}")
    return max(1, args.threads)


def _load_settings(args):
    if args.config:
        settings = load_config(args.config, full=args.full)
    else:
        settings = default_settings(args.full)
    if args.seed is not None:
        settings = dataclasses.replace(settings, seed=args.seed)
    return settings


def _parse_axis(text):
    name, sep, rest = text.partition("=")
    values = [tok for tok in rest.split(",") if tok.strip()]
    if not sep or not values:
        raise ConfigError(
            f"axis must look like name=v1,v2,... (got {text!r})"
        )
    try:
        parsed = tuple(float(tok) for tok in values)
    except ValueError:
        raise ConfigError(f"non-numeric axis value in {text!r}")
    return (name.strip(), parsed)


def _write_trajectory(series, config, path):
    with open(path, "w", newline="\n") as f:
        f.write(
            f"# N={config.N} t_end={config.t_end:g} dt={config.dt:g}"
            f" seed={config.seed} digest={config.digest()}\n"
        )
        f.write("# gamma is the instantaneous alignment order parameter\n")
        f.write("time,gamma\n")
        for t, g in zip(series.times, series.gammas):
            f.write(f"{t:.17g},{g:.17g}\n")


def _cmd_simulate(args, threads):
    settings = _load_settings(args)
    config = settings.to_sim_config()
    method = "deterministic" if args.deterministic else "fast"
    if method == "fast":
        warm_up(settings.n)
    t0 = time.perf_counter()
    series = run(config, method=method, threads=threads)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "trajectory.csv")
    _write_trajectory(series, config, path)
    if args.snapshots:
        export_snapshot(
            series.system, config, os.path.join(args.out, "snapshot_final.csv")
        )
    print(
        f"final gamma = {series.gammas[-1]:.6f}"
        f" ({time.perf_counter() - t0:.1f}s, wrote {path})"
    )
    return 0


def _cmd_sweep(args, threads):
    settings = _load_settings(args)
    spec = SweepSpec(
        axis1=_parse_axis(args.axis1),
        axis2=_parse_axis(args.axis2) if args.axis2 else None,
        samples_per_cell=args.samples,
        base_seed=args.base_seed,
        settings=settings,
    )
    result = run_sweep(
        spec, out_dir=args.out, threads=threads, deterministic=args.deterministic
    )
    _print_sweep_summary(result)
    if result.failures:
        print(f"{len(result.failures)} run(s) failed", file=sys.stderr)
        return 1
    return 0


def _print_sweep_summary(result):
    spec = result.spec
    n1, n2 = spec.grid_shape
    for i in range(n1):
        for j in range(n2):
            label = f"{spec.axis1[0]}={spec.axis1[1][i]:g}"
            if spec.axis2 is not None:
                label += f" {spec.axis2[0]}={spec.axis2[1][j]:g}"
            mean = result.final_matrix[i, j]
            spread = np.nanstd(result.finals[i, j]) if np.isfinite(mean) else np.nan
            print(f"{label}: final gamma = {mean:.4f} +- {spread:.4f}")
    print(f"sweep finished in {result.wall_time:.1f}s")


def _cmd_potential_scan(args, threads):
    settings = _load_settings(args)
    try:
        xis = tuple(float(tok) for tok in args.xi.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"non-numeric exponent in {args.xi!r}")
    spec = SweepSpec(
        axis1=("xi", xis or (0.0,)),
        samples_per_cell=args.samples,
        base_seed=args.base_seed,
        settings=settings,
    )
    result = run_potential_scan(
        xis,
        spec,
        out_dir=args.out,
        threads=threads,
        deterministic=args.deterministic,
    )
    _print_sweep_summary(result)
    if result.failures:
        print(f"{len(result.failures)} run(s) failed", file=sys.stderr)
        return 1
    return 0


def _coeff_rows(settings, grid, grid_size):
    from ..macrocoeffs import (
        build_eta_interpolant,
        compute_coeff_table,
        compute_moment,
        solve_h_eta,
    )
    from ..macrocoeffs.moments import DEFAULT_C_ORDERS, DEFAULT_D_ORDERS

    params = settings.macro_params()
    rows = []
    if params.chi == 0.0:
        h = solve_h_eta(0.0, n=params.n, grid_size=grid_size)
        c = {
            order: compute_moment(0.0, h, order[0], order[1], "c", params.n)
            for order in DEFAULT_C_ORDERS
        }
        d = {
            order: compute_moment(0.0, None, order[0], order[1], "d", params.n)
            for order in DEFAULT_D_ORDERS
        }
        for rho in grid:
            rows.append((rho, 0.0, 0.0, 1.0, np.nan, c, d))
        return rows
    interpolant = build_eta_interpolant(params)
    for rho in grid:
        table = compute_coeff_table(
            rho, params, interpolant, grid_size=grid_size
        )
        rows.append((rho, table.eta, table.S2, table.K, table.Pi2, table.c, table.d))
    return rows


def _default_rho_bounds(settings):
    params = settings.macro_params()
    if params.chi == 0.0:
        return 0.1, 4.0
    from ..macrocoeffs import build_eta_interpolant

    interpolant = build_eta_interpolant(params)
    return interpolant.rho_star, interpolant.rho_max


def _cmd_coeffs(args, threads):
    settings = _load_settings(args)
    if args.rho_points < 2:
        raise ConfigError("--rho-points must be at least 2")
    lo, hi = _default_rho_bounds(settings)
    if args.rho_min is not None:
        lo = args.rho_min
    if args.rho_max is not None:
        hi = args.rho_max
    if not (0.0 < lo < hi):
        raise ConfigError(f"need 0 < rho-min < rho-max, got [{lo}, {hi}]")
    grid = np.linspace(lo, hi, args.rho_points)
    rows = _coeff_rows(settings, grid, args.grid_size)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "coeffs.csv")
    params = settings.macro_params()
    with open(path, "w", newline="\n") as f:
        f.write(
            f"# n={params.n} chi={params.chi:g} lambda={params.lam:g}"
            f" mu={params.mu:g} D_x={params.D_x:g} D_u={params.D_u:g}\n"
        )
        f.write(
            "# c_k_p: response-weighted angular moment of order (k, p);"
            " d_k_p: plain moment\n"
        )
        f.write(
            "# Pi2 is nan for spherical particles (no aligned branch)\n"
        )
        f.write(",".join(_COEFF_COLUMNS) + "\n")
        for rho, eta, s2, big_k, pi2, c, d in rows:
            cells = [rho, eta, s2, big_k, pi2]
            cells += [c[(1, 2)], c[(3, 2)]]
            cells += [
                d[(2, 0)],
                d[(0, 2)],
                d[(2, 2)],
                d[(4, 0)],
                d[(0, 4)],
                d[(4, 2)],
                d[(2, 4)],
            ]
            f.write(",".join(f"{value:.17g}" for value in cells) + "\n")
    print(f"wrote {len(rows)} rows to {path}")
    return 0


# --- built-in validation checks ------------------------------------------


def _check_moment_identity():
    from ..potentials import ParticleShape, PotentialSpec, _batch_potential
    from ..potentials import sigma_matrix

    shape = ParticleShape(0.5, 0.2)
    spec = PotentialSpec(xi=0.0, shape=shape)
    rng = np.random.default_rng(11)
    for _ in range(3):
        angles = rng.uniform(0.0, 2 * np.pi, size=2)
        u1 = np.array([np.cos(angles[0]), np.sin(angles[0])])
        u2 = np.array([np.cos(angles[1]), np.sin(angles[1])])
        nodes, weights = np.polynomial.legendre.leggauss(200)
        radius = 0.5 * spec.cutoff_radius * (nodes + 1.0)
        w_r = 0.5 * spec.cutoff_radius * weights * radius
        theta = np.linspace(0.0, 2 * np.pi, 512, endpoint=False)
        w_t = 2 * np.pi / theta.size
        R = np.stack(
            [
                np.outer(radius, np.cos(theta)).ravel(),
                np.outer(radius, np.sin(theta)).ravel(),
            ],
            axis=1,
        )
        weight = (np.outer(w_r, np.full(theta.size, w_t))).ravel()
        count = R.shape[0]
        values = _batch_potential(
            spec, np.tile(u1, (count, 1)), np.tile(u2, (count, 1)), R
        )
        mass = float(np.sum(weight * values))
        second = np.einsum("m,mi,mj->ij", weight * values, R, R)
        target = 0.5 * mass * sigma_matrix(shape, u1, u2)
        err = np.abs(second - target).max() / np.abs(target).max()
        if err > 1e-8:
            raise AssertionError(f"second-moment identity off by {err:.2e}")


def _check_gradients():
    from ..potentials import (
        ParticleShape,
        PotentialSpec,
        _batch_grads,
        _batch_potential,
    )

    shape = ParticleShape(0.5, 0.2)
    spec = PotentialSpec(xi=0.5, shape=shape)
    rng = np.random.default_rng(7)
    count = 200
    angles = rng.uniform(0.0, 2 * np.pi, size=(2, count))
    U1 = np.stack([np.cos(angles[0]), np.sin(angles[0])], axis=1)
    U2 = np.stack([np.cos(angles[1]), np.sin(angles[1])], axis=1)
    R = rng.uniform(-1.5, 1.5, size=(count, 2))
    _, gx, _, _ = _batch_grads(spec, U1, U2, R)
    step = 1e-6
    worst = 0.0
    for axis in range(2):
        offset = np.zeros(2)
        offset[axis] = step
        plus = _batch_potential(spec, U1, U2, R + offset)
        minus = _batch_potential(spec, U1, U2, R - offset)
        # gx differentiates in the first particle's position, which enters
        # the separation with a minus sign
        fd = -(plus - minus) / (2 * step)
        scale = np.abs(gx[:, axis]).max() + 1e-12
        worst = max(worst, np.abs(gx[:, axis] - fd).max() / scale)
    if worst > 1e-5:
        raise AssertionError(f"position gradient off by {worst:.2e}")


def _check_s2():
    from scipy.special import ive

    from ..macrocoeffs import compute_S2

    expected = ive(1, 1.0) / ive(0, 1.0)
    err = abs(compute_S2(2.0, 2) - expected)
    if err > 1e-12:
        raise AssertionError(f"planar order parameter off by {err:.2e}")


def _check_parity():
    from ..macrocoeffs import compute_moment, solve_h_eta

    h = solve_h_eta(2.0, n=2)
    odd_d = abs(compute_moment(2.0, None, 1, 2, "d", 2))
    even_c = abs(compute_moment(2.0, h, 2, 2, "c", 2))
    if odd_d > 1e-10 or even_c > 1e-10:
        raise AssertionError(f"parity violated: d={odd_d:.2e} c={even_c:.2e}")


def _check_residual():
    from ..macrocoeffs import solve_h_eta

    for n in (2, 3):
        sol = solve_h_eta(2.0, n=n)
        if sol.residual > 1e-8:
            raise AssertionError(
                f"collocation residual {sol.residual:.2e} at n={n}"
            )


def _check_cell_list():
    from ..geometry import PeriodicBox
    from ..potentials import ParticleShape, PotentialSpec
    from ..simulator import SimConfig, init_uniform, pair_gradient_sums

    warm_up(2)
    box = PeriodicBox(np.array([12.0, 12.0]))
    spec = PotentialSpec(xi=0.0, shape=ParticleShape(0.5, 0.2))
    config = SimConfig(
        n=2, N=150, box=box, spec=spec, mu=1.0, lam=1.0, D_x=0.1, D_u=0.1,
        dt=1e-3, t_end=1e-3, seed=3,
    )
    system = init_uniform(config)
    gx_ref, gu_ref = pair_gradient_sums(system, config, method="deterministic")
    gx_fast, gu_fast = pair_gradient_sums(system, config, method="fast")
    scale = np.abs(gx_ref).max() + np.abs(gu_ref).max() + 1e-30
    err = max(np.abs(gx_ref - gx_fast).max(), np.abs(gu_ref - gu_fast).max())
    if err > 1e-12 * scale:
        raise AssertionError(f"neighbor sums diverge by {err:.2e}")


def _check_replay():
    from ..geometry import PeriodicBox
    from ..potentials import ParticleShape, PotentialSpec
    from ..simulator import SimConfig

    box = PeriodicBox(np.array([10.0, 10.0]))
    spec = PotentialSpec(xi=0.0, shape=ParticleShape(0.5, 0.2))
    config = SimConfig(
        n=2, N=64, box=box, spec=spec, mu=50.0, lam=10.0, D_x=0.05, D_u=0.01,
        dt=0.01, t_end=2.0, seed=21,
    )
    a = run(config, method="deterministic")
    b = run(config, method="deterministic")
    if not (
        np.array_equal(a.system.positions, b.system.positions)
        and np.array_equal(a.gammas, b.gammas)
    ):
        raise AssertionError("identical configs produced different outputs")


_CHECKS = (
    ("pair potential second-moment identity", _check_moment_identity),
    ("pair gradients vs finite differences", _check_gradients),
    ("equilibrium order parameter Bessel form", _check_s2),
    ("angular moment parity", _check_parity),
    ("response profile collocation residual", _check_residual),
    ("neighbor accounting vs all pairs", _check_cell_list),
    ("deterministic replay", _check_replay),
)


def _cmd_validate(args, threads):
    failed = 0
    for name, fn in _CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
        except Exception as exc:  # report every check, stop for none
            failed += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"  ok {name} ({time.perf_counter() - t0:.1f}s)")
    print(f"{len(_CHECKS) - failed}/{len(_CHECKS)} checks passed")
    return 1 if failed else 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "coeffs": _cmd_coeffs,
    "potential-scan": _cmd_potential_scan,
    "validate": _cmd_validate,
}


def cli_main(argv=None):
    """Parse ``argv`` (default ``sys.argv[1:]``) and run one subcommand."""
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (None, 0) else int(exc.code)
    if not logging.getLogger("nemalign.harness").handlers:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        threads = _resolve_threads(args)
        return _HANDLERS[args.command](args, threads)
    except ConfigError as exc:
        print(f"nemalign: configuration error: {exc}", file=sys.stderr)
        return 2
    except (NemalignError, OSError) as exc:
        print(f"nemalign: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


main = cli_main
