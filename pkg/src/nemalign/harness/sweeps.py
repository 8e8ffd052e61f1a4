"""Parameter sweeps over simulation cells, with CSV emission.

A sweep evaluates a grid of one or two parameter axes, running
``samples_per_cell`` independent replicas per cell.  Replica ``s`` of cell
``(i, j)`` is seeded ``base_seed + linear_index`` with the row-major linear
index over (cell, replica), so distinct runs always draw from distinct
counter-based streams.  Failed cells are recorded and skipped, never fatal
to the rest of the grid.

Outputs (when an output directory is given):

``trajectories.csv``
    One row per recorded sample: ``cell_id, sample, time, gamma``, where
    ``gamma`` is the instantaneous alignment order parameter at that time
    and ``cell_id`` is the row-major cell index.
``heatmap.csv``
    One row per cell: ``axis1_value, axis2_value, gamma_mean, gamma_std``
    aggregated over the stored per-replica final values.
``interface.csv``
    Only when both axes are drawn from ``{D_x, D_u, lambda, mu}``: the
    axis2 coordinate at which the two diffusion-to-coupling ratios
    ``D_u / lambda`` and ``D_x / mu`` cross, one row per axis1 value.
"""

import dataclasses
import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NemalignError
from ..simulator import run, warm_up
from .config import (
    SWEEPABLE_KEYS,
    apply_parameter,
    default_settings,
)

__all__ = ["SweepSpec", "SweepResult", "run_sweep", "run_potential_scan"]

log = logging.getLogger("nemalign.harness")

#: Axes for which the ratio-crossing interface is defined.
_RATIO_KEYS = ("D_x", "D_u", "lambda", "mu")

_FLOAT_FMT = "%.17g"


def _format(value):
    return _FLOAT_FMT % value


@dataclass(frozen=True)
class SweepSpec:
    """Grid description: one or two axes over a base configuration.

    ``axis1`` and ``axis2`` are ``(name, values)`` pairs with names drawn
    from the configuration schema (``lambda``, ``mu``, ``D_x``, ``chi``,
    ``N``, ...); ``axis2`` may be ``None`` for a one-dimensional sweep.
    ``settings`` carries the base configuration including any scale
    overrides (``N``, box lengths, ``t_end``, ``dt``); ``None`` means the
    reduced-scale defaults.  Per-run seeds derive from ``base_seed`` alone;
    the base configuration's own seed is ignored inside a sweep.
    """

    axis1: tuple
    axis2: tuple = None
    samples_per_cell: int = 8
    base_seed: int = 0
    settings: object = None

    def __post_init__(self):
        object.__setattr__(self, "axis1", _checked_axis(self.axis1, "axis1"))
        if self.axis2 is not None:
            object.__setattr__(self, "axis2", _checked_axis(self.axis2, "axis2"))
            if self.axis2[0] == self.axis1[0]:
                raise ConfigError(
                    f"axis1 and axis2 both sweep {self.axis1[0]!r}"
                )
        if self.samples_per_cell < 1:
            raise ConfigError("samples_per_cell must be at least 1")
        if self.settings is None:
            object.__setattr__(self, "settings", default_settings())

    @property
    def grid_shape(self):
        n2 = 1 if self.axis2 is None else len(self.axis2[1])
        return (len(self.axis1[1]), n2)

    def cell_settings(self, i, j):
        """Base settings with the axis values of cell ``(i, j)`` applied."""
        settings = apply_parameter(self.settings, self.axis1[0], self.axis1[1][i])
        if self.axis2 is not None:
            settings = apply_parameter(settings, self.axis2[0], self.axis2[1][j])
        return settings

    def seed_for(self, i, j, sample):
        """Seed of replica ``sample`` in cell ``(i, j)`` (row-major layout)."""
        n2 = self.grid_shape[1]
        linear = (i * n2 + j) * self.samples_per_cell + sample
        return self.base_seed + linear


def _checked_axis(axis, label):
    try:
        name, values = axis
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label} must be a (name, values) pair") from exc
    if name not in SWEEPABLE_KEYS:
        raise ConfigError(f"{label}: {name!r} is not a sweepable parameter")
    values = tuple(float(v) for v in values)
    if not values:
        raise ConfigError(f"{label}: empty value list")
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{label}: values must be finite")
    return (name, values)


@dataclass
class SweepResult:
    """Everything a sweep produced, cell by cell.

    ``finals`` has shape ``(len(axis1), len(axis2) or 1, samples_per_cell)``
    with ``NaN`` marking failed replicas; ``final_matrix`` is its
    replica-mean.  ``times[c]`` / ``gamma_mean[c]`` / ``gamma_std[c]`` hold
    the per-cell trajectory statistics for row-major cell index ``c``, and
    ``trajectories[c]`` the underlying per-replica curves.  The invariant
    diagnostics (``unit_errors``, ``drift_norms``, ``displacements``) are
    per replica, shaped like ``finals``.
    """

    spec: SweepSpec
    times: list
    gamma_mean: list
    gamma_std: list
    trajectories: list
    finals: np.ndarray
    final_matrix: np.ndarray
    unit_errors: np.ndarray
    drift_norms: np.ndarray
    displacements: np.ndarray
    interface: np.ndarray = None
    failures: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def axis1_values(self):
        return np.array(self.spec.axis1[1])

    @property
    def axis2_values(self):
        if self.spec.axis2 is None:
            return None
        return np.array(self.spec.axis2[1])

    def cell_index(self, i, j):
        return i * self.finals.shape[1] + j


def _interface_values(spec):
    """Axis2 coordinates where ``D_u / lambda`` equals ``D_x / mu``.

    Defined only when both axes vary ratio parameters; returns ``None``
    otherwise.  The crossing condition ``D_u * mu == D_x * lambda`` is
    linear in each parameter, so the axis2 coordinate is solved in closed
    form from the base values and each axis1 value in turn.
    """
    if spec.axis2 is None:
        return None
    name1, values1 = spec.axis1
    name2, _ = spec.axis2
    if name1 not in _RATIO_KEYS or name2 not in _RATIO_KEYS:
        return None
    out = np.empty(len(values1))
    for i, v1 in enumerate(values1):
        settings = apply_parameter(spec.settings, name1, v1)
        ratios = {
            "D_x": settings.D_x,
            "D_u": settings.D_u,
            "lambda": settings.lam,
            "mu": settings.mu,
        }
        if name2 == "mu":
            out[i] = ratios["D_x"] * ratios["lambda"] / ratios["D_u"]
        elif name2 == "lambda":
            out[i] = ratios["D_u"] * ratios["mu"] / ratios["D_x"]
        elif name2 == "D_x":
            out[i] = ratios["D_u"] * ratios["mu"] / ratios["lambda"]
        else:
            out[i] = ratios["D_x"] * ratios["lambda"] / ratios["mu"]
    return out


def _run_one(settings, seed, method):
    config = dataclasses.replace(settings, seed=seed).to_sim_config()
    series = run(config, method=method)
    drift = float(np.linalg.norm(series.system.net_drift))
    return (
        series.times,
        series.gammas,
        float(series.gammas[-1]),
        float(series.system.max_unit_norm_error),
        drift,
        float(series.mean_displacement()),
    )


def run_sweep(spec, out_dir=None, threads=1, deterministic=False, transform=None):
    """Execute every (cell, replica) run of ``spec`` and aggregate.

    Replicas run on a thread pool of the requested width (aggregation
    itself is single-writer, after all futures resolve).  A failed run
    leaves ``NaN`` in its ``finals`` slot and an entry in
    ``SweepResult.failures``; the sweep always completes.  With
    ``deterministic=True`` the pairwise forces use the fixed-order
    reference path, making rerun outputs byte-identical.

    ``transform(settings, axis_values)``, when given, maps each cell's
    settings once more before the run (used by the potential scan to
    rescale the coupling with the exponent).

    A one-cell, one-replica spec reduces exactly to a single
    :func:`~nemalign.simulator.run` seeded ``base_seed``.
    """
    t0 = time.perf_counter()
    n1, n2 = spec.grid_shape
    samples = spec.samples_per_cell
    method = "deterministic" if deterministic else "fast"
    if method == "fast":
        warm_up(spec.settings.n)

    jobs = []
    for i in range(n1):
        for j in range(n2):
            settings = spec.cell_settings(i, j)
            if transform is not None:
                axis_values = {spec.axis1[0]: spec.axis1[1][i]}
                if spec.axis2 is not None:
                    axis_values[spec.axis2[0]] = spec.axis2[1][j]
                settings = transform(settings, axis_values)
            for s in range(samples):
                jobs.append((i, j, s, settings, spec.seed_for(i, j, s)))

    finals = np.full((n1, n2, samples), np.nan)
    unit_errors = np.full((n1, n2, samples), np.nan)
    drift_norms = np.full((n1, n2, samples), np.nan)
    displacements = np.full((n1, n2, samples), np.nan)
    curves = {}
    cell_times = [None] * (n1 * n2)
    failures = []

    def execute(job):
        i, j, s, settings, seed = job
        started = time.perf_counter()
        try:
            result = _run_one(settings, seed, method)
        except (NemalignError, FloatingPointError, ValueError) as exc:
            return (i, j, s, None, f"{type(exc).__name__}: {exc}", 0.0)
        return (i, j, s, result, None, time.perf_counter() - started)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(execute, jobs))
    else:
        outcomes = [execute(job) for job in jobs]

    for i, j, s, result, error, elapsed in outcomes:
        cell = i * n2 + j
        if error is not None:
            failures.append((cell, s, error))
            log.warning("cell %d sample %d failed: %s", cell, s, error)
            continue
        times, gammas, final, unit_err, drift, disp = result
        finals[i, j, s] = final
        unit_errors[i, j, s] = unit_err
        drift_norms[i, j, s] = drift
        displacements[i, j, s] = disp
        cell_times[cell] = times
        curves.setdefault(cell, {})[s] = gammas
        log.info(
            "cell %d/%d sample %d/%d done in %.1fs (final gamma %.4f)",
            cell + 1,
            n1 * n2,
            s + 1,
            samples,
            elapsed,
            final,
        )

    gamma_mean = [None] * (n1 * n2)
    gamma_std = [None] * (n1 * n2)
    trajectories = [None] * (n1 * n2)
    for cell in range(n1 * n2):
        per_sample = curves.get(cell)
        if not per_sample:
            continue
        stack = np.full((samples, len(cell_times[cell])), np.nan)
        for s, gammas in per_sample.items():
            stack[s] = gammas
        trajectories[cell] = stack
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            gamma_mean[cell] = np.nanmean(stack, axis=0)
            gamma_std[cell] = np.nanstd(stack, axis=0)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        final_matrix = np.nanmean(finals, axis=2)

    result = SweepResult(
        spec=spec,
        times=cell_times,
        gamma_mean=gamma_mean,
        gamma_std=gamma_std,
        trajectories=trajectories,
        finals=finals,
        final_matrix=final_matrix,
        unit_errors=unit_errors,
        drift_norms=drift_norms,
        displacements=displacements,
        interface=_interface_values(spec),
        failures=failures,
        wall_time=time.perf_counter() - t0,
    )
    if out_dir is not None:
        write_sweep_csvs(result, out_dir)
    return result


def _header_lines(spec, extra=()):
    lines = [
        "# gamma is the instantaneous alignment order parameter at each",
        "# recorded time; the last row of a (cell_id, sample) block is the",
        "# final-time value aggregated in heatmap.csv.",
        f"# axis1 = {spec.axis1[0]}: {list(spec.axis1[1])}",
    ]
    if spec.axis2 is not None:
        lines.append(f"# axis2 = {spec.axis2[0]}: {list(spec.axis2[1])}")
        lines.append("# cell_id = axis1_index * len(axis2) + axis2_index")
    else:
        lines.append("# cell_id = axis1_index")
    lines.append(
        f"# samples_per_cell = {spec.samples_per_cell}, base_seed = {spec.base_seed}"
    )
    lines.extend(extra)
    return lines


def write_sweep_csvs(result, out_dir, extra_header=()):
    """Emit ``trajectories.csv``, ``heatmap.csv`` and (if defined)
    ``interface.csv`` under ``out_dir``, creating it if needed."""
    os.makedirs(out_dir, exist_ok=True)
    spec = result.spec
    n1, n2 = spec.grid_shape
    header = _header_lines(spec, extra_header)

    with open(os.path.join(out_dir, "trajectories.csv"), "w", newline="\n") as f:
        for line in header:
            f.write(line + "\n")
        f.write("cell_id,sample,time,gamma\n")
        for cell in range(n1 * n2):
            stack = result.trajectories[cell]
            if stack is None:
                continue
            times = result.times[cell]
            for s in range(spec.samples_per_cell):
                if np.all(np.isnan(stack[s])):
                    continue
                for t, g in zip(times, stack[s]):
                    f.write(f"{cell},{s},{_format(t)},{_format(g)}\n")

    with open(os.path.join(out_dir, "heatmap.csv"), "w", newline="\n") as f:
        for line in header:
            f.write(line + "\n")
        f.write("# gamma_mean/gamma_std aggregate the stored per-sample finals\n")
        f.write("axis1_value,axis2_value,gamma_mean,gamma_std\n")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            std_matrix = np.nanstd(result.finals, axis=2)
        for i in range(n1):
            for j in range(n2):
                axis2 = "" if spec.axis2 is None else _format(spec.axis2[1][j])
                mean = result.final_matrix[i, j]
                std = std_matrix[i, j]
                f.write(
                    f"{_format(spec.axis1[1][i])},{axis2},"
                    f"{_format(mean)},{_format(std)}\n"
                )

    if result.interface is not None:
        with open(os.path.join(out_dir, "interface.csv"), "w", newline="\n") as f:
            f.write(
                "# axis2 coordinate where D_u/lambda crosses D_x/mu,"
                " per axis1 value\n"
            )
            f.write("axis1_value,axis2_interface\n")
            for v1, v2 in zip(spec.axis1[1], result.interface):
                f.write(f"{_format(v1)},{_format(v2)}\n")


def run_potential_scan(xi_list, spec, out_dir=None, threads=1, deterministic=False):
    """Sweep the potential exponent, rescaling the coupling alongside it.

    The exponent list always includes ``{0, 1/2, 1}`` (the weighted,
    plainly normalized, and shape-normalized family members) in addition
    to anything in ``xi_list``.  Each cell runs with coupling
    ``lam * (1 - chi^2)**(-2 xi)`` so that the alignment torque retains
    comparable strength as the exponent soaks up shape anisotropy; the
    step size re-resolves per cell unless the base settings pin ``dt``.

    ``spec.axis1`` is ignored (the exponent is the axis); every other
    ``SweepSpec`` field carries over.
    """
    values = sorted({float(x) for x in tuple(xi_list) + (0.0, 0.5, 1.0)})
    for x in values:
        if not 0.0 <= x <= 1.0:
            raise ConfigError(f"potential exponent {x} outside [0, 1]")
    scan_spec = dataclasses.replace(
        spec, axis1=("xi", tuple(values)), axis2=None
    )
    base_lam = scan_spec.settings.lam
    chi = scan_spec.settings.anisotropy()

    def rescale(settings, axis_values):
        xi = axis_values["xi"]
        return dataclasses.replace(
            settings, lam=base_lam * (1.0 - chi**2) ** (-2.0 * xi)
        )

    lam_note = [
        f"# lambda rescaled per cell: lam(xi) = {base_lam:g}"
        f" * (1 - {chi:g}^2)**(-2 xi)"
    ]
    result = run_sweep(
        scan_spec,
        out_dir=None,
        threads=threads,
        deterministic=deterministic,
        transform=rescale,
    )
    if out_dir is not None:
        write_sweep_csvs(result, out_dir, extra_header=lam_note)
    return result
