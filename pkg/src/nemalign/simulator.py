"""Time integration of the interacting particle system on a periodic box.

Positions follow an overdamped gradient descent of the pair potential with
translational noise; directions follow the corresponding descent on the unit
sphere with tangent-projected noise and post-step renormalization (the
standard realization of the Stratonovich sphere constraint for additive
noise).  The integrator is fixed-step Euler--Maruyama; a step whose direction
update cannot be renormalized raises :class:`~nemalign.errors.StepRejected`
and is retried by :func:`run` with a locally halved step size.

Pair sums are evaluated with a cell list when the box holds at least a 3x3
(3x3x3) grid of cells of edge >= the cutoff radius, and by direct summation
otherwise.  Two reduction modes exist:

* ``"deterministic"`` (default): per-particle gathers in a fixed order;
  trajectories are bitwise-reproducible for a given seed, independent of the
  number of worker threads.
* ``"fast"``: half-stencil sweep that visits each pair once and scatters to
  both members; the pair antisymmetry of position kicks is then exact in
  floating point, but summation order differs from the gather mode so the
  two modes are not bitwise-comparable.

All randomness derives from counter-based Philox streams keyed by the
configuration seed, with the counter encoding (stream, step); the initial
state, the per-step dynamics noise, and each rejection retry draw from
distinct streams.
"""
import csv
import hashlib
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import ConfigError, NemalignError, NearZeroVector, StepRejected
from .geometry import PeriodicBox, minimum_image, project_tangent, renormalize, wrap_position
from .observables import OrderSample, mean_nematic_direction, order_parameter, q_tensor
from .potentials import PairGeometry, PotentialSpec, grad_direction, grad_position

#: Philox stream indices (third counter word).
INIT_STREAM = 0
DYNAMICS_STREAM = 1
RETRY_STREAM_BASE = 2

#: Number of local step-size halvings attempted after a rejected step.
MAX_STEP_RETRIES = 8


def _stream_generator(seed, stream, step):
    """Fresh Generator for one (stream, step) cell of the counter space."""
    bitgen = np.random.Philox(key=np.uint64(seed), counter=[0, 0, stream, step])
    return np.random.Generator(bitgen)


# -- force-scale probe ------------------------------------------------------

@lru_cache(maxsize=32)
def _force_scales(xi, ell, d, n):
    """Probe the pair interaction for characteristic gradient magnitudes.

    Returns ``(pos_scale, rot_scale, lipschitz)``: the largest position
    gradient, the largest tangent-projected direction gradient, and a radial
    Lipschitz estimate of the position gradient, over a deterministic sample
    of near-contact geometries.  Used by the stability guard and the default
    step-size formula.
    """
    from .potentials import ParticleShape, _batch_grads

    spec = PotentialSpec(xi=xi, shape=ParticleShape(ell=ell, d=d))
    scale = max(ell, d)
    rng = np.random.default_rng(1618033988)
    m, k = 96, 48
    z = rng.normal(size=(m, n))
    u1 = z / np.linalg.norm(z, axis=1, keepdims=True)
    z = rng.normal(size=(m, n))
    u2 = z / np.linalg.norm(z, axis=1, keepdims=True)
    # Include aligned and orthogonal pairs, which extremize the prefactor.
    u2[0] = u1[0]
    u2[1] = -u1[1]
    if n == 2:
        u2[2] = np.array([-u1[2, 1], u1[2, 0]])
    z = rng.normal(size=(m, n))
    rdir = z / np.linalg.norm(z, axis=1, keepdims=True)
    rdir[3] = u1[3]
    radii = np.linspace(0.05, 4.0, k) * scale
    R = rdir[:, None, :] * radii[None, :, None]
    U1 = np.broadcast_to(u1[:, None, :], R.shape)
    U2 = np.broadcast_to(u2[:, None, :], R.shape)
    _, gx, gu1, _ = _batch_grads(spec, U1, U2, R)
    gt = project_tangent(U1, gu1)
    pos_scale = float(np.linalg.norm(gx, axis=-1).max())
    rot_scale = float(np.linalg.norm(gt, axis=-1).max())
    dr = radii[1] - radii[0]
    lipschitz = float((np.linalg.norm(np.diff(gx, axis=1), axis=-1) / dr).max())
    return pos_scale, rot_scale, lipschitz


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Immutable description of one simulation.

    Parameters
    ----------
    n : int
        Spatial dimension, 2 or 3.
    N : int
        Particle count.
    box : PeriodicBox
    spec : PotentialSpec
    mu, lam : float
        Translational and rotational mobility coefficients (>= 0).
    D_x, D_u : float
        Translational and rotational diffusion coefficients (>= 0).
    dt : float or None
        Step size; ``None`` selects :meth:`default_dt`.
    t_end : float
        Final time.
    seed : int
        64-bit RNG seed.
    record_every : int
        Steps between observable samples.
    rotation_kick_limit, position_kick_limit : float
        Stability-guard bounds: the estimated per-neighbor direction kick
        ``dt * (lam/N) * rot_scale`` must stay below ``rotation_kick_limit``
        (radians) and the position kick ``dt * (mu/N) * pos_scale`` below
        ``position_kick_limit * max(ell, d)``.  Construction raises
        :class:`~nemalign.errors.ConfigError` when violated.
    """

    n: int
    N: int
    box: PeriodicBox
    spec: PotentialSpec
    mu: float
    lam: float
    D_x: float
    D_u: float
    dt: float = None
    t_end: float = 0.0
    seed: int = 0
    record_every: int = 100
    rotation_kick_limit: float = 0.2
    position_kick_limit: float = 0.5

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ConfigError("dimension must be 2 or 3")
        if self.box.n != self.n:
            raise ConfigError(f"box is {self.box.n}-dimensional, config says n={self.n}")
        if self.N < 0:
            raise ConfigError("particle count must be >= 0")
        if self.mu < 0 or self.lam < 0:
            raise ConfigError("mobilities must be >= 0")
        if self.D_x < 0 or self.D_u < 0:
            raise ConfigError("diffusion coefficients must be >= 0")
        if self.t_end < 0:
            raise ConfigError("t_end must be >= 0")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.dt is None:
            object.__setattr__(self, "dt", self.default_dt())
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        self._check_stability()

    def default_dt(self):
        """Conservative default step size.

        ``0.05 * min(1/lam, 1/mu')`` with ``mu' = mu * (radial Lipschitz
        estimate of the pair force at contact)``.  Note the estimate ignores
        the mean-field ``1/N`` factor on the drift, so for large systems this
        default is far smaller than necessary; production configurations
        override ``dt`` explicitly.
        """
        shape = self.spec.shape
        _, _, lipschitz = _force_scales(self.spec.xi, shape.ell, shape.d, self.n)
        rates = []
        if self.lam > 0:
            rates.append(self.lam)
        if self.mu * lipschitz > 0:
            rates.append(self.mu * lipschitz)
        if not rates:
            return 0.05
        return 0.05 / max(rates)

    def _check_stability(self):
        if self.N == 0 or (self.mu == 0 and self.lam == 0):
            return
        shape = self.spec.shape
        pos_scale, rot_scale, _ = _force_scales(self.spec.xi, shape.ell, shape.d, self.n)
        scale = max(shape.ell, shape.d)
        rot_kick = self.dt * (self.lam / max(self.N, 1)) * rot_scale
        pos_kick = self.dt * (self.mu / max(self.N, 1)) * pos_scale
        if rot_kick > self.rotation_kick_limit:
            raise ConfigError(
                f"unstable step size: per-neighbor direction kick {rot_kick:.3g} rad "
                f"exceeds the guard {self.rotation_kick_limit:g}"
            )
        if pos_kick > self.position_kick_limit * scale:
            raise ConfigError(
                f"unstable step size: per-neighbor position kick {pos_kick:.3g} "
                f"exceeds {self.position_kick_limit:g} x max(ell, d) = "
                f"{self.position_kick_limit * scale:.3g}"
            )

    def digest(self):
        """Short stable hash of the physical fields, for snapshot headers."""
        shape = self.spec.shape
        payload = (
            f"n={self.n} N={self.N} box={self.box.lengths.tolist()} "
            f"xi={self.spec.xi!r} ell={shape.ell!r} d={shape.d!r} "
            f"cutoff={self.spec.cutoff_multiplier!r} mu={self.mu!r} lam={self.lam!r} "
            f"D_x={self.D_x!r} D_u={self.D_u!r} dt={self.dt!r} t_end={self.t_end!r} "
            f"seed={self.seed} record_every={self.record_every}"
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


# -- state ------------------------------------------------------------------

@dataclass
class ParticleSystem:
    """Mutable simulation state.

    ``positions`` are wrapped into the box; ``unwrapped_positions`` receive
    the same increments without wrapping so net transport can be measured.
    ``net_drift`` accumulates ``sum_i drift_x_i * dt`` over all steps taken
    and ``max_unit_norm_error`` tracks the worst ``| |u_i| - 1 |`` observed
    after any step; both exist to make conservation checks cheap.
    """

    positions: np.ndarray
    unwrapped_positions: np.ndarray
    directions: np.ndarray
    time: float = 0.0
    step_index: int = 0
    net_drift: np.ndarray = None
    max_unit_norm_error: float = 0.0

    def __post_init__(self):
        if self.net_drift is None:
            self.net_drift = np.zeros(self.positions.shape[1])

    @property
    def N(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class CellList:
    """Spatial hash of particle indices into a grid of cells.

    The grid has ``ncells[k] = floor(L_k / r_c)`` cells per axis (at least
    one), so every cell edge is at least the cutoff radius.  ``order`` lists
    particle indices grouped by cell, ascending within each cell; the slice
    for cell ``c`` is ``order[start[c] : start[c] + count[c]]``.  The
    neighbor stencils in the compiled kernels are only valid when every axis
    has at least three cells (``usable``); smaller grids fall back to direct
    summation.
    """

    ncells: tuple
    cell_of: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @property
    def usable(self):
        return min(self.ncells) >= 3

    @staticmethod
    def grid_shape(box, cutoff):
        return tuple(max(1, int(L / cutoff)) for L in box.lengths)

    @classmethod
    def build(cls, positions, box, cutoff):
        """Sort ``positions`` (wrapped) into cells of edge >= ``cutoff``."""
        n_part = positions.shape[0]
        ncells = cls.grid_shape(box, cutoff)
        total = int(np.prod(ncells))
        cell_of = np.empty(n_part, np.int64)
        count = np.empty(total, np.int64)
        start = np.empty(total, np.int64)
        order = np.empty(n_part, np.int64)
        L = box.lengths
        if box.n == 2:
            _kernels.build_cells_2d(positions, L[0], L[1], ncells[0], ncells[1],
                                    cell_of, count, start, order)
        else:
            _kernels.build_cells_3d(positions, L[0], L[1], L[2],
                                    ncells[0], ncells[1], ncells[2],
                                    cell_of, count, start, order)
        return cls(ncells, cell_of, start, count, order)


def init_uniform(config):
    """Draw the initial state: uniform positions, uniform directions.

    Positions are i.i.d. uniform over the box; directions are normalized
    standard Gaussian vectors, hence uniform on the sphere.  The draw is a
    pure function of ``config.seed``.
    """
    gen = _stream_generator(config.seed, INIT_STREAM, 0)
    pos = gen.random((config.N, config.n)) * config.box.lengths
    z = gen.normal(size=(config.N, config.n))
    u = renormalize(z) if config.N else z
    return ParticleSystem(
        positions=pos,
        unwrapped_positions=pos.copy(),
        directions=u,
        time=0.0,
    )


# -- pair sums --------------------------------------------------------------

def _kernel_params(config):
    shape = config.spec.shape
    a = shape.ell**2 - shape.d**2
    twod2 = 2.0 * shape.d**2
    chi2 = shape.chi**2
    pref = (4.0 * np.pi) ** (-config.n / 2)
    q = 0.5 - config.spec.xi
    rc = config.spec.cutoff_radius
    rc2 = rc * rc if np.isfinite(rc) else np.inf
    return a, twod2, chi2, pref, q, rc2


def _slice_bounds(n_part, threads):
    threads = max(1, min(threads, n_part)) if n_part else 1
    edges = np.linspace(0, n_part, threads + 1).astype(np.int64)
    return [(int(edges[k]), int(edges[k + 1])) for k in range(threads)]


def _run_sliced(fn, args_front, n_part, threads, gx, gu):
    bounds = _slice_bounds(n_part, threads)
    if len(bounds) == 1:
        fn(*args_front, 0, n_part, gx, gu)
        return
    workers = [
        threading.Thread(target=fn, args=(*args_front, lo, hi, gx, gu))
        for lo, hi in bounds
    ]
    for w in workers:
        w.start()
    for w in workers:
        w.join()


def pair_gradient_sums(system, config, method="deterministic", threads=1):
    """Raw gradient sums ``(sum_j grad_x V, sum_j grad_u V)`` per particle.

    No mobility factors, signs, or tangent projection applied; see
    :func:`compute_drifts`.
    """
    n_part = system.N
    gx = np.zeros((n_part, config.n))
    gu = np.zeros((n_part, config.n))
    if n_part < 2:
        return gx, gu
    a, twod2, chi2, pref, q, rc2 = _kernel_params(config)
    pos = np.ascontiguousarray(system.positions)
    u = np.ascontiguousarray(system.directions)
    L = config.box.lengths
    cells = CellList.build(pos, config.box, config.spec.cutoff_radius) \
        if np.isfinite(rc2) else None
    if cells is not None and cells.usable:
        if method == "fast":
            if config.n == 2:
                _kernels.pair_sums_2d(pos, u, L[0], L[1], *cells.ncells,
                                      cells.start, cells.count, cells.order,
                                      a, twod2, chi2, pref, q, rc2, gx, gu)
            else:
                _kernels.pair_sums_3d(pos, u, L[0], L[1], L[2], *cells.ncells,
                                      cells.start, cells.count, cells.order,
                                      a, twod2, chi2, pref, q, rc2, gx, gu)
        else:
            if config.n == 2:
                front = (pos, u, L[0], L[1], *cells.ncells, cells.cell_of,
                         cells.start, cells.count, cells.order,
                         a, twod2, chi2, pref, q, rc2)
                _run_sliced(_kernels.gather_sums_2d, front, n_part, threads, gx, gu)
            else:
                front = (pos, u, L[0], L[1], L[2], *cells.ncells, cells.cell_of,
                         cells.start, cells.count, cells.order,
                         a, twod2, chi2, pref, q, rc2)
                _run_sliced(_kernels.gather_sums_3d, front, n_part, threads, gx, gu)
    else:
        if config.n == 2:
            front = (pos, u, L[0], L[1], a, twod2, chi2, pref, q, rc2)
            _run_sliced(_kernels.brute_sums_2d, front, n_part, threads, gx, gu)
        else:
            front = (pos, u, L[0], L[1], L[2], a, twod2, chi2, pref, q, rc2)
            _run_sliced(_kernels.brute_sums_3d, front, n_part, threads, gx, gu)
    if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gu))):
        _raise_pair_error(system, config)
        raise NemalignError("pair sums are not finite but no offending pair was found")
    return gx, gu


def _raise_pair_error(system, config):
    """Re-scan all pairs with the scalar potential operations to attribute a
    non-finite pair sum to a specific pair, and re-raise with that context."""
    pos = system.positions
    u = system.directions
    for i in range(system.N):
        for j in range(i + 1, system.N):
            R = minimum_image(config.box, pos[i], pos[j])
            try:
                pair = PairGeometry(u1=u[i], u2=u[j], R=R)
                gx = grad_position(config.spec, pair)
                gu = grad_direction(config.spec, pair)
            except NemalignError as exc:
                raise type(exc)(f"pair ({i}, {j}): {exc}") from exc
            if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gu))):
                raise NemalignError(f"pair ({i}, {j}): non-finite gradient")


def compute_drifts(system, config, method="deterministic", threads=1):
    """Drift fields of the coupled system.

    Returns
    -------
    (ndarray, ndarray)
        ``drift_x[i] = -(mu/N) sum_j grad_{x_i} V`` and
        ``drift_u[i] = -(lam/N) P_tangent(u_i) sum_j grad_{u_i} V``, the sums
        running over neighbors within the cutoff radius (minimum image).

    Raises
    ------
    NemalignError
        Propagates potential evaluation errors, identifying the offending
        pair by index.
    """
    gx, gu = pair_gradient_sums(system, config, method=method, threads=threads)
    n_part = max(system.N, 1)
    drift_x = (-config.mu / n_part) * gx
    drift_u = (-config.lam / n_part) * project_tangent(system.directions, gu) \
        if system.N else gu
    return drift_x, drift_u


# -- stepping ---------------------------------------------------------------

def step(system, config, dt=None, noise_stream=DYNAMICS_STREAM,
         method="deterministic", threads=1):
    """Advance the system by one Euler--Maruyama step of size ``dt``.

    The state is mutated in place (and returned).  Noise is drawn from the
    Philox stream ``(config.seed, noise_stream, system.step_index)``, so a
    retry of the same step with a different stream redraws independent
    noise.  A step that leaves any direction with a vanishing or non-finite
    norm raises :class:`~nemalign.errors.StepRejected` and leaves the state
    untouched.

    When a sub-update is exactly trivial — zero noise amplitude and an
    identically zero drift — it is skipped, leaving those coordinates
    bitwise unchanged (renormalization of an already-unit vector would
    otherwise perturb the last bit).
    """
    if dt is None:
        dt = config.dt
    drift_x, drift_u = compute_drifts(system, config, method=method, threads=threads)
    amp_x = np.sqrt(2.0 * config.D_x * dt)
    amp_u = np.sqrt(2.0 * config.D_u * dt)
    needs_noise = (amp_x > 0.0) or (amp_u > 0.0)
    noise = (
        _stream_generator(config.seed, noise_stream, system.step_index)
        .normal(size=(2, system.N, config.n))
        if needs_noise else None
    )
    move_u = amp_u > 0.0 or drift_u.any()
    if move_u:
        u_new = system.directions + dt * drift_u
        if amp_u > 0.0:
            u_new += amp_u * project_tangent(system.directions, noise[1])
        try:
            u_new = renormalize(u_new)
        except NearZeroVector as exc:
            raise StepRejected(
                f"direction update failed at step {system.step_index} "
                f"(dt={dt:g}): {exc}"
            ) from exc
    move_x = amp_x > 0.0 or drift_x.any()
    if move_x:
        inc = dt * drift_x
        if amp_x > 0.0:
            inc = inc + amp_x * noise[0]
        system.unwrapped_positions += inc
        system.positions = wrap_position(config.box, system.positions + inc)
    if move_u:
        system.directions = u_new
    system.net_drift += dt * drift_x.sum(axis=0)
    if system.N:
        norms = np.linalg.norm(system.directions, axis=1)
        err = float(np.abs(norms - 1.0).max())
        if err > system.max_unit_norm_error:
            system.max_unit_norm_error = err
    system.time += dt
    system.step_index += 1
    return system


def _record(system, samples, callbacks):
    if system.N:
        q = q_tensor(system.directions)
        gamma = order_parameter(q)
        omega = mean_nematic_direction(q)
    else:
        gamma, omega = float("nan"), None
    samples.append(OrderSample(time=system.time, gamma=gamma, omega=omega))
    for cb in callbacks:
        cb(system)


@dataclass
class ObservableSeries:
    """Recorded output of :func:`run`.

    ``samples`` holds one :class:`~nemalign.observables.OrderSample` per
    record point (the initial state always included); ``system`` is the
    final state and ``initial_unwrapped`` a copy of the starting positions
    for displacement diagnostics.
    """

    samples: list
    system: ParticleSystem
    initial_unwrapped: np.ndarray
    config: SimConfig = None

    @property
    def times(self):
        return np.array([s.time for s in self.samples])

    @property
    def gammas(self):
        return np.array([s.gamma for s in self.samples])

    def mean_displacement(self):
        """Mean particle displacement between the first and last state."""
        if self.system.N == 0:
            return 0.0
        d = self.system.unwrapped_positions - self.initial_unwrapped
        return float(np.linalg.norm(d, axis=1).mean())


def run(config, callbacks=(), method="deterministic", threads=1):
    """Integrate from the uniform initial state to ``t_end``.

    Observables (and any ``callbacks``, called with the current system) are
    recorded at the initial state, every ``config.record_every`` steps, and
    at the final step.  A rejected step is retried with halved step sizes
    and fresh noise up to :data:`MAX_STEP_RETRIES` times before giving up;
    each successful retry advances time by the reduced amount.

    Returns
    -------
    ObservableSeries
    """
    system = init_uniform(config)
    samples = []
    initial = system.unwrapped_positions.copy()
    _record(system, samples, callbacks)
    nsteps = int(round(config.t_end / config.dt))
    for s in range(nsteps):
        try:
            step(system, config, method=method, threads=threads)
        except StepRejected as exc:
            last = exc
            for attempt in range(MAX_STEP_RETRIES):
                try:
                    step(system, config, dt=config.dt / 2 ** (attempt + 1),
                         noise_stream=RETRY_STREAM_BASE + attempt,
                         method=method, threads=threads)
                    break
                except StepRejected as retry_exc:
                    last = retry_exc
            else:
                raise StepRejected(
                    f"aborting at t={system.time:g}: step rejected "
                    f"{MAX_STEP_RETRIES + 1} times with dt down to "
                    f"{config.dt / 2 ** MAX_STEP_RETRIES:g}; last failure: {last}"
                ) from last
        if (s + 1) % config.record_every == 0 or s + 1 == nsteps:
            _record(system, samples, callbacks)
    return ObservableSeries(samples=samples, system=system,
                            initial_unwrapped=initial, config=config)


# -- snapshot export --------------------------------------------------------

def export_snapshot(system, config, path):
    """Write one CSV row per particle: id, position, direction.

    The first line is a comment naming the configuration hash, the snapshot
    time, and the seed.
    """
    axes = "xyz"[: config.n]
    with open(path, "w", newline="") as fh:
        fh.write(f"# config={config.digest()} time={system.time:.17g} "
                 f"seed={config.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["id"] + list(axes) + [f"u{c}" for c in axes])
        for i in range(system.N):
            writer.writerow(
                [i]
                + [f"{v:.17g}" for v in system.positions[i]]
                + [f"{v:.17g}" for v in system.directions[i]]
            )


def warm_up(n=2):
    """Compile the kernels for dimension ``n`` on a tiny throwaway system."""
    from .potentials import ParticleShape

    box = PeriodicBox(np.full(n, 40.0))
    spec = PotentialSpec(xi=0.0, shape=ParticleShape(ell=2.0, d=1.0))
    config = SimConfig(n=n, N=8, box=box, spec=spec, mu=1.0, lam=1.0,
                       D_x=0.1, D_u=0.1, dt=1e-3, t_end=0.0, seed=0)
    system = init_uniform(config)
    for method in ("deterministic", "fast"):
        pair_gradient_sums(system, config, method=method)
    small = SimConfig(n=n, N=8, box=PeriodicBox(np.full(n, 4.0)), spec=spec,
                      mu=1.0, lam=1.0, D_x=0.1, D_u=0.1, dt=1e-3, t_end=0.0, seed=0)
    pair_gradient_sums(init_uniform(small), small)
