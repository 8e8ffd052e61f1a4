"""Orientation equilibria and the density-to-concentration response curve.

The mean-field dynamics close around a family of axially symmetric
distributions on the unit sphere whose concentration parameter measures how
sharply directions cluster about a common axis.  This module evaluates that
family and the scalar functions derived from it: the normalized angular
density, its nematic order parameter, the self-consistent map from particle
density to concentration, and the nonlinear diffusion coefficient of the
continuum density equation.

All exponentials are evaluated in a shifted form ``exp(eta * (cos^2 - 1))``
so that nothing overflows even at concentrations of a few thousand.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import Akima1DInterpolator
from scipy.optimize import brentq, minimize_scalar

from ..errors import InsufficientNodes, OutOfDomain, QuadratureFailure

#: Absolute tolerance requested from the adaptive quadrature backend.
QUAD_ABSTOL = 1e-10

#: Subinterval budget for one adaptive integration.
QUAD_LIMIT = 512

#: Order-parameter level that marks the top of the default concentration grid.
SATURATION_LEVEL = 0.999


def adaptive_quad(func, a, b, abstol=QUAD_ABSTOL):
    """Integrate ``func`` over ``[a, b]`` with adaptive Gauss--Kronrod rules.

    Thin wrapper around the QUADPACK backend that turns a non-converged
    integration into a :class:`QuadratureFailure` instead of a warning.

    Parameters
    ----------
    func:
        Scalar integrand.
    a, b:
        Integration limits.
    abstol:
        Absolute tolerance; the relative tolerance is pinned to zero.
    """
    out = quad(func, a, b, epsabs=abstol, epsrel=0.0, limit=QUAD_LIMIT, full_output=True)
    value, abserr = out[0], out[1]
    if len(out) > 3 or not np.isfinite(value):
        raise QuadratureFailure(
            f"integral over [{a}, {b}] did not reach abstol={abstol}: "
            f"estimate {value}, error estimate {abserr} ({out[3] if len(out) > 3 else 'non-finite'})"
        )
    return float(value)


def _polar_quad(func, abstol=QUAD_ABSTOL):
    """Integrate ``func`` over the polar interval ``[0, pi]``.

    The interval is split at ``pi/2`` so each half carries at most one of
    the two endpoint peaks that appear at large concentration.
    """
    mid = 0.5 * np.pi
    return adaptive_quad(func, 0.0, mid, abstol=0.5 * abstol) + adaptive_quad(
        func, mid, np.pi, abstol=0.5 * abstol
    )


@dataclass(frozen=True)
class MacroParams:
    """Parameter bundle for the continuum coefficient functions.

    Parameters
    ----------
    n:
        Spatial dimension, 2 or 3.
    chi:
        Shape anisotropy in ``[0, 1)``; zero means spherical particles.
    mu:
        Positional mobility (drift scale of the position dynamics).
    lam:
        Rotational mobility (drift scale of the direction dynamics).
    D_x, D_u:
        Translational and rotational diffusion constants.
    """

    n: int
    chi: float
    mu: float
    lam: float
    D_x: float
    D_u: float

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if not 0.0 <= self.chi < 1.0:
            raise ValueError(f"anisotropy must lie in [0, 1), got {self.chi}")
        if self.mu <= 0.0 or self.lam <= 0.0:
            raise ValueError("mobilities mu and lam must be positive")
        if self.D_x < 0.0 or self.D_u < 0.0:
            raise ValueError("diffusion constants must be nonnegative")

    @property
    def alpha(self):
        """Coupling ratio ``chi^2 * lam / D_u`` that feeds the aligned branch."""
        if self.chi == 0.0:
            return 0.0
        if self.D_u <= 0.0:
            raise ValueError("alpha requires D_u > 0 when particles are anisotropic")
        return self.chi**2 * self.lam / self.D_u

    @property
    def sigma(self):
        """Rotational diffusion-to-mobility ratio ``D_u / lam``."""
        return self.D_u / self.lam

    @property
    def nu(self):
        """Translational diffusion-to-mobility ratio ``D_x / mu``."""
        return self.D_x / self.mu


def _validated(eta, n):
    eta = float(eta)
    n = int(n)
    if not eta >= 0.0:
        raise ValueError(f"concentration must be nonnegative, got {eta}")
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    return eta, n


@functools.lru_cache(maxsize=None)
def _shifted_partition(eta, n):
    """Normalization of ``exp(eta*(cos^2-1))`` against the ``sin^(n-2)`` weight."""
    return _polar_quad(lambda t: np.exp(eta * (np.cos(t) ** 2 - 1.0)) * np.sin(t) ** (n - 2))


def gibbs_density(eta, theta, n):
    """Equilibrium angular density at polar angle ``theta``.

    Normalized so that ``integral of g * sin^(n-2) over [0, pi]`` equals one,
    which makes angular averages against it true expectations on the sphere.

    Parameters
    ----------
    eta:
        Concentration parameter, ``eta >= 0``.
    theta:
        Polar angle (scalar or array), measured from the distinguished axis.
    n:
        Spatial dimension, 2 or 3.
    """
    eta, n = _validated(eta, n)
    zs = _shifted_partition(eta, n)
    theta = np.asarray(theta, dtype=float)
    out = np.exp(eta * (np.cos(theta) ** 2 - 1.0)) / zs
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=None)
def compute_S2(eta, n):
    """Nematic order parameter of the equilibrium angular density.

    Ranges from 0 (uniform directions) toward 1 (perfect alignment) as the
    concentration grows.

    Raises
    ------
    QuadratureFailure
        If the integral cannot be resolved to the absolute tolerance.
    """
    eta, n = _validated(eta, n)
    zs = _shifted_partition(eta, n)

    def integrand(t):
        c = np.cos(t)
        return (c * c - 1.0 / n) * np.exp(eta * (c * c - 1.0)) / zs * np.sin(t) ** (n - 2)

    return (n / (n - 1.0)) * _polar_quad(integrand)


@functools.lru_cache(maxsize=None)
def _saturation_concentration(n):
    """Concentration at which the order parameter crosses ``SATURATION_LEVEL``."""
    lo, hi = 1.0, 64.0
    while compute_S2(hi, n) <= SATURATION_LEVEL:
        hi *= 2.0
    root = brentq(lambda e: compute_S2(e, n) - SATURATION_LEVEL, lo, hi, xtol=1e-2)
    while compute_S2(root, n) <= SATURATION_LEVEL:
        root *= 1.01
    return float(root)


@dataclass(frozen=True)
class EtaInterpolant:
    """Monotone map from particle density to equilibrium concentration.

    Built by :func:`build_eta_interpolant`.  Immutable after construction and
    safe to share between threads.  Evaluation outside ``[rho_min, rho_max]``
    raises :class:`OutOfDomain`.
    """

    rho_nodes: np.ndarray
    eta_nodes: np.ndarray
    coefficients: np.ndarray
    rho_min: float
    rho_max: float
    rho_star: float
    _spline: Akima1DInterpolator = field(repr=False)
    _slope: object = field(repr=False)

    def _clamped(self, rho):
        arr = np.asarray(rho, dtype=float)
        lo = self.rho_min - 1e-12 * max(1.0, abs(self.rho_min))
        hi = self.rho_max + 1e-12 * max(1.0, abs(self.rho_max))
        if not np.all(np.isfinite(arr)) or np.any(arr < lo) or np.any(arr > hi):
            raise OutOfDomain(
                f"density {rho} outside the tabulated range "
                f"[{self.rho_min:.8g}, {self.rho_max:.8g}]"
            )
        return np.clip(arr, self.rho_min, self.rho_max)

    def eta(self, rho):
        """Concentration at density ``rho`` (scalar or array)."""
        out = self._spline(self._clamped(rho))
        return float(out) if out.ndim == 0 else out

    def eta_prime(self, rho):
        """Derivative of the concentration with respect to density."""
        out = self._slope(self._clamped(rho))
        return float(out) if out.ndim == 0 else out


def build_eta_interpolant(params, m=256, C=None):
    """Tabulate the density-to-concentration map on its increasing branch.

    A linear concentration grid of ``m`` nodes up to ``C * (1 - chi^2)`` is
    paired with the density that makes each concentration self-consistent,
    ``rho_j = eta_j / (alpha * S2(eta_j))``.  Where that pairing runs
    backwards (low densities admit two consistent concentrations) the
    non-monotone nodes are pruned, which keeps the branch with the larger
    concentration.  The retained grid is then extended down to the branch
    minimum itself: the density minimizer is located between the last two
    coarse nodes and the bottom-most grid cells are replaced by nodes
    clustered quadratically toward it, which resolves the square-root
    growth of the concentration just above the minimum.  The smallest
    retained density is reported as ``rho_star``.

    Parameters
    ----------
    params:
        :class:`MacroParams` with ``chi > 0`` and ``D_u > 0``.
    m:
        Number of grid nodes, at least 16.
    C:
        Grid scale; by default chosen so the top node's order parameter
        exceeds ``SATURATION_LEVEL``.

    Raises
    ------
    InsufficientNodes
        If fewer than 8 nodes survive pruning.
    """
    if m < 16:
        raise ValueError(f"need at least 16 grid nodes, got {m}")
    alpha = params.alpha
    if alpha <= 0.0:
        raise ValueError("the aligned branch needs chi > 0 and D_u > 0")
    if C is None:
        C = _saturation_concentration(params.n) / (1.0 - params.chi**2)
    elif C <= 0.0:
        raise ValueError(f"grid scale C must be positive, got {C}")
    etas = C * (1.0 - params.chi**2) * np.arange(1, m + 1) / m
    order = np.array([compute_S2(e, params.n) for e in etas])
    rhos = etas / (alpha * order)
    i = m - 1
    while i > 0 and rhos[i - 1] < rhos[i]:
        i -= 1
    kept_rho = rhos[i:].copy()
    kept_eta = etas[i:].copy()
    if kept_rho.size < 8:
        raise InsufficientNodes(
            f"only {kept_rho.size} of {m} nodes lie on the increasing branch"
        )

    # Resolve the fold: the density minimum lies within one grid cell of the
    # first kept node (or below it when the whole grid is increasing).
    delta = etas[1] - etas[0]
    bracket = (max(kept_eta[0] - delta, 1e-4 * delta), kept_eta[0] + delta)
    found = minimize_scalar(
        lambda e: e / (alpha * compute_S2(float(e), params.n)),
        bounds=bracket,
        method="bounded",
        options={"xatol": 1e-8 * delta},
    )
    eta_fold = float(found.x)
    refine = max(8, min(32, m // 8))
    anchor = 2
    t = (np.arange(1, refine + 1) / refine) ** 2
    ref_eta = eta_fold + (kept_eta[anchor] - eta_fold) * t
    ref_rho = np.array(
        [e / (alpha * compute_S2(float(e), params.n)) for e in ref_eta]
    )
    kept_eta = np.concatenate([ref_eta, kept_eta[anchor + 1 :]])
    kept_rho = np.concatenate([ref_rho, kept_rho[anchor + 1 :]])
    monotone = np.ones(kept_rho.size, dtype=bool)
    high = kept_rho[0]
    for j in range(1, kept_rho.size):
        if kept_rho[j] > high:
            high = kept_rho[j]
        else:
            monotone[j] = False
    kept_rho = kept_rho[monotone]
    kept_eta = kept_eta[monotone]

    spline = Akima1DInterpolator(kept_rho, kept_eta)
    return EtaInterpolant(
        rho_nodes=kept_rho,
        eta_nodes=kept_eta,
        coefficients=spline.c.copy(),
        rho_min=float(kept_rho[0]),
        rho_max=float(kept_rho[-1]),
        rho_star=float(kept_rho[0]),
        _spline=spline,
        _slope=spline.derivative(),
    )


def compute_K(rho, params, interpolant=None):
    """Nonlinear diffusion coefficient of the continuum density equation.

    For spherical particles the coefficient is identically one and the
    interpolant is not consulted.

    Raises
    ------
    OutOfDomain
        If ``rho`` lies outside the tabulated branch (in particular below
        ``rho_star``).
    """
    if params.chi == 0.0:
        return 1.0
    if interpolant is None:
        raise ValueError("anisotropic particles need a tabulated concentration map")
    eta = interpolant.eta(rho)
    slope = interpolant.eta_prime(rho)
    s2 = compute_S2(eta, params.n)
    n = params.n
    return float(1.0 - params.chi**2 / n - params.sigma * ((n - 1.0) / n) * s2 * slope)
