"""Angular moments of the equilibrium family and scalar coefficients built from them.

Two moment kinds appear throughout the continuum model: plain moments of
the equilibrium angular density (``kind="d"``) and moments additionally
weighted by the orientation-response profile (``kind="c"``).  Both are
indexed by a cosine power ``k`` and an extra sine power ``p``.  On top of
them this module evaluates the pressure-like coefficient of the axis
equation and bundles everything a coefficient-table row needs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import DegenerateMoment
from .equilibrium import compute_K, compute_S2, gibbs_density, _polar_quad
from .response import solve_h_eta

#: Moments whose magnitude below this level make a denominator degenerate.
DEGENERATE_TOL = 1e-14

#: Response-weighted moment orders the coefficient table reports.
DEFAULT_C_ORDERS = ((1, 2), (3, 2))

#: Plain moment orders the coefficient table reports.
DEFAULT_D_ORDERS = ((2, 0), (0, 2), (2, 2), (4, 0), (0, 4), (4, 2), (2, 4))


def compute_moment(eta, h, k, p, kind, n):
    """One angular moment of the equilibrium density.

    Integrates ``cos^k(theta) * g(theta) * sin^(n-2+p)(theta)`` over the
    polar interval, multiplied by the response profile evaluated at
    ``cos(theta)`` when ``kind="c"``.

    Parameters
    ----------
    eta:
        Concentration parameter.
    h:
        Response profile (callable on ``[-1, 1]``); required for
        ``kind="c"`` and ignored for ``kind="d"``.
    k, p:
        Cosine power and extra sine power, both nonnegative integers.
    kind:
        ``"c"`` for response-weighted moments, ``"d"`` for plain ones.
    n:
        Spatial dimension, 2 or 3.

    Raises
    ------
    QuadratureFailure
        If the integral cannot be resolved to the absolute tolerance.
    """
    if kind not in ("c", "d"):
        raise ValueError(f"kind must be 'c' or 'd', got {kind!r}")
    if kind == "c" and h is None:
        raise ValueError("kind='c' requires the orientation-response profile h")
    k = int(k)
    p = int(p)
    if k < 0 or p < 0:
        raise ValueError(f"moment orders must be nonnegative, got k={k}, p={p}")

    if kind == "c":

        def integrand(t):
            x = np.cos(t)
            return x**k * gibbs_density(eta, t, n) * h(x) * np.sin(t) ** (n - 2 + p)

    else:

        def integrand(t):
            return np.cos(t) ** k * gibbs_density(eta, t, n) * np.sin(t) ** (n - 2 + p)

    return _polar_quad(integrand)


def compute_Pi2(rho, params, interpolant, h=None):
    """Pressure-like coefficient of the axis equation at density ``rho``.

    Parameters
    ----------
    rho:
        Density inside the interpolant's domain.
    params:
        :class:`~nemalign.macrocoeffs.equilibrium.MacroParams`.
    interpolant:
        Density-to-concentration map.
    h:
        Optional pre-solved response profile at the matching concentration;
        solved on demand when omitted.

    Raises
    ------
    OutOfDomain
        If ``rho`` lies outside the tabulated branch.
    DegenerateMoment
        If the response moment in the denominator is numerically zero.
    """
    eta = interpolant.eta(rho)
    slope = interpolant.eta_prime(rho)
    n = params.n
    if h is None:
        h = solve_h_eta(eta, n)
    elif abs(h.eta - eta) > 1e-8 * max(1.0, abs(eta)):
        raise ValueError(
            f"response profile solved at eta={h.eta}, but rho={rho} maps to eta={eta}"
        )
    c12 = compute_moment(eta, h, 1, 2, "c", n)
    if abs(c12) < DEGENERATE_TOL:
        raise DegenerateMoment(f"|c_(1,2)| = {abs(c12):.3e} is below {DEGENERATE_TOL}")
    c32 = compute_moment(eta, h, 3, 2, "c", n)
    d20 = compute_moment(eta, None, 2, 0, "d", n)
    sig = params.sigma
    nu = params.nu
    return float(
        (sig - 2.0 * nu) / rho
        + params.chi**2 / n
        - 1.0
        + 2.0 * (slope / eta) * (sig - nu)
        + slope * (2.0 * (sig - nu) * c32 / c12 - d20 * (sig - 2.0 * nu) - sig / n)
    )


@dataclass(frozen=True)
class CoeffTable:
    """Coefficient-table row: everything the continuum model needs at one density.

    The moment mappings are keyed by ``(k, p)`` order pairs.  Parity makes
    response-weighted moments vanish for even ``k`` and plain moments vanish
    for odd ``k``; entries are stored as computed, without rounding.
    """

    eta: float
    S2: float
    c: Mapping[tuple, float]
    d: Mapping[tuple, float]
    K: float
    Pi2: float


def compute_coeff_table(
    rho,
    params,
    interpolant,
    grid_size=256,
    c_orders=DEFAULT_C_ORDERS,
    d_orders=DEFAULT_D_ORDERS,
):
    """Evaluate a full :class:`CoeffTable` row at density ``rho``.

    Solves the response profile once at the matching concentration and
    reuses it for every response-weighted moment and for the pressure-like
    coefficient.
    """
    eta = interpolant.eta(rho)
    h = solve_h_eta(eta, params.n, grid_size)
    c = {(k, p): compute_moment(eta, h, k, p, "c", params.n) for k, p in c_orders}
    d = {(k, p): compute_moment(eta, None, k, p, "d", params.n) for k, p in d_orders}
    return CoeffTable(
        eta=float(eta),
        S2=compute_S2(eta, params.n),
        c=c,
        d=d,
        K=compute_K(rho, params, interpolant),
        Pi2=compute_Pi2(rho, params, interpolant, h),
    )
