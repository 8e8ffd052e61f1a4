"""Gaussian-overlap pair potential family for ellipsoidal particles.

The family is parameterized by an interpolation exponent ``xi`` in [0, 1]:
``xi = 0`` is the plain weighted-Gaussian form, ``xi = 1`` is the normalized
form whose space-integrated strength is the same for every direction pair,
and ``xi = 1/2`` sits in between with a constant prefactor.  The
potential of a pair at separation ``R`` with axis directions ``u1``,
``u2`` is

    V = (4 pi)^(-n/2) * (1 - chi^2 (u1.u2)^2)^(1/2 - xi) * exp(-R^T Sigma^-1 R)

with the overlap matrix ``Sigma = (ell^2 - d^2)(u1 u1^T + u2 u2^T) +
2 d^2 Id`` and a hard cutoff at ``r_c = cutoff_multiplier * max(ell, d)``.

Scalar operations validate their inputs and raise the domain errors from
:mod:`nemalign.errors`; the private ``_batch_*`` helpers carry the same math
vectorized over trailing pair axes and are used by the brute-force reference
drift evaluation and by the test oracles.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateShape,
    ScalePrefactorUndefined,
    SingularSigma,
)
from .geometry import project_tangent

_COND_LIMIT = 1e14


def anisotropy_chi(ell, d):
    """Anisotropy parameter ``(ell^2 - d^2) / (ell^2 + d^2)``.

    Zero for spheres, +1 in the rod limit ``d = 0``, -1 in the disk limit
    ``ell = 0``.

    Raises
    ------
    DegenerateShape
        If both semi-axes are zero.
    """
    s = ell * ell + d * d
    if s <= 0.0:
        raise DegenerateShape("both semi-axes are zero; anisotropy undefined")
    return (ell * ell - d * d) / s


@dataclass(frozen=True)
class ParticleShape:
    """Spheroid semi-axes: ``ell`` along the symmetry axis, ``d`` across it.

    The derived anisotropy ``chi`` is recomputed on construction.
    """

    ell: float
    d: float
    chi: float = field(init=False)

    def __post_init__(self):
        if self.ell < 0 or self.d < 0:
            raise DegenerateShape("semi-axes must be nonnegative")
        object.__setattr__(self, "chi", anisotropy_chi(self.ell, self.d))


@dataclass(frozen=True)
class PotentialSpec:
    """Potential family member: exponent ``xi``, shape, and cutoff.

    The cutoff radius is ``cutoff_multiplier * max(ell, d)``; the potential
    and its gradients are exactly zero at separations at or beyond it.
    """

    xi: float
    shape: ParticleShape
    cutoff_multiplier: float = 8.0

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi}")
        if self.cutoff_multiplier <= 0:
            raise ValueError("cutoff_multiplier must be positive")

    @property
    def cutoff_radius(self):
        return self.cutoff_multiplier * max(self.shape.ell, self.shape.d)


@dataclass(frozen=True)
class PairGeometry:
    """One interacting pair: unit directions ``u1``, ``u2`` and separation ``R``.

    ``R`` points from particle 1 to particle 2 and is assumed to be a
    minimum-image displacement.
    """

    u1: np.ndarray
    u2: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        u1 = np.asarray(self.u1, dtype=float)
        u2 = np.asarray(self.u2, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if not (u1.shape == u2.shape == R.shape) or u1.shape[-1] not in (2, 3):
            raise ValueError("u1, u2, R must share shape (2,) or (3,)")
        for name, u in (("u1", u1), ("u2", u2)):
            if abs(np.linalg.norm(u) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a unit vector")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)
        object.__setattr__(self, "R", R)

    @property
    def n(self):
        return self.R.shape[-1]


def sigma_matrix(shape, u1, u2):
    """Overlap matrix ``(ell^2 - d^2)(u1 u1^T + u2 u2^T) + 2 d^2 Id``.

    Symmetric positive definite whenever ``d > 0``.

    Raises
    ------
    SingularSigma
        For rod shapes (``d = 0``) in n=3, where the matrix has rank at
        most two and cannot be inverted.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    n = u1.shape[-1]
    if n == 3 and shape.d == 0.0:
        raise SingularSigma("rod shapes (d=0) give a rank-deficient matrix in n=3")
    a = shape.ell**2 - shape.d**2
    return a * (np.outer(u1, u1) + np.outer(u2, u2)) + 2 * shape.d**2 * np.eye(n)


def sigma_det_inv(sigma):
    """Determinant and inverse of a 2x2 or 3x3 symmetric matrix, in closed form.

    Returns
    -------
    (det, inverse) : (float, ndarray)

    Raises
    ------
    SingularSigma
        If the determinant is not positive or the condition-number estimate
        exceeds 1e14.
    """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[-1]
    if n == 2:
        det = sigma[0, 0] * sigma[1, 1] - sigma[0, 1] * sigma[1, 0]
        adj = np.array(
            [[sigma[1, 1], -sigma[0, 1]], [-sigma[1, 0], sigma[0, 0]]]
        )
    else:
        c0 = sigma[1, 1] * sigma[2, 2] - sigma[1, 2] * sigma[2, 1]
        c1 = sigma[1, 2] * sigma[2, 0] - sigma[1, 0] * sigma[2, 2]
        c2 = sigma[1, 0] * sigma[2, 1] - sigma[1, 1] * sigma[2, 0]
        det = sigma[0, 0] * c0 + sigma[0, 1] * c1 + sigma[0, 2] * c2
        adj = np.array(
            [
                [c0, sigma[0, 2] * sigma[2, 1] - sigma[0, 1] * sigma[2, 2],
                 sigma[0, 1] * sigma[1, 2] - sigma[0, 2] * sigma[1, 1]],
                [c1, sigma[0, 0] * sigma[2, 2] - sigma[0, 2] * sigma[2, 0],
                 sigma[0, 2] * sigma[1, 0] - sigma[0, 0] * sigma[1, 2]],
                [c2, sigma[0, 1] * sigma[2, 0] - sigma[0, 0] * sigma[2, 1],
                 sigma[0, 0] * sigma[1, 1] - sigma[0, 1] * sigma[1, 0]],
            ]
        )
    if not np.isfinite(det) or det <= 0.0:
        raise SingularSigma(f"matrix is singular (det = {det!r})")
    inv = adj / det
    cond_est = np.abs(sigma).sum(axis=0).max() * np.abs(inv).sum(axis=0).max()
    if cond_est > _COND_LIMIT:
        raise SingularSigma(f"condition estimate {cond_est:.3e} exceeds {_COND_LIMIT:g}")
    return float(det), inv


def _prefactor(spec, c12):
    """Direction-dependent prefactor ``(1 - chi^2 c12^2)^(1/2 - xi)``."""
    chi2 = spec.shape.chi**2
    b2 = 1.0 - chi2 * np.asarray(c12) ** 2
    q = 0.5 - spec.xi
    if np.any(b2 <= 0.0):
        if spec.xi > 0.5:
            raise ScalePrefactorUndefined(
                "chi^2 (u1.u2)^2 = 1 with xi > 1/2: prefactor diverges"
            )
        b2 = np.maximum(b2, 0.0)
    return b2**q


def _degenerate_orientation(spec, c12):
    """Handle ``chi^2 c12^2 = 1``, where prefactor and overlap degenerate.

    Returns True when the caller should short-circuit to an exact zero
    (``xi < 1/2``: the prefactor vanishes).  Raises for ``xi > 1/2``; at
    ``xi = 1/2`` the prefactor is one but the overlap matrix is genuinely
    singular, so fall through and let ``sigma_det_inv`` report it.
    """
    if 1.0 - spec.shape.chi**2 * c12 * c12 > 0.0:
        return False
    if spec.xi > 0.5:
        raise ScalePrefactorUndefined(
            "chi^2 (u1.u2)^2 = 1 with xi > 1/2: prefactor diverges"
        )
    return spec.xi < 0.5


def evaluate_potential(spec, pair):
    """Pair potential value; exactly zero at or beyond the cutoff radius.

    Raises
    ------
    ScalePrefactorUndefined
        When ``chi^2 (u1.u2)^2 = 1`` and ``xi > 1/2``.
    SingularSigma
        When the overlap matrix cannot be inverted.
    """
    if float(np.linalg.norm(pair.R)) >= spec.cutoff_radius:
        return 0.0
    if _degenerate_orientation(spec, float(pair.u1 @ pair.u2)):
        return 0.0
    sigma = sigma_matrix(spec.shape, pair.u1, pair.u2)
    _, inv = sigma_det_inv(sigma)
    pref = _prefactor(spec, float(pair.u1 @ pair.u2))
    expo = float(pair.R @ inv @ pair.R)
    return float((4 * np.pi) ** (-pair.n / 2) * pref * np.exp(-expo))


def grad_position(spec, pair):
    """Gradient of the potential with respect to the first particle's position.

    Equals ``2 V Sigma^-1 R`` (with ``R`` pointing 1 -> 2); antisymmetric
    under swapping the particles.  Zero at or beyond the cutoff.
    """
    if float(np.linalg.norm(pair.R)) >= spec.cutoff_radius:
        return np.zeros(pair.n)
    if _degenerate_orientation(spec, float(pair.u1 @ pair.u2)):
        return np.zeros(pair.n)
    sigma = sigma_matrix(spec.shape, pair.u1, pair.u2)
    _, inv = sigma_det_inv(sigma)
    y = inv @ pair.R
    pref = _prefactor(spec, float(pair.u1 @ pair.u2))
    v = (4 * np.pi) ** (-pair.n / 2) * pref * np.exp(-float(pair.R @ y))
    return 2.0 * v * y


def grad_direction(spec, pair):
    """Tangential gradient of the potential in the first particle's direction.

    The Euclidean gradient has two pieces: the prefactor contributes along
    ``u2`` through the chain rule in ``(u1.u2)^2``, and the exponent
    contributes along ``Sigma^-1 R`` through the derivative of the inverse
    overlap matrix.  The result is projected onto the tangent space at
    ``u1``.  Zero at or beyond the cutoff, and identically zero for
    isotropic shapes (``ell = d``).
    """
    if float(np.linalg.norm(pair.R)) >= spec.cutoff_radius:
        return np.zeros(pair.n)
    c12 = float(pair.u1 @ pair.u2)
    if _degenerate_orientation(spec, c12):
        return np.zeros(pair.n)
    shape = spec.shape
    sigma = sigma_matrix(shape, pair.u1, pair.u2)
    _, inv = sigma_det_inv(sigma)
    y = inv @ pair.R
    chi2 = shape.chi**2
    b2 = 1.0 - chi2 * c12 * c12
    q = 0.5 - spec.xi
    v = (4 * np.pi) ** (-pair.n / 2) * _prefactor(spec, c12) * np.exp(-float(pair.R @ y))
    a = shape.ell**2 - shape.d**2
    # d/du1 of the log-prefactor and of the (negative) exponent
    pref_term = (-2.0 * q * chi2 * c12 / b2) * pair.u2
    expo_term = (2.0 * a * float(pair.u1 @ y)) * y
    grad = v * (pref_term + expo_term)
    return project_tangent(pair.u1, grad)


# -- vectorized internals ---------------------------------------------------
# Shapes: U1, U2, R are (..., n); all outputs broadcast over the leading axes.

def _batch_sigma_inv(shape, U1, U2):
    """Inverse overlap matrices for a batch of pairs: returns (..., n, n)."""
    a = shape.ell**2 - shape.d**2
    twod2 = 2.0 * shape.d**2
    n = U1.shape[-1]
    S = a * (U1[..., :, None] * U1[..., None, :] + U2[..., :, None] * U2[..., None, :])
    S[..., range(n), range(n)] += twod2
    if n == 2:
        det = S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] ** 2
        inv = np.empty_like(S)
        inv[..., 0, 0] = S[..., 1, 1]
        inv[..., 1, 1] = S[..., 0, 0]
        inv[..., 0, 1] = -S[..., 0, 1]
        inv[..., 1, 0] = -S[..., 1, 0]
        inv /= det[..., None, None]
    else:
        det = np.linalg.det(S)
        inv = np.linalg.inv(S)
    return det, inv


def _batch_potential(spec, U1, U2, R, apply_cutoff=True):
    """Potential over a batch of pairs; zero where ``|R| >= r_c``."""
    U1, U2, R = (np.asarray(x, dtype=float) for x in (U1, U2, R))
    n = R.shape[-1]
    _, inv = _batch_sigma_inv(spec.shape, U1, U2)
    y = np.einsum("...ij,...j->...i", inv, R)
    expo = np.einsum("...i,...i->...", R, y)
    c12 = np.einsum("...i,...i->...", U1, U2)
    pref = _prefactor(spec, c12)
    v = (4 * np.pi) ** (-n / 2) * pref * np.exp(-expo)
    if apply_cutoff:
        r2 = np.einsum("...i,...i->...", R, R)
        v = np.where(r2 < spec.cutoff_radius**2, v, 0.0)
    return v


def _batch_grads(spec, U1, U2, R):
    """Potential, position gradient, and both Euclidean direction gradients.

    Returns ``(V, gx, gu1, gu2)`` where ``gx`` is the gradient in the first
    particle's position and ``gu1``/``gu2`` are the (unprojected) gradients
    in the two directions.  All are zero beyond the cutoff.
    """
    U1, U2, R = (np.asarray(x, dtype=float) for x in (U1, U2, R))
    n = R.shape[-1]
    shape = spec.shape
    _, inv = _batch_sigma_inv(shape, U1, U2)
    y = np.einsum("...ij,...j->...i", inv, R)
    expo = np.einsum("...i,...i->...", R, y)
    c12 = np.einsum("...i,...i->...", U1, U2)
    chi2 = shape.chi**2
    b2 = 1.0 - chi2 * c12**2
    q = 0.5 - spec.xi
    pref = _prefactor(spec, c12)
    inside = np.einsum("...i,...i->...", R, R) < spec.cutoff_radius**2
    v = np.where(inside, (4 * np.pi) ** (-n / 2) * pref * np.exp(-expo), 0.0)
    gx = 2.0 * v[..., None] * y
    a = shape.ell**2 - shape.d**2
    with np.errstate(divide="ignore", invalid="ignore"):
        cpref = np.where(b2 > 0.0, -2.0 * q * chi2 * c12 / np.where(b2 > 0, b2, 1.0), 0.0)
    gu1 = (v * cpref)[..., None] * U2 + (2.0 * a * v * np.einsum("...i,...i->...", U1, y))[..., None] * y
    gu2 = (v * cpref)[..., None] * U1 + (2.0 * a * v * np.einsum("...i,...i->...", U2, y))[..., None] * y
    return v, gx, gu1, gu2
