"""Alignment observables and shape/density conversions.

The central object is the Q-tensor: the trace-free second moment of the
direction ensemble.  Its largest eigenvalue, scaled by ``n/(n-1)``, is the
scalar order parameter (0 = disordered, 1 = fully aligned); its principal
eigenvector is the mean nematic direction, which is only well defined when
the top eigenvalue is separated from the second one.

Eigenproblems here are tiny (2x2 and 3x3), so they are solved in closed
form and by a cyclic Jacobi sweep respectively — no LAPACK round trip.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptySystem, InvalidChi

#: Eigenvalue-gap threshold below which the mean direction is undefined.
GAP_TOL = 1e-6


def q_tensor(directions):
    """Trace-free orientation second moment ``(1/N) sum u u^T - Id/n``.

    Parameters
    ----------
    directions : ndarray, shape (N, n)
        Unit direction vectors, one per particle.

    Raises
    ------
    EmptySystem
        If there are no particles.
    """
    directions = np.asarray(directions, dtype=float)
    if directions.ndim != 2 or directions.shape[0] == 0:
        raise EmptySystem("Q-tensor requires at least one direction")
    n = directions.shape[1]
    q = directions.T @ directions / directions.shape[0] - np.eye(n) / n
    return 0.5 * (q + q.T)


def eig_sym_2x2(m):
    """Eigen-decomposition of a symmetric 2x2 matrix, descending eigenvalues."""
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    half_tr = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    w = np.array([half_tr + rad, half_tr - rad])
    if rad == 0.0:
        return w, np.eye(2)
    # eigenvector for the larger eigenvalue
    if a - c >= 0:
        v0 = np.array([0.5 * (a - c) + rad, b])
    else:
        v0 = np.array([b, rad - 0.5 * (a - c)])
    norm = np.linalg.norm(v0)
    if norm == 0.0:  # b == 0 and a == c handled above; keep a safe fallback
        v0 = np.array([1.0, 0.0])
        norm = 1.0
    v0 /= norm
    v1 = np.array([-v0[1], v0[0]])
    return w, np.stack([v0, v1], axis=1)


def jacobi_3x3(m, tol=1e-14, max_sweeps=30):
    """Cyclic Jacobi diagonalization of a symmetric 3x3 matrix.

    Returns (eigenvalues descending, eigenvectors as columns).  Iterates
    until every off-diagonal entry is below ``tol`` relative to the matrix
    scale.
    """
    a = np.array(m, dtype=float)
    v = np.eye(3)
    scale = max(np.max(np.abs(a)), 1e-300)
    for _ in range(max_sweeps):
        off = max(abs(a[0, 1]), abs(a[0, 2]), abs(a[1, 2]))
        if off <= tol * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if abs(apq) <= 1e-300 * scale:
                continue
            theta = 0.5 * (a[q, q] - a[p, p]) / apq
            t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
            if theta == 0.0:
                t = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            v = v @ rot
    order = np.argsort(a.diagonal())[::-1]
    return a.diagonal()[order].copy(), v[:, order]


def _eig_desc(q):
    n = q.shape[0]
    return eig_sym_2x2(q) if n == 2 else jacobi_3x3(q)


def order_parameter(q):
    """Scalar order parameter ``n/(n-1)`` times the top Q-tensor eigenvalue.

    Clamped into [0, 1] only against round-off spill.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    w, _ = _eig_desc(q)
    gamma = n / (n - 1) * float(w[0])
    return min(max(gamma, 0.0), 1.0)


def mean_nematic_direction(q, gap_tol=GAP_TOL):
    """Principal Q-tensor eigenvector, or None when it is not well defined.

    The direction is sign-canonicalized so its first component of
    magnitude above 1e-12 is positive.  Returns None (undefined) when the
    top eigenvalue gap is below ``gap_tol`` — the disordered/degenerate
    case.
    """
    q = np.asarray(q, dtype=float)
    w, v = _eig_desc(q)
    if float(w[0] - w[1]) < gap_tol:
        return None
    vec = v[:, 0].copy()
    for comp in vec:
        if abs(comp) > 1e-12:
            if comp < 0:
                vec = -vec
            break
    return vec / np.linalg.norm(vec)


@dataclass(frozen=True)
class OrderSample:
    """One recorded observable sample: time, order parameter, mean direction."""

    time: float
    gamma: float
    omega: object = None  # ndarray or None when undefined


def shape_from_density(chi, rhobar, N, box):
    """Semi-axes realizing a target anisotropy and area fraction.

    Solves ``ell * d = rhobar * Lx * Ly / (pi N)`` together with
    ``ell^2 / d^2 = (1 + chi) / (1 - chi)`` for a planar box.

    Raises
    ------
    InvalidChi
        If ``|chi| >= 1`` (degenerate aspect ratio).
    """
    from .potentials import ParticleShape

    if not -1.0 < chi < 1.0:
        raise InvalidChi(f"chi must lie strictly inside (-1, 1), got {chi}")
    if rhobar <= 0:
        raise ValueError("rhobar must be positive")
    if box.n != 2:
        raise ValueError("density conversions are defined for planar boxes")
    area = box.lengths[0] * box.lengths[1]
    prod = rhobar * area / (np.pi * N)
    ratio = np.sqrt((1.0 + chi) / (1.0 - chi))
    return ParticleShape(float(np.sqrt(prod * ratio)), float(np.sqrt(prod / ratio)))


def density_from_shape(shape, N, box):
    """Anisotropy and area fraction of ``N`` particles of ``shape`` in ``box``.

    Inverse of :func:`shape_from_density`.  Degenerate shapes (a zero
    semi-axis) are reported with ``|chi| = 1`` and a warning.
    """
    if box.n != 2:
        raise ValueError("density conversions are defined for planar boxes")
    area = box.lengths[0] * box.lengths[1]
    rhobar = np.pi * shape.ell * shape.d * N / area
    if abs(shape.chi) == 1.0:
        warnings.warn("degenerate aspect ratio: |chi| = 1", stacklevel=2)
    return float(shape.chi), float(rhobar)
