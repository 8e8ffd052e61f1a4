"""Unit vectors, tangent projections, and periodic-box arithmetic.

Supports dimensions n in {2, 3}.  All functions accept either a single
vector of shape ``(n,)`` or a batch of row vectors of shape ``(N, n)`` and
operate along the last axis.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import NearZeroVector

#: Norm at or below which a vector cannot be renormalized.
NEAR_ZERO = 1e-10

#: Tolerance within which stored directions must have unit norm.
UNIT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class PeriodicBox:
    """Rectangular periodic domain with edge lengths ``lengths``.

    Wrapped coordinates lie in ``[0, L_k)`` along each axis ``k``.
    """

    lengths: np.ndarray = field()

    def __post_init__(self):
        lengths = np.atleast_1d(np.asarray(self.lengths, dtype=float))
        if lengths.ndim != 1 or lengths.size not in (2, 3):
            raise ValueError("box must have 2 or 3 edge lengths")
        if not np.all(lengths > 0):
            raise ValueError("box edge lengths must be positive")
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self):
        return self.lengths.size

    @property
    def volume(self):
        return float(np.prod(self.lengths))


def wrap_position(box, x):
    """Fold coordinates componentwise into ``[0, L_k)``.

    Parameters
    ----------
    box : PeriodicBox
    x : array_like, shape (..., n)

    Returns
    -------
    ndarray
        Wrapped copy of ``x``.
    """
    x = np.asarray(x, dtype=float)
    wrapped = np.mod(x, box.lengths)
    # np.mod can return L_k itself when x is a tiny negative number; fold it.
    return np.where(wrapped >= box.lengths, 0.0, wrapped)


def minimum_image(box, x_i, x_j):
    """Shortest periodic displacement from ``x_i`` to ``x_j``.

    Each component of ``x_j - x_i`` is shifted by an integer multiple of the
    box length so it lands in ``[-L_k/2, L_k/2)``.

    Parameters
    ----------
    box : PeriodicBox
    x_i, x_j : array_like, shape (..., n)
        Positions, assumed already wrapped into the box.

    Returns
    -------
    ndarray
        Minimum-image separation vector(s).
    """
    d = np.asarray(x_j, dtype=float) - np.asarray(x_i, dtype=float)
    L = box.lengths
    d = d - L * np.floor(d / L + 0.5)
    # Guard the half-open convention: +L/2 maps to -L/2.
    return np.where(d >= L / 2, d - L, d)


def project_tangent(u, w):
    """Project ``w`` onto the tangent space of the sphere at ``u``.

    Returns ``w - (u . w) u``; for unit ``u`` the result is orthogonal to
    ``u`` up to round-off.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    dot = np.sum(u * w, axis=-1, keepdims=True)
    return w - dot * u


def renormalize(u):
    """Scale ``u`` to unit Euclidean norm.

    Parameters
    ----------
    u : array_like, shape (n,) or (N, n)

    Returns
    -------
    ndarray
        ``u / |u|`` row by row.

    Raises
    ------
    NearZeroVector
        If any row has norm at or below ``NEAR_ZERO`` (this also catches
        NaN norms, which signal a blown-up integration step).
    """
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    ok = norm > NEAR_ZERO  # False for NaN as well
    if not np.all(ok):
        bad = np.argwhere(~ok.reshape(norm.shape[:-1] or (1,)))
        raise NearZeroVector(
            f"cannot renormalize vector(s) with norm <= {NEAR_ZERO:g} "
            f"(first offending index {bad[0].tolist()})"
        )
    return u / norm
