"""Orientation-moment tensors and the anisotropic second-derivative contraction.

The axis equation of the continuum model carries a contribution built from
second and fourth orientation moments of the equilibrium family, half of
them weighted by an extra factor of the cosine and projected off the axis
("reflected" variants).  Closed forms exist in terms of the axis, its
orthogonal complement, and a handful of scalar moments; this module builds
those dense tensors, provides the index contractions that consume them, and
evaluates the resulting vector for given slowly varying density and axis
fields by central finite differences.
"""
from __future__ import annotations

import numpy as np

from ..errors import (
    DegenerateMoment,
    NearZeroVector,
    OutOfDomain,
    ShapeMismatch,
    StencilOutOfDomain,
)
from ..geometry import NEAR_ZERO
from .moments import DEGENERATE_TOL, compute_moment
from .response import solve_h_eta

#: Plain moment orders required to assemble the four tensors.
H_TENSOR_ORDERS = ((2, 0), (0, 2), (2, 2), (4, 0), (0, 4), (4, 2), (2, 4))

#: Relative scale of the default finite-difference step.
FD_STEP_SCALE = 1e-4


def _outer(*factors):
    out = np.asarray(factors[0], dtype=float)
    for f in factors[1:]:
        out = np.multiply.outer(out, np.asarray(f, dtype=float))
    return out


def _unit(vec, n):
    arr = np.asarray(vec, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"expected a vector of shape ({n},), got {arr.shape}")
    norm = np.linalg.norm(arr)
    if not norm > NEAR_ZERO:
        raise NearZeroVector(f"axis vector has norm {norm}")
    return arr / norm


def _moment_table(eta, n, moments):
    if moments is None:
        return {
            (k, p): compute_moment(eta, None, k, p, "d", n) for k, p in H_TENSOR_ORDERS
        }
    missing = [kp for kp in H_TENSOR_ORDERS if kp not in moments]
    if missing:
        raise ValueError(f"moment table is missing orders {missing}")
    return moments


def assemble_H_tensors(eta, Omega, n, moments=None):
    """Closed-form orientation-moment tensors at one concentration and axis.

    Returns the plain second and fourth moments together with their
    reflected (cosine-weighted, axis-projected) variants as dense arrays of
    orders 2, 3, 4 and 5.

    Parameters
    ----------
    eta:
        Concentration parameter.
    Omega:
        Unit axis vector of length ``n``.
    n:
        Spatial dimension, 2 or 3.
    moments:
        Optional mapping ``(k, p) -> value`` of the plain moments in
        ``H_TENSOR_ORDERS``; computed on demand when omitted.
    """
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    axis = np.asarray(Omega, dtype=float)
    if axis.shape != (n,):
        raise ValueError(f"axis must have shape ({n},), got {axis.shape}")
    norm = np.linalg.norm(axis)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"axis must be a unit vector, |Omega| = {norm}")
    axis = axis / norm
    d = _moment_table(eta, n, moments)
    d20, d02, d22 = d[(2, 0)], d[(0, 2)], d[(2, 2)]
    d40, d04, d42, d24 = d[(4, 0)], d[(0, 4)], d[(4, 2)], d[(2, 4)]

    if n == 2:
        perp = np.array([-axis[1], axis[0]])
        mixed = _outer(axis, perp) + _outer(perp, axis)
        h2 = d20 * _outer(axis, axis) + d02 * _outer(perp, perp)
        h2r = d22 * _outer(perp, mixed)
        h4 = (
            d40 * _outer(axis, axis, axis, axis)
            + d22 * (_outer(mixed, mixed) + _outer(axis, axis, perp, perp) + _outer(perp, perp, axis, axis))
            + d04 * _outer(perp, perp, perp, perp)
        )
        three_one = _outer(axis, axis, mixed) + _outer(mixed, axis, axis)
        one_three = _outer(perp, perp, mixed) + _outer(mixed, perp, perp)
        h4r = _outer(perp, d42 * three_one + d24 * one_three)
        return h2, h2r, h4, h4r

    proj = np.eye(n) - _outer(axis, axis)
    plane = n - 1.0
    plane4 = (n - 1.0) * (n + 1.0)
    h2 = d20 * _outer(axis, axis) + (d02 / plane) * proj
    h2r = (d22 / plane) * (
        np.einsum("ij,k->ijk", proj, axis) + np.einsum("ik,j->ijk", proj, axis)
    )
    gamma = (
        np.einsum("ij,kl->ijkl", proj, proj)
        + np.einsum("ik,jl->ijkl", proj, proj)
        + np.einsum("il,jk->ijkl", proj, proj)
    )
    mixed4 = (
        np.einsum("ij,k,l->ijkl", proj, axis, axis)
        + np.einsum("i,jk,l->ijkl", axis, proj, axis)
        + np.einsum("i,j,kl->ijkl", axis, axis, proj)
        + np.einsum("ik,j,l->ijkl", proj, axis, axis)
        + np.einsum("il,j,k->ijkl", proj, axis, axis)
        + np.einsum("i,jl,k->ijkl", axis, proj, axis)
    )
    h4 = (
        d40 * _outer(axis, axis, axis, axis)
        + (d04 / plane4) * gamma
        + (d22 / plane) * mixed4
    )
    tee = (
        np.einsum("ijkl,m->ijklm", gamma, axis)
        + np.einsum("ijkm,l->ijklm", gamma, axis)
        + np.einsum("ijlm,k->ijklm", gamma, axis)
        + np.einsum("iklm,j->ijklm", gamma, axis)
    )
    mixed5 = (
        np.einsum("ij,k,l,m->ijklm", proj, axis, axis, axis)
        + np.einsum("ik,j,l,m->ijklm", proj, axis, axis, axis)
        + np.einsum("il,j,k,m->ijklm", proj, axis, axis, axis)
        + np.einsum("im,j,k,l->ijklm", proj, axis, axis, axis)
    )
    h4r = (d24 / plane4) * tee + (d42 / plane) * mixed5
    return h2, h2r, h4, h4r


def contract(five_tensor, four_tensor):
    """Contract slots 2-5 of a 5-tensor against slots 1-4 of a 4-tensor.

    ``result[p] = sum_jklm A[p, j, k, l, m] * B[j, k, l, m]``.

    Raises
    ------
    ShapeMismatch
        If the operands are not a 5-tensor and a 4-tensor with matching
        trailing dimensions.
    """
    a = np.asarray(five_tensor, dtype=float)
    b = np.asarray(four_tensor, dtype=float)
    if a.ndim != 5 or b.ndim != 4 or a.shape[1:] != b.shape:
        raise ShapeMismatch(f"cannot contract shapes {a.shape} and {b.shape}")
    return np.einsum("pjklm,jklm->p", a, b)


def contract2(three_tensor, two_tensor):
    """Contract slots 2-3 of a 3-tensor against slots 1-2 of a 2-tensor.

    ``result[p] = sum_jk A[p, j, k] * B[j, k]``.

    Raises
    ------
    ShapeMismatch
        If the operands are not a 3-tensor and a 2-tensor with matching
        trailing dimensions.
    """
    a = np.asarray(three_tensor, dtype=float)
    b = np.asarray(two_tensor, dtype=float)
    if a.ndim != 3 or b.ndim != 2 or a.shape[1:] != b.shape:
        raise ShapeMismatch(f"cannot contract shapes {a.shape} and {b.shape}")
    return np.einsum("pjk,jk->p", a, b)


def _stencil_offsets(n):
    """Unit offsets of the full second-derivative stencil, center first."""
    offsets = [np.zeros(n)]
    for a in range(n):
        for s in (1.0, -1.0):
            e = np.zeros(n)
            e[a] = s
            offsets.append(e)
    for a in range(n):
        for b in range(a + 1, n):
            for sa in (1.0, -1.0):
                for sb in (1.0, -1.0):
                    e = np.zeros(n)
                    e[a] = sa
                    e[b] = sb
                    offsets.append(e)
    return offsets


def _sample_fields(x, rho_field, omega_field, interpolant, n, center):
    """Density and moment-weighted tensors ``(rho, rho*H2, rho*H4)`` at ``x``."""
    rho = float(rho_field(x))
    try:
        eta = interpolant.eta(rho)
    except OutOfDomain as exc:
        if center:
            raise
        raise StencilOutOfDomain(
            f"stencil point {np.asarray(x).tolist()} has density {rho} "
            f"outside the tabulated range"
        ) from exc
    axis = _unit(omega_field(x), n)
    h2, _, h4, _ = assemble_H_tensors(eta, axis, n)
    return rho, rho * h2, rho * h4


def _hessian_terms(step, x0, center_sample, rho_field, omega_field, interpolant, n, h2r0, h4r0):
    """The four contraction terms at one finite-difference step size."""
    samples = {}
    for off in _stencil_offsets(n):
        key = tuple(int(v) for v in off)
        if key == (0,) * n:
            samples[key] = center_sample
        else:
            samples[key] = _sample_fields(
                x0 + step * off, rho_field, omega_field, interpolant, n, center=False
            )

    def second(d_field, a, b):
        """Central second derivative of field component ``d_field`` along axes a, b."""
        if a == b:
            plus = np.zeros(n, dtype=int)
            plus[a] = 1
            f_p = samples[tuple(plus)][d_field]
            f_m = samples[tuple(-plus)][d_field]
            f_0 = samples[(0,) * n][d_field]
            return (f_p - 2.0 * f_0 + f_m) / step**2
        e = np.zeros(n, dtype=int)
        e[a] = 1
        e[b] = 1
        f = np.zeros(n, dtype=int)
        f[a] = 1
        f[b] = -1
        f_pp = samples[tuple(e)][d_field]
        f_mm = samples[tuple(-e)][d_field]
        f_pm = samples[tuple(f)][d_field]
        f_mp = samples[tuple(-f)][d_field]
        return (f_pp - f_pm - f_mp + f_mm) / (4.0 * step**2)

    hess_rho = np.empty((n, n))
    hess_m2 = np.empty((n, n, n, n))
    hess_m4 = np.empty((n, n) + (n,) * 4)
    for a in range(n):
        for b in range(a, n):
            hess_rho[a, b] = hess_rho[b, a] = second(0, a, b)
            hess_m2[a, b] = hess_m2[b, a] = second(1, a, b)
            hess_m4[a, b] = hess_m4[b, a] = second(2, a, b)

    term1 = contract2(h2r0, hess_rho)
    term2 = contract2(h2r0, np.einsum("aakl->kl", hess_m2))
    term3 = contract(h4r0, hess_m2)
    term4 = contract2(h2r0, np.einsum("klijkl->ij", hess_m4))
    return np.array([term1, term2, term3, term4])


def evaluate_Pi3(point, rho_field, omega_field, shape, params, interpolant, h=None, fd_step=None):
    """Anisotropy-driven second-derivative contribution to the axis equation.

    Builds the orientation-moment tensors from the local density and axis
    fields, differentiates the moment-weighted fields with a central
    second-order stencil, applies the tensor contractions, and normalizes by
    the response moment so the result is the axis-equation source vector.
    With the default step the evaluation runs at two step sizes and returns
    the Richardson extrapolation of the pair.

    Parameters
    ----------
    point:
        Evaluation point, shape ``(n,)``.
    rho_field, omega_field:
        Callables returning the density and the (unit) axis at a point;
        must be defined on the whole stencil neighborhood.
    shape:
        :class:`~nemalign.potentials.ParticleShape` of the particles.
    params:
        Parameter bundle; its anisotropy must match the shape.
    interpolant:
        Density-to-concentration map.
    h:
        Optional pre-solved response profile at the center concentration.
    fd_step:
        Finite-difference step; default ``FD_STEP_SCALE`` times the
        coordinate scale of ``point``, with Richardson refinement.

    Raises
    ------
    OutOfDomain
        If the center density leaves the tabulated branch.
    StencilOutOfDomain
        If a displaced stencil point leaves it.
    """
    n = params.n
    x0 = np.asarray(point, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"point must have shape ({n},), got {x0.shape}")
    if abs(shape.chi - params.chi) > 1e-10:
        raise ValueError(
            f"shape anisotropy {shape.chi} disagrees with params.chi {params.chi}"
        )
    if params.chi == 0.0:
        return np.zeros(n)

    ell2 = shape.ell**2
    d2 = shape.d**2
    center_sample = _sample_fields(x0, rho_field, omega_field, interpolant, n, center=True)
    rho0 = center_sample[0]
    eta0 = interpolant.eta(rho0)
    if h is None:
        h = solve_h_eta(eta0, n)
    elif abs(h.eta - eta0) > 1e-8 * max(1.0, abs(eta0)):
        raise ValueError(
            f"response profile solved at eta={h.eta}, but the center density "
            f"{rho0} maps to eta={eta0}"
        )
    c12 = compute_moment(eta0, h, 1, 2, "c", n)
    if abs(c12) < DEGENERATE_TOL:
        raise DegenerateMoment(f"|c_(1,2)| = {abs(c12):.3e} is below {DEGENERATE_TOL}")
    axis0 = _unit(omega_field(x0), n)
    _, h2r0, _, h4r0 = assemble_H_tensors(eta0, axis0, n)

    args = (x0, center_sample, rho_field, omega_field, interpolant, n, h2r0, h4r0)
    if fd_step is None:
        base = FD_STEP_SCALE * max(1.0, float(np.max(np.abs(x0))))
        coarse = _hessian_terms(base, *args)
        fine = _hessian_terms(0.5 * base, *args)
        terms = (4.0 * fine - coarse) / 3.0
    else:
        fd_step = float(fd_step)
        if fd_step <= 0.0:
            raise ValueError(f"fd_step must be positive, got {fd_step}")
        terms = _hessian_terms(fd_step, *args)

    chi2 = params.chi**2
    combined = (
        (ell2 - d2) * terms[0]
        - 2.0 * chi2 * d2 * terms[1]
        - chi2 * (ell2 - d2) * (terms[2] + terms[3])
    )
    return combined * ((n - 1.0) / (8.0 * c12 * eta0))
