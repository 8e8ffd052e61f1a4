"""Shared oracle utilities for the test suite.

These deliberately avoid the library's own fast paths: quadratures and
brute-force sums here are independent reference computations that the
package output is compared against.
"""
import numpy as np
from numpy.polynomial.hermite import hermgauss

from nemalign.macrocoeffs import MacroParams
from nemalign.potentials import PotentialSpec, sigma_matrix


def macro_params(n):
    """Parameter bundles shared by the coefficient tests.

    The ratios mirror the default simulation regime but with a response
    strength scaled so the tabulated density branch covers O(1) densities,
    which keeps mid-branch evaluation points meaningful.
    """
    if n == 2:
        return MacroParams(n=2, chi=0.9, mu=8192.0, lam=256.0, D_x=2.0**-4, D_u=0.6912)
    return MacroParams(
        n=3, chi=0.5, mu=8192.0, lam=256.0, D_x=2.0**-4, D_u=0.25 * 256.0 / 150.0
    )


def random_unit(rng, n):
    """Uniform unit vector via Gaussian normalization."""
    while True:
        z = rng.normal(size=n)
        norm = np.linalg.norm(z)
        if norm > 1e-6:
            return z / norm


def uncut(spec):
    """Copy of ``spec`` with the cutoff disabled (infinite radius)."""
    return PotentialSpec(spec.xi, spec.shape, cutoff_multiplier=np.inf)


def gauss_hermite_moments(spec, u1, u2, order=24):
    """Zeroth and second moments of the pair potential over separations.

    Computes ``I0 = int V dz`` and ``I2 = int z (x) z V dz`` with the cutoff
    disabled, by tensor-product Gauss-Hermite quadrature after mapping the
    quadratic form to a standard Gaussian with the Cholesky factor of the
    overlap matrix.  Exact (to round-off) for this integrand family.
    """
    from nemalign.potentials import _batch_potential

    n = len(u1)
    sigma = sigma_matrix(spec.shape, u1, u2)
    L = np.linalg.cholesky(sigma)
    xs, ws = hermgauss(order)
    grids = np.meshgrid(*([xs] * n), indexing="ij")
    wgrid = np.ones_like(grids[0])
    for g in np.meshgrid(*([ws] * n), indexing="ij"):
        wgrid = wgrid * g
    wpts = np.stack([g.ravel() for g in grids], axis=-1)
    zpts = wpts @ L.T
    # V(z) = prefactors * exp(-z^T Sigma^-1 z); the quadrature weight already
    # carries exp(-|w|^2), so divide it back out of V evaluated at z = L w.
    spec_nc = uncut(spec)
    U1 = np.broadcast_to(u1, zpts.shape)
    U2 = np.broadcast_to(u2, zpts.shape)
    v = _batch_potential(spec_nc, U1, U2, zpts) * np.exp((wpts**2).sum(axis=1))
    detL = float(np.prod(np.diag(L)))
    w = wgrid.ravel()
    i0 = detL * float(np.sum(w * v))
    i2 = detL * np.einsum("p,pi,pj->ij", w * v, zpts, zpts)
    return i0, i2


def reference_drifts(system, config):
    """O(N^2) drift computation by a route independent of the compiled kernels.

    All unordered pairs are evaluated with the vectorized potential gradients
    and accumulated with ``np.add.at``; minimum-image separations come from
    the geometry module.  Returns ``(drift_x, drift_u)`` with the same
    scaling and tangent projection as ``compute_drifts``.
    """
    from nemalign.geometry import minimum_image, project_tangent
    from nemalign.potentials import _batch_grads

    n_part = system.N
    gx_sum = np.zeros((n_part, config.n))
    gu_sum = np.zeros((n_part, config.n))
    if n_part >= 2:
        iu, ju = np.triu_indices(n_part, 1)
        R = minimum_image(config.box, system.positions[iu], system.positions[ju])
        u = system.directions
        _, gx, gu1, gu2 = _batch_grads(config.spec, u[iu], u[ju], R)
        np.add.at(gx_sum, iu, gx)
        np.add.at(gx_sum, ju, -gx)
        np.add.at(gu_sum, iu, gu1)
        np.add.at(gu_sum, ju, gu2)
    scale = max(n_part, 1)
    drift_x = (-config.mu / scale) * gx_sum
    drift_u = (-config.lam / scale) * project_tangent(system.directions, gu_sum)
    return drift_x, drift_u


def normalization_defect(shape, n):
    """Extra factor by which the separation integral of V misses its target.

    For this potential family ``int V_{xi=1} dR`` equals
    ``2^-n (ell^2+d^2) (2 d^2)^((n-2)/2)`` rather than one; the same factor
    multiplies the weighted-Gaussian moment identities.  Shapes with the
    factor equal to one satisfy the textbook identities exactly.
    """
    return 2.0**-n * (shape.ell**2 + shape.d**2) * (2 * shape.d**2) ** ((n - 2) / 2)


def sphere_moments_rqmc(eta, omega, log2_n=20, seed=20240817):
    """Randomized quasi-Monte-Carlo averages of the tensor integrands (n=3).

    Samples the axially symmetric angular density by inverse-CDF lookup of
    the polar cosine and a uniform azimuth, with a scrambled Sobol stream of
    ``2**log2_n`` points, and accumulates the four orientation-moment
    tensors in chunks.
    """
    from scipy.interpolate import PchipInterpolator
    from scipy.stats import qmc

    idx = np.argmin(np.abs(omega))
    e1 = np.zeros(3)
    e1[idx] = 1.0
    e1 -= np.dot(e1, omega) * omega
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(omega, e1)

    xg = np.linspace(-1.0, 1.0, 20001)
    dens = np.exp(eta * (xg**2 - 1.0))
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(xg))])
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    inv_cdf = PchipInterpolator(cdf[keep], xg[keep])

    pts = qmc.Sobol(d=2, scramble=True, seed=seed).random_base2(m=log2_n)
    h2 = np.zeros((3, 3))
    h2r = np.zeros((3, 3, 3))
    h4 = np.zeros((3, 3, 3, 3))
    h4r = np.zeros((3,) * 5)
    total = pts.shape[0]
    chunk = 1 << 18
    for lo in range(0, total, chunk):
        q = pts[lo : lo + chunk]
        x = inv_cdf(q[:, 0])
        phi = 2.0 * np.pi * q[:, 1]
        s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
        v = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
        u = x[:, None] * omega + s[:, None] * v
        uperp = u - (u @ omega)[:, None] * omega
        h2 += np.einsum("ni,nj->ij", u, u)
        h2r += np.einsum("ni,nj,nk,n->ijk", uperp, u, u, x)
        h4 += np.einsum("ni,nj,nk,nl->ijkl", u, u, u, u)
        h4r += np.einsum("ni,nj,nk,nl,nm,n->ijklm", uperp, u, u, u, u, x)
    return h2 / total, h2r / total, h4 / total, h4r / total
