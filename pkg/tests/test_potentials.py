import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nemalign.errors import (
    DegenerateShape,
    ScalePrefactorUndefined,
    SingularSigma,
)
from nemalign.geometry import project_tangent
from nemalign.potentials import (
    PairGeometry,
    ParticleShape,
    PotentialSpec,
    anisotropy_chi,
    evaluate_potential,
    grad_direction,
    grad_position,
    sigma_det_inv,
    sigma_matrix,
    _batch_grads,
    _batch_potential,
)

from helpers import gauss_hermite_moments, normalization_defect, random_unit

E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


def pair2(u1, u2, R):
    return PairGeometry(np.asarray(u1, float), np.asarray(u2, float), np.asarray(R, float))


class TestAnisotropyChi:
    def test_direct_formula(self):
        assert anisotropy_chi(2.0, 1.0) == pytest.approx(0.6, rel=0, abs=0)

    def test_sphere(self):
        assert anisotropy_chi(1.3, 1.3) == 0.0

    def test_rod_limit(self):
        assert anisotropy_chi(1.0, 0.0) == 1.0

    def test_degenerate(self):
        with pytest.raises(DegenerateShape):
            anisotropy_chi(0.0, 0.0)


class TestSigmaMatrix:
    def test_isotropic_any_directions(self):
        shape = ParticleShape(1.0, 1.0)
        s = sigma_matrix(shape, np.array([0.6, 0.8]), np.array([1.0, 0.0]))
        np.testing.assert_allclose(s, 2 * np.eye(2), atol=1e-15)

    def test_orthogonal_axes(self):
        shape = ParticleShape(np.sqrt(2.0), 1.0)
        s = sigma_matrix(shape, E1, E2)
        np.testing.assert_allclose(s, np.diag([3.0, 3.0]), atol=1e-15)

    def test_parallel_axes(self):
        shape = ParticleShape(np.sqrt(2.0), 1.0)
        s = sigma_matrix(shape, E1, E1)
        np.testing.assert_allclose(s, np.diag([4.0, 2.0]), atol=1e-15)

    def test_3d_rod_rejected(self):
        shape = ParticleShape(1.0, 0.0)
        with pytest.raises(SingularSigma):
            sigma_matrix(shape, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))


class TestSigmaDetInv:
    def test_scalar_matrix(self):
        det, inv = sigma_det_inv(2 * np.eye(2))
        assert det == pytest.approx(4.0)
        np.testing.assert_allclose(inv, 0.5 * np.eye(2))

    def test_orthogonal_case_det(self):
        shape = ParticleShape(np.sqrt(2.0), 1.0)
        det, _ = sigma_det_inv(sigma_matrix(shape, E1, E2))
        assert det == pytest.approx(9.0, rel=1e-14)

    def test_3d_sphere_det(self):
        shape = ParticleShape(1.0, 1.0)
        u = np.array([0.0, 0.0, 1.0])
        det, inv = sigma_det_inv(sigma_matrix(shape, u, u))
        assert det == pytest.approx(8.0, rel=1e-14)
        np.testing.assert_allclose(inv, np.eye(3) / 2, atol=1e-15)

    def test_singular_raises(self):
        with pytest.raises(SingularSigma):
            sigma_det_inv(np.zeros((2, 2)))

    @pytest.mark.parametrize("n", [2, 3])
    def test_det_identity_random(self, n):
        rng = np.random.default_rng(7)
        for _ in range(200):
            ell = rng.uniform(0.2, 3.0)
            d = rng.uniform(0.1, 3.0)
            if n == 2 and d > ell:
                ell, d = d, ell
            shape = ParticleShape(ell, d)
            u1, u2 = random_unit(rng, n), random_unit(rng, n)
            det, inv = sigma_det_inv(sigma_matrix(shape, u1, u2))
            c = float(u1 @ u2)
            expected = (
                (ell**2 + d**2) ** 2
                * (1 - shape.chi**2 * c**2)
                * (2 * d**2) ** (n - 2)
            )
            assert det == pytest.approx(expected, rel=1e-12)
            np.testing.assert_allclose(
                inv @ sigma_matrix(shape, u1, u2), np.eye(n), atol=1e-12
            )


class TestEvaluatePotential:
    def test_contact_orthogonal(self):
        for n, u1, u2 in [
            (2, E1, E2),
            (3, np.array([1.0, 0, 0]), np.array([0, 1.0, 0])),
        ]:
            spec = PotentialSpec(0.0, ParticleShape(1.5, 1.0))
            v = evaluate_potential(spec, PairGeometry(u1, u2, np.zeros(n)))
            assert v == pytest.approx((4 * np.pi) ** (-n / 2), rel=1e-14)

    def test_beyond_cutoff_exact_zero(self):
        spec = PotentialSpec(0.37, ParticleShape(1.5, 1.0))
        R = np.array([2 * spec.cutoff_radius, 0.0])
        assert evaluate_potential(spec, pair2(E1, E2, R)) == 0.0

    def test_pinned_parallel_value(self):
        # ell=sqrt(2), d=1, parallel axes along e1, R=e1:
        # Sigma=diag(4,2), chi=1/3, V=(4pi)^-1 (1-chi^2)^(1/2) e^(-1/4)
        spec = PotentialSpec(0.0, ParticleShape(np.sqrt(2.0), 1.0))
        v = evaluate_potential(spec, pair2(E1, E1, E1))
        chi = 1.0 / 3.0
        expected = (4 * np.pi) ** -1 * np.sqrt(1 - chi**2) * np.exp(-0.25)
        assert v == pytest.approx(expected, rel=1e-14)
        # independent dense-matrix oracle
        shape = spec.shape
        sigma = sigma_matrix(shape, E1, E1)
        dense = (
            (4 * np.pi) ** -1
            * (1 - shape.chi**2) ** 0.5
            * np.exp(-float(E1 @ np.linalg.solve(sigma, E1)))
        )
        assert v == pytest.approx(dense, rel=1e-14)

    def test_rod_limit_prefactor_undefined(self):
        spec = PotentialSpec(1.0, ParticleShape(1.0, 0.0))
        with pytest.raises(ScalePrefactorUndefined):
            evaluate_potential(spec, pair2(E1, E1, [0.1, 0.0]))

    def test_rod_limit_xi0_is_zero(self):
        spec = PotentialSpec(0.0, ParticleShape(1.0, 0.0))
        assert evaluate_potential(spec, pair2(E1, E1, [0.1, 0.0])) == 0.0


class TestGradPosition:
    def test_zero_at_origin(self):
        spec = PotentialSpec(0.0, ParticleShape(1.5, 1.0))
        np.testing.assert_array_equal(
            grad_position(spec, pair2(E1, E2, [0.0, 0.0])), [0.0, 0.0]
        )

    def test_isotropic_gradient_parallel_to_R(self):
        spec = PotentialSpec(0.0, ParticleShape(1.0, 1.0))
        R = np.array([0.3, -0.4])
        g = grad_position(spec, pair2(E1, E2, R))
        cross = g[0] * R[1] - g[1] * R[0]
        assert abs(cross) < 1e-15

    @pytest.mark.parametrize("n", [2, 3])
    def test_finite_difference_oracle(self, n):
        rng = np.random.default_rng(11)
        for _ in range(60):
            xi = rng.choice([0.0, 0.25, 0.5, 1.0])
            ell = rng.uniform(0.5, 2.0)
            d = rng.uniform(0.3, ell)
            spec = PotentialSpec(float(xi), ParticleShape(ell, d))
            u1, u2 = random_unit(rng, n), random_unit(rng, n)
            R = rng.uniform(-1.5, 1.5, n)
            pair = PairGeometry(u1, u2, R)
            g = grad_position(spec, pair)
            h = 1e-5 * max(ell, d)
            for k in range(n):
                dR = np.zeros(n)
                dR[k] = h
                # d/dx1 moves the first particle: R = x2 - x1 shrinks,
                # so the +h sample sits at R - dR
                vp = evaluate_potential(spec, PairGeometry(u1, u2, R - dR))
                vm = evaluate_potential(spec, PairGeometry(u1, u2, R + dR))
                fd = (vp - vm) / (2 * h)
                assert g[k] == pytest.approx(fd, rel=2e-6, abs=1e-12)

    def test_newtons_third_law_exact(self):
        rng = np.random.default_rng(13)
        for n in (2, 3):
            for _ in range(50):
                ell = rng.uniform(0.5, 2.0)
                d = rng.uniform(0.3, ell)
                spec = PotentialSpec(rng.uniform(0, 1), ParticleShape(ell, d))
                u1, u2 = random_unit(rng, n), random_unit(rng, n)
                R = rng.uniform(-1.5, 1.5, n)
                g12 = grad_position(spec, PairGeometry(u1, u2, R))
                g21 = grad_position(spec, PairGeometry(u2, u1, -R))
                np.testing.assert_array_equal(g12, -g21)


class TestGradDirection:
    def test_isotropic_zero(self):
        spec = PotentialSpec(0.0, ParticleShape(1.0, 1.0))
        g = grad_direction(spec, pair2(E1, E2, [0.3, 0.1]))
        np.testing.assert_array_equal(g, [0.0, 0.0])

    def test_orthogonal_contact_stationary(self):
        spec = PotentialSpec(0.0, ParticleShape(1.5, 1.0))
        g = grad_direction(spec, pair2(E1, E2, [0.0, 0.0]))
        np.testing.assert_allclose(g, [0.0, 0.0], atol=1e-15)

    def test_result_tangent(self):
        rng = np.random.default_rng(17)
        for n in (2, 3):
            for _ in range(20):
                ell = rng.uniform(0.5, 2.0)
                d = rng.uniform(0.3, ell)
                spec = PotentialSpec(rng.uniform(0, 1), ParticleShape(ell, d))
                u1, u2 = random_unit(rng, n), random_unit(rng, n)
                R = rng.uniform(-1.0, 1.0, n)
                g = grad_direction(spec, PairGeometry(u1, u2, R))
                assert abs(float(u1 @ g)) < 1e-14

    @pytest.mark.parametrize("n", [2, 3])
    def test_finite_difference_oracle(self, n):
        # rotate u1 by +-h in a tangent direction; compare directional
        # derivative with the projected analytic gradient
        rng = np.random.default_rng(19)
        h = 1e-5
        for _ in range(60):
            xi = rng.choice([0.0, 0.5, 1.0])
            ell = rng.uniform(0.5, 2.0)
            d = rng.uniform(0.3, ell)
            spec = PotentialSpec(float(xi), ParticleShape(ell, d))
            u1, u2 = random_unit(rng, n), random_unit(rng, n)
            R = rng.uniform(-1.0, 1.0, n)
            g = grad_direction(spec, PairGeometry(u1, u2, R))
            t = project_tangent(u1, random_unit(rng, n))
            tn = np.linalg.norm(t)
            if tn < 1e-6:
                continue
            t /= tn
            up = np.cos(h) * u1 + np.sin(h) * t
            um = np.cos(h) * u1 - np.sin(h) * t
            vp = evaluate_potential(spec, PairGeometry(up, u2, R))
            vm = evaluate_potential(spec, PairGeometry(um, u2, R))
            fd = (vp - vm) / (2 * h)
            assert float(g @ t) == pytest.approx(fd, rel=2e-6, abs=1e-12)


class TestSymmetries:
    @settings(deadline=None, max_examples=60)
    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.5, max_value=2.0),
        st.floats(min_value=0.3, max_value=1.0),
        st.integers(min_value=0, max_value=2**31),
    )
    def test_potential_symmetries(self, xi, ell, dfrac, seed):
        d = dfrac * ell
        spec = PotentialSpec(xi, ParticleShape(ell, d))
        rng = np.random.default_rng(seed)
        n = int(rng.choice([2, 3]))
        u1, u2 = random_unit(rng, n), random_unit(rng, n)
        R = rng.uniform(-2, 2, n)
        v = evaluate_potential(spec, PairGeometry(u1, u2, R))
        assert evaluate_potential(spec, PairGeometry(u2, u1, -R)) == v
        assert evaluate_potential(spec, PairGeometry(-u1, u2, R)) == v
        assert evaluate_potential(spec, PairGeometry(u1, u2, -R)) == v


class TestBatchConsistency:
    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(23)
        for n in (2, 3):
            spec = PotentialSpec(0.3, ParticleShape(1.4, 0.9))
            U1 = np.stack([random_unit(rng, n) for _ in range(40)])
            U2 = np.stack([random_unit(rng, n) for _ in range(40)])
            R = rng.uniform(-2, 2, (40, n))
            v, gx, gu1, gu2 = _batch_grads(spec, U1, U2, R)
            vb = _batch_potential(spec, U1, U2, R)
            np.testing.assert_allclose(v, vb, rtol=1e-14)
            for k in range(40):
                pair = PairGeometry(U1[k], U2[k], R[k])
                assert v[k] == pytest.approx(evaluate_potential(spec, pair), rel=1e-13, abs=1e-300)
                np.testing.assert_allclose(gx[k], grad_position(spec, pair), rtol=1e-12, atol=1e-17)
                np.testing.assert_allclose(
                    project_tangent(U1[k], gu1[k]),
                    grad_direction(spec, pair),
                    rtol=1e-12,
                    atol=1e-17,
                )
                # role swap: gu2 of (u1,u2,R) is gu1 of (u2,u1,-R)
                np.testing.assert_allclose(
                    project_tangent(U2[k], gu2[k]),
                    grad_direction(spec, PairGeometry(U2[k], U1[k], -R[k])),
                    rtol=1e-12,
                    atol=1e-17,
                )


class TestMomentIntegrals:
    """Separation-integral oracles for the potential family.

    The ratio identity ``int z(x)z V dz = (1/2) (int V dz) Sigma`` is exact
    for every shape.  The absolute normalizations carry the shape factor
    returned by :func:`helpers.normalization_defect`; shapes on the
    factor=1 manifold satisfy the textbook identities directly.
    """

    @pytest.mark.parametrize("n", [2, 3])
    def test_ratio_identity_random_shapes(self, n):
        rng = np.random.default_rng(29)
        for _ in range(6):
            ell = rng.uniform(0.4, 1.8)
            d = rng.uniform(0.25, ell)
            spec = PotentialSpec(0.0, ParticleShape(ell, d))
            u1, u2 = random_unit(rng, n), random_unit(rng, n)
            i0, i2 = gauss_hermite_moments(spec, u1, u2)
            sigma = sigma_matrix(spec.shape, u1, u2)
            np.testing.assert_allclose(i2, 0.5 * i0 * sigma, rtol=1e-10, atol=1e-13)

    @pytest.mark.parametrize("n", [2, 3])
    def test_absolute_normalization_with_shape_factor(self, n):
        rng = np.random.default_rng(31)
        for _ in range(6):
            ell = rng.uniform(0.4, 1.8)
            d = rng.uniform(0.25, ell)
            shape = ParticleShape(ell, d)
            u1, u2 = random_unit(rng, n), random_unit(rng, n)
            kappa = normalization_defect(shape, n)
            b2 = 1 - shape.chi**2 * float(u1 @ u2) ** 2
            i0_wg, _ = gauss_hermite_moments(PotentialSpec(0.0, shape), u1, u2)
            assert i0_wg == pytest.approx(kappa * b2, rel=1e-10)
            i0_bp, _ = gauss_hermite_moments(PotentialSpec(1.0, shape), u1, u2)
            assert i0_bp == pytest.approx(kappa, rel=1e-10)

    def test_exact_identity_on_normalized_manifold_2d(self):
        # ell^2 + d^2 = 4 makes the shape factor one in n=2
        rng = np.random.default_rng(37)
        for _ in range(5):
            ell = rng.uniform(1.45, 1.9)
            d = np.sqrt(4.0 - ell**2)
            shape = ParticleShape(ell, d)
            u1, u2 = random_unit(rng, 2), random_unit(rng, 2)
            b2 = 1 - shape.chi**2 * float(u1 @ u2) ** 2
            i0, i2 = gauss_hermite_moments(PotentialSpec(0.0, shape), u1, u2)
            sigma = sigma_matrix(shape, u1, u2)
            assert i0 == pytest.approx(b2, rel=1e-10)
            np.testing.assert_allclose(i2, 0.5 * b2 * sigma, rtol=1e-9, atol=1e-14)
            i0_bp, _ = gauss_hermite_moments(PotentialSpec(1.0, shape), u1, u2)
            assert i0_bp == pytest.approx(1.0, rel=1e-10)


class TestSpecValidation:
    def test_xi_range(self):
        with pytest.raises(ValueError):
            PotentialSpec(1.5, ParticleShape(1.0, 0.5))

    def test_cutoff_radius(self):
        spec = PotentialSpec(0.0, ParticleShape(2.0, 0.5), cutoff_multiplier=8.0)
        assert spec.cutoff_radius == 16.0

    def test_negative_axis_rejected(self):
        with pytest.raises(DegenerateShape):
            ParticleShape(-1.0, 1.0)

    def test_pair_requires_unit_directions(self):
        with pytest.raises(ValueError):
            PairGeometry(np.array([2.0, 0.0]), E1, E1)
