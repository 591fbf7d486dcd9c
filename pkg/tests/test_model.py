import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rand_coeffs
from slowfast_gl.errors import ConfigError, DimensionMismatch, HypothesisViolation
from slowfast_gl.model import (FieldPair, ModelParams, SpectralField, coupling_fast, coupling_slow, cubic_kernel,
                               field_norms, inner_product, mode_eigenvalues, nonlinearity_cubic, nonlinearity_quintic,
                               quintic_kernel, squared_norms, validate_params)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)


class TestParams:
    def test_default_alpha(self):
        p = validate_params({"beta": 1.0, "eta": 1.0, "kappa": 0.5, "eps": 0.1})
        assert p.lambda_poincare == math.pi**2
        assert p.alpha == pytest.approx(math.pi**2 / 2 - 1)
        assert p.alpha == pytest.approx(3.9348, abs=1e-4)

    def test_small_beta_violates(self):
        with pytest.raises(HypothesisViolation):
            validate_params({"beta": 0.2, "eta": 1.0})

    @pytest.mark.parametrize("raw", [{"eta": 0.0}, {"beta": 0.0}, {"beta": -1.0}, {"eps": 0.0}, {"eps": 1.5}])
    def test_hypothesis_violations(self, raw):
        with pytest.raises(HypothesisViolation):
            validate_params(raw)

    def test_eps_one_allowed(self):
        assert validate_params({"eps": 1.0}).eps == 1.0

    def test_nonfinite_and_unknown(self):
        with pytest.raises(ConfigError):
            validate_params({"beta": float("nan")})
        with pytest.raises(ConfigError):
            validate_params({"bogus": 1.0})
        with pytest.raises(ConfigError):
            validate_params({"beta": "1"})

    def test_violation_is_config_error(self):
        assert issubclass(HypothesisViolation, ConfigError)

    def test_idempotent(self):
        p = validate_params({"beta": 2.0, "kappa": -0.3, "eps": 0.05})
        assert validate_params(p) == p
        assert validate_params(p.to_dict()) == p

    def test_reference_defaults(self):
        p = ModelParams()
        assert (p.gamma, p.mu, p.nu) == (-1.0, -1.0, 1.0)


class TestKernels:
    @pytest.mark.parametrize("z, want", [(0, 0), (1, -1 + 1j), (1 + 1j, -4 + 0j)])
    def test_cubic(self, z, want):
        assert cubic_kernel(np.array(z, dtype=complex)) == pytest.approx(want)

    @pytest.mark.parametrize("z, want", [(0, 0), (1, -1 + 1j), (2, -32 + 32j)])
    def test_quintic(self, z, want):
        assert quintic_kernel(np.array(z, dtype=complex)) == pytest.approx(want)

    @given(cplx, cplx)
    def test_pointwise_monotone(self, z1, z2):
        z1, z2 = np.array(z1), np.array(z2)
        for k in (cubic_kernel, quintic_kernel):
            v = ((z1 - z2) * np.conj(k(z1) - k(z2))).real
            scale = abs(z1 - z2) * abs(k(z1) - k(z2))
            assert v <= 1e-12 * (1 + scale)

    def test_scalar_pair_sign(self):
        z1, z2 = 1.0 + 0j, -1.0 + 0j
        raw = ((z1 - z2) * np.conj(z1 * abs(z1) ** 2 - z2 * abs(z2) ** 2)).real
        assert raw == 4.0
        f = ((z1 - z2) * np.conj(cubic_kernel(np.array(z1)) - cubic_kernel(np.array(z2)))).real
        assert f == -4.0


class TestFieldNonlinearity:
    def test_zero(self):
        z = SpectralField.zeros(8)
        assert nonlinearity_cubic(z) == z
        assert nonlinearity_quintic(z) == z

    def test_matches_fine_quadrature(self, gen):
        # projection onto e_k by a very fine midpoint rule
        n = 6
        c = rand_coeffs(gen, n)
        x = (np.arange(20000) + 0.5) / 20000
        basis = math.sqrt(2) * np.sin(np.pi * np.outer(np.arange(1, n + 1), x))
        u = c @ basis
        for op, k in ((nonlinearity_cubic, cubic_kernel), (nonlinearity_quintic, quintic_kernel)):
            want = (k(u) @ basis.T) / x.size
            np.testing.assert_allclose(op(SpectralField(c)).coeffs, want, atol=1e-8)

    def test_batched(self, gen):
        c = rand_coeffs(gen, 8, (3,))
        full = nonlinearity_quintic(SpectralField(c)).coeffs
        for i in range(3):
            np.testing.assert_allclose(full[i], nonlinearity_quintic(SpectralField(c[i])).coeffs, rtol=1e-13, atol=1e-14)

    def test_field_monotone(self, gen):
        for _ in range(20):
            a1, a2 = SpectralField(rand_coeffs(gen, 16)), SpectralField(rand_coeffs(gen, 16))
            for op in (nonlinearity_cubic, nonlinearity_quintic):
                assert inner_product(a1 - a2, op(a1) - op(a2)) <= 1e-10


class TestCouplings:
    p = ModelParams(eta=1.0, kappa=0.5)

    def test_values(self):
        one, zero = SpectralField(np.ones(1)), SpectralField.zeros(1)
        assert coupling_slow(one, one, self.p).coeffs[0] == pytest.approx(1 + 0.5j)
        assert coupling_fast(one, zero, self.p).coeffs[0] == pytest.approx(0.5j)
        assert coupling_slow(zero, zero, self.p) == zero

    def test_linear_and_symmetric(self, gen):
        a, b = SpectralField(rand_coeffs(gen, 5)), SpectralField(rand_coeffs(gen, 5))
        np.testing.assert_allclose(coupling_slow(2 * a, 2 * b, self.p).coeffs, 2 * coupling_slow(a, b, self.p).coeffs)
        assert coupling_fast(a, a, self.p) == coupling_slow(a, a, self.p)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            coupling_slow(SpectralField.zeros(3), SpectralField.zeros(4), self.p)
        with pytest.raises(DimensionMismatch):
            FieldPair(SpectralField.zeros(3), SpectralField.zeros(4))


class TestNorms:
    def test_zero_and_single_mode(self):
        assert field_norms(SpectralField.zeros(4)) == (0.0, 0.0)
        l2, h1 = field_norms(SpectralField.basis(1, 4))
        assert (l2, h1) == pytest.approx((1.0, math.pi))

    def test_inner_product_identities(self, gen):
        u = SpectralField(rand_coeffs(gen, 7))
        assert inner_product(u, u) == pytest.approx(field_norms(u)[0] ** 2)
        assert abs(inner_product(u, u * 1j)) < 1e-14
        for j in range(1, 4):
            for k in range(1, 4):
                assert inner_product(SpectralField.basis(j, 3), SpectralField.basis(k, 3)) == float(j == k)

    def test_poincare(self, gen):
        c = rand_coeffs(gen, 32, (1000,))
        l2sq, h1sq = squared_norms(c)
        assert np.all(h1sq >= math.pi**2 * l2sq * (1 - 1e-14))

    def test_eigenvalues(self):
        mu = mode_eigenvalues(4)
        assert mu[0] == math.pi**2 and np.all(np.diff(mu) > 0)

    def test_basis_errors(self):
        with pytest.raises(DimensionMismatch):
            SpectralField.basis(5, 4)
        with pytest.raises(DimensionMismatch):
            SpectralField(np.array(1.0))
