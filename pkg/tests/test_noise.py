import math

import numpy as np
import pytest

from slowfast_gl.errors import ConfigError, NegativeDt
from slowfast_gl.model import ModelParams, mode_eigenvalues
from slowfast_gl.noise import (FAST, SLOW, ConvolutionSampler, NoiseSpec, RngStream, convolution_variance,
                               stochastic_convolution_increment, wiener_increment)

P = ModelParams()


def test_spec_defaults_and_norm():
    s = NoiseSpec.default(4)
    np.testing.assert_allclose(s.q_eigs1, [1, 1 / 4, 1 / 9, 1 / 16])
    assert s.q_norm_sq(2.0, SLOW) == pytest.approx(4 * s.trace(SLOW))
    with pytest.raises(ConfigError):
        NoiseSpec(-1.0, 0.5, [1.0], [1.0])
    with pytest.raises(ConfigError):
        NoiseSpec(1.0, 0.5, [0.0], [1.0])
    with pytest.raises(ConfigError):
        s.q_eigs(SLOW, 5)


def test_rng_reproducible_and_prefix_stable():
    r = RngStream(99)
    a = r.normals(3, SLOW, 17, 8)
    np.testing.assert_array_equal(a, RngStream(99).normals(3, SLOW, 17, 8))
    np.testing.assert_array_equal(r.normals(3, SLOW, 17, 20)[:8], a)
    assert not np.array_equal(a, r.normals(3, FAST, 17, 8))
    assert not np.array_equal(a, r.normals(4, SLOW, 17, 8))
    assert not np.array_equal(a, r.normals(3, SLOW, 18, 8))
    assert not np.array_equal(a, RngStream(100).normals(3, SLOW, 17, 8))


def test_batch_normals_match_single_draws():
    r = RngStream(5)
    batch = r.batch_normals([0, 7, 2], FAST, 11, (6, 2))
    for i, rep in enumerate([0, 7, 2]):
        np.testing.assert_array_equal(batch[i], r.normals(rep, FAST, 11, (6, 2)))
    with pytest.raises(ConfigError):
        r.normals(-1, SLOW, 0, 3)
    with pytest.raises(ConfigError):
        RngStream(-5)


def test_wiener_zero_dt_and_negative():
    s = NoiseSpec.default(5)
    assert np.all(wiener_increment(s, SLOW, 0.0, RngStream(0)).coeffs == 0)
    with pytest.raises(NegativeDt):
        wiener_increment(s, SLOW, -1.0, RngStream(0))
    with pytest.raises(ConfigError):
        wiener_increment(s, 3, 1.0, RngStream(0))


@pytest.mark.parametrize("complex_inc", [False, True])
def test_wiener_variance_and_independence(complex_inc):
    n, dt, draws = 4, 0.01, 100_000
    s = NoiseSpec.default(n, complex_increments=complex_inc)
    width = 2 if complex_inc else 1
    r = RngStream(3)
    xi = r.batch_normals(range(0), SLOW, 0, n)  # empty batch is fine
    assert xi.shape == (0, n)
    # draw via the keyed path, one key per sample
    samples = np.stack([wiener_increment(s, SLOW, dt, r, key=(i, 0)).coeffs for i in range(draws)])
    var = np.mean(np.abs(samples) ** 2, axis=0)
    want = s.q_eigs1 * dt
    se = want * math.sqrt(2.0 / width) / math.sqrt(draws)
    assert np.all(np.abs(var - want) < 4 * se)
    if not complex_inc:
        assert np.all(samples.imag == 0)
    cov = np.mean(samples[:, 0].real * samples[:, 1].real)
    assert abs(cov) < 4 * math.sqrt(want[0] * want[1] / width / draws) * math.sqrt(width)


def test_convolution_variance_quadrature_oracle():
    s = NoiseSpec.default(6, sigma1=0.7)
    h = 0.03
    mu = mode_eigenvalues(6)
    m = 10_000
    u = (np.arange(m) + 0.5) / m * h
    riemann = np.array([np.sum(np.exp(-2 * P.beta * mk * (h - u))) * h / m for mk in mu])
    want = s.sigma1**2 * s.q_eigs1 * riemann
    np.testing.assert_allclose(convolution_variance(s, SLOW, h, P, 6), want, rtol=1e-6)


def test_convolution_variance_limits():
    s = NoiseSpec.default(3)
    small = convolution_variance(s, FAST, 1e-9, P, 3) / (s.sigma2**2 * s.q_eigs2 * 1e-9)
    np.testing.assert_allclose(small, 1, rtol=1e-6)
    big = convolution_variance(s, FAST, 100.0, P, 3)
    np.testing.assert_allclose(big, s.sigma2**2 * s.q_eigs2 / (2 * P.beta * mode_eigenvalues(3)), rtol=1e-12)


def test_fast_channel_variance_scales_with_h_over_eps():
    # the fast variable is advanced with tau = h / eps; for small tau the variance is sigma^2 lambda h / eps
    s = NoiseSpec.default(3)
    h = 1e-6
    ratios = [convolution_variance(s, FAST, h / e, P, 3)[0] / (h / e) for e in (1.0, 0.1, 0.01)]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-3)


@pytest.mark.parametrize("flags", [{}, {"complex_increments": True}, {"exact_complex_convolution": True}])
def test_convolution_sample_moments(flags):
    n, h, draws = 3, 0.02, 40_000
    s = NoiseSpec.default(n, sigma1=1.0, **flags)
    samp = ConvolutionSampler(s, SLOW, h, P, n)
    x = samp.draw(RngStream(8), range(draws), 0)
    var = np.mean(np.abs(x) ** 2, axis=0)
    if flags.get("exact_complex_convolution"):
        # exact covariance: E|.|^2 equals the modulus variance too
        want = convolution_variance(s, SLOW, h, P, n)
    else:
        want = samp.variance
    np.testing.assert_allclose(var, want, rtol=4 * math.sqrt(2 / draws) * 1.5)


def test_exact_convolution_matches_riemann_covariance():
    n, h = 2, 0.05
    s = NoiseSpec.default(n, sigma1=1.0, exact_complex_convolution=True)
    samp = ConvolutionSampler(s, SLOW, h, P, n)
    l11, l21, l22 = samp._chol
    m = 20_000
    u = (np.arange(m) + 0.5) / m * h
    for k, mu in enumerate(mode_eigenvalues(n)):
        kern = np.exp(-complex(P.beta, 1.0) * mu * u)
        q = s.q_eigs1[k]
        assert l11[k] ** 2 == pytest.approx(q * np.sum(kern.real**2) * h / m, rel=1e-6)
        assert l21[k] ** 2 + l22[k] ** 2 == pytest.approx(q * np.sum(kern.imag**2) * h / m, rel=1e-6)
        assert l11[k] * l21[k] == pytest.approx(q * np.sum(kern.real * kern.imag) * h / m, rel=1e-5)


def test_stochastic_convolution_increment_api():
    s = NoiseSpec.default(4)
    a = stochastic_convolution_increment(s, SLOW, 0.01, P, RngStream(1), key=(2, 5))
    b = stochastic_convolution_increment(s, SLOW, 0.01, P, RngStream(1), key=(2, 5))
    assert a == b
    with pytest.raises(NegativeDt):
        stochastic_convolution_increment(s, SLOW, -0.1, P, RngStream(1))


def test_channel_independence():
    s = NoiseSpec.default(1)
    r = RngStream(4)
    x1 = ConvolutionSampler(s, SLOW, 0.01, P, 1).draw(r, range(50_000), 0)[:, 0].real
    x2 = ConvolutionSampler(s, FAST, 0.01, P, 1).draw(r, range(50_000), 0)[:, 0].real
    assert abs(np.corrcoef(x1, x2)[0, 1]) < 4 / math.sqrt(50_000)
