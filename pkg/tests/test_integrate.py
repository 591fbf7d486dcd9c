import math
from dataclasses import replace

import numpy as np
import pytest

from slowfast_gl.ergodics import linear_fbar
from slowfast_gl.errors import ConfigError, DeltaNotAligned, NonFinite, StepTooLarge
from slowfast_gl.integrate import (AveragedState, FrozenFastState, SlowFastState, SlowFastStepper, TimeGrid,
                                   block_steps_for, default_initial, default_step, h_max, simulate_auxiliary,
                                   simulate_averaged, simulate_frozen_fast, simulate_path, step_averaged,
                                   step_frozen_fast, step_slow_fast)
from slowfast_gl.model import FieldPair, ModelParams, SpectralField, mode_eigenvalues
from slowfast_gl.noise import NoiseSpec, RngStream
from slowfast_gl.verify import self_convergence_order

N = 8
P = ModelParams(eps=0.1)
NOISE = NoiseSpec.default(N)
QUIET = NoiseSpec.default(N, sigma1=0.0, sigma2=0.0)
A0 = default_initial(N)


def pair(a=A0, b=A0):
    return FieldPair(a, b)


class TestTimeGrid:
    def test_counts(self):
        g = TimeGrid(1.0, 1e-3, 10)
        assert g.n_steps == 1000 and g.snapshot_steps[-1] == 1000 and g.times.size == 101
        assert TimeGrid(1.0, 0.3).n_steps * 0.3 >= 1.0

    def test_invalid(self):
        with pytest.raises(ConfigError):
            TimeGrid(0.0, 0.1)
        with pytest.raises(ConfigError):
            TimeGrid(1.0, 0.1, 0)

    def test_default_step(self):
        assert default_step(0.5) == 1e-3 and default_step(0.001) == pytest.approx(1e-4)
        assert h_max(0.1) == pytest.approx(0.01)


class TestSlowFastStep:
    def test_zero_fixed_point(self):
        s = SlowFastState(pair(SpectralField.zeros(N), SpectralField.zeros(N)), 0.0, P)
        for _ in range(20):
            s = step_slow_fast(s, 1e-3, QUIET, RngStream(0))
        assert np.all(s.pair.slow.coeffs == 0) and np.all(s.pair.fast.coeffs == 0)
        assert s.t == pytest.approx(0.02) and s.step == 20

    def test_step_too_large(self):
        s = SlowFastState(pair(), 0.0, P)
        with pytest.raises(StepTooLarge):
            step_slow_fast(s, 0.011, NOISE, RngStream(0))

    def test_blowup_guard(self):
        big = SpectralField(A0.coeffs * 1e7)
        with pytest.raises(NonFinite):
            step_slow_fast(SlowFastState(pair(big, big), 0.0, P), 1e-3, QUIET, RngStream(0))

    def test_swap_symmetry_eps_one(self):
        p = P.with_eps(1.0)
        st = SlowFastStepper(p, NOISE, 1e-3, N)
        rng = RngStream(2)
        a = np.tile(A0.coeffs, (3, 1))
        b = a.copy()
        for n in range(200):
            xi = st.conv_slow.draw(rng, range(3), n)    # mirrored keys: channel-2 noise := channel-1 noise
            a, b = st(a, b, xi, xi)
        np.testing.assert_array_equal(a, b)

    def test_step_matches_path_driver(self):
        rng = RngStream(4)
        tr = simulate_path(pair(), TimeGrid(0.01, 1e-3), P, NOISE, rng, replica=5)
        s = SlowFastState(pair(), 0.0, P)
        for _ in range(10):
            s = step_slow_fast(s, 1e-3, NOISE, rng, key=5)
        np.testing.assert_array_equal(s.pair.slow.coeffs, tr.slow[0, -1])
        np.testing.assert_array_equal(s.pair.fast.coeffs, tr.fast[0, -1])

    def test_dissipative_without_noise(self):
        tr = simulate_path(pair(SpectralField(2 * A0.coeffs), A0), TimeGrid(0.5, 1e-3), P, QUIET, RngStream(0))
        energy = np.sum(np.abs(tr.slow[0]) ** 2 + np.abs(tr.fast[0]) ** 2, axis=-1)
        assert np.all(np.diff(energy) <= 1e-10)

    @pytest.mark.parametrize("kind", ["slow_fast", "frozen_fast"])
    def test_self_convergence(self, kind):
        assert self_convergence_order(kind, n_modes=N).order >= 0.9


class TestPaths:
    def test_determinism_and_stride(self):
        g1, g5 = TimeGrid(0.05, 1e-3, 1), TimeGrid(0.05, 1e-3, 5)
        a = simulate_path(pair(), g1, P, NOISE, RngStream(9), replica=[0, 1])
        b = simulate_path(pair(), g1, P, NOISE, RngStream(9), replica=[0, 1])
        c = simulate_path(pair(), g5, P, NOISE, RngStream(9), replica=[0, 1])
        np.testing.assert_array_equal(a.slow, b.slow)
        np.testing.assert_array_equal(a.slow[:, ::5], c.slow)
        np.testing.assert_array_equal(a.fast[:, ::5], c.fast)

    def test_replica_batching_is_keyed(self):
        both = simulate_path(pair(), TimeGrid(0.02, 1e-3), P, NOISE, RngStream(9), replica=[3, 7])
        one = simulate_path(pair(), TimeGrid(0.02, 1e-3), P, NOISE, RngStream(9), replica=7)
        np.testing.assert_allclose(both.slow[1], one.slow[0], rtol=1e-13, atol=1e-15)

    def test_no_blowup_at_defaults(self):
        tr = simulate_path(pair(), TimeGrid(1.0, 1e-3, 100), P, NoiseSpec.default(N), RngStream(1), replica=range(4))
        assert np.all(np.isfinite(tr.slow)) and np.all(np.isfinite(tr.fast))

    def test_state_accessor(self):
        tr = simulate_path(pair(), TimeGrid(0.01, 1e-3, 5), P, NOISE, RngStream(1))
        s = tr.state(0, 2)
        assert s.step == 10 and s.t == pytest.approx(0.01)


class TestFrozenFast:
    def test_zero(self):
        s = FrozenFastState(SpectralField.zeros(N), SpectralField.zeros(N))
        for _ in range(10):
            s = step_frozen_fast(s, 0.01, P, QUIET, RngStream(0))
        assert np.all(s.b.coeffs == 0)

    def test_contraction_bound(self):
        gen = np.random.default_rng(0)
        for trial in range(3):
            a = gen.standard_normal(N) * 0.5 + 0j
            x, y = (gen.standard_normal((2, N)) + 1j * gen.standard_normal((2, N))) * 0.3
            tr = simulate_frozen_fast(a, np.stack([x, y]), 0.5, 1e-3, P, NOISE, RngStream(trial), shared_noise=True)
            d2 = np.sum(np.abs(tr.slow[0] - tr.slow[1]) ** 2, axis=-1)
            assert np.all(d2 <= d2[0] * np.exp(-2 * P.alpha * tr.times) * 1.05)

    def test_step_matches_driver(self):
        rng = RngStream(3)
        tr = simulate_frozen_fast(A0, A0, 0.05, 0.01, P, NOISE, rng, replica=2)
        s = FrozenFastState(A0, A0)
        for _ in range(5):
            s = step_frozen_fast(s, 0.01, P, NOISE, rng, key=2)
        np.testing.assert_array_equal(s.b.coeffs, tr.slow[0, -1])


class TestAveraged:
    def test_kappa_zero_matches_coupled(self):
        p = replace(P, kappa=0.0)
        grid = TimeGrid(0.05, 1e-3)
        rng = RngStream(6)
        coupled = simulate_path(pair(A0, SpectralField.zeros(N)), grid, p, NOISE, rng, replica=[0, 1])
        avg = simulate_averaged(A0, grid, p, NOISE, rng, lambda a: p.eta * a, replica=[0, 1])
        np.testing.assert_array_equal(coupled.slow, avg.slow)

    def test_zero_forever(self):
        s = AveragedState(SpectralField.zeros(N))
        for _ in range(10):
            s = step_averaged(s, 1e-3, P, QUIET, RngStream(0), fbar=lambda a: linear_fbar(a, P))
        assert np.all(s.a_bar.coeffs == 0)

    def test_requires_evaluator(self):
        with pytest.raises(ConfigError):
            step_averaged(AveragedState(A0), 1e-3, P, QUIET, RngStream(0))

    def test_linear_mode_closed_form(self):
        p = replace(P, nonlinear=False)
        mu = mode_eigenvalues(N)
        rate = -complex(p.beta, 1.0) * mu + p.eta + p.kappa**2 / (p.eta - complex(p.beta, 1.0) * mu)
        t = 0.2
        exact = A0.coeffs * np.exp(rate * t)
        for h in (1e-3, 5e-4):
            tr = simulate_averaged(A0, TimeGrid(t, h), p, QUIET, RngStream(0), lambda a: linear_fbar(a, p))
            err = np.linalg.norm(tr.slow[0, -1] - exact) / np.linalg.norm(exact)
            assert err < 5 * h

    def test_step_matches_driver(self):
        fb = lambda a: linear_fbar(a, P)
        rng = RngStream(2)
        tr = simulate_averaged(A0, TimeGrid(0.005, 1e-3), P, NOISE, rng, fb, replica=1)
        s = AveragedState(A0)
        for _ in range(5):
            s = step_averaged(s, 1e-3, P, NOISE, rng, key=1, fbar=fb)
        np.testing.assert_array_equal(s.a_bar.coeffs, tr.slow[0, -1])


class TestAuxiliary:
    grid = TimeGrid(0.2, 1e-3, 5)

    def base(self, reps=(0, 1, 2)):
        return simulate_path(pair(), self.grid, P, NOISE, RngStream(5), replica=list(reps))

    def test_block_resets_exact(self):
        base = self.base()
        aux = simulate_auxiliary(base, 0.05, P, NOISE, RngStream(5))
        for k in range(4):
            idx = k * 50 // 5
            np.testing.assert_array_equal(aux.b_hat[:, idx], base.fast[:, idx])
        s = aux.state(0, 12, base)
        assert s.block == 1 and s.frozen_slow == SpectralField(base.slow[0, 10])

    def test_delta_equal_step_reproduces_base(self):
        base = simulate_path(pair(), TimeGrid(0.02, 1e-3), P, NOISE, RngStream(5), replica=[0, 1])
        aux = simulate_auxiliary(base, 1e-3, P, NOISE, RngStream(5))
        np.testing.assert_array_equal(aux.a_hat, base.slow)
        np.testing.assert_array_equal(aux.b_hat, base.fast)

    def test_single_block(self):
        base = self.base()
        assert block_steps_for(5.0, 1e-3, 200, 5) == 200
        aux = simulate_auxiliary(base, 5.0, P, NOISE, RngStream(5))
        np.testing.assert_array_equal(aux.b_hat[:, 0], base.fast[:, 0])
        assert aux.state(0, 40, base).frozen_slow == SpectralField(base.slow[0, 0])

    def test_misaligned(self):
        with pytest.raises(DeltaNotAligned):
            block_steps_for(0.0125, 1e-3, 200, 5)
        with pytest.raises(DeltaNotAligned):
            block_steps_for(0.003, 1e-3, 200, 5)
        with pytest.raises(DeltaNotAligned):
            block_steps_for(-1.0, 1e-3, 200, 1)

    def test_time_shift_distribution(self):
        # B_hat on block k matches a frozen-fast run from (A(k delta), B(k delta)) in fast time
        reps = range(200)
        base = simulate_path(pair(), TimeGrid(0.1, 1e-3, 5), P, NOISE, RngStream(5), replica=list(reps))
        aux = simulate_auxiliary(base, 0.05, P, NOISE, RngStream(5))
        k0 = 10                     # snapshot at t = delta
        lag = 5                     # 25 macro steps later
        hat = np.sum(np.abs(aux.b_hat[:, k0 + lag]) ** 2, axis=-1)
        frozen = []
        for r in reps:
            tr = simulate_frozen_fast(base.slow[r, k0], base.fast[r, k0], 25e-3 / P.eps, 1e-3 / P.eps, P, NOISE,
                                      RngStream(77), replica=r)
            frozen.append(np.sum(np.abs(tr.slow[0, -1]) ** 2))
        frozen = np.array(frozen)
        se = math.sqrt(hat.var(ddof=1) / hat.size + frozen.var(ddof=1) / frozen.size)
        assert abs(hat.mean() - frozen.mean()) < 4 * se
        se_sd = math.sqrt(hat.var() / (2 * hat.size) + frozen.var() / (2 * frozen.size))
        assert abs(hat.std() - frozen.std()) < 4 * se_sd + 1e-12

    def test_needs_fast(self):
        avg = simulate_averaged(A0, TimeGrid(0.01, 1e-3), P, NOISE, RngStream(0), lambda a: a)
        with pytest.raises(ConfigError):
            simulate_auxiliary(avg, 0.005, P, NOISE, RngStream(0))
