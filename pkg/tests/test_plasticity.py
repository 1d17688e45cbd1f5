import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pongsnn.exceptions import ParameterError
from pongsnn.plasticity import (EligibilityMatrix, RstdpConfig, StdpKernel, SynapseMatrix,
                                accumulate_traces, baseline_value, digitize, init_baseline,
                                rstdp_update, update_baseline)
from pongsnn.snn import SpikeTrain


def brute_force_traces(pre, post, kernel, shape):
    """Direct double sum over every (pre, post) spike pair."""
    e = np.zeros(shape)
    for tp, i in pre.events:
        for tq, j in post.events:
            d = tq - tp
            if d > 0:
                e[i, j] += kernel.a_plus * math.exp(-d / kernel.tau_plus)
            elif d < 0:
                e[i, j] -= kernel.a_minus * math.exp(d / kernel.tau_minus)
    return e


def random_train(rng, n_units, max_spikes, duration=50.0, grid=None):
    k = int(rng.integers(0, max_spikes + 1))
    times = rng.uniform(0, duration, k) if grid is None else rng.integers(0, grid, k) * (duration / grid)
    units = rng.integers(0, n_units, k)
    order = np.lexsort((units, times))
    return SpikeTrain(times[order], units[order], n_units, duration)


class TestKernel:
    def test_causal_asymmetry(self):
        k = StdpKernel()
        assert k(5.0) > 0 > k(-5.0)
        assert k(0.0) == 0.0

    def test_values(self):
        k = StdpKernel(a_plus=0.7, a_minus=0.3, tau_plus=10.0, tau_minus=30.0)
        assert k(10.0) == pytest.approx(0.7 / math.e)
        assert k(-30.0) == pytest.approx(-0.3 / math.e)

    @pytest.mark.parametrize("kw", [dict(tau_plus=0.0), dict(tau_minus=-1.0), dict(a_plus=-0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            StdpKernel(**kw)


class TestAccumulateTraces:
    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            kernel = StdpKernel(*rng.uniform(0.1, 2.0, 2), *rng.uniform(2.0, 40.0, 2))
            pre = random_train(rng, 5, 10)
            post = random_train(rng, 4, 10)
            got = accumulate_traces(pre, post, kernel, (5, 4), saturation=1e9).e
            want = brute_force_traces(pre, post, kernel, (5, 4))
            scale = np.maximum(np.abs(want), 1e-300)
            assert np.all(np.abs(got - want) <= 1e-9 * scale + 1e-12)

    def test_coincident_spikes_on_grid(self):
        # a coarse time grid forces many exact coincidences
        rng = np.random.default_rng(7)
        kernel = StdpKernel()
        for _ in range(50):
            pre = random_train(rng, 3, 10, grid=8)
            post = random_train(rng, 3, 10, grid=8)
            got = accumulate_traces(pre, post, kernel, (3, 3), saturation=1e9).e
            assert np.allclose(got, brute_force_traces(pre, post, kernel, (3, 3)), rtol=1e-9, atol=1e-12)

    def test_single_pairs(self):
        k = StdpKernel()
        pre = SpikeTrain([10.0], [0], 1, 50.0)
        post = SpikeTrain([30.0], [0], 1, 50.0)
        assert accumulate_traces(pre, post, k, (1, 1)).e[0, 0] == pytest.approx(math.exp(-1))
        assert accumulate_traces(post, pre, k, (1, 1)).e[0, 0] == pytest.approx(-math.exp(-1))

    def test_saturation(self):
        pre = SpikeTrain(np.linspace(0, 10, 40), np.zeros(40, int), 1, 50.0)
        post = SpikeTrain([10.5], [0], 1, 50.0)
        e = accumulate_traces(pre, post, StdpKernel(), (1, 1), saturation=16.0)
        assert e.e[0, 0] == 16.0

    def test_empty_trains(self):
        e = accumulate_traces(SpikeTrain.empty(3, 50.0), SpikeTrain.empty(2, 50.0), StdpKernel(), (3, 2))
        assert np.array_equal(e.e, np.zeros((3, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            accumulate_traces(SpikeTrain.empty(4, 1.0), SpikeTrain.empty(2, 1.0), StdpKernel(), (3, 2))


class TestDigitize:
    def test_example(self):
        e = digitize(EligibilityMatrix(np.array([[0.5037]]), saturation=1.0, adc_levels=256))
        assert abs(e.e[0, 0] - 0.5037) <= 1.0 / 255
        levels = -1.0 + np.arange(256) * 2.0 / 255
        assert np.isclose(levels, e.e[0, 0], rtol=0, atol=1e-12).any()

    def test_on_level_fixed_point(self):
        e = EligibilityMatrix(np.array([[0.0, 16.0, -16.0]]))
        assert np.array_equal(digitize(e).e, e.e)

    @settings(max_examples=200, deadline=None)
    @given(x=arrays(np.float64, (3, 4), elements=st.floats(-100, 100)),
           sat=st.floats(0.5, 50.0), levels=st.integers(2, 512))
    def test_error_bound_and_idempotence(self, x, sat, levels):
        raw = EligibilityMatrix(x, sat, levels)
        d = digitize(raw)
        step = 2 * sat / (levels - 1)
        assert np.all(np.abs(d.e - np.clip(x, -sat, sat)) <= step / 2 * (1 + 1e-9))
        assert np.all(np.abs(d.e) <= sat * (1 + 1e-12))
        assert np.allclose(digitize(d).e, d.e, rtol=0, atol=1e-12)
        idx = (d.e + sat) / step
        assert np.allclose(idx, np.rint(idx), atol=1e-6)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            EligibilityMatrix(np.zeros((1, 1)), saturation=0.0)
        with pytest.raises(ParameterError):
            EligibilityMatrix(np.zeros((1, 1)), adc_levels=1)


class TestSynapseMatrix:
    def test_snaps_to_levels(self):
        w = SynapseMatrix(np.array([[0.0, 0.51, 1.7, -3.0]]))
        assert w.level_indices().tolist() == [[0, 32, 63, 0]]

    def test_from_levels_roundtrip(self):
        idx = np.arange(64).reshape(8, 8)
        assert np.array_equal(SynapseMatrix.from_levels(idx).level_indices(), idx)

    def test_continuous_has_no_levels(self):
        with pytest.raises(ParameterError):
            SynapseMatrix(np.zeros((2, 2)), levels=None).level_indices()

    def test_invalid(self):
        with pytest.raises(ParameterError):
            SynapseMatrix(np.zeros((2, 2)), w_min=1.0, w_max=1.0)
        with pytest.raises(ParameterError):
            SynapseMatrix(np.zeros(3))


class TestRstdpUpdate:
    def test_direct_formula(self):
        w = SynapseMatrix(np.zeros((2, 2)), levels=None)
        e = EligibilityMatrix(np.full((2, 2), 0.5))
        out = rstdp_update(w, e, 1.0, 0.0, RstdpConfig(eta=1.0))
        assert np.array_equal(out.w, np.full((2, 2), 0.5))

    def test_fixed_point_exact(self):
        rng = np.random.default_rng(0)
        cfg = RstdpConfig()
        for _ in range(1000):
            w = SynapseMatrix.from_levels(rng.integers(0, 64, (32, 32)))
            e = EligibilityMatrix(rng.uniform(-20, 20, (32, 32)))
            r = float(rng.uniform())
            out = rstdp_update(w, e, r, r, cfg)
            assert np.array_equal(out.w, w.w)

    @settings(max_examples=150, deadline=None)
    @given(idx=arrays(np.int64, (4, 5), elements=st.integers(0, 63)),
           e=arrays(np.float64, (4, 5), elements=st.floats(-16, 16)),
           r=st.floats(0, 1), rb=st.floats(0, 1), eta=st.floats(0, 5), stochastic=st.booleans())
    def test_bounds_and_levels(self, idx, e, r, rb, eta, stochastic):
        w = SynapseMatrix.from_levels(idx)
        out = rstdp_update(w, EligibilityMatrix(e), r, rb,
                           RstdpConfig(eta=eta, stochastic_rounding=stochastic),
                           np.random.default_rng(0))
        assert np.all((out.w >= 0) & (out.w <= 1))
        assert np.allclose(out.w * 63, np.rint(out.w * 63), atol=1e-9)

    def test_sign_follows_prediction_error(self):
        w = SynapseMatrix.from_levels(np.full((1, 1), 30))
        e = EligibilityMatrix(np.ones((1, 1)))
        cfg = RstdpConfig(eta=0.1)
        assert rstdp_update(w, e, 1.0, 0.2, cfg).w[0, 0] > w.w[0, 0]
        assert rstdp_update(w, e, 0.0, 0.2, cfg).w[0, 0] < w.w[0, 0]

    def test_stochastic_rounding_is_unbiased(self):
        w = SynapseMatrix.from_levels(np.full((200, 200), 20))
        e = EligibilityMatrix(np.full((200, 200), 0.3 / 63))
        cfg = RstdpConfig(eta=1.0, stochastic_rounding=True)
        out = rstdp_update(w, e, 1.0, 0.0, cfg, np.random.default_rng(1))
        assert np.mean(out.level_indices() - 20) == pytest.approx(0.3, abs=0.01)
        det = rstdp_update(w, e, 1.0, 0.0, RstdpConfig(eta=1.0))
        assert np.array_equal(det.w, w.w)

    def test_stochastic_needs_rng(self):
        w = SynapseMatrix.from_levels(np.zeros((1, 1), int))
        with pytest.raises(ParameterError):
            rstdp_update(w, EligibilityMatrix(np.ones((1, 1))), 1.0, 0.0,
                         RstdpConfig(stochastic_rounding=True))

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            rstdp_update(SynapseMatrix(np.zeros((2, 2))), EligibilityMatrix(np.zeros((2, 3))),
                         1.0, 0.0, RstdpConfig())


class TestBaseline:
    def test_gamma_one_copies_reward(self):
        cfg = RstdpConfig(baseline_gamma=1.0)
        assert update_baseline(init_baseline(cfg, 4), 0.5, 2, cfg)[2] == 0.5

    def test_geometric_convergence(self):
        cfg = RstdpConfig(baseline_gamma=0.2, baseline_mode="global")
        b = 0.0
        for k in range(1, 30):
            b = update_baseline(b, 0.5, 0, cfg)
            assert b == pytest.approx(0.5 * (1 - 0.8 ** k), rel=1e-12)

    def test_per_state_touches_one_entry(self):
        cfg = RstdpConfig()
        b0 = init_baseline(cfg, 5)
        b1 = update_baseline(b0, 1.0, 3, cfg)
        assert b1.tolist() == [0, 0, 0, 0.2, 0] and b0.tolist() == [0] * 5
        assert baseline_value(b1, 3) == 0.2 and baseline_value(0.4, 3) == 0.4

    @settings(max_examples=100, deadline=None)
    @given(rewards=st.lists(st.floats(0, 1), min_size=1, max_size=60), gamma=st.floats(0.01, 1.0))
    def test_bounded(self, rewards, gamma):
        cfg = RstdpConfig(baseline_gamma=gamma, baseline_mode="global")
        b = 0.0
        for r in rewards:
            b = update_baseline(b, r, 0, cfg)
            assert 0.0 <= b <= 1.0

    def test_errors(self):
        cfg = RstdpConfig()
        with pytest.raises(ParameterError):
            update_baseline(init_baseline(cfg, 3), 1.0, 3, cfg)
        with pytest.raises(ParameterError):
            update_baseline(init_baseline(cfg, 3), 1.5, 0, cfg)
        with pytest.raises(ParameterError):
            RstdpConfig(baseline_gamma=0.0)
        with pytest.raises(ParameterError):
            RstdpConfig(baseline_mode="cosmic")
