import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dsrr.errors import EstimationError, InputError, ParameterError
from dsrr.rescaled_range import (
    DsrrConfig,
    RsCurve,
    differentiate,
    dsrr_transform,
    hurst_exponent,
    rescaled_range,
    rs_curve,
)

from .oracles import rs_direct

# hand-derived: prefix [1,2,3] has R=1, S=sqrt(2/3); prefix [1,2,3,4] has R=2, S=sqrt(1.25)
RS_1234 = [0.0, 1.0, math.sqrt(1.5), 2 / math.sqrt(1.25)]
D_1234 = [1.0, math.sqrt(1.5) - 1.0, 2 / math.sqrt(1.25) - math.sqrt(1.5), 2 / math.sqrt(1.25) - math.sqrt(1.5)]

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
series = arrays(np.float64, st.integers(1, 80), elements=finite)


class TestRescaledRange:
    def test_constant_prefix_is_zero(self):
        assert rescaled_range([5, 5, 5], 3) == 0.0

    def test_two_points(self):
        assert rescaled_range([1, 2], 2) == pytest.approx(1.0, abs=1e-15)

    def test_ramp_of_four(self):
        assert rescaled_range([1, 2, 3, 4], 4) == pytest.approx(1.78885438199983, abs=1e-12)
        assert rescaled_range([1, 2, 3, 4], 4) == pytest.approx(rs_direct([1, 2, 3, 4], 4), rel=1e-14)

    def test_single_sample_is_zero(self):
        assert rescaled_range([3.2], 1) == 0.0

    def test_uses_only_the_prefix(self):
        assert rescaled_range([1, 2, 100, -50], 2) == rescaled_range([1, 2], 2)

    @pytest.mark.parametrize("n", [0, 4, -1, 2.5])
    def test_n_out_of_range(self, n):
        with pytest.raises(ParameterError):
            rescaled_range([1, 2, 3], n)

    @pytest.mark.parametrize("bad", [[1, np.nan], [np.inf, 1.0], []])
    def test_non_finite_input(self, bad):
        with pytest.raises(InputError):
            rescaled_range(bad, 1)

    def test_against_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            x = rng.standard_normal(rng.integers(2, 65)) * rng.uniform(0.1, 100)
            n = int(rng.integers(1, x.size + 1))
            assert rescaled_range(x, n) == pytest.approx(rs_direct(x, n), rel=1e-12, abs=0)

    @given(series, st.data())
    def test_nonnegative(self, x, data):
        n = data.draw(st.integers(1, x.size))
        assert rescaled_range(x, n) >= 0

    @given(series, st.floats(-1e3, 1e3), st.floats(1e-2, 1e2))
    @settings(max_examples=200)
    def test_shift_and_scale_invariance(self, x, shift, scale):
        assume(np.ptp(x) > 1e-2)
        base = rescaled_range(x, x.size)
        assert rescaled_range(x + shift, x.size) == pytest.approx(base, rel=1e-7, abs=1e-9)
        assert rescaled_range(x * scale, x.size) == pytest.approx(base, rel=1e-7, abs=1e-9)


class TestCurve:
    def test_step_ten_grid(self):
        curve = rs_curve(np.arange(40.0), 10)
        assert curve.prefix_lengths.tolist() == [10, 20, 30, 40]
        assert len(curve) == 4

    def test_ramp_of_four(self):
        curve = rs_curve([1, 2, 3, 4], 1)
        assert curve.prefix_lengths.tolist() == [1, 2, 3, 4]
        np.testing.assert_allclose(curve.ratios, RS_1234, atol=1e-12)

    def test_partial_last_segment_covers_block(self):
        curve = rs_curve(np.arange(7.0), 3)
        assert curve.prefix_lengths.tolist() == [3, 6, 7]

    def test_constant_block(self):
        for a in (1, 2, 5):
            assert not rs_curve(np.full(10, 2.5), a).ratios.any()

    def test_curve_points_match_rescaled_range(self):
        x = np.random.default_rng(3).standard_normal(33)
        curve = rs_curve(x, 4)
        for n, r in zip(curve.prefix_lengths, curve.ratios):
            assert r == pytest.approx(rescaled_range(x, int(n)), rel=1e-14)

    def test_bad_step(self):
        with pytest.raises(ParameterError):
            rs_curve([1, 2, 3], 4)

    @given(series)
    def test_unit_step_starts_at_zero(self, x):
        curve = rs_curve(x, 1)
        assert curve.ratios[0] == 0.0
        assert len(curve) == x.size


class TestDifferentiate:
    def test_hand_differences(self):
        np.testing.assert_allclose(differentiate(RS_1234), D_1234, atol=1e-12)

    def test_against_pairwise_subtraction(self):
        r = np.random.default_rng(5).uniform(0, 5, 17)
        d = differentiate(RsCurve(np.arange(1, 18), r))
        expected = [r[k + 1] - r[k] for k in range(16)]
        assert d[:-1].tolist() == expected
        assert d[-1] == expected[-1]

    def test_constant_curve(self):
        assert not differentiate([2.0, 2.0, 2.0]).any()

    def test_single_point(self):
        assert differentiate([3.7]).tolist() == [0.0]

    @given(arrays(np.float64, st.integers(2, 50), elements=st.floats(0, 100)))
    def test_cumsum_reconstructs_curve(self, r):
        d = differentiate(r)
        assert d.size == r.size
        rebuilt = r[0] + np.concatenate([[0.0], np.cumsum(d[:-1])])
        np.testing.assert_allclose(rebuilt, r, rtol=1e-9, atol=1e-9)


class TestTransform:
    def test_two_blocks(self):
        out = dsrr_transform([1, 2, 3, 4, 10, 10, 10, 10], DsrrConfig(w=4, a=1))
        np.testing.assert_allclose(out, D_1234 + [0, 0, 0, 0], atol=1e-9)

    def test_default_step_is_one(self):
        assert DsrrConfig().a == 1

    def test_step_broadcasts_over_segment(self):
        x = np.random.default_rng(2).standard_normal(12)
        out = dsrr_transform(x, DsrrConfig(w=12, a=4))
        d = differentiate(rs_curve(x, 4))
        np.testing.assert_array_equal(out, np.repeat(d, 4))

    def test_blocks_are_independent(self):
        x = np.random.default_rng(4).standard_normal(30)
        out = dsrr_transform(x, DsrrConfig(w=10))
        for b in range(3):
            np.testing.assert_allclose(out[10 * b : 10 * b + 10], differentiate(rs_curve(x[10 * b : 10 * b + 10])))

    def test_shrink_processes_partial_block(self):
        x = np.random.default_rng(6).standard_normal(23)
        out, flags = dsrr_transform(x, DsrrConfig(w=10, edge_policy="shrink"), return_flags=True)
        np.testing.assert_allclose(out[20:], differentiate(rs_curve(x[20:])))
        assert not flags.any()

    def test_shrink_single_leftover_is_zero(self):
        x = np.random.default_rng(6).standard_normal(21)
        assert dsrr_transform(x, DsrrConfig(w=10))[-1] == 0.0

    def test_drop_zeroes_and_flags(self):
        x = np.random.default_rng(7).standard_normal(23)
        out, flags = dsrr_transform(x, DsrrConfig(w=10, edge_policy="drop"), return_flags=True)
        assert not out[20:].any()
        assert flags.tolist() == [False] * 20 + [True] * 3

    def test_partial_block_shorter_than_step(self):
        x = np.random.default_rng(8).standard_normal(13)
        out = dsrr_transform(x, DsrrConfig(w=10, a=5))
        assert out.size == 13 and not out[10:].any()

    @pytest.mark.parametrize(
        "kwargs", [dict(w=1), dict(w=4, a=0), dict(w=4, a=5), dict(edge_policy="pad"), dict(mode="both")]
    )
    def test_bad_config(self, kwargs):
        with pytest.raises(ParameterError):
            DsrrConfig(**kwargs)

    @given(
        series,
        st.integers(2, 30).flatmap(lambda w: st.tuples(st.just(w), st.integers(1, w))),
        st.sampled_from(["shrink", "drop"]),
    )
    def test_length_preserved(self, x, wa, edge):
        w, a = wa
        out = dsrr_transform(x, DsrrConfig(w=w, a=a, edge_policy=edge))
        assert out.shape == x.shape
        assert np.all(np.isfinite(out))

    @given(st.floats(-1e6, 1e6), st.integers(1, 100), st.integers(2, 20), st.integers(1, 20))
    def test_constant_series_is_zero(self, c, n, w, a):
        out = dsrr_transform(np.full(n, c), DsrrConfig(w=w, a=min(a, w)))
        assert not out.any()


class TestHurst:
    def test_linear_ramp(self):
        fit = hurst_exponent(np.arange(64.0), [8, 16, 32, 64])
        assert 0.95 <= fit.h <= 1.05
        assert fit.points_used == 4 and fit.c > 0 and 0 <= fit.r_squared <= 1

    def test_ramp_against_closed_form(self):
        # ramp 1..n: R = n^2 / 8 (n even), S = sqrt((n^2 - 1) / 12)
        lengths = [8, 16, 32, 64]
        closed = [(n * n / 8) / math.sqrt((n * n - 1) / 12) for n in lengths]
        for n, v in zip(lengths, closed):
            assert rs_direct(np.arange(1.0, 65.0), n) == pytest.approx(v, rel=1e-12)
        slope = np.polyfit(np.log(lengths), np.log(closed), 1)[0]
        assert hurst_exponent(np.arange(1.0, 65.0), lengths).h == pytest.approx(slope, rel=1e-10)

    def test_zero_points_excluded(self):
        x = np.concatenate([np.zeros(8), np.arange(56.0)])
        fit = hurst_exponent(x, [4, 8, 32, 64])
        assert fit.points_used == 2 and fit.points_excluded == 2

    def test_single_usable_point(self):
        x = np.concatenate([np.zeros(16), [1.0]])
        with pytest.raises(EstimationError):
            hurst_exponent(x, [8, 16, 17])

    def test_one_length(self):
        with pytest.raises(EstimationError):
            hurst_exponent(np.arange(10.0), [10])

    def test_length_bounds(self):
        with pytest.raises(ParameterError):
            hurst_exponent(np.arange(10.0), [1, 5])
        with pytest.raises(ParameterError):
            hurst_exponent(np.arange(10.0), [5, 11])

    def test_tiled_white_noise(self):
        fits = [
            hurst_exponent(np.random.default_rng(s).standard_normal(4096), 2 ** np.arange(4, 10), tiled=True).h
            for s in range(10)
        ]
        assert 0.45 <= np.mean(fits) <= 0.65
