"""Reference generators: spline correctness, seeded determinism, jump
counting, offset pooling, and lookup clamping."""

import numpy as np
import pytest

from reftrack.references import (
    DISCONTINUOUS,
    OFFSET,
    SMOOTH,
    ReferenceGenConfig,
    ReferenceTrajectory,
    cubic_spline_eval,
    gen_discontinuous,
    gen_offset,
    gen_smooth,
    lookup,
    lookup_window,
    rad_s_to_rpm,
    rpm_to_rad_s,
)

CFG = ReferenceGenConfig()


def count_jumps(cfg: ReferenceGenConfig, seed: int) -> int:
    """Brute-force count of the square wave's level changes inside the
    episode: subtract the same-seed smooth spline and count sign flips."""
    base = gen_smooth(cfg, seed).values
    wave = gen_discontinuous(cfg, seed).values - base
    inside = wave[: cfg.episode_len]
    return int(np.sum(np.abs(np.diff(inside)) > 1e-9))


class TestSpline:
    def test_constant_knots(self):
        knots = [(0.0, 5.0), (1.0, 5.0), (2.5, 5.0), (4.0, 5.0)]
        for t in np.linspace(0.0, 4.0, 17):
            assert cubic_spline_eval(knots, t) == pytest.approx(5.0, abs=1e-12)

    def test_interpolates_knots(self):
        rng = np.random.default_rng(0)
        times = np.sort(rng.uniform(0, 10, 6))
        times += np.arange(6) * 1e-3  # enforce strict ordering
        values = rng.uniform(-3, 3, 6)
        knots = list(zip(times, values))
        for t, v in knots:
            assert cubic_spline_eval(knots, t) == pytest.approx(v, abs=1e-10)

    def test_two_knots_is_linear(self):
        assert cubic_spline_eval([(0.0, 0.0), (1.0, 1.0)], 0.5) == pytest.approx(0.5)

    def test_domain_errors(self):
        knots = [(0.0, 1.0), (1.0, 2.0)]
        with pytest.raises(ValueError):
            cubic_spline_eval(knots, -0.1)
        with pytest.raises(ValueError):
            cubic_spline_eval(knots, 1.1)
        with pytest.raises(ValueError):
            cubic_spline_eval([(0.0, 1.0)], 0.0)
        with pytest.raises(ValueError):
            cubic_spline_eval([(0.0, 1.0), (0.0, 2.0)], 0.0)


class TestSmooth:
    def test_deterministic(self):
        a = gen_smooth(CFG, 123)
        b = gen_smooth(CFG, 123)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.class_tag == SMOOTH and a.seed == 123

    def test_length_covers_padding(self):
        assert len(gen_smooth(CFG, 1)) == CFG.episode_len + CFG.horizon_pad

    def test_zero_spread_is_constant(self):
        cfg = ReferenceGenConfig(knot_spread_rpm=0.0)
        traj = gen_smooth(cfg, 7)
        np.testing.assert_allclose(rad_s_to_rpm(traj.values), 2000.0, atol=1e-9)

    def test_overshoot_regression_bound(self):
        # spline samples may overshoot the knot box; over 10,000 seeds the
        # excursion stays below 1.5x the knot spread (measured ~268 rpm)
        lo = hi = 2000.0
        for seed in range(10000):
            v = rad_s_to_rpm(gen_smooth(CFG, seed).values)
            lo = min(lo, v.min())
            hi = max(hi, v.max())
        spread = CFG.knot_spread_rpm
        assert lo >= CFG.mean_rpm - 1.5 * spread
        assert hi <= CFG.mean_rpm + 1.5 * spread
        # frozen pooled extremes, regression guard for the generators
        assert lo == pytest.approx(983.618061327, abs=1e-6)
        assert hi == pytest.approx(3017.732128323, abs=1e-6)

    def test_smoothness_proxy(self):
        # per-step changes of the smooth class stay well below a jump of
        # the discontinuous class (2x the square amplitude)
        worst = 0.0
        for seed in range(300):
            v = rad_s_to_rpm(gen_smooth(CFG, seed).values)
            worst = max(worst, np.abs(np.diff(v)).max())
        assert worst < 2.0 * CFG.square_amp_rpm
        jump_cfg = ReferenceGenConfig(jump_count_min=5, jump_count_max=19)
        jumps = rad_s_to_rpm(gen_discontinuous(jump_cfg, 0).values)
        assert np.abs(np.diff(jumps)).max() > worst


class TestDiscontinuous:
    def test_zero_amplitude_equals_smooth(self):
        cfg = ReferenceGenConfig(square_amp_rpm=0.0)
        np.testing.assert_array_equal(
            gen_discontinuous(cfg, 55).values, gen_smooth(cfg, 55).values
        )

    def test_jump_counts_within_range(self):
        counts = [count_jumps(CFG, seed) for seed in range(1000)]
        assert min(counts) >= CFG.jump_count_min
        assert max(counts) <= CFG.jump_count_max
        assert len(set(counts)) > 5  # different period durations occur

    def test_pinned_single_jump(self):
        cfg = ReferenceGenConfig(jump_count_min=1, jump_count_max=1)
        for seed in range(200):
            assert count_jumps(cfg, seed) == 1

    def test_jump_magnitude(self):
        base = gen_smooth(CFG, 3).values
        wave = rad_s_to_rpm(gen_discontinuous(CFG, 3).values - base)
        np.testing.assert_allclose(np.abs(wave), CFG.square_amp_rpm, atol=1e-9)

    def test_tag(self):
        assert gen_discontinuous(CFG, 0).class_tag == DISCONTINUOUS


class TestOffset:
    def test_zero_offset_equals_smooth(self):
        cfg = ReferenceGenConfig(offsets_rpm=(0.0,))
        np.testing.assert_array_equal(gen_offset(cfg, 9).values, gen_smooth(cfg, 9).values)

    def test_offset_choice_is_seed_function(self):
        for seed in (0, 1, 2, 99):
            a = gen_offset(CFG, seed)
            b = gen_offset(CFG, seed)
            np.testing.assert_array_equal(a.values, b.values)
        assert gen_offset(CFG, 0).class_tag == OFFSET

    def test_offset_is_one_of_configured(self):
        for seed in range(50):
            shift = rad_s_to_rpm(gen_offset(CFG, seed).values - gen_smooth(CFG, seed).values)
            np.testing.assert_allclose(shift, shift[0], atol=1e-9)
            assert min(abs(shift[0] - o) for o in CFG.offsets_rpm) < 1e-9

    def test_pooled_range_matches_reported_band(self):
        # the five default offsets were calibrated against this band
        lo, hi = np.inf, -np.inf
        for seed in range(10000):
            v = rad_s_to_rpm(gen_offset(CFG, seed).values)
            lo = min(lo, v.min())
            hi = max(hi, v.max())
        assert lo == pytest.approx(1040.0, abs=25.0)
        assert hi == pytest.approx(4880.0, abs=25.0)


class TestLookup:
    def test_first_and_stored(self):
        traj = gen_smooth(CFG, 4)
        assert lookup(traj, 0) == traj.values[0]
        assert lookup(traj, 57) == traj.values[57]

    def test_clamps_past_end(self):
        traj = gen_smooth(CFG, 4)
        assert lookup(traj, len(traj) + 5) == traj.values[-1]

    def test_negative_index_rejected(self):
        traj = gen_smooth(CFG, 4)
        with pytest.raises(IndexError):
            lookup(traj, -1)

    def test_window_clamps(self):
        traj = gen_smooth(CFG, 4)
        window = lookup_window(traj, len(traj) - 2, 3)
        assert window.shape == (4,)
        assert window[0] == traj.values[-2]
        np.testing.assert_array_equal(window[1:], traj.values[-1])


class TestValidation:
    def test_trajectory_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ReferenceTrajectory(np.array([1.0, -1.0, 2.0]), SMOOTH, 0)

    def test_trajectory_rejects_non_finite(self):
        with pytest.raises(ValueError):
            ReferenceTrajectory(np.array([1.0, np.nan]), SMOOTH, 0)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            ReferenceGenConfig(knot_count=1)
        with pytest.raises(ValueError):
            ReferenceGenConfig(jump_count_min=0)
        with pytest.raises(ValueError):
            ReferenceGenConfig(jump_count_max=20)
        with pytest.raises(ValueError):
            ReferenceGenConfig(offsets_rpm=())

    def test_units_round_trip(self):
        x = np.array([0.0, 100.0, 2000.0])
        np.testing.assert_allclose(rad_s_to_rpm(rpm_to_rad_s(x)), x, rtol=1e-14)
        assert rpm_to_rad_s(2000.0) == pytest.approx(209.43951023931953)
