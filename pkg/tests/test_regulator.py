"""Regulator checks: weight arithmetic, blend schedule, safety conditions."""

import numpy as np
import pytest

from srclab.numerics import make_rng
from srclab.regulator import (
    AlphaSchedule,
    RegulatorConfig,
    alpha_at,
    blended_similarity,
    covariance_report,
    exp_similarity,
    max_row_mean_deviation,
    weight_similarity_covariance,
    weights_from_similarity,
)


class TestWeights:
    def test_frozen_row_values(self):
        # raw = 1/s = (1, 1/2, 1/4); mean = 7/12; w = (12/7, 6/7, 3/7)
        wm = weights_from_similarity(np.array([1.0, 2.0, 4.0]))
        np.testing.assert_allclose(
            wm.w, [12.0 / 7.0, 6.0 / 7.0, 3.0 / 7.0], rtol=0, atol=1e-15
        )
        assert wm.floor_hits == 0

    def test_delta_is_inert(self):
        rng = make_rng(200)
        s = rng.uniform(0.4, 2.7, size=(6, 6))
        a = weights_from_similarity(s, delta=1.0)
        b = weights_from_similarity(s, delta=37.5)
        np.testing.assert_allclose(a.w, b.w, atol=1e-12)

    def test_row_means_are_one(self):
        rng = make_rng(201)
        for _ in range(100):
            n = int(rng.integers(2, 40))
            s = rng.uniform(np.exp(-1), np.exp(1), size=(n, n))
            wm = weights_from_similarity(s)
            assert max_row_mean_deviation(wm) < 1e-12

    def test_monotone_anti_similarity(self):
        # within a row, higher similarity always means lower weight
        rng = make_rng(202)
        for _ in range(50):
            n = int(rng.integers(3, 12))
            s = rng.uniform(0.3, 3.0, size=(n, n))
            wm = weights_from_similarity(s)
            off = ~np.eye(n, dtype=bool)
            for i in range(n):
                si = s[i, off[i]]
                wi = wm.w[i, off[i]]
                order = np.argsort(si)
                assert np.all(np.diff(wi[order]) <= 0)

    def test_floor_clips_tiny_similarities(self):
        s = np.array([1e-12, 1.0, 1.0])
        wm = weights_from_similarity(s, floor=1e-6)
        assert wm.floor_hits == 1
        assert np.isfinite(wm.w).all()
        # floored entry behaves like similarity 1e-6, not 1e-12
        raw = 1.0 / np.array([1e-6, 1.0, 1.0])
        np.testing.assert_allclose(wm.w, raw / raw.mean(), atol=1e-9)

    def test_diagonal_unused_and_one(self):
        rng = make_rng(203)
        s = rng.uniform(0.5, 2.0, size=(5, 5))
        wm = weights_from_similarity(s)
        np.testing.assert_allclose(np.diag(wm.w), 1.0, atol=0)
        # diagonal value must not affect off-diagonal weights
        s2 = s.copy()
        np.fill_diagonal(s2, 99.0)
        wm2 = weights_from_similarity(s2)
        off = ~np.eye(5, dtype=bool)
        np.testing.assert_allclose(wm.w[off], wm2.w[off], atol=1e-15)

    def test_nonpositive_similarity_rejected(self):
        with pytest.raises(ValueError, match="strictly positive"):
            weights_from_similarity(np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            weights_from_similarity(np.array([[1.0, -2.0], [1.0, 1.0]]))

    def test_nonsquare_rejected(self):
        with pytest.raises(ValueError, match="square"):
            weights_from_similarity(np.ones((3, 4)))


class TestBlend:
    def test_frozen_midpoint(self):
        # 0.5 * e + 0.5 * e^-1 = cosh(1)
        t = np.array([[np.e]])
        s = np.array([[np.exp(-1.0)]])
        got = blended_similarity(t, s, 0.5)
        assert np.isclose(got[0, 0], 1.5430806348152437, atol=1e-15)

    def test_endpoints(self):
        rng = make_rng(204)
        t = rng.uniform(0.5, 2.5, size=(4, 4))
        s = rng.uniform(0.5, 2.5, size=(4, 4))
        np.testing.assert_allclose(blended_similarity(t, s, 1.0), t, atol=0)
        np.testing.assert_allclose(blended_similarity(t, s, 0.0), s, atol=0)

    def test_alpha_bounds(self):
        t = np.ones((2, 2))
        with pytest.raises(ValueError):
            blended_similarity(t, t, -0.01)
        with pytest.raises(ValueError):
            blended_similarity(t, t, 1.01)

    def test_positive_inputs_required(self):
        t = np.ones((2, 2))
        bad = t.copy()
        bad[0, 0] = 0.0
        with pytest.raises(ValueError, match="positive"):
            blended_similarity(t, bad, 0.5)

    def test_exp_similarity_range(self):
        c = np.array([[-1.0, 0.0, 1.0]])
        np.testing.assert_allclose(
            exp_similarity(c), [[np.exp(-1), 1.0, np.e]], atol=1e-15
        )
        np.testing.assert_allclose(
            exp_similarity(c, tau=0.5), [[np.exp(-2), 1.0, np.exp(2)]], atol=1e-12
        )


class TestSchedule:
    def test_linear_endpoints_and_monotone(self):
        sched = AlphaSchedule("linear")
        total = 40
        vals = [alpha_at(sched, t, total) for t in range(total + 1)]
        assert vals[0] == 1.0
        assert vals[-1] == 0.0
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_cosine_endpoints_and_monotone(self):
        sched = AlphaSchedule("cosine")
        total = 40
        vals = [alpha_at(sched, t, total) for t in range(total + 1)]
        assert np.isclose(vals[0], 1.0, atol=1e-15)
        assert np.isclose(vals[-1], 0.0, atol=1e-15)
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))

    def test_clamps_past_end(self):
        assert alpha_at(AlphaSchedule("linear"), 100, 10) == 0.0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            AlphaSchedule("sigmoid")

    def test_bad_steps_rejected(self):
        with pytest.raises(ValueError):
            alpha_at(AlphaSchedule(), 0, 0)
        with pytest.raises(ValueError):
            alpha_at(AlphaSchedule(), -1, 10)


class TestConditions:
    def test_covariance_negative_for_emitted_weights(self):
        rng = make_rng(205)
        for _ in range(100):
            n = int(rng.integers(3, 20))
            s = rng.uniform(np.exp(-1), np.exp(1), size=(n, n))
            wm = weights_from_similarity(s)
            covs = covariance_report(wm, s)
            assert np.all(covs <= 0)
            # strictly negative when the row isn't constant
            off = ~np.eye(n, dtype=bool)
            for i in range(n):
                if np.ptp(s[i, off[i]]) > 1e-9:
                    assert covs[i] < 0

    def test_constant_row_gives_zero_covariance(self):
        s = np.full((3, 3), 1.7)
        wm = weights_from_similarity(s)
        covs = covariance_report(wm, s)
        np.testing.assert_allclose(covs, 0.0, atol=1e-12)

    def test_covariance_hand_value(self):
        # w = (2, 0), s = (1, 3): means 1 and 2; cov = ((1)(-1) + (-1)(1))/2 = -1
        assert weight_similarity_covariance((2.0, 0.0), (1.0, 3.0)) == -1.0

    def test_sign_flip_detected(self):
        # weights proportional to similarity (wrong direction) correlate positively
        s = np.array([1.0, 2.0, 4.0])
        w_bad = s / s.mean()
        assert weight_similarity_covariance(w_bad, s) > 0

    def test_row_mean_deviation_reports_worst_row(self):
        w = np.ones((3, 3))
        w[1, 0] = 1.3  # row 1 mean = 1.15
        assert np.isclose(max_row_mean_deviation(w), 0.15, atol=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RegulatorConfig(delta=0.0)
        with pytest.raises(ValueError):
            RegulatorConfig(weight_floor=0.0)
        RegulatorConfig()  # defaults valid


class TestGroundTruthDiscrimination:
    def test_false_negative_slots_get_smaller_weights(self):
        """Similarity built from planted structure: duplicated candidates
        look similar to the anchor, so their weights must come out below
        the fresh candidates' weights. This is the regulator's whole job,
        checked here with synthetic similarities; end-to-end with real
        encoders it is covered by the acceptance suite."""
        rng = make_rng(206)
        wins = 0
        for _ in range(20):
            n = 16
            cos = rng.uniform(-0.3, 0.3, size=(n, n))
            fn_mask = np.zeros((n, n), dtype=bool)
            for i in range(n):
                dup = (i + int(rng.integers(1, n))) % n
                fn_mask[i, dup] = True
                cos[i, dup] = rng.uniform(0.7, 0.95)
            np.fill_diagonal(fn_mask, False)
            wm = weights_from_similarity(exp_similarity(cos))
            off = ~np.eye(n, dtype=bool)
            fn_mean = wm.w[fn_mask & off].mean()
            tn_mean = wm.w[~fn_mask & off].mean()
            if fn_mean < tn_mean:
                wins += 1
        assert wins == 20
