"""Primitive-level checks: frozen reference values, invariants, RNG determinism.

Reference values were recomputed independently at 40-digit precision
(mpmath) before being frozen here; the float64 expectations below are the
nearest doubles to those references.
"""

import numpy as np
import pytest

from srclab.numerics import (
    DegenerateInputError,
    cosine_sim,
    cosine_sim_matrix,
    grad_check,
    log_sum_exp,
    log_sum_exp_rows,
    make_rng,
    softmax,
)


class TestRng:
    def test_equal_seeds_equal_streams(self):
        """Same seed must reproduce the stream bit-for-bit, at length."""
        a = make_rng(1234).random(1_000_000)
        b = make_rng(1234).random(1_000_000)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        a = make_rng(1).random(64)
        b = make_rng(2).random(64)
        assert not np.array_equal(a, b)

    def test_streams_are_independent_substreams(self):
        a = make_rng(7, stream=0).random(64)
        b = make_rng(7, stream=1).random(64)
        assert not np.array_equal(a, b)

    def test_seed_type_checked(self):
        with pytest.raises(TypeError):
            make_rng(1.5)

    def test_frozen_first_draws(self):
        # Pins the generator choice itself: if the backing RNG ever changes,
        # every recorded run in the repo silently changes with it.
        got = make_rng(0).random(3)
        expected = np.array(
            [0.0115467542863316, 0.2415491965627181, 0.1114258555149382]
        )
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-15)


class TestCosine:
    def test_frozen_value(self):
        assert cosine_sim((1.0, 1.0), (1.0, 0.0)) == 0.7071067811865475

    def test_scale_invariance(self):
        rng = make_rng(5)
        for _ in range(50):
            v = rng.normal(size=8)
            w = rng.normal(size=8)
            c = rng.uniform(0.1, 10.0, size=2)
            assert np.isclose(
                cosine_sim(v, w), cosine_sim(c[0] * v, c[1] * w), atol=1e-12
            )

    def test_clamped_to_unit_interval(self):
        rng = make_rng(6)
        for _ in range(200):
            v = rng.normal(size=4)
            s = cosine_sim(v, v * rng.uniform(0.5, 2.0))
            assert -1.0 <= s <= 1.0
        assert cosine_sim((1.0, 0.0), (1.0, 0.0)) == 1.0
        assert cosine_sim((1.0, 0.0), (-1.0, 0.0)) == -1.0

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateInputError):
            cosine_sim((0.0, 0.0), (1.0, 0.0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            cosine_sim((1.0, 0.0), (1.0, 0.0, 0.0))

    def test_matrix_agrees_with_pairwise(self):
        rng = make_rng(7)
        a = rng.normal(size=(5, 6))
        b = rng.normal(size=(4, 6))
        m = cosine_sim_matrix(a, b)
        assert m.shape == (5, 4)
        for i in range(5):
            for j in range(4):
                assert np.isclose(m[i, j], cosine_sim(a[i], b[j]), atol=1e-12)

    def test_matrix_zero_row_rejected(self):
        a = np.zeros((2, 3))
        a[0, 0] = 1.0
        with pytest.raises(DegenerateInputError):
            cosine_sim_matrix(a, np.ones((2, 3)))


class TestLogSumExp:
    def test_frozen_value(self):
        assert log_sum_exp((0.0, 1.0, 2.0)) == 2.4076059644443806

    def test_shift_invariance(self):
        rng = make_rng(8)
        for _ in range(100):
            xs = rng.normal(size=rng.integers(1, 20)) * 50
            c = rng.normal() * 100
            assert np.isclose(log_sum_exp(xs + c), log_sum_exp(xs) + c, atol=1e-9)

    def test_large_inputs_do_not_overflow(self):
        assert np.isclose(log_sum_exp((1000.0, 1000.0)), 1000.0 + np.log(2.0))
        assert np.isclose(log_sum_exp((-1000.0, -1000.0)), -1000.0 + np.log(2.0))

    def test_neg_inf_entries_drop_out(self):
        assert log_sum_exp((0.0, -np.inf)) == 0.0
        assert log_sum_exp((-np.inf, -np.inf)) == -np.inf

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            log_sum_exp(())

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            log_sum_exp((0.0, np.nan))

    def test_rows_variant_matches_scalar(self):
        rng = make_rng(9)
        m = rng.normal(size=(6, 5)) * 30
        rows = log_sum_exp_rows(m)
        for i in range(6):
            assert np.isclose(rows[i], log_sum_exp(m[i]), atol=1e-12)


class TestSoftmax:
    def test_frozen_values(self):
        got = softmax((1.0, 2.0, 3.0))
        expected = np.array(
            [0.09003057317038046, 0.24472847105479764, 0.6652409557748219]
        )
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-15)

    def test_sums_to_one(self):
        rng = make_rng(10)
        for _ in range(100):
            xs = rng.normal(size=rng.integers(1, 30)) * 100
            assert np.isclose(softmax(xs).sum(), 1.0, atol=1e-12)

    def test_shift_invariance(self):
        xs = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(softmax(xs), softmax(xs + 123.0), atol=1e-12)

    def test_row_axis(self):
        m = np.array([[0.0, 1.0], [5.0, 5.0]])
        out = softmax(m, axis=1)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(out[1], [0.5, 0.5], atol=1e-12)


class TestGradCheck:
    def test_accepts_correct_gradient(self):
        rng = make_rng(11)
        # quadratic form: f(x) = x' A x has gradient (A + A') x
        a = rng.normal(size=(6, 6))
        x = rng.normal(size=6)
        f = lambda v: float(v @ a @ v)
        g = (a + a.T) @ x
        assert grad_check(f, g, x) < 1e-8

    def test_rejects_corrupted_gradient(self):
        rng = make_rng(12)
        a = rng.normal(size=(4, 4))
        x = rng.normal(size=4)
        f = lambda v: float(v @ a @ v)
        g = (a + a.T) @ x
        g[2] += 0.05
        assert grad_check(f, g, x) > 1e-3

    def test_step_bounds_enforced(self):
        f = lambda v: float(np.sum(v**2))
        with pytest.raises(ValueError):
            grad_check(f, np.zeros(2), np.zeros(2), step=1e-8)
        with pytest.raises(ValueError):
            grad_check(f, np.zeros(2), np.zeros(2), step=1e-2)

    def test_shape_mismatch_rejected(self):
        f = lambda v: float(np.sum(v**2))
        with pytest.raises(ValueError):
            grad_check(f, np.zeros(3), np.zeros(2))
