import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covgp.objective import (
    BatchEvaluation,
    ConfidenceLevels,
    LagrangeState,
    augmented_lagrangian,
    constraint_residual,
    coverage,
    lool_loss,
    mse_loss,
    z_score,
)


def z_by_bisection(alpha):
    """Solve erf(z / sqrt 2) = alpha by bisection."""
    lo, hi = 0.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.erf(mid / math.sqrt(2.0)) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ev_from_residuals(r, var=1.0):
    r = np.asarray(r, dtype=float)
    return BatchEvaluation(np.zeros_like(r), np.full_like(r, var), r)


class TestZScore:
    def test_ninety_five(self):
        assert z_score(0.95) == pytest.approx(1.959964, abs=1e-6)
        assert round(z_score(0.95), 2) == 1.96

    def test_half(self):
        assert z_score(0.5) == pytest.approx(0.674490, abs=1e-6)

    @pytest.mark.parametrize("alpha", [1e-6, 0.1, 0.5, 0.9, 0.925, 0.975, 0.99, 0.999])
    def test_against_bisection(self, alpha):
        assert z_score(alpha) == pytest.approx(z_by_bisection(alpha), abs=1e-9)

    def test_monotone(self):
        assert z_score(0.9) < z_score(0.99)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5, math.nan])
    def test_domain(self, alpha):
        with pytest.raises(ValueError):
            z_score(alpha)


class TestLevels:
    def test_z_scores_increasing(self):
        lv = ConfidenceLevels((0.9, 0.925, 0.95, 0.975, 0.99))
        assert all(b > a for a, b in zip(lv.z_scores, lv.z_scores[1:]))

    @pytest.mark.parametrize("alphas", [(), (0.9, 0.9), (0.95, 0.9), (0.0, 0.5), (0.5, 1.0)])
    def test_invalid(self, alphas):
        with pytest.raises(ValueError):
            ConfidenceLevels(alphas)


class TestLosses:
    def test_mse(self):
        assert mse_loss(ev_from_residuals([0.0, 0.0])) == 0.0
        assert mse_loss(ev_from_residuals([1.0, -1.0])) == 1.0
        assert mse_loss(ev_from_residuals([0.5, 2.5, -1.0, -3.0])) == 4.125

    def test_lool_examples(self):
        assert lool_loss(ev_from_residuals([0.0])) == 0.0
        assert lool_loss(ev_from_residuals([1.0])) == 1.0
        assert lool_loss(ev_from_residuals([0.0], var=math.e)) == pytest.approx(1.0, abs=1e-15)

    def test_lool_names_bad_batch_id(self):
        ev = BatchEvaluation([0.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.1, 0.2, 0.3], batch_ids=[7, 42, 9])
        with pytest.raises(ValueError, match="42"):
            lool_loss(ev)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            BatchEvaluation([0.0, 1.0], [1.0], [0.0, 1.0])


class TestCoverage:
    def test_perfect(self):
        assert coverage(ev_from_residuals([0.0, 0.0, 0.0]), 0.95) == 1.0

    def test_single_miss(self):
        assert coverage(ev_from_residuals([3.0]), 0.95, z=1.96) == 0.0

    def test_count(self):
        assert coverage(ev_from_residuals([0.5, 2.5, -1.0, -3.0]), 0.95, z=1.96) == 0.5

    def test_boundary_not_covered(self):
        ev = BatchEvaluation([0.0, 0.0], [4.0, 4.0], [2.0, -2.0])
        assert coverage(ev, 0.95, z=1.0) == 0.0

    def test_residual_vector(self):
        lv = ConfidenceLevels((0.9, 0.95))
        np.testing.assert_array_equal(constraint_residual(ev_from_residuals([0.0] * 4), lv), [1 - 0.9, 1 - 0.95])
        np.testing.assert_array_equal(constraint_residual(ev_from_residuals([1e6] * 4), lv), [-0.9, -0.95])

    def test_residual_subtraction(self):
        # 25 points: 23 inside the 0.90 band, 24 inside the 0.95 band -> 0.92, 0.96
        lv = ConfidenceLevels((0.90, 0.95))
        r = [0.0] * 23 + [0.5 * (lv.z_scores[0] + lv.z_scores[1]), 10.0]
        res = constraint_residual(ev_from_residuals(r), lv)
        np.testing.assert_allclose(res, [0.92 - 0.90, 0.96 - 0.95], atol=1e-15)


class TestAugmentedLagrangian:
    def _state(self, lam, beta):
        return LagrangeState(np.asarray(lam, float), beta, 2.0, ConfidenceLevels(tuple(np.linspace(0.5, 0.9, len(lam)))))

    def test_reduces_to_q(self):
        assert augmented_lagrangian(3.25, [0.0, 0.0], self._state([0.0, 0.0], 1.0)) == 3.25

    def test_linear_and_penalty(self):
        assert augmented_lagrangian(0.0, [0.1], self._state([1.0], 2.0)) == pytest.approx(0.11, abs=1e-15)
        assert augmented_lagrangian(5.0, [0.2], self._state([0.0], 10.0)) == pytest.approx(5.2, abs=1e-15)

    def test_beta_zero_lambda_zero_is_q(self):
        state = SimpleNamespace(lam=np.zeros(3), beta=0.0)
        assert augmented_lagrangian(-17.5, [0.3, -0.1, 0.2], state) == -17.5

    def test_quadratic_penalty_form(self):
        res = np.array([0.03, -0.02, 0.01])
        q, beta = 4.0, 8.0
        expected = q + beta / 2 * float(np.sum(res ** 2))
        assert augmented_lagrangian(q, res, self._state([0.0] * 3, beta)) == pytest.approx(expected, rel=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            augmented_lagrangian(0.0, [0.1, 0.2], self._state([0.0], 1.0))

    @pytest.mark.parametrize("beta,r", [(0.0, 2.0), (-1.0, 2.0), (1.0, 1.0)])
    def test_state_validation(self, beta, r):
        with pytest.raises(ValueError):
            LagrangeState(np.zeros(1), beta, r, ConfidenceLevels((0.9,)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), b=st.integers(1, 60), z1=st.floats(0.01, 5.0), z2=st.floats(0.01, 5.0))
def test_coverage_monotone_and_lattice(seed, b, z1, z2):
    rng = np.random.default_rng(seed)
    ev = BatchEvaluation(rng.standard_normal(b), rng.random(b) + 0.1, rng.standard_normal(b))
    lo, hi = sorted((z1, z2))
    c_lo, c_hi = coverage(ev, 0.5, z=lo), coverage(ev, 0.5, z=hi)
    assert 0.0 <= c_lo <= c_hi <= 1.0
    assert c_lo * b == pytest.approx(round(c_lo * b), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), b=st.integers(2, 40), cut=st.integers(1, 39))
def test_lool_additive(seed, b, cut):
    cut = min(cut, b - 1)
    rng = np.random.default_rng(seed)
    m, v, y = rng.standard_normal(b), rng.random(b) + 0.05, rng.standard_normal(b)
    whole = lool_loss(BatchEvaluation(m, v, y))
    parts = lool_loss(BatchEvaluation(m[:cut], v[:cut], y[:cut])) + lool_loss(BatchEvaluation(m[cut:], v[cut:], y[cut:]))
    singles = sum(lool_loss(BatchEvaluation(m[i:i + 1], v[i:i + 1], y[i:i + 1])) for i in range(b))
    assert whole == pytest.approx(parts, rel=1e-12, abs=1e-12)
    assert whole == pytest.approx(singles, rel=1e-12, abs=1e-12)
