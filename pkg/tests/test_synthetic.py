import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ijdi import Subgroup, binarize, build_frame, membership
from ijdi.data import group_stats
from ijdi.errors import DomainError
from ijdi.synthetic import (
    COMPAS_LIKE_MODEL,
    DEMOGRAPHICS,
    BaseModel,
    Exp1Config,
    Exp2Config,
    ShiftMode,
    categorical_frame,
    compas_like_features,
    fit_logistic,
    generate_exp1,
    generate_exp2,
    iou,
    iou_masks,
    lambda_star,
    lambda_star_monte_carlo,
    learned_probabilities,
    logit_shift_probability,
    logit_shift_threshold,
    one_hot,
    random_planted,
)


@pytest.fixture(scope="module")
def feats():
    return compas_like_features(3000, seed=0)


class TestExp1:
    def test_k0_exact_bands(self, feats):
        pl = random_planted(feats, DEMOGRAPHICS, seed=1, min_size=100)
        t, _ = generate_exp1(feats, Exp1Config(0, pl, seed=2))
        m = membership(pl, t)
        assert np.all(t.p[m] == 0.51) and np.all(t.p[~m] == 0.49)
        assert np.array_equal(t.p_b.astype(bool), m)
        assert np.array_equal(t.p_hat0, t.p)

    def test_k_le_1_rates(self, feats):
        pl = random_planted(feats, DEMOGRAPHICS, seed=3, min_size=100)
        t, _ = generate_exp1(feats, Exp1Config(1.0, pl, seed=4))
        s = group_stats(build_frame(t, "negative", 0), pl)
        assert (s.rate_in, s.rate_out) == (1.0, 0.0)

    def test_band_and_mean(self):
        f = categorical_frame(10**5, {"g": 2}, seed=0)
        pl = Subgroup({"g": {"v0"}})
        t, _ = generate_exp1(f, Exp1Config(10, pl, seed=5))
        m = membership(pl, t)
        assert t.p[m].min() >= 0.41 and t.p[m].max() <= 0.61
        n = m.sum()
        assert abs(t.y0[m].mean() - 0.51) <= 3 * math.sqrt(0.25 / n)

    def test_band_violation(self, feats):
        pl = random_planted(feats, DEMOGRAPHICS, seed=1)
        with pytest.raises(DomainError):
            Exp1Config(50, pl)

    def test_trivial_planted(self, feats):
        with pytest.raises(DomainError):
            generate_exp1(feats, Exp1Config(0, Subgroup.full()))


class TestLambdaStar:
    def test_values(self):
        assert lambda_star(0) == 50
        assert lambda_star(0.5) == 50
        assert lambda_star(3) == pytest.approx(16.66, abs=5e-4)
        assert lambda_star(10) == pytest.approx(4.9672, abs=5e-5)

    def test_continuity(self):
        assert lambda_star(1) == pytest.approx(50, rel=1e-3)

    def test_negative(self):
        with pytest.raises(DomainError):
            lambda_star(-1)

    def test_monte_carlo_small(self):
        est = lambda_star_monte_carlo(3, samples=200_000, seed=1)
        assert est.ratio == pytest.approx(lambda_star(3), rel=0.05)


class TestShifts:
    def test_identity(self):
        p = np.linspace(0, 1, 11)
        assert np.allclose(logit_shift_probability(p, 0), p)
        assert logit_shift_threshold(0.3, 0) == pytest.approx(0.3)

    def test_values(self):
        assert logit_shift_probability(0.5, math.log(2)) == pytest.approx(2 / 3)
        assert logit_shift_threshold(0.5, math.log(2)) == pytest.approx(1 / 3)

    def test_fixed_points(self):
        assert logit_shift_probability([0.0, 1.0], 2.0).tolist() == [0.0, 1.0]

    def test_threshold_domain(self):
        with pytest.raises(DomainError):
            logit_shift_threshold(1.0, 1)

    def test_equivalence_grid(self):
        p = np.linspace(0.001, 0.999, 401)
        for theta0 in (0.2, 0.45, 0.5, 0.7):
            for gamma in (-2.0, -0.5, 0.0, 0.3, 1.0, 3.0):
                a = binarize(logit_shift_probability(p, gamma), np.full(len(p), theta0))
                b = binarize(p, np.full(len(p), logit_shift_threshold(theta0, gamma)))
                assert np.array_equal(a, b)


class TestExp2:
    @settings(max_examples=15, deadline=None)
    @given(st.floats(-3, 3), st.integers(0, 10**6))
    def test_modes_agree(self, gamma, seed):
        f = compas_like_features(800, seed=seed)
        pl = random_planted(f, DEMOGRAPHICS, seed=seed, min_size=10)
        a, _ = generate_exp2(f, Exp2Config(gamma, pl, ShiftMode.SHIFT_PROBABILITY, seed=seed))
        b, _ = generate_exp2(f, Exp2Config(gamma, pl, ShiftMode.SHIFT_THRESHOLD, seed=seed))
        assert np.array_equal(a.p_b, b.p_b)
        assert np.array_equal(a.p, b.p) and np.array_equal(a.y0, b.y0)

    def test_gamma_zero_unshifted(self, feats):
        pl = random_planted(feats, DEMOGRAPHICS, seed=1, min_size=10)
        a, _ = generate_exp2(feats, Exp2Config(0.0, pl, seed=3))
        assert np.array_equal(a.p_b, binarize(a.p, np.full(len(a), 0.5)))

    def test_planted_attributes_excluded(self, feats):
        model = BaseModel(0.0, {"race": {"Caucasian": 1.0}})
        pl = Subgroup({"race": {"Caucasian"}})
        with pytest.raises(DomainError):
            generate_exp2(feats, Exp2Config(1.0, pl, base_model=model))

    def test_theta0_range(self, feats):
        with pytest.raises(DomainError):
            Exp2Config(1.0, Subgroup({"sex": {"Male"}}), theta0=1.0)

    def test_model_ignores_demographics(self):
        assert not set(COMPAS_LIKE_MODEL.coefficients) & set(DEMOGRAPHICS)


class TestLogistic:
    def test_saturated(self):
        rng = np.random.default_rng(0)
        n = 10**5
        g = rng.integers(0, 2, n)
        y = (rng.random(n) < np.where(g == 1, 0.8, 0.2)).astype(int)
        x, _ = one_hot({"g": [str(v) for v in g]})
        pred = fit_logistic(x, y).predict(x)
        for v in (0, 1):
            assert abs(pred[g == v][0] - y[g == v].mean()) <= 0.01

    def test_intercept_only(self):
        y = np.array([1, 0, 0, 1, 1])
        x, _ = one_hot({"a": ["z"] * 5})
        assert x.shape == (5, 0)
        assert np.allclose(fit_logistic(x, y).predict(x), 0.6)

    def test_separable_finite(self):
        x = np.array([[0.0], [0.0], [1.0], [1.0]])
        fit = fit_logistic(x, [0, 0, 1, 1])
        pred = fit.predict(x)
        assert np.all((pred > 0) & (pred < 1)) and np.all(np.isfinite(fit.coefficients))

    def test_degenerate(self):
        with pytest.raises(DomainError):
            fit_logistic(np.zeros((3, 1)), [1, 1, 1])

    def test_loglik_non_decreasing(self):
        rng = np.random.default_rng(1)
        f = compas_like_features(2000, seed=2)
        x, _ = one_hot(f)
        y = (rng.random(2000) < 0.4).astype(int)
        tr = fit_logistic(x, y).loglik_trace
        assert all(b >= a for a, b in zip(tr, tr[1:]))

    def test_learned_close_to_truth(self, feats):
        pl = random_planted(feats, DEMOGRAPHICS, seed=1, min_size=10)
        t, _ = generate_exp2(feats, Exp2Config(1.0, pl, seed=3))
        learned = learned_probabilities(t)
        assert np.corrcoef(learned, t.p)[0, 1] > 0.7


class TestIou:
    def test_cases(self):
        a = np.array([1, 1, 0, 0], bool)
        assert iou_masks(a, a) == 1
        assert iou_masks(a, ~a) == 0
        assert iou_masks(np.array([1, 0], bool), np.array([1, 1], bool)) == 0.5
        assert iou_masks(np.zeros(3, bool), np.zeros(3, bool)) == 1

    def test_subgroups(self, feats):
        t, pl = generate_exp1(feats, Exp1Config(0, random_planted(feats, DEMOGRAPHICS, seed=1, min_size=10)))
        f = build_frame(t, "negative", 0)
        assert iou(pl, pl, f) == 1.0
