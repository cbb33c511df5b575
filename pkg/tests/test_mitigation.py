import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ijdi import AuditTable, Subgroup, build_frame, membership
from ijdi.engine import criterion_holds
from ijdi.errors import DegenerateSubgroupError, DomainError
from ijdi.mitigation import (
    Termination,
    ThresholdPolicy,
    apply_policy,
    error_rate_report,
    eta_level,
    eta_threshold,
    iterative_correction,
    min_lambda_no_ijdi,
    order_statistic_threshold,
    policy_from_pairs,
    randomize_thresholds,
    randomized_two_group,
    with_subgroup_threshold,
)
from ijdi.scan import ScanConfig
from ijdi.significance import SignificanceConfig

from _tables import random_table, tables


def race_table():
    race = ["B", "B", "W", "W", "B", "W"]
    sex = ["M", "F", "M", "F", "M", "M"]
    p_hat0 = [0.47, 0.55, 0.42, 0.48, 0.3, 0.9]
    y0 = [0, 1, 0, 1, 1, 0]
    return AuditTable.from_columns({"race": race, "sex": sex}, y0, p_hat0, p_hat0, theta=0.45)


class TestPolicy:
    def test_default_only(self):
        t = apply_policy(race_table(), ThresholdPolicy(0.45))
        assert np.all(t.theta == 0.45)

    def test_override(self):
        t = apply_policy(race_table(), policy_from_pairs(0.45, [({"race": ["B"]}, 0.5)]))
        assert t.theta.tolist() == [0.5, 0.5, 0.45, 0.45, 0.5, 0.45]
        assert t.p_b.tolist() == [0, 1, 0, 1, 0, 1]

    def test_last_override_wins(self):
        pol = policy_from_pairs(0.45, [({"race": ["B"]}, 0.5), ({"sex": ["M"]}, 0.6)])
        t = apply_policy(race_table(), pol)
        assert t.theta.tolist() == [0.6, 0.5, 0.6, 0.45, 0.6, 0.6]

    def test_validation(self):
        with pytest.raises(DomainError):
            ThresholdPolicy(1.2)
        with pytest.raises(DomainError):
            policy_from_pairs(0.5, [({"race": ["B"]}, -0.1)])
        with pytest.raises(DomainError):
            apply_policy(race_table(), policy_from_pairs(0.5, [({"age": ["old"]}, 0.3)]))

    def test_round_trip(self):
        pol = policy_from_pairs(0.45, [({"race": ["B"]}, 0.5), ({"sex": ["M", "F"]}, 0.4)])
        assert ThresholdPolicy.from_dict(pol.to_dict()) == pol


class TestErrorRates:
    def test_all_zero(self):
        t = race_table().replace(p_b=[0] * 6)
        r = error_rate_report(t, Subgroup({"race": {"B"}}))
        assert (r.fpr_in, r.fpr_out, r.tpr_in, r.tpr_out) == (0, 0, 0, 0)

    def test_values(self):
        r = error_rate_report(race_table(), Subgroup({"race": {"B"}}))
        # negatives: B -> row 0 (0.47 > 0.45); W -> rows 2 (0), 5 (1)
        assert (r.fpr_in, r.fpr_out) == (1.0, 0.5)
        # positives: B -> rows 1 (1), 4 (0); W -> row 3 (1)
        assert (r.tpr_in, r.tpr_out) == (0.5, 1.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateSubgroupError):
            error_rate_report(race_table(), Subgroup.full())


class TestEta:
    def test_order_statistic_example(self):
        vals = np.arange(0.05, 1.0, 0.1)
        th = order_statistic_threshold(vals, 0.7)
        assert th == pytest.approx(0.65)
        assert np.sum(vals > th) == 3

    def test_level_one_is_max(self):
        vals = [0.3, 0.9, 0.1]
        assert order_statistic_threshold(vals, 1.0) == 0.9

    def test_level_zero_is_min(self):
        assert order_statistic_threshold([0.3, 0.9, 0.1], -0.4) == 0.1

    def test_empty(self):
        with pytest.raises(DegenerateSubgroupError):
            order_statistic_threshold([], 0.5)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0, 1))
    def test_guarantee(self, vals, level):
        th = order_statistic_threshold(vals, level)
        assert np.sum(np.array(vals) > th) <= (1 - level) * len(vals) + 1e-9

    def test_eta_on_table(self):
        # frame: S has 10 negatives with p_hat0 .05..95 and p 0.6;
        # complement has 10 negatives with rate 0.2 and p 0.5
        n_s = 10
        p_hat_s = list(np.arange(0.05, 1.0, 0.1))
        p_hat_o = [0.9, 0.9] + [0.1] * 8
        t = AuditTable.from_columns(
            {"g": ["S"] * n_s + ["O"] * 10}, [0] * 20, p_hat_s + p_hat_o, [0.6] * n_s + [0.5] * 10, theta=0.5
        )
        sg = Subgroup({"g": {"S"}})
        assert eta_level(t, sg, 1.0, "negative") == pytest.approx(0.7)
        assert eta_threshold(t, sg, 1.0, "negative") == pytest.approx(0.65)

    @settings(max_examples=60, deadline=None)
    @given(tables(), st.floats(0, 10), st.sampled_from(["negative", "positive"]), st.data())
    def test_post_correction_holds(self, t, lam, side, data):
        f = build_frame(t, side, lam)
        a = t.attributes[0]
        vals = sorted(set(t.feature_column(a)))
        chosen = data.draw(st.sets(st.sampled_from(vals), min_size=1))
        sg = Subgroup({a: chosen})
        mask = membership(sg, f)
        if not mask.any() or mask.all():
            return
        eta = eta_threshold(t, sg, lam, side)
        t2 = with_subgroup_threshold(t, sg, eta)
        outside = ~membership(sg, t)
        assert np.array_equal(t2.p_b[outside], t.p_b[outside])
        assert criterion_holds(build_frame(t2, side, lam), sg).holds


class TestIterative:
    def test_already_fair(self):
        # identical recommendations everywhere: nothing to flag at lambda 0
        n = 40
        rng = np.random.default_rng(0)
        t = AuditTable.from_columns(
            {"a": [f"v{x}" for x in rng.integers(0, 3, n)]}, [0] * n, [0.1] * n, [0.3] * n, theta=0.5
        )
        tr = iterative_correction(t, 0.0)
        assert tr.steps == () and tr.terminated is Termination.NO_SUBGROUP_FOUND

    def test_max_iterations(self):
        t = random_table(3, n=200)
        tr = iterative_correction(t, 0.5, max_iters=2)
        assert tr.iterations <= 2
        if tr.terminated is Termination.MAX_ITERATIONS:
            assert tr.iterations == 2

    def test_steps_satisfy_criterion(self):
        t = random_table(4, n=300)
        tr = iterative_correction(t, 1.0, max_iters=5)
        for s in tr.steps:
            assert s.margin_after >= -1e-12

    def test_not_significant_stop(self):
        t = random_table(5, n=150)
        tr = iterative_correction(t, 1.0, sig_config=SignificanceConfig(19, 0.05, 0), max_iters=10, scan_config=ScanConfig(restarts=5))
        assert tr.terminated in (Termination.NOT_SIGNIFICANT, Termination.NO_SUBGROUP_FOUND, Termination.MAX_ITERATIONS)
        assert tr.final_p_value is None or 0 < tr.final_p_value <= 1

    def test_planted_group_targeted_first(self):
        from ijdi.synthetic import DEMOGRAPHICS, Exp2Config, compas_like_features, generate_exp2, iou, random_planted

        feats = compas_like_features(7214, seed=11)
        planted = random_planted(feats, DEMOGRAPHICS, seed=12, min_size=100)
        t, _ = generate_exp2(feats, Exp2Config(3.0, planted, "ShiftProbability", seed=13))
        tr = iterative_correction(t, 1.0, max_iters=1)
        first = tr.steps[0]
        f = build_frame(t, "negative", 1.0)
        assert iou(first.subgroup, planted, f) > 0.5
        assert first.margin_after >= -1e-12


class TestRandomized:
    def test_bounds(self):
        th = randomize_thresholds(0.5, 0.25, 10**6, 0)
        assert th.min() >= 0.25 and th.max() <= 0.75
        sigma = (0.5 / math.sqrt(12)) / math.sqrt(10**6)
        assert abs(th.mean() - 0.5) <= 3 * sigma

    def test_errors(self):
        with pytest.raises(DomainError):
            randomize_thresholds(0.5, 0.0, 10, 0)
        with pytest.raises(DomainError):
            randomize_thresholds(0.9, 0.2, 10, 0)

    def test_deterministic(self):
        assert np.array_equal(randomize_thresholds(0.5, 0.1, 50, 3), randomize_thresholds(0.5, 0.1, 50, 3))

    def test_min_lambda(self):
        assert min_lambda_no_ijdi(0.25) == 2
        assert min_lambda_no_ijdi(0.5) == 1
        assert min_lambda_no_ijdi(0.05) == pytest.approx(10)
        with pytest.raises(DomainError):
            min_lambda_no_ijdi(0)

    def test_two_group_small(self):
        out = randomized_two_group(0.51, 0.49, 0.25, 20000, 0)
        assert out.bound == pytest.approx(0.04)
        assert out.fpr_a - out.fpr_b <= out.bound + 4 * math.sqrt(0.25 / 20000) * math.sqrt(2) * 2
