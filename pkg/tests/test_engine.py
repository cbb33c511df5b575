import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from ijdi import AuditTable, Side, Subgroup, build_frame
from ijdi.data import fmean
from ijdi.engine import (
    CostProfile,
    criterion_from_stats,
    criterion_holds,
    direct_rate_scan,
    edge_case_1_adjust,
    edge_case_2_adjust,
    equivalence_check,
    ijdi_scan,
    lambda_from_costs,
)
from ijdi.errors import DegenerateSubgroupError, DomainError, IterationLimitError, MisuseError
from ijdi.scan import ScanConfig

from _tables import random_table, tables


def two_group_frame(p_in, p_out, y_in=None, y_out=None, lam=1.0):
    n_in, n_out = len(p_in), len(p_out)
    y_in = [0] * n_in if y_in is None else y_in
    y_out = [0] * n_out if y_out is None else y_out
    n = n_in + n_out
    t = AuditTable.from_columns(
        {"g": ["S"] * n_in + ["T"] * n_out}, [0] * n, [0.5] * n, list(p_in) + list(p_out), p_b=list(y_in) + list(y_out)
    )
    return build_frame(t, "negative", lam), Subgroup({"g": {"S"}})


class TestCosts:
    def test_examples(self):
        assert lambda_from_costs(CostProfile(1, 1, 0.5, 1), "negative") == 4
        assert lambda_from_costs(CostProfile(1, 3, 2, 1), Side.NEGATIVE) == 2
        assert lambda_from_costs(CostProfile(2, 1, 1, 6), "positive") == 0.5

    def test_positive_required(self):
        for bad in (0, -1, math.inf, math.nan):
            with pytest.raises(DomainError):
                CostProfile(1, 1, bad, 1)

    def test_elicited_ratio_matches(self):
        # cost_dfpr = ratio * cost_fp reproduces (1 + fn/fp) / ratio
        for fp, fn, ratio in [(1, 1, 1.5), (2, 5, 0.3), (0.7, 0.2, 4.0)]:
            lam = lambda_from_costs(CostProfile(fp, fn, ratio * fp, 1), "negative")
            assert lam == pytest.approx((1 + fn / fp) / ratio, abs=1e-12)


class TestCriterion:
    def test_at_lambda_star(self):
        r = criterion_from_stats(1.0, 0.0, 0.51, 0.49, 50)
        assert r.holds and r.margin == pytest.approx(0, abs=1e-12)

    def test_violated(self):
        r = criterion_from_stats(1.0, 0.0, 0.51, 0.49, 10)
        assert not r.holds and r.margin == pytest.approx(-0.8)

    def test_fallback_boundary(self):
        assert criterion_from_stats(0.3, 0.3, 0.4, 0.6, 5).holds
        assert not criterion_from_stats(0.31, 0.3, 0.4, 0.6, 5).holds

    def test_on_frame(self):
        f, sg = two_group_frame([0.51] * 10, [0.49] * 10, [1] * 10, [0] * 10)
        assert criterion_holds(f, sg, 50).holds
        assert not criterion_holds(f, sg, 10).holds

    def test_degenerate(self):
        f, _ = two_group_frame([0.5], [0.5])
        with pytest.raises(DegenerateSubgroupError):
            criterion_holds(f, Subgroup.full(), 1)


class TestEquivalence:
    def test_single_record_violation(self):
        # S = one record with recommendation 1 and p equal to the frame mean
        f, sg = two_group_frame([0.5], [0.5, 0.5, 0.5], [1], [0, 1, 0])
        assert f.p_bar_b == 0.5
        assert equivalence_check(f, sg, 3.0) is False

    @settings(max_examples=300, deadline=None)
    @given(tables(), st.floats(0, 20), st.data())
    def test_verdicts_agree(self, t, lam, data):
        f = build_frame(t, "negative", lam)
        mask = np.array(data.draw(st.lists(st.booleans(), min_size=len(f), max_size=len(f))))
        assume(mask.any() and not mask.all())
        from ijdi.data import stats_from_mask

        st_ = stats_from_mask(f.y_scan, f.p, mask)
        assume(st_.p_in > st_.p_out)
        # drive through an explicit subgroup via a dedicated attribute
        feats = {"m": ["in" if m else "out" for m in mask]}
        t2 = AuditTable.from_columns(feats, [0] * len(f), [0.5] * len(f), f.p, p_b=f.y_scan)
        f2 = build_frame(t2, "negative", lam)
        sg = Subgroup({"m": {"in"}})
        assert equivalence_check(f2, sg) == criterion_holds(f2, sg).holds


class TestEdgeCase1:
    def test_all_below(self):
        f, sg = two_group_frame([0.2, 0.4], [0.5, 0.5])
        out = edge_case_1_adjust(f, sg)
        assert np.allclose(out.p[:2], [0.5, 0.5], atol=1e-15)

    def test_partial(self):
        f, sg = two_group_frame([0.2, 0.8], [0.6, 0.6])
        out = edge_case_1_adjust(f, sg)
        assert np.allclose(out.p[:2], [0.4, 0.8])
        assert fmean(out.p[:2]) == pytest.approx(0.6, abs=1e-12)

    def test_precondition(self):
        f, sg = two_group_frame([0.7, 0.9], [0.6, 0.6])
        with pytest.raises(MisuseError):
            edge_case_1_adjust(f, sg)

    def test_scan_values_recomputed(self):
        f, sg = two_group_frame([0.2, 0.4], [0.5, 0.5], lam=2.0)
        out = edge_case_1_adjust(f, sg)
        assert np.allclose(out.p_scan_uncensored, out.p_bar_b + 2.0 * (out.p - f.p_bar))
        assert out.p_bar == f.p_bar and out.p_bar_b == f.p_bar_b

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.lists(st.floats(0, 1), min_size=1, max_size=20))
    def test_identity_order_monotone(self, p_in, p_out):
        assume(fmean(np.array(p_in)) < fmean(np.array(p_out)) - 1e-9)
        f, sg = two_group_frame(p_in, p_out)
        out = edge_case_1_adjust(f, sg)
        n = len(p_in)
        new = out.p[:n]
        assert abs(fmean(new) - fmean(out.p[n:])) <= 1e-12
        assert (new >= np.array(p_in)).all() and (new <= 1).all()
        assert (out.p_scan_uncensored >= f.p_scan_uncensored - 1e-15).all()
        order = np.argsort(p_in, kind="stable")
        assert (np.diff(new[order]) >= -1e-15).all()


class TestEdgeCase2:
    def frame(self, unc):
        f, sg = two_group_frame([0.5] * len(unc), [0.5, 0.5])
        full = np.concatenate([unc, [0.5, 0.5]])
        return f.with_scan_values(uncensored=full), sg

    def test_beta(self):
        f, sg = self.frame([1.2, 0.6])
        out = edge_case_2_adjust(f, sg)
        assert np.allclose(out.p_scan_uncensored[:2], [1.2, 0.8])
        assert fmean(out.p_scan_censored[:2]) == pytest.approx(0.9, abs=1e-12)

    def test_saturate(self):
        f, sg = self.frame([1.5, 0.7])
        out = edge_case_2_adjust(f, sg)
        assert np.allclose(out.p_scan_censored[:2], [1.0, 1.0])

    def test_precondition(self):
        f, sg = self.frame([0.9, 0.6])
        with pytest.raises(MisuseError):
            edge_case_2_adjust(f, sg)

    def test_negative_entries_exact(self):
        # members below 0 only count once they cross 0; the mean must still match
        f, sg = self.frame([1.8, -0.6, 0.2, 0.1])
        prior = np.mean([1.8, -0.6, 0.2, 0.1])
        out = edge_case_2_adjust(f, sg)
        assert abs(fmean(out.p_scan_censored[:4]) - prior) <= 1e-12

    @given(st.lists(st.floats(-2, 3), min_size=1, max_size=20))
    def test_identity_monotone(self, unc):
        unc = np.array(unc)
        prior = fmean(unc)
        assume(fmean(np.clip(unc, 0, 1)) < min(prior, 1) - 1e-9)
        f, sg = self.frame(unc)
        out = edge_case_2_adjust(f, sg)
        n = len(unc)
        assert abs(fmean(out.p_scan_censored[:n]) - min(prior, 1.0)) <= 1e-12
        assert (out.p_scan_uncensored >= f.p_scan_uncensored).all()
        assert (out.p_scan_censored >= f.p_scan_censored).all()


class TestIjdiScan:
    def test_lambda_zero_reduction(self):
        for seed in range(10):
            t = random_table(seed, n=150)
            for side in ("negative", "positive"):
                a = ijdi_scan(t, 0.0, side, ScanConfig(seed=seed))
                b = direct_rate_scan(t, side, ScanConfig(seed=seed))
                assert a.subgroup == b.subgroup and a.f == b.f

    def test_costs_and_explicit_lambda(self):
        t = random_table(1)
        c = CostProfile(1, 1, 0.5, 1)
        a = ijdi_scan(t, costs=c)
        b = ijdi_scan(t, 4.0)
        assert a.f == b.f and a.subgroup == b.subgroup
        assert ijdi_scan(t, 0.0, costs=c).f == ijdi_scan(t, 0.0).f
        with pytest.raises(DomainError):
            ijdi_scan(t)

    def test_backstop(self):
        t = random_table(2, n=200)
        found = False
        for lam in (1.0, 5.0, 20.0):
            r = ijdi_scan(t, lam)
            if r.iterations > 1:
                found = True
                with pytest.raises(IterationLimitError):
                    ijdi_scan(t, lam, max_iterations=r.iterations - 1)
        assert found

    def test_edge_case_1_logged(self):
        # planted group has low base rates but high recommendation rate
        rng = np.random.default_rng(0)
        n = 400
        g = rng.integers(0, 2, n)
        p = np.where(g == 1, 0.2, 0.6)
        y_b = np.where(g == 1, rng.random(n) < 0.6, rng.random(n) < 0.3).astype(int)
        t = AuditTable.from_columns({"g": [f"v{x}" for x in g], "h": [f"w{x}" for x in rng.integers(0, 3, n)]}, [0] * n, p, p, p_b=y_b)
        r = ijdi_scan(t, 1.0)
        kinds = [a.kind for a in r.adjustments]
        assert "edge_case_1" in kinds
        assert r.subgroup.included.get("g") == frozenset({"v1"})
        adj = r.adjustments[0]
        assert adj.mean_after == pytest.approx(adj.target, abs=1e-12)

    def test_deterministic(self):
        t = random_table(4, n=200)
        a = ijdi_scan(t, 2.0, "positive", ScanConfig(seed=3))
        b = ijdi_scan(t, 2.0, "positive", ScanConfig(seed=3))
        assert a.subgroup == b.subgroup and a.f == b.f and len(a.adjustments) == len(b.adjustments)

    @settings(max_examples=30, deadline=None)
    @given(tables(max_rows=60), st.floats(0, 30), st.sampled_from(["negative", "positive"]))
    def test_terminates_and_valid(self, t, lam, side):
        r = ijdi_scan(t, lam, side, ScanConfig(restarts=3))
        assert r.f >= 0 and r.members.any()
        r.subgroup.validate(r.frame)

    def test_exp1_examples(self):
        from ijdi.synthetic import Exp1Config, compas_like_features, generate_exp1, iou, random_planted, DEMOGRAPHICS

        feats = compas_like_features(5000, seed=1)
        planted = random_planted(feats, DEMOGRAPHICS, seed=2, min_size=250)
        t, _ = generate_exp1(feats, Exp1Config(0, planted, seed=3))
        r10 = ijdi_scan(t, 10)
        assert iou(r10.subgroup, planted, r10.frame) > 0.95
        r60 = ijdi_scan(t, 60)
        assert r60.f < 1e-6 and iou(r60.subgroup, planted, r60.frame) < 0.1
