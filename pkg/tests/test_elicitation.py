import pytest
from hypothesis import given, strategies as st

from ijdi.elicitation import (
    ElicitationResponse as R,
    cost_ratio_regression,
    cost_ratio_single,
    lambda_from_ratio,
    read_responses,
    split_valid,
    validate,
)
from ijdi.errors import DomainError


def test_valid_response():
    v = validate(R(30, 10, 25))
    assert v.ok and (v.x, v.y) == (20, 5.0)


def test_inconsistent_flagged():
    v = validate(R(30, 10, 15))
    assert not v.ok and "re-answer" in v.warning
    with pytest.raises(DomainError):
        cost_ratio_single(R(30, 10, 15))


@pytest.mark.parametrize("z", [(10, 10, 20), (30, 11, 25), (101, 9, 60), (-2, 4, 5)])
def test_invalid_inputs(z):
    with pytest.raises(DomainError):
        R(*z)


def test_non_integer():
    with pytest.raises(DomainError):
        R(30.0, 10, 25)


@pytest.mark.parametrize("z3,ratio", [(25, 1.0), (20, 0.0), (30, 2.0)])
def test_single_ratios(z3, ratio):
    assert cost_ratio_single(R(30, 10, z3)) == pytest.approx(ratio)


def test_regression_example():
    # ratios 1.0 at x=20 and 2.0 at x=40: 4 * (20*5 + 40*20) / (400 + 1600)
    assert cost_ratio_regression([R(30, 10, 25), R(40, 0, 40)]) == pytest.approx(1.8)
    assert cost_ratio_regression([R(30, 10, 20), R(40, 0, 20)]) == 0.0


def test_regression_empty():
    with pytest.raises(DomainError):
        cost_ratio_regression([])


responses = st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(0, 100)).filter(
    lambda t: t[0] != t[1] and (t[0] + t[1]) % 2 == 0 and t[2] >= (t[0] + t[1]) / 2
).map(lambda t: R(*t))


@given(responses)
def test_singleton_regression_equals_single(r):
    assert cost_ratio_regression([r]) == pytest.approx(cost_ratio_single(r))


@given(st.lists(responses, min_size=1, max_size=6))
def test_duplication_invariance(rs):
    assert cost_ratio_regression(rs + rs) == pytest.approx(cost_ratio_regression(rs))


@given(st.lists(responses, min_size=1, max_size=6))
def test_weighted_mean_of_singles(rs):
    w = [r.x**2 for r in rs]
    mean = sum(wi * cost_ratio_single(r) for wi, r in zip(w, rs)) / sum(w)
    assert cost_ratio_regression(rs) == pytest.approx(mean)


def test_lambda_from_ratio():
    assert lambda_from_ratio(1.5) == pytest.approx(4 / 3)
    assert lambda_from_ratio(2.0, 3.0) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        lambda_from_ratio(0.0)


def test_split_valid():
    good, bad = split_valid([R(30, 10, 25), R(30, 10, 15)])
    assert good == [R(30, 10, 25)] and len(bad) == 1


def test_read_responses(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("z1,z2,z3\n30,10,25\n40,0,30\n")
    assert read_responses(p) == [R(30, 10, 25), R(40, 0, 30)]
    p.write_text("z1,z2,z3\n30,10,25\n30,30,40\n")
    with pytest.raises(DomainError, match="row 3"):
        read_responses(p)
    p.write_text("z1,z2\n1,3\n")
    with pytest.raises(DomainError, match="missing"):
        read_responses(p)
    p.write_text("z1,z2,z3\n30,10,x\n")
    with pytest.raises(DomainError, match="row 2"):
        read_responses(p)
