import json
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablap.metrics import (
    EmptyRunSet,
    ScoredRun,
    chi_squared_accuracy_test,
    compute_metrics,
    contains_number,
    exact_match,
    normalize_answer,
)

FIXTURES = Path(__file__).parent / "fixtures"


def test_normalize_golden_cases():
    cases = json.loads((FIXTURES / "golden_normalize.json").read_text(encoding="utf-8"))
    assert len(cases) >= 30
    for case in cases:
        assert normalize_answer(case["input"]) == case["expected"], case


@settings(max_examples=1000, deadline=None)
@given(st.text(max_size=40))
def test_normalize_idempotent(s):
    once = normalize_answer(s)
    assert normalize_answer(once) == once


def test_contains_number():
    assert contains_number("59.33")
    assert contains_number("about 1,000 people")
    assert contains_number("-4")
    assert not contains_number("Paris")
    assert not contains_number("")


def test_exact_match_examples():
    assert exact_match("a, b", ["b", "a"], style="ftq")
    assert exact_match("5", ["5"], style="wtq")
    assert not exact_match("5", ["6"], style="wtq")


def test_exact_match_is_multiset_comparison():
    assert not exact_match("a", ["a", "a"], style="ftq")
    assert exact_match("a, a", ["a", "a"], style="ftq")


def test_exact_match_wtq_splits_on_pipe():
    assert exact_match("Lyon|Paris", ["Paris", "Lyon"], style="wtq")
    assert not exact_match("Lyon, Paris", ["Paris", "Lyon"], style="wtq")


def test_exact_match_normalizes_entities():
    assert exact_match("5.0", ["5"], style="wtq")
    assert exact_match("Laal Ishq", ["laal ishq"], style="ftq")
    assert exact_match(" 1,000 ", ["1000"], style="wtq")


def test_exact_match_requires_gold():
    with pytest.raises(ValueError):
        exact_match("x", [], style="wtq")


def test_exact_match_numeric_tolerance_flag_off_by_default():
    assert not exact_match("59.330001", ["59.33"], style="wtq")
    assert exact_match("59.330001", ["59.33"], style="wtq", numeric_tolerance=1e-6)
    assert not exact_match("59.4", ["59.33"], style="wtq", numeric_tolerance=1e-6)
    assert not exact_match("paris", ["59.33"], style="wtq", numeric_tolerance=1e-6)
    # multiset semantics preserved under tolerance
    assert exact_match("1.0000001|2", ["2", "1"], style="wtq", numeric_tolerance=1e-6)
    assert not exact_match("1.0000001", ["1", "1"], style="wtq", numeric_tolerance=1e-6)


def test_strip_units_flag():
    assert normalize_answer("42 points", strip_units=True) == "42"
    assert normalize_answer("3.50 km", strip_units=True) == "3.5"
    assert normalize_answer("42 points") == "42 points"
    assert normalize_answer("paris", strip_units=True) == "paris"
    assert exact_match("42 points", ["42"], style="wtq", strip_units=True)


@settings(max_examples=500, deadline=None)
@given(st.text(max_size=30).filter(lambda s: "|" not in s and ", " not in s))
def test_exact_match_reflexive(x):
    assert exact_match(x, [x], style="wtq")


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.text(min_size=1, max_size=10).filter(lambda s: "|" not in s.strip() and s.strip()), min_size=1, max_size=4),
    st.randoms(),
)
def test_exact_match_permutation_symmetric(entities, rnd):
    shuffled = list(entities)
    rnd.shuffle(shuffled)
    assert exact_match("|".join(shuffled), entities, style="wtq")


def test_compute_metrics_exact_regret():
    runs = [ScoredRun(correct=True, trusted=True)] * 779 + [ScoredRun(correct=True, trusted=False)] * 221
    m = compute_metrics(runs)
    assert m.tw_accuracy == Fraction(779, 1000)
    assert m.regret_ratio == Fraction(221, 1000)
    assert m.regret_ratio == 1 - m.tw_accuracy
    assert float(m.regret_ratio) == 0.221


def test_compute_metrics_hand_counted_fixture():
    # 10 runs, 6 correct; labels: 5 [True] on correct runs, 1 [False] on a
    # correct run, 3 [False] on wrong runs, 1 [True] on a wrong run.
    runs = (
        [ScoredRun(correct=True, trusted=True)] * 5
        + [ScoredRun(correct=True, trusted=False)]
        + [ScoredRun(correct=False, trusted=False)] * 3
        + [ScoredRun(correct=False, trusted=True)]
    )
    m = compute_metrics(runs)
    assert m.accuracy == Fraction(6, 10)
    assert m.tw_accuracy == Fraction(8, 10)
    assert m.regret_ratio == Fraction(2, 10)


def test_compute_metrics_all_correct_all_trusted():
    runs = [ScoredRun(correct=True, trusted=True, correct_a=True, correct_b=False)] * 4
    m = compute_metrics(runs)
    assert m.accuracy == 1 and m.tw_accuracy == 1 and m.regret_ratio == 0
    assert m.accuracy_a == 1 and m.accuracy_b == 0


def test_compute_metrics_empty():
    with pytest.raises(EmptyRunSet):
        compute_metrics([])


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.builds(ScoredRun, correct=st.booleans(), trusted=st.booleans()),
        min_size=1,
        max_size=30,
    ),
    st.randoms(),
)
def test_compute_metrics_permutation_invariant(runs, rnd):
    shuffled = list(runs)
    rnd.shuffle(shuffled)
    assert compute_metrics(runs) == compute_metrics(shuffled)


def test_chi_squared_against_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    stat, p = chi_squared_accuracy_test(3329, 4344, 3150, 4344)
    expected = scipy_stats.chi2_contingency(
        [[3329, 4344 - 3329], [3150, 4344 - 3150]], correction=False
    )
    assert stat == pytest.approx(expected.statistic, rel=1e-12)
    assert p == pytest.approx(expected.pvalue, rel=1e-9)
