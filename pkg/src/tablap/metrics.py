"""Answer normalization, exact-match scoring, and headline metrics.

Metrics ratios are kept as exact fractions so that identities like
regret_ratio == 1 - tw_accuracy hold without floating-point slack.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

_THOUSANDS_SEP = re.compile(r"(?<=\d),(?=\d{3}(?!\d))")
_NUMERIC = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)%?")
_QUOTE_PAIRS = {('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’")}

# Entity separator inside a prediction string, per answer style.
ENTITY_SEPARATORS = {"wtq": "|", "ftq": ", ", "generic": "|"}


class EmptyRunSet(ValueError):
    """Raised when metrics are requested over zero runs."""


def _strip_quotes(s: str) -> str:
    while len(s) >= 2 and (s[0], s[-1]) in _QUOTE_PAIRS:
        s = s[1:-1].strip()
    return s


def _canonical_number(s: str) -> str:
    # Exact string-level canonicalization; no float round-trip.
    sign = ""
    if s and s[0] in "+-":
        sign = "-" if s[0] == "-" else ""
        s = s[1:]
    if "." in s:
        int_part, frac_part = s.split(".", 1)
        frac_part = frac_part.rstrip("0")
    else:
        int_part, frac_part = s, ""
    int_part = int_part.lstrip("0") or "0"
    out = f"{int_part}.{frac_part}" if frac_part else int_part
    if out == "0":
        sign = ""
    return sign + out


def normalize_answer(raw: str, strip_units: bool = False) -> str:
    """Canonicalize an answer string for exact-match comparison.

    Trims, lowercases, collapses whitespace, strips surrounding quotes and
    trailing periods, removes thousands separators, and canonicalizes pure
    numbers ("5.0" -> "5", "5.50" -> "5.5"). A trailing "%" is kept.

    Units are kept by default; prompts are expected to suppress them.
    strip_units=True additionally drops a trailing word after a number
    ("42 points" -> "42") for models that ignore the instruction.
    """
    s = raw.strip()
    s = _strip_quotes(s)
    s = s.lower()
    s = re.sub(r"\s+", " ", s)
    s = s.rstrip(".").strip()
    s = _THOUSANDS_SEP.sub("", s)
    if strip_units:
        m = re.fullmatch(r"([+-]?(?:\d+\.?\d*|\.\d+))\s*[a-z°µ]+", s)
        if m:
            s = m.group(1)
    m = re.fullmatch(r"([+-]?(?:\d+\.?\d*|\.\d+))(%?)", s)
    if m:
        s = _canonical_number(m.group(1)) + m.group(2)
    return s


def contains_number(s: str) -> bool:
    """True if the string contains a decimal numeric token (thousands
    separators ignored)."""
    return bool(_NUMERIC.search(_THOUSANDS_SEP.sub("", s)))


def split_entities(pred: str, style: str = "wtq") -> list[str]:
    """Split a prediction into answer entities per dataset convention."""
    try:
        sep = ENTITY_SEPARATORS[style]
    except KeyError:
        raise ValueError(f"unknown answer style: {style!r}") from None
    return pred.split(sep)


def exact_match(
    pred: str,
    gold: Iterable[str],
    style: str = "wtq",
    numeric_tolerance: float | None = None,
    strip_units: bool = False,
) -> bool:
    """Exact match between prediction and gold answer entities.

    The prediction is split into entities per the dataset style and both
    sides are compared as multisets of normalized entities, so entity
    order never matters. Comparison is by canonical string; the optional
    numeric_tolerance (e.g. 1e-6, relative) exists for ablations only and
    is off by default.
    """
    gold = list(gold)
    if not gold:
        raise ValueError("gold answer list is empty")
    pred_norm = [normalize_answer(e, strip_units) for e in split_entities(pred, style)]
    gold_norm = [normalize_answer(e, strip_units) for e in gold]
    if numeric_tolerance is None:
        return Counter(pred_norm) == Counter(gold_norm)
    return _tolerant_multiset_match(pred_norm, gold_norm, numeric_tolerance)


def _entity_equal(a: str, b: str, rel_tol: float) -> bool:
    if a == b:
        return True
    try:
        return math.isclose(float(a), float(b), rel_tol=rel_tol)
    except ValueError:
        return False


def _tolerant_multiset_match(pred: list[str], gold: list[str], rel_tol: float) -> bool:
    if len(pred) != len(gold):
        return False
    remaining = list(gold)
    for p in pred:
        for i, g in enumerate(remaining):
            if _entity_equal(p, g, rel_tol):
                del remaining[i]
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class Metrics:
    """Headline metrics over a run set. All ratios are exact fractions."""

    n: int
    accuracy: Fraction
    tw_accuracy: Fraction
    regret_ratio: Fraction
    accuracy_a: Fraction
    accuracy_b: Fraction

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": float(self.accuracy),
            "tw_accuracy": float(self.tw_accuracy),
            "regret_ratio": float(self.regret_ratio),
            "accuracy_a": float(self.accuracy_a),
            "accuracy_b": float(self.accuracy_b),
        }


def compute_metrics(runs: Iterable) -> Metrics:
    """Compute Accuracy, TwAccuracy, and regret ratio over scored runs.

    Each run must expose: answer correctness (bool), the emitted trust
    label (True/False), and per-branch correctness. Accepts any object
    with attributes correct, trusted, correct_a, correct_b (see ScoredRun)
    or a mapping with those keys.
    """
    n = 0
    n_correct = 0
    n_label_ok = 0
    n_a = 0
    n_b = 0
    for run in runs:
        c, t, ca, cb = _scored_fields(run)
        n += 1
        n_correct += c
        n_label_ok += t == c
        n_a += ca
        n_b += cb
    if n == 0:
        raise EmptyRunSet("no runs to score")
    tw = Fraction(n_label_ok, n)
    return Metrics(
        n=n,
        accuracy=Fraction(n_correct, n),
        tw_accuracy=tw,
        regret_ratio=1 - tw,
        accuracy_a=Fraction(n_a, n),
        accuracy_b=Fraction(n_b, n),
    )


@dataclass(frozen=True)
class ScoredRun:
    """Minimal scoring view of one pipeline run."""

    correct: bool
    trusted: bool
    correct_a: bool = False
    correct_b: bool = False


def _scored_fields(run) -> tuple[bool, bool, bool, bool]:
    if isinstance(run, dict):
        return (
            bool(run["correct"]),
            bool(run["trusted"]),
            bool(run.get("correct_a", False)),
            bool(run.get("correct_b", False)),
        )
    return bool(run.correct), bool(run.trusted), bool(run.correct_a), bool(run.correct_b)


def chi_squared_accuracy_test(correct_a: int, n_a: int, correct_b: int, n_b: int) -> tuple[float, float]:
    """Pearson chi-squared test (1 dof, no continuity correction) comparing
    two accuracy counts. Returns (statistic, p_value)."""
    if min(n_a, n_b) <= 0 or correct_a > n_a or correct_b > n_b:
        raise ValueError("invalid contingency counts")
    table = [
        [correct_a, n_a - correct_a],
        [correct_b, n_b - correct_b],
    ]
    total = n_a + n_b
    col_totals = [table[0][0] + table[1][0], table[0][1] + table[1][1]]
    row_totals = [n_a, n_b]
    stat = 0.0
    for i in range(2):
        for j in range(2):
            expected = row_totals[i] * col_totals[j] / total
            if expected == 0:
                return 0.0, 1.0
            stat += (table[i][j] - expected) ** 2 / expected
    p = math.erfc(math.sqrt(stat / 2.0))
    return stat, p
