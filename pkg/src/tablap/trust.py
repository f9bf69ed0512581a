"""Trustworthiness labels and rejection filters.

A trust model emits [True]/[False] for each answer. Because its [False]
labels (rejections) are unreliable, they pass through a rejection filter:
either an expanding-window estimate of the model's running accuracy, or a
two-armed UCB bandit choosing between accepting and overriding the
rejection. [True] labels always pass through untouched.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, replace
from typing import Iterable, Optional

logger = logging.getLogger(__name__)

TRUE_TOKEN = "[True]"
FALSE_TOKEN = "[False]"

ARM_ACCEPT = 0
ARM_OVERRIDE = 1


@dataclass(frozen=True)
class TrustLabel:
    value: bool
    source: str = "raw_model"  # raw_model | filter_override

    @property
    def token(self) -> str:
        return TRUE_TOKEN if self.value else FALSE_TOKEN


def parse_trust_label(text: str) -> Optional[TrustLabel]:
    """First literal [True]/[False] token in a completion, or None."""
    i_true = text.find(TRUE_TOKEN)
    i_false = text.find(FALSE_TOKEN)
    if i_true < 0 and i_false < 0:
        return None
    if i_false < 0 or (0 <= i_true < i_false):
        return TrustLabel(True)
    return TrustLabel(False)


def evaluate_raw(inp, gateway) -> tuple[TrustLabel, dict]:
    """Query the trust model for one label. Returns (label, call trace).

    `inp` provides prompt_slots() with the question, table schema, and
    both branch answers (see selection.SelectionInput). A completion with
    neither token falls back to [True]: acceptance is the conservative
    default because the filters only correct rejections.
    """
    from .gateway import render
    from .prompts import DEFAULT_TEMPLATES

    prompt = render(DEFAULT_TEMPLATES["tw_evaluator"], inp.prompt_slots())
    completion = gateway.complete("tw_evaluator", prompt)
    label = parse_trust_label(completion.text)
    if label is None:
        logger.warning("trust completion had no [True]/[False] token; defaulting to [True]")
        label = TrustLabel(True)
    trace = {
        "completion": completion.text,
        "from_cache": completion.from_cache,
        "latency_ms": completion.latency_ms,
    }
    return label, trace


# ---------------------------------------------------------------------------
# Expanding window


@dataclass(frozen=True)
class EwState:
    """Running raw-label accuracy estimate over all instances seen."""

    t: int = 0
    num_correct: int = 0
    warmup: int = 50

    def __post_init__(self):
        if self.warmup < 1:
            raise ValueError("warmup must be a positive integer")
        if not 0 <= self.num_correct <= self.t:
            raise ValueError("num_correct must lie in [0, t]")


def ew_accuracy(state: EwState) -> float:
    """Estimated accuracy of the raw trust labels seen so far."""
    if state.t < 1:
        raise ValueError("accuracy undefined before the first update")
    return state.num_correct / state.t


def ew_filter(state: EwState, raw: TrustLabel, rng: random.Random) -> TrustLabel:
    """Filter one raw label.

    [True] passes through. During warmup every label is accepted. After
    warmup a [False] label is overridden to [True] with probability
    1 - accuracy(t), i.e. the more reliable the model has proven, the more
    its rejections are trusted.
    """
    if raw.value:
        return raw
    if state.t < state.warmup:
        return raw
    p_reject = 1.0 - ew_accuracy(state)
    if rng.random() < p_reject:
        return TrustLabel(True, source="filter_override")
    return raw


def ew_update(state: EwState, raw: TrustLabel, gold_correct: bool) -> EwState:
    """Record whether the raw label matched the ground truth. Tracks raw
    model correctness, not post-filter correctness."""
    correct = raw.value == gold_correct
    return replace(state, t=state.t + 1, num_correct=state.num_correct + int(correct))


# ---------------------------------------------------------------------------
# Two-armed UCB bandit


@dataclass(frozen=True)
class ArmState:
    n: int = 0
    reward_sum: float = 0

    def __post_init__(self):
        if self.n < 0 or not 0 <= self.reward_sum <= max(self.n, 0):
            raise ValueError("reward_sum must lie in [0, n] (Bernoulli rewards)")


@dataclass(frozen=True)
class MabState:
    """Two arms: accept the rejection label, or override it to [True]."""

    accept: ArmState = ArmState()
    override: ArmState = ArmState()
    t: int = 0
    c: float = 1.414

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("exploration parameter c must be >= 0")
        if self.accept.n + self.override.n > self.t:
            raise ValueError("arm pulls exceed global step count")

    def arm(self, index: int) -> ArmState:
        return self.accept if index == ARM_ACCEPT else self.override


def ucb_value(arm: ArmState, t: int, c: float) -> float:
    """Upper confidence bound: mean reward plus c * sqrt(ln t / n).

    An unplayed arm scores +inf so it is always explored first.
    """
    if arm.n == 0:
        return math.inf
    if t < 1:
        raise ValueError("t must be >= 1 once an arm has been played")
    mean = arm.reward_sum / arm.n
    return mean + c * math.sqrt(math.log(t) / arm.n)


def mab_filter(state: MabState, raw: TrustLabel) -> tuple[TrustLabel, Optional[int]]:
    """Filter one raw label, returning (label, pulled arm or None).

    [True] passes through without pulling an arm. For [False] the arm with
    the larger UCB is pulled; ties go to the accept arm so the raw model
    output wins on indifference.
    """
    if raw.value:
        return raw, None
    t = max(state.t, 1)
    ucb_accept = ucb_value(state.accept, t, state.c)
    ucb_override = ucb_value(state.override, t, state.c)
    if ucb_override > ucb_accept:
        return TrustLabel(True, source="filter_override"), ARM_OVERRIDE
    return raw, ARM_ACCEPT


def mab_update(state: MabState, arm: int, emitted: TrustLabel, gold_correct: bool) -> MabState:
    """Credit the pulled arm with a Bernoulli reward: 1 if the emitted
    label matched the ground truth, else 0."""
    if arm not in (ARM_ACCEPT, ARM_OVERRIDE):
        raise ValueError(f"unknown arm {arm}")
    reward = int(emitted.value == gold_correct)
    old = state.arm(arm)
    new_arm = ArmState(n=old.n + 1, reward_sum=old.reward_sum + reward)
    if arm == ARM_ACCEPT:
        return replace(state, accept=new_arm, t=state.t + 1)
    return replace(state, override=new_arm, t=state.t + 1)


# ---------------------------------------------------------------------------
# Sequencing wrapper and simulation


class RejectionFilter:
    """Stateful wrapper applying one filter kind in instance order.

    kind "none" passes every label through. Without ground truth (update
    never called) the state freezes: decisions continue from the frozen
    statistics.
    """

    def __init__(self, kind: str, warmup: int = 50, c: float = 1.414, seed: int = 0):
        if kind not in ("ew", "mab", "none"):
            raise ValueError(f"unknown filter kind: {kind!r}")
        self.kind = kind
        self.rng = random.Random(seed)
        self.ew = EwState(warmup=warmup)
        self.mab = MabState(c=c)

    def apply(self, raw: TrustLabel) -> tuple[TrustLabel, Optional[int]]:
        if self.kind == "none":
            return raw, None
        if self.kind == "ew":
            return ew_filter(self.ew, raw, self.rng), None
        return mab_filter(self.mab, raw)

    def update(self, raw: TrustLabel, emitted: TrustLabel, arm: Optional[int], gold_correct: bool) -> None:
        if self.kind == "ew":
            self.ew = ew_update(self.ew, raw, gold_correct)
        elif self.kind == "mab" and arm is not None:
            self.mab = mab_update(self.mab, arm, emitted, gold_correct)

    def stats(self) -> dict:
        if self.kind == "ew":
            return {"A": ew_accuracy(self.ew) if self.ew.t else None}
        if self.kind == "mab":
            t = max(self.mab.t, 1)
            return {
                "ucb_accept": _finite(ucb_value(self.mab.accept, t, self.mab.c)),
                "ucb_override": _finite(ucb_value(self.mab.override, t, self.mab.c)),
            }
        return {}


def _finite(x: float) -> Optional[float]:
    return x if math.isfinite(x) else None


def simulate_filter(
    stream: Iterable[tuple[bool, bool]],
    kind: str,
    warmup: int = 50,
    c: float = 1.414,
    seed: int = 0,
) -> list[dict]:
    """Run a rejection filter over a (raw_label, gold_correct) stream.

    Returns one trace row per step with the raw and emitted labels, the
    pulled arm, the filter statistics, and the cumulative TwAccuracy of
    the emitted labels.
    """
    filt = RejectionFilter(kind, warmup=warmup, c=c, seed=seed)
    trace = []
    n_ok = 0
    for step, (raw_value, gold_correct) in enumerate(stream, start=1):
        raw = TrustLabel(bool(raw_value))
        emitted, arm = filt.apply(raw)
        filt.update(raw, emitted, arm, gold_correct)
        n_ok += int(emitted.value == gold_correct)
        trace.append(
            {
                "step": step,
                "raw": raw.token,
                "emitted": emitted.token,
                "arm": arm,
                "stats": filt.stats(),
                "tw_accuracy": n_ok / step,
            }
        )
    return trace


def synthetic_stream(
    n: int, label_accuracy: float, answer_accuracy: float, rng: random.Random
) -> list[tuple[bool, bool]]:
    """Generate (raw_label, gold_correct) pairs where the raw label agrees
    with the ground truth with probability label_accuracy."""
    stream = []
    for _ in range(n):
        gold_correct = rng.random() < answer_accuracy
        correct_label = rng.random() < label_accuracy
        raw = gold_correct if correct_label else not gold_correct
        stream.append((raw, gold_correct))
    return stream
