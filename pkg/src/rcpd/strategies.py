"""Early-exit strategies replayed over recorded traces.

Every strategy maps a trace to a truncation point: a sentence index after
which thinking is force-terminated, or ``FULL`` for no intervention. The
outcome of that truncation is then looked up in the trace's recorded
outcome table; replay never extrapolates.
"""

from __future__ import annotations

import bisect
import enum
import functools
from dataclasses import dataclass

from . import kernels
from .errors import StrategyError
from .rules import RuleSet, default_rcpd_rules
from .trace_model import FULL, RANK_CAP, ReasoningTrace, TruncationKey, lookup_outcome

DEFAULT_DEER_THRESHOLD = 0.95


class Kind(str, enum.Enum):
    FULL = "full"
    BUDGET_FORCE = "budget_force"
    NO_THINK = "no_think"
    THINK_RANK_5 = "think_rank_5"
    DEER = "deer"
    RCPD = "rcpd"


@dataclass(frozen=True)
class StrategyConfig:
    kind: Kind
    budget_tokens: int | None = None
    deer_confidence_threshold: float | None = None
    rules: RuleSet | None = None
    label: str | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        need_budget = kind is Kind.BUDGET_FORCE
        need_deer = kind is Kind.DEER
        need_rules = kind is Kind.RCPD
        if need_budget != (self.budget_tokens is not None):
            raise StrategyError(f"{kind.value}: budget_tokens is {'required' if need_budget else 'not allowed'}")
        if need_budget and self.budget_tokens <= 0:
            raise StrategyError("budget_tokens must be > 0")
        if need_deer != (self.deer_confidence_threshold is not None):
            raise StrategyError(
                f"{kind.value}: deer_confidence_threshold is {'required' if need_deer else 'not allowed'}"
            )
        if need_deer and not 0.0 <= self.deer_confidence_threshold <= 1.0:
            raise StrategyError("deer_confidence_threshold must lie in [0, 1]")
        if need_rules != (self.rules is not None):
            raise StrategyError(f"{kind.value}: rules are {'required' if need_rules else 'not allowed'}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind is Kind.BUDGET_FORCE:
            return f"budget_force@{self.budget_tokens}"
        return self.kind.value

    @classmethod
    def make(cls, kind, budget=None, deer_threshold=None, rules=None, label=None) -> "StrategyConfig":
        """Build a config, filling the kind's defaults."""
        kind = Kind(kind)
        if kind is Kind.DEER and deer_threshold is None:
            deer_threshold = DEFAULT_DEER_THRESHOLD
        if kind is Kind.RCPD and rules is None:
            rules = default_rcpd_rules()
        return cls(
            kind,
            budget_tokens=budget if kind is Kind.BUDGET_FORCE else None,
            deer_confidence_threshold=deer_threshold if kind is Kind.DEER else None,
            rules=rules if kind is Kind.RCPD else None,
            label=label,
        )


@dataclass(frozen=True)
class StrategyOutcome:
    trace_id: str
    truncate_at: TruncationKey
    fired_rule: str | None
    think_tokens: int
    content_tokens: int
    total_tokens: int
    correct: bool
    looped: bool


@functools.lru_cache(maxsize=64)
def _arrays(rules: RuleSet):
    return rules.threshold_arrays()


def rcpd_first_fire(ranks, rules: RuleSet, cap: int = RANK_CAP) -> tuple[int, str | None]:
    """First sentence where any rule fires over its window, or ``(-1, None)``."""
    if not rules.rules:
        return -1, None
    cur, hist = _arrays(rules)
    i, r = kernels.first_firing(ranks, cur, hist, cap)
    if i < 0:
        return -1, None
    return i, rules.rules[r].rule_id


def deer_applicable(trace: ReasoningTrace) -> bool:
    for s in trace.sentences:
        if s.trigger_word is None:
            return False
        if s.trigger_word and s.boxed_confidence is None:
            return False
    return True


def _decide(config: StrategyConfig, trace: ReasoningTrace, cap: int) -> tuple[TruncationKey, str | None]:
    kind = config.kind
    if kind is Kind.FULL:
        return FULL, None
    if kind is Kind.NO_THINK:
        return 0, None
    if kind is Kind.BUDGET_FORCE:
        cums = [s.think_tokens_cum for s in trace.sentences]
        i = bisect.bisect_left(cums, config.budget_tokens)
        return (i, None) if i < len(cums) else (FULL, None)
    if kind is Kind.THINK_RANK_5:
        for s in trace.sentences:
            if s.eot_rank < cap and s.eot_rank <= 5:
                return s.index, None
        return FULL, None
    if kind is Kind.DEER:
        if not deer_applicable(trace):
            raise StrategyError(
                f"strategy inapplicable to corpus: trace {trace.trace_id!r} lacks trigger/confidence fields"
            )
        thr = config.deer_confidence_threshold
        for s in trace.sentences:
            if s.trigger_word and s.boxed_confidence >= thr:
                return s.index, None
        return FULL, None
    if kind is Kind.RCPD:
        i, rule = rcpd_first_fire([s.eot_rank for s in trace.sentences], config.rules, cap)
        return (i, rule) if i >= 0 else (FULL, None)
    raise StrategyError(f"unknown strategy kind {kind!r}")


def decide_stop(config: StrategyConfig, trace: ReasoningTrace, cap: int = RANK_CAP) -> TruncationKey:
    """Sentence index after which the strategy ends thinking, or ``FULL``."""
    return _decide(config, trace, cap)[0]


def run_strategy(config: StrategyConfig, trace: ReasoningTrace, cap: int = RANK_CAP) -> StrategyOutcome:
    truncate_at, fired = _decide(config, trace, cap)
    outcome = lookup_outcome(trace, truncate_at)
    if config.kind is Kind.NO_THINK:
        think = 0
    else:
        think = trace.think_tokens_at(truncate_at)
    return StrategyOutcome(
        trace_id=trace.trace_id,
        truncate_at=truncate_at,
        fired_rule=fired,
        think_tokens=think,
        content_tokens=outcome.content_tokens,
        total_tokens=think + outcome.content_tokens,
        correct=outcome.correct,
        looped=outcome.looped,
    )


def check_applicable(config: StrategyConfig, traces) -> None:
    """Raise before any replay if ``config`` cannot run on every trace."""
    if config.kind is Kind.DEER:
        for t in traces:
            if not deer_applicable(t):
                raise StrategyError(
                    f"strategy inapplicable to corpus: trace {t.trace_id!r} lacks trigger/confidence fields"
                )
    for t in traces:
        if config.kind is Kind.NO_THINK and 0 not in t.outcomes:
            raise StrategyError(f"no_think needs outcome 0; trace {t.trace_id!r} has none")
