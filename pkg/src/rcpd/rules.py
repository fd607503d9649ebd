"""Stepwise threshold rules over the end-of-thinking rank window.

A window is the rank at the current sentence boundary plus up to five
preceding boundary ranks, most recent first. A rule fires when the current
rank and every listed history rank are "within the top N" (``rank <= N``).
The cap value (``MAX``) marks a rank that was missing or deeper than the
serving stack exposes; it never satisfies any threshold.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError
from .trace_model import RANK_CAP

HISTORY_LEN = 5


class Action(str, enum.Enum):
    CONTINUE = "continue"
    TERMINATE_THINKING = "terminate_thinking"


@dataclass(frozen=True)
class RankWindow:
    current: int
    history: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.history) > HISTORY_LEN:
            raise ValueError(f"history holds at most {HISTORY_LEN} ranks")
        if self.current < 1 or any(r < 1 for r in self.history):
            raise ValueError("ranks are 1-based")

    def padded(self, cap: int = RANK_CAP) -> tuple[int, ...]:
        """History extended to five entries with the ``MAX`` sentinel."""
        return tuple(self.history) + (cap,) * (HISTORY_LEN - len(self.history))

    def as_row(self, cap: int = RANK_CAP) -> tuple[int, ...]:
        return (self.current,) + self.padded(cap)

    @classmethod
    def at(cls, ranks: Sequence[int], i: int) -> "RankWindow":
        """Window for sentence ``i`` of a rank sequence."""
        lo = max(0, i - HISTORY_LEN)
        return cls(ranks[i], tuple(ranks[lo:i][::-1]))


@dataclass(frozen=True)
class StepRule:
    rule_id: str
    current_threshold: int
    history_thresholds: tuple[tuple[int, int], ...] = ()

    def satisfied(self, window: RankWindow, cap: int = RANK_CAP) -> bool:
        cur = window.current
        if cur >= cap or cur > self.current_threshold:
            return False
        hist = window.history
        for offset, thr in self.history_thresholds:
            if offset > len(hist):
                return False
            r = hist[offset - 1]
            if r >= cap or r > thr:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "current_threshold": self.current_threshold,
            "history": [[o, t] for o, t in self.history_thresholds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRule":
        try:
            hist = tuple((int(o), int(t)) for o, t in d.get("history", ()))
            return cls(str(d["rule_id"]), int(d["current_threshold"]), hist)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed rule {d!r}: {exc}", field="rules") from None


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[StepRule, ...]

    def __post_init__(self):
        seen = set()
        for rule in self.rules:
            if rule.rule_id in seen:
                raise ValidationError(f"duplicate rule_id {rule.rule_id!r}", field="rules")
            seen.add(rule.rule_id)
            if rule.current_threshold < 1:
                raise ValidationError(f"{rule.rule_id}: thresholds must be >= 1", field="rules")
            offsets = [o for o, _ in rule.history_thresholds]
            if len(set(offsets)) != len(offsets):
                raise ValidationError(f"{rule.rule_id}: repeated history offset", field="rules")
            for o, t in rule.history_thresholds:
                if not 1 <= o <= HISTORY_LEN:
                    raise ValidationError(f"{rule.rule_id}: offset {o} outside [1, 5]", field="rules")
                if t < 1:
                    raise ValidationError(f"{rule.rule_id}: thresholds must be >= 1", field="rules")

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def ids(self) -> list[str]:
        return [r.rule_id for r in self.rules]

    def restrict(self, rule_ids: Iterable[str]) -> "RuleSet":
        keep = set(rule_ids)
        return RuleSet(tuple(r for r in self.rules if r.rule_id in keep))

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.rules]

    @classmethod
    def from_list(cls, items) -> "RuleSet":
        if isinstance(items, dict):
            items = items.get("rules", [])
        return cls(tuple(StepRule.from_dict(d) for d in items))

    def dumps(self) -> str:
        return json.dumps({"rules": self.to_list()}, indent=2) + "\n"

    def threshold_arrays(self):
        """Dense ``(current[R], history[R, 5])`` int64 arrays; 0 = unconstrained."""
        import numpy as np

        cur = np.array([r.current_threshold for r in self.rules], dtype=np.int64)
        hist = np.zeros((len(self.rules), HISTORY_LEN), dtype=np.int64)
        for i, rule in enumerate(self.rules):
            for o, t in rule.history_thresholds:
                hist[i, o - 1] = t
        return cur, hist


@dataclass(frozen=True)
class StopDecision:
    action: Action
    fired_rule: str | None = None

    @property
    def terminate(self) -> bool:
        return self.action is Action.TERMINATE_THINKING


CONTINUE = StopDecision(Action.CONTINUE)


def default_rcpd_rules() -> RuleSet:
    return RuleSet(
        (
            StepRule("R1", 5),
            StepRule("R2", 10, ((1, 50), (2, 100), (3, 1000))),
            StepRule("R3", 20, ((1, 20), (2, 20))),
            StepRule("R4", 50, ((1, 50), (2, 50), (3, 50), (4, 50), (5, 50))),
        )
    )


def evaluate(window: RankWindow, rules: RuleSet, cap: int = RANK_CAP) -> StopDecision:
    """First satisfied rule in rule order decides; otherwise continue."""
    for rule in rules.rules:
        if rule.satisfied(window, cap):
            return StopDecision(Action.TERMINATE_THINKING, rule.rule_id)
    return CONTINUE


def oracle_evaluate(window: RankWindow, cap: int = RANK_CAP) -> StopDecision:
    """Literal restatement of the four default rules. Test use only."""
    c = window.current
    h = window.padded(cap)

    def top(rank, n):
        return rank != cap and rank <= n

    if top(c, 5):
        return StopDecision(Action.TERMINATE_THINKING, "R1")
    if top(c, 10) and top(h[0], 50) and top(h[1], 100) and top(h[2], 1000):
        return StopDecision(Action.TERMINATE_THINKING, "R2")
    if top(c, 20) and top(h[0], 20) and top(h[1], 20):
        return StopDecision(Action.TERMINATE_THINKING, "R3")
    if (
        top(c, 50)
        and top(h[0], 50)
        and top(h[1], 50)
        and top(h[2], 50)
        and top(h[3], 50)
        and top(h[4], 50)
    ):
        return StopDecision(Action.TERMINATE_THINKING, "R4")
    return CONTINUE


def load_rules(path) -> RuleSet:
    """Load a RuleSet from a JSON rules file or a TOML config with ``[[rules]]``."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        from .config import toml_loads

        data = toml_loads(text)
    else:
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise ValidationError(f"{path}: malformed rules file ({exc})") from None
    return RuleSet.from_list(data)
