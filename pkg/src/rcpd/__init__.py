"""Early-exit detection for LLM reasoning streams from end-of-thinking token ranks."""

from .rules import RankWindow, RuleSet, StepRule, default_rcpd_rules, evaluate
from .strategies import Kind, StrategyConfig, decide_stop, run_strategy
from .trace_model import FULL, RANK_CAP, SCHEMA_VERSION, Corpus, ReasoningTrace, parse_corpus, write_corpus

__version__ = "0.1.0"

__all__ = [
    "FULL",
    "RANK_CAP",
    "SCHEMA_VERSION",
    "Corpus",
    "Kind",
    "RankWindow",
    "ReasoningTrace",
    "RuleSet",
    "StepRule",
    "StrategyConfig",
    "decide_stop",
    "default_rcpd_rules",
    "evaluate",
    "parse_corpus",
    "run_strategy",
    "write_corpus",
]
