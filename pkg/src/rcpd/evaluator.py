"""Corpus replay, Token/Acc/CR aggregation and stage statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RCPDError, StrategyError
from .strategies import Kind, StrategyConfig, check_applicable, run_strategy
from .trace_model import FULL, Corpus


@dataclass(frozen=True)
class StrategyReport:
    strategy: str
    avg_total_tokens: float
    accuracy_pct: float
    compression_rate_pct: float
    n_traces: int
    loop_rate_pct: float
    total_tokens: int = 0  # exact integer sum, kept so CR needs no float re-sum


def compression_rate(avg_tokens: float, full_avg_tokens: float) -> float:
    """Percent of the full-reasoning average length (lower is better)."""
    if full_avg_tokens <= 0:
        raise RCPDError("full-reasoning average tokens must be positive")
    return 100.0 * avg_tokens / full_avg_tokens


def expand_budgets(configs, budgets) -> list[StrategyConfig]:
    """One BUDGET_FORCE config per budget, in place of any budget-force entry."""
    if not budgets:
        return list(configs)
    out = []
    for cfg in configs:
        if cfg.kind is Kind.BUDGET_FORCE:
            out.extend(StrategyConfig.make(Kind.BUDGET_FORCE, budget=b) for b in budgets)
        else:
            out.append(cfg)
    return out


def _aggregate(name, outcomes, full_total=None) -> StrategyReport:
    n = len(outcomes)
    total = sum(o.total_tokens for o in outcomes)
    correct = sum(o.correct for o in outcomes)
    looped = sum(o.looped for o in outcomes)
    avg = total / n
    # integer sums: ratio of averages == ratio of sums, order independent
    cr = 100.0 if full_total is None else 100.0 * total / full_total
    return StrategyReport(
        strategy=name,
        avg_total_tokens=avg,
        accuracy_pct=100.0 * correct / n,
        compression_rate_pct=cr,
        n_traces=n,
        loop_rate_pct=100.0 * looped / n,
        total_tokens=total,
    )


def evaluate_corpus(corpus: Corpus, configs, budgets=None) -> list[StrategyReport]:
    """Replay each strategy over every trace; FULL is always included first.

    All replays finish before any report is built, so an inapplicable
    strategy or a missing outcome fails without partial output.
    """
    configs = expand_budgets(configs, budgets)
    if not any(c.kind is Kind.FULL for c in configs):
        configs = [StrategyConfig.make(Kind.FULL)] + configs
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise StrategyError(f"duplicate strategy names: {names}")
    traces = corpus.traces
    for cfg in configs:
        check_applicable(cfg, traces)
    replays = [[run_strategy(cfg, t) for t in traces] for cfg in configs]

    full_idx = next(i for i, c in enumerate(configs) if c.kind is Kind.FULL)
    full_total = sum(o.total_tokens for o in replays[full_idx])
    return [_aggregate(cfg.name, outs, full_total) for cfg, outs in zip(configs, replays)]


# -- stage statistics -----------------------------------------------------------


@dataclass(frozen=True)
class DepthBucket:
    depth: int
    mean_content_tokens: float
    accuracy_pct: float
    n: int


@dataclass(frozen=True)
class StageStats:
    relative: bool
    buckets: tuple[DepthBucket, ...]
    window: tuple[int, int]
    correlation: float
    degenerate: bool
    n_points: int
    post_rcp_gains_pp: tuple[tuple[int, float, int], ...] = field(default=())

    @property
    def max_post_rcp_gain_pp(self) -> float:
        """Largest paired accuracy gain (pp) from one extra sentence past the RCP."""
        if not self.post_rcp_gains_pp:
            return 0.0
        return max(g for _, g, _ in self.post_rcp_gains_pp)


def pearson(x, y) -> tuple[float, bool]:
    """Pearson r; ``(0.0, True)`` when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return 0.0, True
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0, True
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r)), False


def stage_profile(corpus: Corpus, window=(-10, 0), min_depths: int = 5, min_support: int = 30) -> StageStats:
    """Per-depth content length and accuracy, plus the depth/content correlation.

    Depth is measured relative to the annotated RCP when every trace carries
    one (``t - rcp_index``), else as the absolute sentence index. ``window``
    is the half-open depth range ``[lo, hi)`` used for the correlation; with
    relative depths the default covers the ten sentences before the RCP.
    """
    relative = all(t.rcp_index is not None for t in corpus.traces)
    points: dict[int, list[tuple[int, bool]]] = {}
    xs, ys = [], []
    lo, hi = window
    per_trace = []
    for t in corpus.traces:
        keys = sorted(k for k in t.outcomes if k != FULL)
        if len(keys) < min_depths:
            raise RCPDError(
                f"insufficient truncation coverage: trace {t.trace_id!r} has {len(keys)} depths, need {min_depths}"
            )
        base = t.rcp_index if relative else 0
        depth_correct = {}
        for k in keys:
            out = t.outcomes[k]
            d = k - base
            points.setdefault(d, []).append((out.content_tokens, out.correct))
            depth_correct[d] = out.correct
            if lo <= d < hi:
                xs.append(d)
                ys.append(out.content_tokens)
        per_trace.append(depth_correct)

    buckets = tuple(
        DepthBucket(
            depth=d,
            mean_content_tokens=sum(c for c, _ in pts) / len(pts),
            accuracy_pct=100.0 * sum(ok for _, ok in pts) / len(pts),
            n=len(pts),
        )
        for d, pts in sorted(points.items())
    )
    r, degenerate = pearson(xs, ys)

    gains = []
    if relative:
        max_d = max(points)
        for d in range(0, max_d):
            pairs = [(dc[d], dc[d + 1]) for dc in per_trace if d in dc and d + 1 in dc]
            if len(pairs) < min_support:
                continue
            gain = 100.0 * sum(int(b) - int(a) for a, b in pairs) / len(pairs)
            gains.append((d, gain, len(pairs)))
    return StageStats(
        relative=relative,
        buckets=buckets,
        window=(lo, hi),
        correlation=r,
        degenerate=degenerate,
        n_points=len(xs),
        post_rcp_gains_pp=tuple(gains),
    )


# -- reporting ------------------------------------------------------------------

COLUMNS = ("strategy", "Token", "Acc", "CR", "loop%")


def _fmt_cr(cr: float) -> str:
    # 100 and above print one decimal; otherwise two
    return f"{cr:.1f}" if cr >= 100.0 else f"{cr:.2f}"


def _row(r: StrategyReport) -> list[str]:
    return [
        r.strategy,
        f"{r.avg_total_tokens:.0f}",
        f"{r.accuracy_pct:.2f}",
        _fmt_cr(r.compression_rate_pct),
        f"{r.loop_rate_pct:.2f}",
    ]


def emit_report(reports, fmt: str = "table") -> str:
    rows = [_row(r) for r in reports]
    fmt = fmt.lower()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(rows)
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(COLUMNS)]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()

    out = [line(COLUMNS), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"


def emit_stage_profile(stats: StageStats) -> str:
    """CSV of the per-depth buckets (the plotting interface)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depth", "mean_content_tokens", "accuracy_pct", "n"])
    for b in stats.buckets:
        w.writerow([b.depth, f"{b.mean_content_tokens:.2f}", f"{b.accuracy_pct:.2f}", b.n])
    return buf.getvalue()
