from pathlib import Path

import pytest

from rcpd.errors import RCPDError, StrategyError
from rcpd.evaluator import (
    StrategyReport,
    compression_rate,
    emit_report,
    emit_stage_profile,
    evaluate_corpus,
    pearson,
    stage_profile,
)
from rcpd.strategies import StrategyConfig
from rcpd.trace_model import Corpus

from conftest import FIXTURES, make_trace


def test_cr_examples():
    assert compression_rate(9958, 15435) == pytest.approx(64.52, abs=0.05)
    assert compression_rate(8052, 14259) == pytest.approx(56.47, abs=0.05)
    with pytest.raises(RCPDError):
        compression_rate(1, 0)


def small_corpus(correct=True):
    traces = tuple(
        make_trace(
            [900, 300, 40, 4, 3, 2, 800, 1],
            trace_id=f"t{i}",
            correct=[correct] * 8,
            full=(400 + i, correct, False),
            rcp_index=3,
        )
        for i in range(4)
    )
    return Corpus("small", traces)


def test_full_row_is_exactly_100_and_first():
    reports = evaluate_corpus(small_corpus(), [StrategyConfig.make("rcpd")])
    assert reports[0].strategy == "full"
    assert reports[0].compression_rate_pct == 100.0
    assert "100.0" in emit_report(reports[:1])


def test_strategy_identical_to_full():
    reports = evaluate_corpus(small_corpus(), [StrategyConfig.make("full", label="again"), StrategyConfig.make("full")])
    assert [r.compression_rate_pct for r in reports] == [100.0, 100.0]


def test_zero_correct_accuracy():
    reports = evaluate_corpus(small_corpus(correct=False), [StrategyConfig.make("no_think")])
    assert all(r.accuracy_pct == 0.0 for r in reports)


def test_budget_sweep_and_duplicates():
    reports = evaluate_corpus(small_corpus(), [StrategyConfig.make("budget_force", budget=1)], budgets=[150, 350])
    assert [r.strategy for r in reports] == ["full", "budget_force@150", "budget_force@350"]
    with pytest.raises(StrategyError, match="duplicate"):
        evaluate_corpus(small_corpus(), [StrategyConfig.make("rcpd"), StrategyConfig.make("rcpd")])


def test_inapplicable_strategy_fails_without_output():
    with pytest.raises(StrategyError):
        evaluate_corpus(small_corpus(), [StrategyConfig.make("deer")])


def test_table_and_csv_layout():
    reports = evaluate_corpus(small_corpus(), [StrategyConfig.make("rcpd")])
    table = emit_report(reports).splitlines()
    assert table[0].split() == ["strategy", "Token", "Acc", "CR", "loop%"]
    assert len(table) == 4
    csv = emit_report(reports, "csv").splitlines()
    assert csv[0] == "strategy,Token,Acc,CR,loop%" and len(csv) == 3
    with pytest.raises(ValueError):
        emit_report(reports, "xml")


GOLDEN_REPORTS = [
    StrategyReport("full", 15435.0, 72.22, 100.0, 90, 1.11),
    StrategyReport("budget_force@4000", 10373.0, 58.88, 67.2049, 90, 0.0),
    StrategyReport("no_think", 7271.0, 19.99, 47.1072, 90, 0.0),
    StrategyReport("deer", 13952.0, 72.22, 90.3919, 90, 0.0),
    StrategyReport("rcpd", 9958.0, 72.22, 64.5157, 90, 0.0),
    StrategyReport("deer_over", 15500.0, 70.0, 100.42, 90, 6.67),
]


@pytest.mark.parametrize("fmt,name", [("table", "report_golden.txt"), ("csv", "report_golden.csv")])
def test_report_golden(fmt, name):
    assert emit_report(GOLDEN_REPORTS, fmt) == (FIXTURES / name).read_text()


def test_pearson_degenerate_and_known():
    assert pearson([1, 2, 3], [5, 5, 5]) == (0.0, True)
    r, deg = pearson([1, 2, 3, 4], [8, 6, 4, 2])
    assert r == pytest.approx(-1.0) and not deg


def test_stage_profile_constant_content_is_degenerate():
    traces = tuple(
        make_trace([900] * 12, trace_id=f"c{i}", content=[300] * 12, rcp_index=10) for i in range(3)
    )
    stats = stage_profile(Corpus("flat", traces))
    assert stats.correlation == 0.0 and stats.degenerate
    assert stats.relative


def test_stage_profile_needs_coverage():
    with pytest.raises(RCPDError, match="insufficient truncation coverage"):
        stage_profile(Corpus("short", (make_trace([900, 3, 2]),)))


def test_stage_profile_csv():
    stats = stage_profile(small_corpus())
    lines = emit_stage_profile(stats).splitlines()
    assert lines[0] == "depth,mean_content_tokens,accuracy_pct,n"
    assert len(lines) == 1 + len(stats.buckets)
