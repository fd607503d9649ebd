import functools
from pathlib import Path

import pytest

from rcpd import synth
from rcpd.trace_model import FULL, Corpus, ReasoningTrace, SentenceRecord, TruncationOutcome

FIXTURES = Path(__file__).parent / "fixtures"


def make_trace(ranks, lengths=None, trace_id="t0", content=None, correct=None, full=(500, True, False),
               rcp_index=None, triggers=None, confs=None):
    """Build a trace by hand. ``content``/``correct`` give per-depth outcomes."""
    n = len(ranks)
    lengths = lengths or [100] * n
    cums, c = [], 0
    for ln in lengths:
        c += ln
        cums.append(c)
    sentences = tuple(
        SentenceRecord(
            i, cums[i], ranks[i],
            None if triggers is None else triggers[i],
            None if confs is None else confs[i],
        )
        for i in range(n)
    )
    content = content or [1000 - 10 * i for i in range(n)]
    correct = correct or [i >= n // 2 for i in range(n)]
    outcomes = {i: TruncationOutcome(i, content[i], correct[i], False) for i in range(n)}
    outcomes[FULL] = TruncationOutcome(FULL, *full)
    return ReasoningTrace(trace_id, sentences, outcomes, cums[-1], rcp_index)


@functools.lru_cache(maxsize=None)
def default_corpus(n=500, seed=42) -> Corpus:
    from dataclasses import replace

    return synth.generate(replace(synth.SynthParams(), n_traces=n, seed=seed))


@pytest.fixture(scope="session")
def corpus500():
    return default_corpus()


@pytest.fixture(scope="session")
def windows500(corpus500):
    return synth.label_windows(corpus500)


# acceptance results, printed once at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
