import random
import re

import pytest

from rcpd.errors import ContractError
from rcpd.segmenter import Segmenter, SegmenterConfig, TokenEvent, segment


def steps(tokens, **cfg):
    return [b.at_step for b in segment(tokens, config=SegmenterConfig(**cfg))]


def test_terminal_period():
    assert steps(["The", " answer", " is", " 7."]) == [3]


def test_documented_false_positive_without_guards():
    assert steps(["e.g", ". wait"], decimal_guard=False) == [1]


def test_abbreviation_guard_suppresses():
    assert steps(["e.g", ". wait"], abbreviations=("e.g",)) == []


def test_decimal_guard_within_and_across_tokens():
    assert steps(["pi is 3.14 ok."]) == [0]
    assert steps(["x = 3.", "14 then."]) == [1]
    # a pending "." after a digit resolves to a boundary at its own step
    assert steps(["total 7.", " Next"]) == [0]
    assert steps(["total 7."]) == [0]


def test_runs_of_punctuation_and_blank_lines_close_once():
    assert steps(["Really?!", " yes..."]) == [0, 1]
    assert steps(["done.\n\n", "Next"]) == [0]
    assert steps(["para one", "\n", "\n", "two"]) == [2]


def test_one_boundary_per_token():
    segs = segment(["a. b. c."])
    assert [b.at_step for b in segs] == [0]


def test_boundary_carries_rank_of_closing_token():
    segs = segment(["so", " done."], ranks=[900, 4])
    assert segs[0].eot_rank_at_boundary == 4 and segs[0].sentence_index == 0


def test_out_of_order_step_is_a_contract_error():
    seg = Segmenter()
    seg.feed(TokenEvent(0, "a", 1))
    with pytest.raises(ContractError):
        seg.feed(TokenEvent(2, "b", 1))


def _random_stream(rng, n_tokens, n_periods):
    words = ["alpha", "beta", "gamma", "delta", "so", "then", "we", "check"]
    positions = sorted(rng.sample(range(n_tokens), n_periods))
    pos = set(positions)
    tokens = [" " + rng.choice(words) + ("." if i in pos else "") for i in range(n_tokens)]
    return tokens, positions


def _regex_oracle(tokens):
    """Boundary steps from a scan of the concatenated text."""
    text = "".join(tokens)
    ends, acc = [], 0
    for t in tokens:
        acc += len(t)
        ends.append(acc)
    out = []
    for m in re.finditer(r"[.?!](?=\s|$)", text):
        step = next(i for i, e in enumerate(ends) if m.start() < e)
        out.append(step)
    return out


def test_forty_periods_in_a_thousand_tokens():
    tokens, positions = _random_stream(random.Random(7), 1000, 40)
    got = steps(tokens)
    assert len(got) == 40
    assert got == positions == _regex_oracle(tokens)


@pytest.mark.parametrize("seed", range(5))
def test_matches_regex_oracle_on_random_streams(seed):
    tokens, _ = _random_stream(random.Random(seed), 300, 25)
    assert steps(tokens) == _regex_oracle(tokens)
