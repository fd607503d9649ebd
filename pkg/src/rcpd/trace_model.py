"""Reasoning-trace data model and the line-delimited corpus format.

A corpus file holds one JSON object per line, one trace per line::

    {"schema_version":1,"corpus":"demo","trace_id":"q0","rcp_index":3,
     "full_think_tokens":412,"sentences":[...],"outcomes":{"0":{...},"full":{...}},
     "meta":{...}}

Truncation keys are stringified sentence indices plus the literal ``"full"``
for the unmodified run. Ranks deeper than :data:`RANK_CAP` are stored as the
cap value itself (the ``MAX`` sentinel).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

from .errors import OutcomeMissingError, ParseError, ValidationError

SCHEMA_VERSION = 1
RANK_CAP = 1024
MAX_RANK = RANK_CAP
FULL = "full"

TruncationKey = Union[int, str]


def clamp_rank(rank: int, cap: int = RANK_CAP) -> int:
    """Map a raw 1-based rank onto the stored scale (``cap`` means beyond cap)."""
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    return min(int(rank), cap)


@dataclass(frozen=True)
class SentenceRecord:
    index: int
    think_tokens_cum: int
    eot_rank: int
    trigger_word: bool | None = None
    boxed_confidence: float | None = None
    text_digest: str | None = None


@dataclass(frozen=True)
class TruncationOutcome:
    truncate_at: TruncationKey
    content_tokens: int
    correct: bool
    looped: bool = False


@dataclass(frozen=True)
class ReasoningTrace:
    trace_id: str
    sentences: tuple[SentenceRecord, ...]
    outcomes: Mapping[TruncationKey, TruncationOutcome]
    full_think_tokens: int
    rcp_index: int | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def ranks(self) -> list[int]:
        return [s.eot_rank for s in self.sentences]

    def think_tokens_at(self, truncate_at: TruncationKey) -> int:
        """Think tokens spent when thinking stops after ``truncate_at``."""
        if truncate_at == FULL:
            return self.full_think_tokens
        if not 0 <= truncate_at < len(self.sentences):
            raise OutcomeMissingError(self.trace_id, truncate_at)
        return self.sentences[truncate_at].think_tokens_cum


@dataclass(frozen=True)
class Corpus:
    name: str
    traces: tuple[ReasoningTrace, ...]
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def by_id(self) -> dict[str, ReasoningTrace]:
        return {t.trace_id: t for t in self.traces}


def lookup_outcome(trace: ReasoningTrace, truncate_at: TruncationKey) -> TruncationOutcome:
    """Return the recorded outcome; never interpolates between recorded depths."""
    try:
        return trace.outcomes[truncate_at]
    except KeyError:
        raise OutcomeMissingError(trace.trace_id, truncate_at) from None


def run_cost(trace: ReasoningTrace, truncate_at: TruncationKey) -> int:
    """Total tokens of the recorded run: think tokens at the cut plus content."""
    outcome = lookup_outcome(trace, truncate_at)
    return trace.think_tokens_at(truncate_at) + outcome.content_tokens


# -- validation ---------------------------------------------------------------


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_trace(trace: ReasoningTrace, cap: int = RANK_CAP) -> None:
    tid = trace.trace_id

    def fail(fld, msg):
        raise ValidationError(msg, trace_id=tid, field=fld)

    if not isinstance(tid, str) or not tid:
        fail("trace_id", "must be a non-empty string")
    if not trace.sentences:
        fail("sentences", "trace has no sentences")

    prev_cum = 0
    for i, s in enumerate(trace.sentences):
        if not _is_int(s.index) or s.index != i:
            fail("sentences.index", f"expected contiguous index {i}, got {s.index!r}")
        if not _is_int(s.think_tokens_cum) or s.think_tokens_cum <= prev_cum:
            fail(
                "sentences.think_tokens_cum",
                f"sentence {i}: must be strictly increasing and >= 1",
            )
        prev_cum = s.think_tokens_cum
        if not _is_int(s.eot_rank) or not 1 <= s.eot_rank <= cap:
            fail("sentences.eot_rank", f"sentence {i}: rank {s.eot_rank!r} outside [1, {cap}]")
        if s.trigger_word is not None and not isinstance(s.trigger_word, bool):
            fail("sentences.trigger_word", f"sentence {i}: must be boolean or null")
        if s.boxed_confidence is not None:
            c = s.boxed_confidence
            if isinstance(c, bool) or not isinstance(c, (int, float)) or not (0.0 <= c <= 1.0):
                fail("sentences.boxed_confidence", f"sentence {i}: {c!r} outside [0, 1]")
        if s.text_digest is not None and not isinstance(s.text_digest, str):
            fail("sentences.text_digest", f"sentence {i}: must be a string or null")

    if trace.full_think_tokens != trace.sentences[-1].think_tokens_cum:
        fail("full_think_tokens", "must equal think_tokens_cum of the last sentence")

    if trace.rcp_index is not None:
        if not _is_int(trace.rcp_index) or not 0 <= trace.rcp_index < len(trace.sentences):
            fail("rcp_index", f"{trace.rcp_index!r} does not reference a sentence")

    if FULL not in trace.outcomes:
        fail("outcomes", "missing the 'full' outcome")
    n = len(trace.sentences)
    for key, out in trace.outcomes.items():
        if key != FULL and not (_is_int(key) and 0 <= key < n):
            fail("outcomes", f"key {key!r} does not reference a sentence")
        if out.truncate_at != key:
            fail("outcomes", f"key {key!r} holds outcome for {out.truncate_at!r}")
        if not _is_int(out.content_tokens) or out.content_tokens < 0:
            fail("outcomes.content_tokens", f"key {key!r}: must be a non-negative integer")
        if not isinstance(out.correct, bool) or not isinstance(out.looped, bool):
            fail("outcomes", f"key {key!r}: correct/looped must be boolean")
        if out.looped and out.correct:
            fail("outcomes.looped", f"key {key!r}: looped outcome cannot be correct")


def validate_corpus(corpus: Corpus, cap: int = RANK_CAP) -> None:
    if not corpus.traces:
        raise ValidationError("empty corpus")
    if corpus.schema_version != SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported schema_version {corpus.schema_version}", field="schema_version"
        )
    seen = set()
    for trace in corpus.traces:
        if trace.trace_id in seen:
            raise ValidationError("duplicate trace_id", trace_id=trace.trace_id, field="trace_id")
        seen.add(trace.trace_id)
        validate_trace(trace, cap)


# -- encoding -----------------------------------------------------------------


def _outcome_sort_key(key):
    return (1, 0) if key == FULL else (0, key)


def trace_to_record(trace: ReasoningTrace, corpus_name: str, schema_version: int) -> dict:
    sentences = [
        {
            "index": s.index,
            "think_tokens_cum": s.think_tokens_cum,
            "eot_rank": s.eot_rank,
            "trigger_word": s.trigger_word,
            "boxed_confidence": s.boxed_confidence,
            "text_digest": s.text_digest,
        }
        for s in trace.sentences
    ]
    outcomes = {
        str(k): {
            "content_tokens": trace.outcomes[k].content_tokens,
            "correct": trace.outcomes[k].correct,
            "looped": trace.outcomes[k].looped,
        }
        for k in sorted(trace.outcomes, key=_outcome_sort_key)
    }
    # meta is free-form; canonicalise nested key order
    meta = json.loads(json.dumps(dict(trace.meta), sort_keys=True))
    return {
        "schema_version": schema_version,
        "corpus": corpus_name,
        "trace_id": trace.trace_id,
        "rcp_index": trace.rcp_index,
        "full_think_tokens": trace.full_think_tokens,
        "sentences": sentences,
        "outcomes": outcomes,
        "meta": meta,
    }


def dumps_trace(trace: ReasoningTrace, corpus_name: str, schema_version: int = SCHEMA_VERSION) -> str:
    record = trace_to_record(trace, corpus_name, schema_version)
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


_REQUIRED = ("schema_version", "trace_id", "full_think_tokens", "sentences", "outcomes")
_SENTENCE_FIELDS = ("index", "think_tokens_cum", "eot_rank")


def _parse_key(raw: str, line: int):
    if raw == FULL:
        return FULL
    if raw.isdigit() and (raw == "0" or not raw.startswith("0")):
        return int(raw)
    raise ParseError(f"bad outcome key {raw!r}", line)


def record_to_trace(rec: Mapping[str, Any], line: int | None = None) -> ReasoningTrace:
    if not isinstance(rec, Mapping):
        raise ParseError("record is not an object", line)
    for name in _REQUIRED:
        if name not in rec:
            raise ParseError(f"missing field {name!r}", line)
    raw_sentences = rec["sentences"]
    raw_outcomes = rec["outcomes"]
    if not isinstance(raw_sentences, list) or not isinstance(raw_outcomes, Mapping):
        raise ParseError("sentences must be a list and outcomes an object", line)
    sentences = []
    for raw in raw_sentences:
        if not isinstance(raw, Mapping) or any(f not in raw for f in _SENTENCE_FIELDS):
            raise ParseError("sentence record missing index/think_tokens_cum/eot_rank", line)
        sentences.append(
            SentenceRecord(
                index=raw["index"],
                think_tokens_cum=raw["think_tokens_cum"],
                eot_rank=raw["eot_rank"],
                trigger_word=raw.get("trigger_word"),
                boxed_confidence=raw.get("boxed_confidence"),
                text_digest=raw.get("text_digest"),
            )
        )
    outcomes = {}
    for raw_key, raw in raw_outcomes.items():
        key = _parse_key(raw_key, line)
        if not isinstance(raw, Mapping) or "content_tokens" not in raw or "correct" not in raw:
            raise ParseError(f"outcome {raw_key!r} missing content_tokens/correct", line)
        outcomes[key] = TruncationOutcome(
            truncate_at=key,
            content_tokens=raw["content_tokens"],
            correct=raw["correct"],
            looped=raw.get("looped", False),
        )
    meta = rec.get("meta") or {}
    if not isinstance(meta, Mapping):
        raise ParseError("meta must be an object", line)
    return ReasoningTrace(
        trace_id=rec["trace_id"],
        sentences=tuple(sentences),
        outcomes=outcomes,
        full_think_tokens=rec["full_think_tokens"],
        rcp_index=rec.get("rcp_index"),
        meta=dict(meta),
    )


def _reject_constant(token):
    raise ValueError(f"non-finite number {token}")


def loads_corpus(lines: Iterable[str], default_name: str = "corpus") -> Corpus:
    traces = []
    name = None
    version = None
    for lineno, text in enumerate(lines, start=1):
        if not text.strip():
            raise ParseError("blank line", lineno)
        try:
            rec = json.loads(text, parse_constant=_reject_constant)
        except ValueError as exc:
            raise ParseError(f"malformed record ({exc})", lineno) from None
        if not isinstance(rec, dict):
            raise ParseError("record is not an object", lineno)
        rec_version = rec.get("schema_version")
        if not _is_int(rec_version):
            raise ParseError("schema_version is required and must be an integer", lineno)
        rec_name = rec.get("corpus", default_name)
        if version is None:
            version, name = rec_version, rec_name
        elif rec_version != version or rec_name != name:
            raise ParseError("schema_version/corpus differ from the first record", lineno)
        traces.append(record_to_trace(rec, lineno))
    if not traces:
        raise ValidationError("empty corpus")
    corpus = Corpus(name=name, traces=tuple(traces), schema_version=version)
    validate_corpus(corpus)
    return corpus


def parse_corpus(path) -> Corpus:
    """Read and validate a corpus file."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return loads_corpus(lines, default_name=path.stem)


def dumps_corpus(corpus: Corpus) -> str:
    validate_corpus(corpus)
    out = [dumps_trace(t, corpus.name, corpus.schema_version) for t in corpus.traces]
    return "\n".join(out) + "\n"


def write_corpus(corpus: Corpus, path) -> None:
    """Validate, then write ``corpus`` with a deterministic field order."""
    text = dumps_corpus(corpus)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
