"""Streaming sentence-boundary detection over decoded token texts.

A boundary is recorded at the token that closes a sentence. Two triggers:

* a character from the punctuation set (default ``.?!``) followed by
  whitespace, or sitting at the end of its token;
* a blank line (``"\\n\\n"``), possibly split across tokens.

After a boundary the segmenter is disarmed until a character that is neither
whitespace nor punctuation arrives, so ``"?!"``, ``"..."`` or ``".\\n\\n"``
close one sentence, not several. Guards suppress a ``.``:

* decimal guard: digit on both sides (``3.14``);
* abbreviation guard: the word before the ``.`` is in the configured list.

When a ``.`` ends a token right after a digit, the decimal guard needs the
next character, so the boundary stays pending until the next token (or
:meth:`Segmenter.finish`). The event still carries the step and rank of the
token holding the ``.``. State is O(1): flags plus a word buffer no longer
than the longest abbreviation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractError


@dataclass(frozen=True)
class SegmenterConfig:
    punctuation: str = ".?!"
    blank_line: bool = True
    decimal_guard: bool = True
    abbreviations: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "SegmenterConfig":
        known = {"punctuation", "blank_line", "decimal_guard", "abbreviations"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown segmenter options: {sorted(unknown)}")
        kw = dict(d)
        if "abbreviations" in kw:
            kw["abbreviations"] = tuple(kw["abbreviations"])
        return cls(**kw)


@dataclass(frozen=True)
class TokenEvent:
    step: int
    text: str
    eot_rank: int


@dataclass(frozen=True)
class BoundaryEvent:
    sentence_index: int
    at_step: int
    eot_rank_at_boundary: int


@dataclass
class _Pending:
    step: int
    rank: int


@dataclass
class Segmenter:
    """Single-stream segmenter state. Not thread-safe; one per stream."""

    config: SegmenterConfig = field(default_factory=SegmenterConfig)
    next_step: int = 0
    sentence_index: int = 0
    _armed: bool = True
    _prev: str = ""
    _word: str = ""
    _word_overflow: bool = False
    _pending: _Pending | None = None

    def __post_init__(self):
        cfg = self.config
        self._word_cap = max((len(a) for a in cfg.abbreviations), default=0)
        self._abbrevs = frozenset(cfg.abbreviations)

    def _emit(self, step: int, rank: int) -> BoundaryEvent:
        ev = BoundaryEvent(self.sentence_index, step, rank)
        self.sentence_index += 1
        self._armed = False
        return ev

    def _abbrev_before(self) -> bool:
        # _word is the non-whitespace run preceding the current "."
        return bool(self._word) and not self._word_overflow and self._word in self._abbrevs

    def feed(self, event: TokenEvent) -> list[BoundaryEvent]:
        """Consume one token; return the boundaries it closes (usually 0 or 1)."""
        if event.step != self.next_step:
            raise ContractError(f"expected step {self.next_step}, got {event.step}")
        if event.eot_rank < 1:
            raise ContractError(f"eot_rank must be >= 1, got {event.eot_rank}")
        self.next_step += 1
        cfg = self.config
        punct = cfg.punctuation
        text = event.text
        out: list[BoundaryEvent] = []
        hit = False  # a boundary inside this token (collapsed to one per step)

        n = len(text)
        for i, ch in enumerate(text):
            if self._pending is not None:
                pend, self._pending = self._pending, None
                if not ch.isdigit():
                    out.append(self._emit(pend.step, pend.rank))
            if ch in punct:
                if self._armed:
                    at_end = i == n - 1
                    nxt = text[i + 1] if not at_end else ""
                    guarded = False
                    if ch == "." and cfg.decimal_guard and self._prev.isdigit():
                        if at_end:
                            self._pending = _Pending(event.step, event.eot_rank)
                            guarded = True
                        elif nxt.isdigit():
                            guarded = True
                    if ch == "." and not guarded and self._abbrev_before():
                        guarded = True
                    if not guarded and (at_end or nxt.isspace()):
                        if not hit:
                            hit = True
                            out.append(self._emit(event.step, event.eot_rank))
                        else:
                            self._armed = False
            elif ch == "\n":
                if cfg.blank_line and self._prev == "\n" and self._armed:
                    if not hit:
                        hit = True
                        out.append(self._emit(event.step, event.eot_rank))
                    else:
                        self._armed = False
            elif not ch.isspace():
                self._armed = True
            self._prev = ch
            if self._word_cap:
                if ch.isspace():
                    self._word, self._word_overflow = "", False
                elif len(self._word) < self._word_cap:
                    self._word += ch
                else:
                    self._word_overflow = True
        return out

    def finish(self) -> list[BoundaryEvent]:
        """Flush a boundary held back by the decimal guard at end of stream."""
        if self._pending is None:
            return []
        pend, self._pending = self._pending, None
        return [self._emit(pend.step, pend.rank)]


def segment(tokens, ranks=None, config: SegmenterConfig | None = None) -> list[BoundaryEvent]:
    """Run a whole token list through a fresh segmenter."""
    seg = Segmenter(config or SegmenterConfig())
    out = []
    for step, text in enumerate(tokens):
        rank = ranks[step] if ranks is not None else 1
        out.extend(seg.feed(TokenEvent(step, text, rank)))
    out.extend(seg.finish())
    return out
