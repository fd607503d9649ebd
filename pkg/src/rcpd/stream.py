"""Line-delimited session protocol for live early-exit decisions.

One JSON object per line in each direction. Requests carry ``type`` in
``start``, ``token``, ``end``; replies carry ``type`` in ``ack``,
``decision``, ``summary``, ``error``. Every request gets exactly one reply.
See docs/protocol.md for the field list and a recorded transcript.

The controller only sees each token's text and the end-of-thinking rank;
on ``stop`` the caller is expected to emit the end-of-thinking token
itself.
"""

from __future__ import annotations

import enum
import json
import socketserver
from collections import deque
from dataclasses import dataclass, field

from .errors import RCPDError
from .rules import HISTORY_LEN, RankWindow, RuleSet, default_rcpd_rules, evaluate
from .segmenter import Segmenter, SegmenterConfig, TokenEvent
from .trace_model import RANK_CAP, clamp_rank


class Phase(str, enum.Enum):
    THINKING = "thinking"
    STOPPED = "stopped"


@dataclass
class Session:
    session_id: str
    rules: RuleSet
    segmenter: Segmenter
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LEN))
    phase: Phase = Phase.THINKING
    sentences_seen: int = 0
    fired_rule: str | None = None
    stop_sentence: int | None = None


class ProtocolError(RCPDError):
    pass


def encode(msg: dict) -> str:
    """Canonical wire form: compact separators, key order as built."""
    return json.dumps(msg, separators=(",", ":"), ensure_ascii=False)


def _error(reason: str, session_id=None) -> dict:
    out = {"type": "error"}
    if session_id is not None:
        out["session_id"] = session_id
    out["reason"] = reason
    return out


class Controller:
    """Holds the sessions of one connection; strictly sequential."""

    def __init__(
        self,
        rules: RuleSet | None = None,
        segmenter: SegmenterConfig | None = None,
        cap: int = RANK_CAP,
        per_token: bool = False,
    ):
        self.default_rules = rules if rules is not None else default_rcpd_rules()
        self.segmenter_config = segmenter or SegmenterConfig()
        self.cap = cap
        # study mode: every token is an evaluation point, indices count tokens
        self.per_token = per_token
        self.sessions: dict[str, Session] = {}

    # -- message handling -------------------------------------------------------

    def handle_line(self, line: str) -> str:
        try:
            msg = json.loads(line)
        except ValueError:
            # fixed text: parser messages vary across interpreter versions
            return encode(_error("malformed message: invalid JSON"))
        return encode(self.handle(msg))

    def handle(self, msg) -> dict:
        if not isinstance(msg, dict):
            return _error("malformed message: expected an object")
        sid = msg.get("session_id")
        if not isinstance(sid, str) or not sid:
            return _error("malformed message: session_id must be a non-empty string")
        kind = msg.get("type")
        try:
            if kind == "start":
                return self._start(sid, msg)
            if kind == "token":
                return self._token(sid, msg)
            if kind == "end":
                return self._end(sid)
        except ProtocolError as exc:
            return _error(str(exc), sid)
        return _error(f"malformed message: unknown type {kind!r}", sid)

    def _session(self, sid) -> Session:
        try:
            return self.sessions[sid]
        except KeyError:
            raise ProtocolError(f"unknown session {sid!r}") from None

    def _start(self, sid, msg) -> dict:
        if sid in self.sessions:
            raise ProtocolError(f"session {sid!r} already started")
        rules = self.default_rules
        if msg.get("rules") is not None:
            try:
                rules = RuleSet.from_list(msg["rules"])
            except RCPDError as exc:
                raise ProtocolError(f"malformed message: {exc}") from None
        self.sessions[sid] = Session(sid, rules, Segmenter(self.segmenter_config))
        return {"type": "ack", "session_id": sid}

    def _token(self, sid, msg) -> dict:
        sess = self._session(sid)
        text = msg.get("text")
        rank = msg.get("eot_rank")
        if not isinstance(text, str):
            raise ProtocolError("malformed message: text must be a string")
        if isinstance(rank, bool) or not isinstance(rank, int) or rank < 1:
            raise ProtocolError("malformed message: eot_rank must be an integer >= 1")
        if sess.phase is Phase.STOPPED:
            raise ProtocolError("session already stopped")
        rank = clamp_rank(rank, self.cap)
        if self.per_token:
            return self._decide(sess, [rank])
        seg = sess.segmenter
        boundaries = seg.feed(TokenEvent(seg.next_step, text, rank))
        return self._decide(sess, [b.eot_rank_at_boundary for b in boundaries])

    def _decide(self, sess: Session, ranks) -> dict:
        for r in ranks:
            if self._boundary(sess, r):
                return {
                    "type": "decision",
                    "session_id": sess.session_id,
                    "action": "stop",
                    "rule": sess.fired_rule,
                    "sentence_index": sess.stop_sentence,
                }
        return {"type": "decision", "session_id": sess.session_id, "action": "continue"}

    def _boundary(self, sess: Session, rank: int) -> bool:
        """Evaluate one sentence boundary; True when a rule fires."""
        index = sess.sentences_seen
        sess.sentences_seen += 1
        window = RankWindow(rank, tuple(sess.history))
        sess.history.appendleft(rank)
        decision = evaluate(window, sess.rules, self.cap)
        if decision.terminate:
            sess.phase = Phase.STOPPED
            sess.fired_rule = decision.fired_rule
            sess.stop_sentence = index
            return True
        return False

    def _end(self, sid) -> dict:
        sess = self._session(sid)
        if sess.phase is Phase.THINKING and not self.per_token:
            for b in sess.segmenter.finish():
                if self._boundary(sess, b.eot_rank_at_boundary):
                    break
        del self.sessions[sid]
        out = {"type": "summary", "session_id": sid, "sentences_seen": sess.sentences_seen}
        if sess.fired_rule is not None:
            out["fired_rule"] = sess.fired_rule
            out["sentence_index"] = sess.stop_sentence
        return out


# -- transports -------------------------------------------------------------------


def serve(infile, outfile, controller: Controller | None = None) -> int:
    """Answer each non-blank input line with one reply line; returns lines served."""
    controller = controller or Controller()
    n = 0
    for line in infile:
        if not line.strip():
            continue
        outfile.write(controller.handle_line(line) + "\n")
        outfile.flush()
        n += 1
    return n


def serve_unix(path: str, rules: RuleSet | None = None, segmenter: SegmenterConfig | None = None,
               per_token: bool = False):
    """Serve on a Unix socket; each connection gets its own session table."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            ctl = Controller(rules, segmenter, per_token=per_token)
            for raw in self.rfile:
                line = raw.decode("utf-8")
                if not line.strip():
                    continue
                self.wfile.write((ctl.handle_line(line) + "\n").encode("utf-8"))
                self.wfile.flush()

    server = socketserver.ThreadingUnixStreamServer(path, Handler)
    server.daemon_threads = True
    return server


# -- replay helpers ---------------------------------------------------------------


def stream_stop_sentence(tokens, rules: RuleSet | None = None, session_id: str = "replay") -> int | None:
    """Drive one session with ``(text, eot_rank)`` pairs; stop sentence or None."""
    ctl = Controller(rules)
    ctl.handle({"type": "start", "session_id": session_id})
    for text, rank in tokens:
        reply = ctl.handle({"type": "token", "session_id": session_id, "text": text, "eot_rank": rank})
        if reply.get("action") == "stop":
            return reply["sentence_index"]
    summary = ctl.handle({"type": "end", "session_id": session_id})
    return summary.get("sentence_index")
