import io
import json
import os
import socket
import subprocess
import sys
import threading

import pytest

from rcpd import stream, synth
from rcpd.rules import default_rcpd_rules
from rcpd.strategies import StrategyConfig, decide_stop
from rcpd.trace_model import FULL, MAX_RANK

from conftest import FIXTURES


def run(lines, controller=None):
    out = io.StringIO()
    stream.serve(io.StringIO("\n".join(lines) + "\n"), out, controller)
    return [json.loads(x) for x in out.getvalue().splitlines()]


def start(sid="a"):
    return json.dumps({"type": "start", "session_id": sid})


def tok(text, rank, sid="a"):
    return json.dumps({"type": "token", "session_id": sid, "text": text, "eot_rank": rank})


def test_one_sentence_rank_three_stops_r1():
    replies = run([start(), tok("The", 900), tok(" answer", 700), tok(" is seven.", 3)])
    assert replies[0] == {"type": "ack", "session_id": "a"}
    assert replies[-1] == {"type": "decision", "session_id": "a", "action": "stop", "rule": "R1", "sentence_index": 0}


def test_hundred_max_tokens_never_stop():
    replies = run([start()] + [tok(" word.", MAX_RANK) for _ in range(100)])
    assert len(replies) == 101
    assert all(r["action"] == "continue" for r in replies[1:])


def test_ranks_above_cap_are_clamped():
    replies = run([start(), tok(" done.", 10**6)])
    assert replies[-1]["action"] == "continue"


def test_errors_keep_the_session():
    replies = run([start(), '{"type":"token","session_id":"a","text":5,"eot_rank":3}', tok(" ok.", 2)])
    assert replies[1]["type"] == "error" and "malformed" in replies[1]["reason"]
    assert replies[2]["action"] == "stop"


def test_protocol_errors():
    replies = run([
        start(), start(),
        tok("x", 1, sid="zz"),
        '{"type":"pause","session_id":"a"}',
        '{"type":"start"}',
        "[1, 2]",
        json.dumps({"type": "token", "session_id": "a", "text": "x", "eot_rank": 0}),
        json.dumps({"type": "token", "session_id": "a", "text": "x", "eot_rank": True}),
    ])
    assert [r["type"] for r in replies] == ["ack"] + ["error"] * 7
    assert "already started" in replies[1]["reason"]
    assert "unknown session" in replies[2]["reason"]
    assert "unknown type" in replies[3]["reason"]


def test_token_after_stop_is_rejected():
    replies = run([start(), tok(" go.", 1), tok(" more", 1)])
    assert replies[-1] == {"type": "error", "session_id": "a", "reason": "session already stopped"}


def test_end_flushes_pending_decimal_boundary():
    replies = run([start(), tok("it is 7.", 2), json.dumps({"type": "end", "session_id": "a"})])
    assert replies[1]["action"] == "continue"
    assert replies[2] == {"type": "summary", "session_id": "a", "sentences_seen": 1, "fired_rule": "R1", "sentence_index": 0}


def test_history_is_bounded():
    ctl = stream.Controller()
    ctl.handle(json.loads(start()))
    for _ in range(500):
        ctl.handle(json.loads(tok(" word.", MAX_RANK)))
    assert len(ctl.sessions["a"].history) == 5


def test_golden_transcript_replays_byte_identically():
    out = io.StringIO()
    with open(FIXTURES / "stream_in.jsonl", encoding="utf-8") as fh:
        n = stream.serve(fh, out)
    assert n == 12
    assert out.getvalue() == (FIXTURES / "stream_out.jsonl").read_text(encoding="utf-8")


def test_cli_stream_over_stdio():
    inp = (FIXTURES / "stream_in.jsonl").read_bytes()
    proc = subprocess.run([sys.executable, "-m", "rcpd.cli", "stream"], input=inp, capture_output=True, check=True)
    assert proc.stdout == (FIXTURES / "stream_out.jsonl").read_bytes()


def test_stream_matches_replay_on_synthetic_traces():
    corpus = synth.generate(synth.preset("default", n_traces=100))
    cfg = StrategyConfig.make("rcpd")
    for t in corpus.traces:
        got = stream.stream_stop_sentence(synth.render_tokens(t))
        want = decide_stop(cfg, t)
        assert (FULL if got is None else got) == want


@pytest.mark.skipif(not hasattr(socket, "AF_UNIX"), reason="no unix sockets")
def test_unix_socket_sessions(tmp_path):
    path = str(tmp_path / "rcpd.sock")
    server = stream.serve_unix(path, default_rcpd_rules())
    th = threading.Thread(target=server.serve_forever, daemon=True)
    th.start()
    try:
        with socket.socket(socket.AF_UNIX, socket.SOCK_STREAM) as s:
            s.connect(path)
            f = s.makefile("rw", encoding="utf-8")
            for line in (start(), tok(" yes.", 4)):
                f.write(line + "\n")
                f.flush()
            replies = [json.loads(f.readline()) for _ in range(2)]
        assert replies[1]["rule"] == "R1"
    finally:
        server.shutdown()
        server.server_close()
        os.unlink(path)


def test_per_token_mode_checks_every_token():
    ctl = stream.Controller(per_token=True)
    replies = run([start(), tok("no boundary", 900), tok(" still none", 4)], ctl)
    assert replies[1]["action"] == "continue"
    assert replies[2] == {"type": "decision", "session_id": "a", "action": "stop", "rule": "R1", "sentence_index": 1}


def test_cli_per_token_flag():
    lines = start() + "\n" + tok("x", 3) + "\n"
    proc = subprocess.run([sys.executable, "-m", "rcpd.cli", "stream", "--per-token"], input=lines,
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout.splitlines()[1])["action"] == "stop"
