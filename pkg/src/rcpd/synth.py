"""Synthetic reasoning-trace corpora following the three-stage model.

Each trace has an insufficient-exploration prefix of ``B`` sentences, a
compensatory stretch up to the reasoning completion point ``S*``, and a
reflection tail after it. Per sentence ``t``:

* rank: log-uniform in ``rank_far`` (with rare isolated dips) until the
  approach window, then geometric decay to a rank in ``rcp_rank`` at ``S*``;
  post-RCP ranks stay low except reflection spikes on trigger sentences.
* content tokens when truncated after ``t``:
  ``content_base + offset + slope * (S* - max(t, B))`` before ``S*``,
  ``content_base + offset`` from ``S*`` on (``offset`` is per trace).
* correctness: one uniform draw ``u`` per trace; correct iff ``u < p(t)``
  where ``p`` is ``p_correct_stage1`` before ``B``, rises linearly through
  the compensatory stretch and equals ``p_correct_plateau`` from ``S*`` on.
  Sharing ``u`` keeps accuracy monotone in depth within a trace.

The FULL run keeps reflecting to the end of the tail; with probability
``p_loop`` it instead loops until ``token_cap`` and is marked incorrect.
Randomness comes from ``SeedSequence([seed, ordinal])`` per trace.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import RCPDError
from .rules import RankWindow
from .trace_model import (
    FULL,
    RANK_CAP,
    SCHEMA_VERSION,
    Corpus,
    ReasoningTrace,
    SentenceRecord,
    TruncationOutcome,
)


@dataclass(frozen=True)
class SynthParams:
    n_traces: int = 500
    seed: int = 42
    stage1_len: int = 6
    rcp_index_range: tuple[int, int] = (20, 70)
    rank_far: tuple[float, float] = (200.0, 5000.0)
    approach_window: tuple[int, int] = (3, 6)
    rcp_rank: tuple[int, int] = (1, 5)
    post_rank: tuple[float, float] = (1.0, 5.0)
    spike_rank: tuple[float, float] = (6.0, 5000.0)
    p_dip: float = 0.04
    dip_rank: tuple[float, float] = (6.0, 120.0)
    p_correct_stage1: float = 0.1
    p_correct_plateau: float = 0.8
    compensation_slope: float = 40.0
    content_base: int = 400
    content_noise: float = 60.0
    tokens_per_sentence: tuple[int, int] = (40, 160)
    reflection_tokens_per_sentence: tuple[int, int] = (40, 160)
    post_rcp_fraction: tuple[float, float] = (0.3, 0.8)
    p_trigger_pre: float = 0.1
    p_trigger_post: float = 0.35
    reflect_persistence: float = 0.8
    approach_jitter: float = 1.0
    deer_confidence_pre: tuple[float, float] = (0.0, 0.7)
    deer_confidence_post: tuple[float, float] = (3.0, 1.0)  # Beta(a, b)
    p_loop: float = 0.04
    token_cap: int = 32768
    depth_step: int = 1
    rank_cap: int = RANK_CAP
    name: str = "synthetic"

    def validate(self) -> None:
        def bad(msg):
            raise RCPDError(f"invalid synth parameters: {msg}")

        if self.n_traces < 1:
            bad("n_traces must be >= 1")
        for pname in (
            "p_dip", "p_correct_stage1", "p_correct_plateau", "p_trigger_pre", "p_trigger_post",
            "reflect_persistence", "p_loop",
        ):
            p = getattr(self, pname)
            if not 0.0 <= p <= 1.0:
                bad(f"{pname}={p} outside [0, 1]")
        ranges = (
            "rcp_index_range", "rank_far", "approach_window", "rcp_rank", "post_rank",
            "spike_rank", "dip_rank", "tokens_per_sentence", "reflection_tokens_per_sentence",
            "post_rcp_fraction", "deer_confidence_pre",
        )
        for rname in ranges:
            lo, hi = getattr(self, rname)
            if lo > hi:
                bad(f"{rname}=({lo}, {hi}) is empty")
        if self.p_correct_stage1 > self.p_correct_plateau:
            bad("p_correct_stage1 exceeds p_correct_plateau")
        if self.approach_jitter < 0:
            bad("approach_jitter must be >= 0")
        if self.compensation_slope < 0:
            bad("compensation_slope must be >= 0")
        if self.stage1_len < 0 or self.depth_step < 1:
            bad("stage1_len must be >= 0 and depth_step >= 1")
        if self.rcp_rank[0] < 1 or self.rcp_rank[1] > 5:
            bad("rcp_rank must lie in [1, 5]")
        if self.approach_window[0] < 1:
            bad("approach_window must be >= 1")
        if self.rcp_index_range[0] < self.approach_window[1] + 1:
            bad("rcp_index_range must start after the longest approach window")
        if min(self.rank_far[0], self.post_rank[0], self.spike_rank[0], self.dip_rank[0]) < 1:
            bad("rank ranges must be >= 1")
        if self.dip_rank[0] <= self.rcp_rank[1]:
            bad("dip_rank must stay above rcp_rank so dips cannot mimic the RCP")
        if self.tokens_per_sentence[0] < 1 or self.reflection_tokens_per_sentence[0] < 1:
            bad("sentence lengths must be >= 1")
        a, b = self.deer_confidence_post
        if a <= 0 or b <= 0:
            bad("deer_confidence_post Beta parameters must be > 0")
        worst = (
            self.rcp_index_range[1]
            * (1 + self.post_rcp_fraction[1])
            * max(self.tokens_per_sentence[1], self.reflection_tokens_per_sentence[1])
            + self.content_base
            + self.compensation_slope * self.rcp_index_range[1]
            + 6 * self.content_noise
        )
        if worst >= self.token_cap:
            bad("token_cap too small for the longest non-looping trace")


PRESETS = {
    "default": SynthParams(),
    "tiny": SynthParams(n_traces=20, rcp_index_range=(12, 30), stage1_len=3),
    "no-loop": SynthParams(p_loop=0.0),
    "noisy": SynthParams(p_dip=0.12, dip_rank=(6.0, 40.0), p_trigger_post=0.5),
}

# older spelling of "default", still accepted on the command line
PRESET_ALIASES = {"paper-like": "default"}


def preset(name: str, **overrides) -> SynthParams:
    try:
        base = PRESETS[PRESET_ALIASES.get(name, name)]
    except KeyError:
        raise RCPDError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


def params_to_dict(p: SynthParams) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(p).items()}


def _log_uniform(rng, lo, hi):
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))


def _rank(x: float, cap: int) -> int:
    return int(min(max(1, round(x)), cap))


def _trace(params: SynthParams, ordinal: int) -> ReasoningTrace:
    p = params
    rng = np.random.default_rng(np.random.SeedSequence([p.seed, ordinal]))
    cap = p.rank_cap

    s_star = int(rng.integers(p.rcp_index_range[0], p.rcp_index_range[1] + 1))
    lo_b = p.stage1_len // 2
    hi_b = max(lo_b, (3 * p.stage1_len) // 2)
    stage_b = min(int(rng.integers(lo_b, hi_b + 1)), s_star - 1)
    approach = int(rng.integers(p.approach_window[0], p.approach_window[1] + 1))
    frac = rng.uniform(*p.post_rcp_fraction)
    n_post = max(1, int(round(s_star * frac)))
    looped = bool(rng.random() < p.p_loop)
    u_correct = float(rng.random())
    offset = float(rng.normal(0.0, p.content_noise)) if p.content_noise > 0 else 0.0

    # ranks and per-sentence lengths
    ranks: list[int] = []
    triggers: list[bool] = []
    confs: list[float | None] = []
    lengths: list[int] = []
    r_start = _log_uniform(rng, *p.rank_far)
    r_end = int(rng.integers(p.rcp_rank[0], p.rcp_rank[1] + 1))
    approach_start = s_star - approach  # last far sentence

    def pre_sentence(t):
        trig = bool(rng.random() < p.p_trigger_pre)
        conf = None
        if trig:
            lo, hi = p.deer_confidence_pre
            conf = float(rng.uniform(lo, hi)) * (t + 1) / (s_star + 1)
        return trig, conf

    for t in range(s_star + 1):
        if t < approach_start:
            if rng.random() < p.p_dip:
                r = _rank(_log_uniform(rng, *p.dip_rank), cap)
            else:
                r = _rank(_log_uniform(rng, *p.rank_far), cap)
        elif t == approach_start:
            r = _rank(r_start, cap)
        else:
            k = t - approach_start
            x = r_start * (r_end / r_start) ** (k / approach)
            if t < s_star and p.approach_jitter > 0:
                x *= 2.0 ** rng.normal(0.0, p.approach_jitter)
            r = _rank(x, cap)
            if t < s_star:
                # strictly above the RCP band so the minimum sits at S*
                r = max(r, p.rcp_rank[1] + 1)
            else:
                r = r_end
        trig, conf = pre_sentence(t)
        ranks.append(r)
        triggers.append(trig)
        confs.append(conf)
        lengths.append(int(rng.integers(p.tokens_per_sentence[0], p.tokens_per_sentence[1] + 1)))

    a, b = p.deer_confidence_post

    # post-RCP reflection comes in bursts: after a trigger sentence the next
    # one reflects again with probability reflect_persistence
    reflecting = [False]

    def post_sentence():
        p_on = p.reflect_persistence if reflecting[0] else p.p_trigger_post
        trig = bool(rng.random() < p_on)
        reflecting[0] = trig
        if trig:
            r = _rank(_log_uniform(rng, *p.spike_rank), cap)
            conf = float(rng.beta(a, b))
        else:
            r = _rank(_log_uniform(rng, *p.post_rank), cap)
            conf = None
        ln = int(rng.integers(p.reflection_tokens_per_sentence[0], p.reflection_tokens_per_sentence[1] + 1))
        return r, trig, conf, ln

    for _ in range(n_post):
        r, trig, conf, ln = post_sentence()
        ranks.append(r)
        triggers.append(trig)
        confs.append(conf)
        lengths.append(ln)

    cums = np.cumsum(lengths).tolist()
    if looped:
        # endless reflection: keep going until the cap is consumed
        while cums[-1] < p.token_cap:
            r, trig, conf, ln = post_sentence()
            ranks.append(r)
            triggers.append(trig)
            confs.append(conf)
            cums.append(min(cums[-1] + ln, p.token_cap))

    n = len(ranks)
    sentences = tuple(
        SentenceRecord(
            index=i,
            think_tokens_cum=int(cums[i]),
            eot_rank=ranks[i],
            trigger_word=triggers[i],
            boxed_confidence=confs[i],
        )
        for i in range(n)
    )

    base = p.content_base + offset
    span = s_star - stage_b

    def content(t):
        short = s_star - max(t, stage_b)
        return max(1, int(round(base + p.compensation_slope * max(0, short))))

    def p_correct(t):
        if t < stage_b:
            return p.p_correct_stage1
        if t >= s_star:
            return p.p_correct_plateau
        frac_t = (t - stage_b + 1) / (span + 1)
        return p.p_correct_stage1 + (p.p_correct_plateau - p.p_correct_stage1) * frac_t

    outcomes = {}
    depths = set(range(0, n, p.depth_step)) | {s_star}
    for t in sorted(depths):
        outcomes[t] = TruncationOutcome(t, content(t), bool(u_correct < p_correct(t)), False)
    if looped:
        outcomes[FULL] = TruncationOutcome(FULL, 0, False, True)
    else:
        outcomes[FULL] = TruncationOutcome(FULL, content(n), bool(u_correct < p.p_correct_plateau), False)

    meta = {
        "generator": "rcpd.synth",
        "ordinal": ordinal,
        "stage_boundary": stage_b,
        "approach_window": approach,
        "looped": looped,
    }
    return ReasoningTrace(
        trace_id=f"{p.name}-{ordinal:05d}",
        sentences=sentences,
        outcomes=outcomes,
        full_think_tokens=int(cums[-1]),
        rcp_index=s_star,
        meta=meta,
    )


def generate(params: SynthParams | None = None) -> Corpus:
    """Deterministic synthetic corpus; trace ``i`` depends only on ``(seed, i)``."""
    params = params or SynthParams()
    params.validate()
    traces = tuple(_trace(params, i) for i in range(params.n_traces))
    return Corpus(name=params.name, traces=traces, schema_version=SCHEMA_VERSION)


# -- labelled windows for the miner ----------------------------------------------


@dataclass
class WindowSet:
    """Rank windows, one per sentence boundary, with RCP labels.

    ``X[:, 0]`` is the current rank, ``X[:, k]`` the rank ``k`` sentences back
    (cap value when missing).
    """

    X: np.ndarray
    y: np.ndarray
    trace_index: np.ndarray
    sentence_index: np.ndarray
    trace_ids: list[str] = field(default_factory=list)
    rcp_index: np.ndarray | None = None

    def __len__(self):
        return len(self.y)

    def subset(self, rows) -> "WindowSet":
        rows = np.asarray(rows)
        return WindowSet(
            self.X[rows], self.y[rows], self.trace_index[rows], self.sentence_index[rows],
            self.trace_ids, self.rcp_index,
        )

    def pairs(self):
        for row, lab in zip(self.X.tolist(), self.y.tolist()):
            yield RankWindow(row[0], tuple(row[1:])), bool(lab)


def label_windows(corpus: Corpus, cap: int = RANK_CAP) -> WindowSet:
    """One ``(window, is_rcp)`` row per sentence; positive only at ``rcp_index``."""
    from . import kernels

    blocks, labels, tix, six, rcps = [], [], [], [], []
    for ti, trace in enumerate(corpus.traces):
        if trace.rcp_index is None:
            raise RCPDError(f"trace {trace.trace_id!r} has no rcp_index; cannot label windows")
        ranks = np.array([s.eot_rank for s in trace.sentences], dtype=np.int64)
        blocks.append(kernels.build_windows(ranks, cap))
        lab = np.zeros(len(ranks), dtype=bool)
        lab[trace.rcp_index] = True
        labels.append(lab)
        tix.append(np.full(len(ranks), ti, dtype=np.int64))
        six.append(np.arange(len(ranks), dtype=np.int64))
        rcps.append(trace.rcp_index)
    return WindowSet(
        X=np.concatenate(blocks).astype(np.int64),
        y=np.concatenate(labels),
        trace_index=np.concatenate(tix),
        sentence_index=np.concatenate(six),
        trace_ids=[t.trace_id for t in corpus.traces],
        rcp_index=np.array(rcps, dtype=np.int64),
    )


# -- token rendering for streaming tests -----------------------------------------

_WORDS = ("so", "then", "check", "the", "sum", "again", "we", "get", "it", "now", "thus", "fine")


def render_tokens(trace: ReasoningTrace, tokens_per_sentence: int = 3):
    """Token texts and eot ranks whose sentence boundaries match the trace.

    Each sentence becomes ``tokens_per_sentence`` word tokens, the last one
    ending in ``"."``; every token of sentence ``i`` reports that sentence's
    boundary rank.
    """
    out = []
    for s in trace.sentences:
        for j in range(tokens_per_sentence):
            word = _WORDS[(s.index * 7 + j) % len(_WORDS)]
            text = f" {word}." if j == tokens_per_sentence - 1 else f" {word}"
            out.append((text, s.eot_rank))
    return out

