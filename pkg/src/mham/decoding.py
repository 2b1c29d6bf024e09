"""Greedy and beam search over a trained model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .model import ModelConfig, StepAttention, decode_step, encode, initial_state
from .tables import BOS, EOS, EncodedTable


@dataclass
class DecodeConfig:
    strategy: str = "greedy"
    beam_width: int = 5
    max_len: int = 80

    def __post_init__(self):
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.beam_width < 1 or self.max_len < 1:
            raise ValueError("beam_width and max_len must be >= 1")


def greedy_decode(enc: EncodedTable, params: dict[str, Node], cfg: ModelConfig,
                  max_len: int = 80, attention: list | None = None) -> list[int]:
    """Argmax decoding from BOS; stops at EOS (not returned) or after ``max_len`` tokens.

    Ties go to the lowest token id.  Per-step attention is appended to
    ``attention`` when a list is given.
    """
    with ad.no_grad():
        enc_out = encode(enc, params, cfg)
        s, prev = initial_state(enc_out), BOS
        out = []
        for _ in range(max_len):
            step = decode_step(s, prev, enc_out, params, cfg)
            if attention is not None:
                attention.append(step.attention)
            tok = int(np.argmax(step.log_probs.value[0]))
            if tok == EOS:
                break
            out.append(tok)
            s, prev = step.state, tok
        return out


@dataclass
class Hypothesis:
    tokens: list[int]
    logprob: float
    finished: bool
    state: Node | None = field(default=None, repr=False)

    @property
    def length(self) -> int:
        return len(self.tokens) + (1 if self.finished else 0)

    @property
    def score(self) -> float:
        """Log-probability per emitted token (EOS included)."""
        return self.logprob / max(self.length, 1)


@dataclass
class BeamResult:
    best: Hypothesis
    finished: list[Hypothesis]
    beam: list[Hypothesis]     # hypotheses still open when the search stopped


def beam_decode(enc: EncodedTable, params: dict[str, Node], cfg: ModelConfig,
                beam_width: int = 5, max_len: int = 80) -> BeamResult:
    """Length-normalised beam search.

    Open hypotheses are pruned on total log-probability (they all have the same
    length); finished and truncated hypotheses compete on per-token score.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    with ad.no_grad():
        enc_out = encode(enc, params, cfg)
        live = [Hypothesis([], 0.0, False, initial_state(enc_out))]
        finished: list[Hypothesis] = []
        for _ in range(max_len):
            steps = [decode_step(h.state, h.tokens[-1] if h.tokens else BOS, enc_out, params, cfg)
                     for h in live]
            step_lp = np.stack([st.log_probs.value[0] for st in steps])
            totals = np.stack([h.logprob for h in live])[:, None] + step_lp
            V = totals.shape[1]
            # rounding ties in the totals fall back to the step log-prob, then the lowest index
            flat_idx = np.arange(totals.size)
            order = np.lexsort((flat_idx, -step_lp.reshape(-1), -totals.reshape(-1)))[:beam_width]
            nxt = []
            for flat in order:
                hi, tok = divmod(int(flat), V)
                h = live[hi]
                lp = float(totals[hi, tok])
                if tok == EOS:
                    finished.append(Hypothesis(list(h.tokens), lp, True))
                else:
                    nxt.append(Hypothesis(h.tokens + [tok], lp, False, steps[hi].state))
            live = nxt
            if not live:
                break
        pool = finished + live
        best = max(pool, key=lambda h: h.score)   # max keeps the first on ties
        return BeamResult(best, finished, live)


def decode(enc: EncodedTable, params, cfg: ModelConfig, dcfg: DecodeConfig) -> list[int]:
    if dcfg.strategy == "greedy":
        return greedy_decode(enc, params, cfg, dcfg.max_len)
    return beam_decode(enc, params, cfg, dcfg.beam_width, dcfg.max_len).best.tokens


def sequence_logprob(enc: EncodedTable, tokens: list[int], params, cfg: ModelConfig,
                     finished: bool = True) -> float:
    """Total log-probability of ``tokens`` (followed by EOS when ``finished``)."""
    with ad.no_grad():
        enc_out = encode(enc, params, cfg)
        s, prev, total = initial_state(enc_out), BOS, 0.0
        for tok in list(tokens) + ([EOS] if finished else []):
            step = decode_step(s, prev, enc_out, params, cfg)
            total += float(step.log_probs.value[0, tok])
            s, prev = step.state, tok
        return total


def attention_trace(enc: EncodedTable, tokens: list[int], params, cfg: ModelConfig):
    """Teacher-force ``tokens`` + EOS and return (encoder output, per-step attention)."""
    with ad.no_grad():
        enc_out = encode(enc, params, cfg)
        s, prev = initial_state(enc_out), BOS
        steps: list[StepAttention] = []
        for tok in list(tokens) + [EOS]:
            step = decode_step(s, prev, enc_out, params, cfg)
            steps.append(step.attention)
            s, prev = step.state, tok
        return enc_out, steps
