import itertools

import numpy as np
import pytest

from mham import decoding as dc
from mham.tables import EOS
from mham.training import init_params

from conftest import random_table, tiny_config


def random_model(seed, vocab=8, scale=1.0):
    rng = np.random.default_rng(seed)
    cfg = tiny_config(vocab=vocab)
    params = init_params(cfg, seed)
    # sharpen the output layer so the decoders have real decisions to make
    for name in ("W_out_s", "W_out_z", "b_out"):
        params[name].value[:] = rng.normal(scale=scale * 2, size=params[name].shape)
    return cfg, params, random_table(rng, int(rng.integers(1, 5)), cfg.attr_widths, 3)


def exhaustive_best(enc, params, cfg, max_len):
    """Best per-token score over every finished sequence shorter than max_len and every truncated one."""
    tokens = [t for t in range(cfg.vocab_size) if t != EOS]
    best = None
    for n in range(max_len + 1):
        for seq in itertools.product(tokens, repeat=n):
            finished = n < max_len
            lp = dc.sequence_logprob(enc, list(seq), params, cfg, finished=finished)
            score = lp / (n + 1 if finished else n)
            if best is None or score > best[0] + 1e-12:
                best = (score, list(seq))
    return best


def test_rigged_eos_gives_empty_output():
    cfg, params, enc = random_model(0)
    params["b_out"].value[EOS] = 1e3
    assert dc.greedy_decode(enc, params, cfg) == []
    assert dc.beam_decode(enc, params, cfg, beam_width=3).best.tokens == []


@pytest.mark.parametrize("max_len", [1, 4, 9])
def test_max_length_truncates(max_len):
    cfg, params, enc = random_model(1)
    params["b_out"].value[EOS] = -1e3
    assert len(dc.greedy_decode(enc, params, cfg, max_len=max_len)) == max_len
    res = dc.beam_decode(enc, params, cfg, beam_width=2, max_len=max_len)
    assert len(res.best.tokens) == max_len and not res.best.finished


def test_output_never_contains_eos():
    for seed in range(20):
        cfg, params, enc = random_model(seed)
        assert EOS not in dc.greedy_decode(enc, params, cfg, max_len=12)
        res = dc.beam_decode(enc, params, cfg, beam_width=3, max_len=12)
        assert all(EOS not in h.tokens for h in res.finished + res.beam)


def test_beam_width_one_equals_greedy_on_fifty_models():
    for seed in range(50):
        cfg, params, enc = random_model(seed, scale=0.5)
        g = dc.greedy_decode(enc, params, cfg, max_len=10)
        b = dc.beam_decode(enc, params, cfg, beam_width=1, max_len=10).best.tokens
        assert g == b, seed


def test_full_vocab_beam_matches_enumeration_length_two():
    for seed in range(5):
        cfg, params, enc = random_model(100 + seed, vocab=6)
        res = dc.beam_decode(enc, params, cfg, beam_width=cfg.vocab_size, max_len=2)
        score, seq = exhaustive_best(enc, params, cfg, 2)
        assert res.best.tokens == seq
        assert res.best.score == pytest.approx(score, abs=1e-12)


@pytest.mark.parametrize("vocab,max_len", [(4, 3), (5, 3), (6, 2), (6, 3)])
def test_unpruned_beam_equals_exhaustive_argmax(vocab, max_len):
    cfg, params, enc = random_model(7 * vocab + max_len, vocab=vocab)
    width = vocab ** max_len
    res = dc.beam_decode(enc, params, cfg, beam_width=width, max_len=max_len)
    score, seq = exhaustive_best(enc, params, cfg, max_len)
    assert res.best.tokens == seq
    assert res.best.score == pytest.approx(score, abs=1e-12)


def test_hypothesis_scores_match_rescoring():
    cfg, params, enc = random_model(3)
    res = dc.beam_decode(enc, params, cfg, beam_width=4, max_len=6)
    for h in res.finished + res.beam:
        lp = dc.sequence_logprob(enc, h.tokens, params, cfg, finished=h.finished)
        assert h.logprob == pytest.approx(lp, abs=1e-10)


def test_wider_beam_never_scores_lower():
    # paired comparison across widths 1, 2, 5 on the same inputs
    for seed in range(40):
        cfg, params, enc = random_model(500 + seed, vocab=10)
        scores = [dc.beam_decode(enc, params, cfg, beam_width=k, max_len=8).best.score
                  for k in (1, 2, 5)]
        assert scores[1] >= scores[0] - 1e-12 and scores[2] >= scores[1] - 1e-12, (seed, scores)


def test_decode_config_validation():
    with pytest.raises(ValueError):
        dc.DecodeConfig(beam_width=0)
    with pytest.raises(ValueError):
        dc.DecodeConfig(strategy="sample")
    cfg, params, enc = random_model(4)
    assert dc.decode(enc, params, cfg, dc.DecodeConfig("beam", 1, 7)) == \
        dc.decode(enc, params, cfg, dc.DecodeConfig("greedy", max_len=7))


def test_attention_trace_lengths():
    cfg, params, enc = random_model(5)
    enc_out, steps = dc.attention_trace(enc, [4, 5], params, cfg)
    assert len(steps) == 3
    for st in steps:
        assert abs(st.gamma.sum() - 1) < 1e-9
