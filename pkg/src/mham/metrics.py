"""Corpus BLEU-4, numeric-tolerant BLEU and Rouge-L.

Inputs are sequences of ``(hypothesis_tokens, reference_tokens)`` pairs with a
single reference each.  Scores are on a 0-100 scale.
"""
from __future__ import annotations

import itertools
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

Pair = tuple[Sequence, Sequence]

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)")


@dataclass
class BleuReport:
    score: float
    precisions: list[float]
    bp: float
    hyp_len: int
    ref_len: int
    matches: list[int]
    totals: list[int]

    def to_json(self) -> dict:
        return {"score": self.score, "precisions": self.precisions, "bp": self.bp,
                "hyp_len": self.hyp_len, "ref_len": self.ref_len}


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sbleu(pairs: Sequence[Pair], max_n: int = 4, smooth: bool = False) -> BleuReport:
    """Corpus-level BLEU with clipped counts pooled over all pairs.

    Unsmoothed by default: any n-gram order with zero matches gives 0.  With
    ``smooth`` orders above 1 get add-one counts.
    """
    if not pairs:
        raise ValueError("sbleu needs at least one pair")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in pairs:
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h = _ngrams(hyp, n)
            r = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    precisions = []
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        if smooth and n > 1:
            m, t = m + 1, t + 1
        precisions.append(m / t if t else 0.0)
    if hyp_len == 0:
        return BleuReport(0.0, precisions, 0.0, hyp_len, ref_len, matches, totals)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) <= 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuReport(score, precisions, bp, hyp_len, ref_len, matches, totals)


def is_number(token) -> bool:
    return isinstance(token, str) and _NUMBER.fullmatch(token) is not None


def align_numbers(hyp: Sequence[str], ref: Sequence[str], tolerance: float = 5) -> list[str]:
    """Rewrite hypothesis numbers to the reference numbers they are close to.

    Candidate (hypothesis, reference) number pairs within ``tolerance`` are
    taken nearest-first (ties: earlier reference position, then earlier
    hypothesis position), each side used at most once.  A hypothesis token
    whose exact string occurs in the reference keeps its spelling, so no
    existing n-gram match is ever broken.
    """
    hyp = list(hyp)
    ref_tokens = set(ref)
    h_nums = [(i, float(t)) for i, t in enumerate(hyp) if is_number(t)]
    r_nums = [(k, float(t)) for k, t in enumerate(ref) if is_number(t)]
    cands = sorted((abs(hv - rv), k, i) for i, hv in h_nums for k, rv in r_nums
                   if abs(hv - rv) <= tolerance)
    used_h, used_r = set(), set()
    for _, k, i in cands:
        if i in used_h or k in used_r:
            continue
        used_h.add(i)
        used_r.add(k)
        if hyp[i] not in ref_tokens:
            hyp[i] = ref[k]
    return hyp


def cbleu(pairs: Sequence[Pair], tolerance: float = 5, max_n: int = 4,
          smooth: bool = False) -> BleuReport:
    """BLEU where numbers within ``tolerance`` of a reference number count as that number."""
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    aligned = [(align_numbers(h, r, tolerance), r) for h, r in pairs]
    return sbleu(aligned, max_n=max_n, smooth=smooth)


def lcs_length(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def lcs_oracle(a: Sequence, b: Sequence, cap: int = 12) -> int:
    """Brute force: the longest subsequence of ``a`` that is also one of ``b``."""
    if len(a) > cap or len(b) > cap:
        raise ValueError(f"lcs_oracle is capped at length {cap}")

    def is_subseq(sub, seq):
        it = iter(seq)
        return all(any(x == y for y in it) for x in sub)

    for k in range(min(len(a), len(b)), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            if is_subseq([a[i] for i in idx], b):
                return k
    return 0


def rouge_l_pair(hyp: Sequence, ref: Sequence, beta: float = 1.2) -> float:
    if not hyp or not ref:
        return 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


def rouge_l(pairs: Sequence[Pair], beta: float = 1.2) -> float:
    """Mean per-pair LCS F-measure, times 100."""
    if not pairs:
        raise ValueError("rouge_l needs at least one pair")
    return 100.0 * sum(rouge_l_pair(h, r, beta) for h, r in pairs) / len(pairs)


def evaluate(pairs: Sequence[Pair], tolerance: float = 5) -> dict:
    s = sbleu(pairs)
    c = cbleu(pairs, tolerance)
    return {"sbleu": s.score, "cbleu": c.score, "rouge_l": rouge_l(pairs),
            "precisions": s.precisions, "bp": s.bp,
            "cbleu_precisions": c.precisions, "n_pairs": len(pairs)}
