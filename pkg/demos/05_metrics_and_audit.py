"""Scoring summaries, and counting attention work as tables and outputs grow."""
from mham.cli import audit_rows
from mham.metrics import align_numbers, cbleu, rouge_l, sbleu

ref = "windSpeed near 12 , gust near 9 . overall moderate .".split()
hyp = "windSpeed near 14 , gust near 9 . overall moderate .".split()
print("sBLEU", round(sbleu([(hyp, ref)]).score, 2))
# within-tolerance numbers count as matches
print("aligned:", " ".join(align_numbers(hyp, ref, tolerance=5)))
print("cBLEU", round(cbleu([(hyp, ref)], tolerance=5).score, 2))
print("Rouge-L", round(rouge_l([(hyp, ref)]), 2))

short = "a b c d".split()
rep = sbleu([(short, "a b c d e".split())])
print(f"\nshort hypothesis: precisions {rep.precisions}, BP {rep.bp:.4f}, score {rep.score:.2f}")

# Attribute scores are computed once per table; record scores once per output token.
print("\n   T  M  T'  attr  record  fully-dynamic-attr")
for r in audit_rows([4, 16, 36], [3, 7], [5, 30]):
    print(f"{r['T']:4d} {r['M']:2d} {r['T_prime']:3d} {r['attr_scores']:5d} {r['record_scores']:7d}"
          f" {r['fully_dynamic_attr_scores']:8d}")
