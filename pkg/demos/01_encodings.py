"""How table cells become bit vectors, and how a table file is read."""
import numpy as np

from mham import tables as tb
from mham.synthetic import SyntheticSpec, generate_synthetic_dataset

# Categorical scales are one-hot over a fixed ordering.
for label in ("Lkly", "SChc", "Chc"):
    print(f"mode {label:5s} -> {tb.bits_to_str(tb.encode_mode(label))}")

# Compass points: principal directions own one bit, the in-between ones light two.
for label in ("NW", "NNE", "NE"):
    print(f"dir  {label:5s} -> {tb.bits_to_str(tb.encode_direction(label))}")

# Time intervals mark every atomic slot they cover.
for label in ("6-13", "6-21", "6-30"):
    print(f"time {label:5s} -> {tb.bits_to_str(tb.encode_time_interval(label))}")

# Numbers are offset binary: value minus the attribute minimum, written in a fixed width.
bits = tb.encode_number(52, width=8, minimum=-30)
print("52 with min -30 ->", tb.bits_to_str(bits), "->", tb.decode_number(bits, -30))

# A whole table: one (T, width) block per attribute plus a one-hot record-type matrix.
spec = SyntheticSpec(distractors=True)
inst = generate_synthetic_dataset(seed=1, n_tables=1, spec=spec)[0]
schema = spec.schema()
for r in inst.table.records:
    print(f"  {r.type:16s} {r.values}")
print("summary:", inst.text)

enc = tb.encode_table(inst.table, schema)
print("attribute widths:", [a.shape[1] for a in enc.attrs])
print("record types:\n", enc.types.astype(int))
print("first record, all attributes concatenated:")
print(" ", tb.bits_to_str(np.concatenate([a[0] for a in enc.attrs])))
