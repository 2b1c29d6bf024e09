"""Check backward() against finite differences on the full summarization loss."""
import dataclasses

import numpy as np

from mham import autodiff as ad
from mham.model import ModelConfig, forward_teacher_forced
from mham.tables import EncodedTable
from mham.training import init_params

rng = np.random.default_rng(0)

# A toy problem: 3 records, two attributes (3 and 4 bits), 3 record types, 12 words.
base = ModelConfig(attr_widths=(3, 4), n_record_types=3, vocab_size=12,
                  attr_embed_dim=3, record_type_embed_dim=3, gru_dim=4, p_dim=3, dec_embed_dim=3)
types = np.eye(3)[[0, 2, 1]]
table = EncodedTable([rng.integers(0, 2, (3, 3)).astype(float),
                      rng.integers(0, 2, (3, 4)).astype(float)], types)
targets = [5, 9, 4, 11, 2]   # last id is end-of-sentence

for variant in ("mham", "nhm"):
    cfg = dataclasses.replace(base, variant=variant)
    params = init_params(cfg, seed=3)
    loss = forward_teacher_forced(table, targets, params, cfg).loss
    ad.backward(loss)
    f = lambda: float(forward_teacher_forced(table, targets, params, cfg).loss.value)  # noqa: E731
    print(f"{variant}: loss {float(loss.value):.4f}")
    for name, p in params.items():
        err = ad.relative_error(p.grad, ad.numerical_gradient(f, p))
        print(f"  {name:10s} {str(p.shape):10s} rel err {err:.1e}")
