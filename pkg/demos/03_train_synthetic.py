"""Train MHAM on a small synthetic corpus and decode a few held-out tables.

Takes about 20 seconds on one core.
"""
from mham.decoding import beam_decode, greedy_decode
from mham.metrics import evaluate
from mham.model import ModelConfig
from mham.synthetic import SyntheticSpec, generate_synthetic_dataset
from mham.tables import build_vocabulary
from mham.training import TrainConfig, prepare, train

spec = SyntheticSpec()
schema = spec.schema()
data = generate_synthetic_dataset(seed=11, n_tables=120, spec=spec)
train_inst, valid_inst = data[:100], data[100:]
vocab = build_vocabulary(train_inst)
print(f"{len(train_inst)} training tables, vocabulary of {len(vocab)}")
print("example:", train_inst[0].text)

cfg = ModelConfig(attr_widths=schema.attr_widths, n_record_types=schema.n_record_types,
                  vocab_size=len(vocab), attr_embed_dim=32, record_type_embed_dim=32,
                  gru_dim=64, p_dim=32, dec_embed_dim=32)
train_set = prepare(train_inst, schema, vocab)
valid_set = prepare(valid_inst, schema, vocab)
result = train(train_set, valid_set, cfg, TrainConfig(lr=3e-3, epochs=15, eval_every=3))
for rec in result.log:
    if rec.val_sbleu is not None:
        print(f"epoch {rec.epoch:3d}  loss/token {rec.train_loss:.4f}  valid sBLEU {rec.val_sbleu:.1f}")

# load the best epoch's weights back into the live parameters
for k, v in result.best_params.items():
    result.params[k].value[:] = v
print("best epoch", result.best_epoch)

pairs = []
for ex in valid_set:
    hyp = vocab.decode(beam_decode(ex.table, result.params, cfg, beam_width=3, max_len=40).best.tokens)
    pairs.append((hyp, ex.reference))
for hyp, ref in pairs[:4]:
    print("  hyp:", " ".join(hyp))
    print("  ref:", " ".join(ref))
scores = evaluate(pairs)
print({k: round(scores[k], 2) for k in ("sbleu", "cbleu", "rouge_l")})
print("greedy == beam(1):",
      all(greedy_decode(ex.table, result.params, cfg, 40)
          == beam_decode(ex.table, result.params, cfg, 1, 40).best.tokens for ex in valid_set))
