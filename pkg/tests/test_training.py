import numpy as np
import pytest

from mham import autodiff as ad
from mham import training as tr
from mham.model import ModelConfig, forward_teacher_forced, param_shapes
from mham.synthetic import SyntheticSpec, generate_synthetic_dataset
from mham.tables import build_vocabulary

from conftest import tiny_config


def small_problem(n=6, seed=0, variant="mham"):
    spec = SyntheticSpec(n_record_types=2, n_records=2, n_attributes=2, high=5)
    data = generate_synthetic_dataset(seed, n, spec)
    schema = spec.schema()
    vocab = build_vocabulary(data)
    cfg = ModelConfig(attr_widths=schema.attr_widths, n_record_types=2, vocab_size=len(vocab),
                      variant=variant, attr_embed_dim=6, record_type_embed_dim=6, gru_dim=8,
                      p_dim=5, dec_embed_dim=6)
    return cfg, tr.prepare(data, schema, vocab), schema, vocab


def snapshot(params):
    return {k: p.value.copy() for k, p in params.items()}


# --- initialisation -------------------------------------------------------------

def test_init_is_seeded():
    cfg = tiny_config()
    a, b, c = tr.init_params(cfg, 1), tr.init_params(cfg, 1), tr.init_params(cfg, 2)
    assert all(np.array_equal(a[k].value, b[k].value) for k in a)
    assert any(not np.array_equal(a[k].value, c[k].value) for k in a)


def test_glorot_limit_value():
    assert tr.glorot_limit((400, 500)) == pytest.approx(0.0816, abs=1e-4)


def test_init_ranges():
    cfg = tiny_config(widths=(10, 10), n_types=12, dim=100, gru=40)
    params = tr.init_params(cfg, 0)
    for name, p in params.items():
        v = p.value
        if name.startswith("W") and name[1:].isdigit():
            assert v.min() >= -1.0 and v.max() < 1.0
        elif v.ndim == 1:
            assert not v.any()
        else:
            assert np.abs(v).max() <= tr.glorot_limit(v.shape)


def test_encoder_embedding_fills_unit_interval():
    shape = (1000, 1000)
    cfg = ModelConfig(attr_widths=(1000,), n_record_types=3, vocab_size=5, attr_embed_dim=1000,
                      record_type_embed_dim=1000, gru_dim=2, p_dim=2, dec_embed_dim=2)
    assert param_shapes(cfg)["W1"] == shape
    v = tr.init_params(cfg, 0)["W1"].value
    assert -1.0 <= v.min() < -0.999 and 0.999 < v.max() < 1.0


# --- optimiser --------------------------------------------------------------------

def test_adam_zero_gradient_is_a_no_op():
    p = ad.parameter(np.array([1.0, -2.0]))
    opt = tr.Adam({"p": p}, lr=0.1)
    opt.step({"p": np.zeros(2)})
    assert p.value.tolist() == [1.0, -2.0]


def test_adam_first_step_is_lr_times_sign():
    p = ad.parameter(np.array([0.0, 0.0, 0.0]))
    opt = tr.Adam({"p": p}, lr=0.01)
    opt.step({"p": np.array([3.0, -0.2, 50.0])})
    np.testing.assert_allclose(p.value, [-0.01, 0.01, -0.01], rtol=1e-6)


def test_adam_minimises_quadratic():
    p = ad.parameter(np.array([1.0]))
    opt = tr.Adam({"p": p}, lr=0.1)
    for _ in range(100):
        opt.zero_grad()
        ad.backward(ad.sum(ad.mul(p, p)))
        opt.step()
    assert abs(p.value[0]) < 0.05


def test_adam_rejects_non_finite_gradient():
    p = ad.parameter(np.zeros(2))
    opt = tr.Adam({"W_out_s": p})
    with pytest.raises(tr.NonFiniteGradient, match="W_out_s"):
        opt.step({"W_out_s": np.array([0.0, np.nan])})
    assert p.value.tolist() == [0.0, 0.0] and opt.t == 0


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert tr.clip_global_norm(g, 1.0) == 5.0
    assert np.sqrt(g["a"] ** 2 + g["b"] ** 2)[0] == pytest.approx(1.0)
    h = {"a": np.array([0.3])}
    tr.clip_global_norm(h, 1.0)
    assert h["a"][0] == 0.3


def test_config_validation():
    with pytest.raises(ValueError):
        tr.TrainConfig(lr=-1)
    with pytest.raises(ValueError):
        tr.TrainConfig(epochs=0)


# --- training loop ------------------------------------------------------------------

def test_zero_learning_rate_leaves_parameters():
    cfg, data, *_ = small_problem()
    params = tr.init_params(cfg, 0)
    before = snapshot(params)
    tr.train(data, [], cfg, tr.TrainConfig(lr=0.0, epochs=2), params)
    assert all(np.array_equal(before[k], params[k].value) for k in before)


def test_training_is_deterministic():
    cfg, data, *_ = small_problem()
    runs = [tr.train(data, data[:2], cfg, tr.TrainConfig(lr=1e-2, epochs=3, seed=5)) for _ in range(2)]
    assert [r.train_loss for r in runs[0].log] == [r.train_loss for r in runs[1].log]
    assert all(np.array_equal(runs[0].params[k].value, runs[1].params[k].value) for k in runs[0].params)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_loss_decreases(seed):
    cfg, data, *_ = small_problem(seed=seed)
    res = tr.train(data, [], cfg, tr.TrainConfig(lr=1e-2, epochs=5, seed=seed))
    losses = [r.train_loss for r in res.log]
    assert losses[-1] < losses[0]


def test_empty_training_set_rejected():
    cfg, *_ = small_problem()
    with pytest.raises(tr.TrainingError):
        tr.train([], [], cfg, tr.TrainConfig(epochs=1))


def test_single_instance_overfits():
    cfg, data, *_ = small_problem(n=1)
    res = tr.train(data, [], cfg, tr.TrainConfig(lr=3e-2, epochs=200))
    assert res.log[-1].train_loss < 0.01


def test_best_epoch_selected_by_validation():
    cfg, data, *_ = small_problem()
    res = tr.train(data, data, cfg, tr.TrainConfig(lr=1e-2, epochs=4, eval_every=2))
    scored = [r for r in res.log if r.val_sbleu is not None]
    assert [r.epoch for r in scored] == [2, 4]
    assert res.best_sbleu == max(r.val_sbleu for r in scored)


def test_float32_training_runs():
    cfg, data, *_ = small_problem()
    res = tr.train(data, [], cfg, tr.TrainConfig(lr=1e-2, epochs=1, dtype="float32"))
    assert res.params["W0"].value.dtype == np.float32


def test_minibatch_gradient_is_mean_of_instances():
    cfg, data, *_ = small_problem(n=2)
    params = tr.init_params(cfg, 0)
    grads = []
    for ex in data:
        for p in params.values():
            p.zero_grad()
        ad.backward(forward_teacher_forced(ex.table, ex.targets, params, cfg).loss)
        grads.append(snapshot_grads(params))
    for p in params.values():
        p.zero_grad()
    for ex in data:
        ad.backward(ad.scale(forward_teacher_forced(ex.table, ex.targets, params, cfg).loss, 0.5))
    for k, p in params.items():
        np.testing.assert_allclose(p.grad, (grads[0][k] + grads[1][k]) / 2, atol=1e-12)


def snapshot_grads(params):
    return {k: p.grad.copy() for k, p in params.items()}


# --- persistence ----------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    cfg, data, schema, vocab = small_problem()
    tcfg = tr.TrainConfig(lr=1e-2, epochs=2)
    res = tr.train(data, data[:2], cfg, tcfg)
    path = tmp_path / "m.ckpt"
    tr.save_model(path, cfg, res.best_params, res.best_state, schema, vocab, tcfg)
    loaded = tr.load_model(path)
    assert loaded.config == cfg
    assert loaded.schema == schema and loaded.vocab.tokens == vocab.tokens
    for k, v in res.best_params.items():
        assert loaded.params[k].value.tobytes() == v.tobytes()
        assert loaded.moments["m"][k].tobytes() == res.best_state["m"][k].tobytes()
    assert loaded.state["adam_t"] == res.best_state["adam_t"]
    tr.save_model(tmp_path / "again.ckpt", loaded.config, loaded.params,
                  {**res.best_state}, loaded.schema, loaded.vocab, tcfg)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_corrupt_checkpoint_rejected(tmp_path):
    from mham.checkpoint import CheckpointError
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\0" * 16)
    with pytest.raises(CheckpointError):
        tr.load_model(path)


def test_epoch_log_round_trip(tmp_path):
    recs = [tr.EpochRecord(1, 0.5, None, 1.0), tr.EpochRecord(2, 0.25, 61.5, 2.0)]
    tr.write_epoch_log(tmp_path / "log.csv", recs)
    rows = tr.read_epoch_log(tmp_path / "log.csv")
    assert rows == [{"epoch": "1", "train_loss": "0.5", "val_sbleu": ""},
                    {"epoch": "2", "train_loss": "0.25", "val_sbleu": "61.5"}]


def test_validation_sbleu_never_matches_unknown_words():
    cfg, data, schema, vocab = small_problem(n=2)
    params = tr.init_params(cfg, 0)
    params["b_out"].value[3] = 1e3        # always predict UNK
    ex = data[0]
    ex.targets = [3, 3, 3, 3, 2]            # reference made of out-of-vocabulary words
    assert tr.validation_sbleu([ex], params, cfg, max_len=4) == 0.0
