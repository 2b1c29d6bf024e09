import csv
import json

import pytest

from mham.cli import main
from mham.training import load_model

SMALL = ["--gru-dim", "8", "--attr-emb", "6", "--dec-emb", "6", "--p-dim", "5"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth-data", "--seed", "3", "--n", "12", "--split", "8/2/2", "--types", "3",
                 "--records", "3", "--attrs", "2", "--high", "9", "--out", str(d)]) == 0
    return d


@pytest.fixture(scope="module")
def trained(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(data_dir), "--epochs", "3", "--lr", "0.01",
                 "--out", str(out)] + SMALL) == 0
    return out


def test_synth_data_is_byte_identical(tmp_path):
    args = ["synth-data", "--seed", "9", "--n", "6", "--split", "4/1/1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("train.json", "valid.json", "test.json", "schema.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 9 and manifest["command"] == "synth-data"


def test_synth_data_zero_tables(tmp_path):
    assert main(["synth-data", "--n", "0", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "train.json").read_text())["instances"] == []


def test_synth_data_bad_split(tmp_path, capsys):
    assert main(["synth-data", "--n", "5", "--split", "1/1/1", "--out", str(tmp_path)]) == 1
    assert "does not add up" in capsys.readouterr().err


def test_train_outputs(trained):
    for name in ("best.ckpt", "epoch_log.csv", "timing.csv", "vocab.txt", "manifest.json"):
        assert (trained / name).exists()
    rows = list(csv.DictReader(open(trained / "epoch_log.csv")))
    assert [r["epoch"] for r in rows] == ["1", "2", "3"]
    model = load_model(trained / "best.ckpt")
    assert model.config.gru_dim == 8 and model.config.variant == "mham"


@pytest.mark.parametrize("variant", ["mham", "nhm"])
def test_train_single_epoch_both_variants(data_dir, tmp_path, variant):
    assert main(["train", "--data", str(data_dir), "--epochs", "1", "--variant", variant,
                 "--out", str(tmp_path)] + SMALL) == 0
    assert load_model(tmp_path / "best.ckpt").config.variant == variant


def test_train_zero_lr_keeps_init(data_dir, tmp_path):
    from mham.training import init_params
    assert main(["train", "--data", str(data_dir), "--epochs", "1", "--lr", "0", "--seed", "4",
                 "--out", str(tmp_path)] + SMALL) == 0
    model = load_model(tmp_path / "best.ckpt")
    fresh = init_params(model.config, 4)
    assert all((fresh[k].value == model.params[k].value).all() for k in fresh)


def test_generate_beam_one_equals_greedy(trained, data_dir, tmp_path):
    common = ["generate", "--checkpoint", str(trained / "best.ckpt"), "--data",
              str(data_dir / "test.json"), "--max-len", "20"]
    assert main(common + ["--greedy", "--out", str(tmp_path / "g.txt")]) == 0
    assert main(common + ["--beam", "1", "--out", str(tmp_path / "b.txt")]) == 0
    g = (tmp_path / "g.txt").read_text()
    assert g == (tmp_path / "b.txt").read_text()
    assert len(g.splitlines()) == 2


def test_generate_respects_max_len(trained, data_dir, tmp_path):
    assert main(["generate", "--checkpoint", str(trained / "best.ckpt"), "--data",
                 str(data_dir / "test.json"), "--max-len", "2", "--out", str(tmp_path / "o.txt")]) == 0
    assert all(len(line.split()) <= 2 for line in (tmp_path / "o.txt").read_text().splitlines())


def test_generate_attention_dumps(trained, data_dir, tmp_path):
    assert main(["generate", "--checkpoint", str(trained / "best.ckpt"), "--data",
                 str(data_dir / "test.json"), "--max-len", "10", "--attn", str(tmp_path / "attn"),
                 "--out", str(tmp_path / "o.txt")]) == 0
    dumps = sorted((tmp_path / "attn").glob("attn_*.json"))
    assert len(dumps) == 2
    d = json.loads(dumps[0].read_text())
    assert len(d["gamma"]) == len(d["tokens"])
    assert all(abs(sum(row) - 1) < 1e-6 for row in d["alpha"])


def test_generate_schema_mismatch_fails(trained, tmp_path, capsys):
    other = tmp_path / "other"
    assert main(["synth-data", "--n", "3", "--split", "1/1/1", "--attrs", "4",
                 "--out", str(other)]) == 0
    assert main(["generate", "--checkpoint", str(trained / "best.ckpt"),
                 "--data", str(other / "test.json")]) == 1
    assert "error" in capsys.readouterr().err


def write(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return str(path)


def test_evaluate_identity_and_perturbation(tmp_path):
    refs = ["windSpeed near 12 , gust near 9 . overall moderate .", "nothing notable . overall low ."]
    ref = write(tmp_path / "ref.txt", refs)
    out = tmp_path / "r.json"
    assert main(["evaluate", "--hyp", ref, "--ref", ref, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["sbleu"] == pytest.approx(100) and rep["rouge_l"] == pytest.approx(100)
    hyp = write(tmp_path / "hyp.txt", [refs[0].replace("12", "15"), refs[1]])
    assert main(["evaluate", "--hyp", hyp, "--ref", ref, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["sbleu"] < 100 and rep["cbleu"] == pytest.approx(100)


def test_evaluate_empty_hypothesis_lines(tmp_path):
    ref = write(tmp_path / "ref.txt", ["a b c d", "e f g h"])
    hyp = write(tmp_path / "hyp.txt", ["", "e f g h"])
    assert main(["evaluate", "--hyp", hyp, "--ref", ref, "--out", str(tmp_path / "r.json")]) == 0


def test_evaluate_line_count_mismatch(tmp_path, capsys):
    ref = write(tmp_path / "ref.txt", ["a", "b"])
    hyp = write(tmp_path / "hyp.txt", ["a"])
    assert main(["evaluate", "--hyp", hyp, "--ref", ref]) == 1
    assert "line counts differ" in capsys.readouterr().err


def test_audit_ops_csv(tmp_path):
    out = tmp_path / "audit.csv"
    assert main(["audit-ops", "--T", "4,36", "--M", "7", "--Tp", "5,30", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4
    for r in rows:
        T, M, Tp = int(r["T"]), int(r["M"]), int(r["T_prime"])
        assert int(r["attr_scores"]) == T * M
        assert int(r["record_scores"]) == T * Tp
        assert int(r["fully_dynamic_attr_scores"]) == T * M * Tp


def test_inspect_attention(trained, data_dir, tmp_path):
    out = tmp_path / "a.json"
    assert main(["inspect-attention", "--checkpoint", str(trained / "best.ckpt"), "--data",
                 str(data_dir / "test.json"), "--index", "1", "--max-len", "10", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert len(d["records"]) == 3 and d["attributes"] == ["a0", "a1"]
    assert main(["inspect-attention", "--checkpoint", str(trained / "best.ckpt"), "--data",
                 str(data_dir / "test.json"), "--index", "7"]) == 1


def test_config_file_precedence(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"seed": 5, "n": 3, "split": "1/1/1"}))
    assert main(["synth-data", "--config", str(conf), "--seed", "6", "--out", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 6 and manifest["config"]["n"] == 3
    conf.write_text(json.dumps({"bogus": 1}))
    assert main(["synth-data", "--config", str(conf), "--out", str(tmp_path / "p")]) == 1
