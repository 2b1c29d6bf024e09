"""Command-line entry point: ``mham <command> [flags]``.

Configuration comes from built-in defaults, then an optional ``--config`` JSON
file, then explicit flags.  Environment variables only affect log verbosity
(``MHAM_LOG_LEVEL``).
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import os
import subprocess
import sys
from pathlib import Path

from . import __version__
from .decoding import attention_trace, beam_decode, greedy_decode
from .metrics import evaluate as evaluate_pairs
from .model import ConfigError, ModelConfig, attention_dump, audit_attention_ops
from .synthetic import SyntheticSpec, generate_synthetic_dataset
from .tables import (Schema, Vocabulary, build_vocabulary, dump_table_file, encode_table,
                     load_table_file, tokenize)
from .training import (TrainConfig, load_model, prepare, save_model, train, write_epoch_log,
                       write_timing_log)

log = logging.getLogger("mham")


class CLIError(RuntimeError):
    pass


DEFAULTS = {
    "synth-data": {"seed": 0, "n": 30, "split": "20/5/5", "types": 4, "records": 4, "attrs": 3,
                   "low": 0, "high": 15, "null_prob": 0.1, "distractors": False, "out": None},
    "train": {"data": None, "schema": None, "variant": "mham", "seed": 0, "epochs": 500,
              "lr": 1e-4, "gru_dim": 400, "attr_emb": 100, "dec_emb": 250, "p_dim": 150,
              "attn_dim": None, "record_emb": None, "batch_size": 1, "clip": 5.0,
              "eval_every": 1, "max_len": 80, "dtype": "float64", "out": None},
    "generate": {"checkpoint": None, "data": None, "schema": None, "greedy": False, "beam": None,
                 "max_len": 80, "attn": None, "out": None},
    "evaluate": {"hyp": None, "ref": None, "tolerance": 5.0, "out": None},
    "inspect-attention": {"checkpoint": None, "data": None, "schema": None, "index": 0,
                          "max_len": 80, "out": None},
    "audit-ops": {"T": "4,16,36", "M": "3,7", "Tp": "5,30", "variant": "mham", "out": None},
}


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mham", description="Table-to-text summarization with "
                                "mixed hierarchical attention.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_, argument_default=None)
        sp.add_argument("--config", help="JSON file of flag values (flags win)")
        return sp

    s = cmd("synth-data", "write seeded synthetic train/valid/test splits")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int, help="total number of tables")
    s.add_argument("--split", help="train/valid/test counts, e.g. 20/5/5")
    s.add_argument("--types", type=int, help="number of record types")
    s.add_argument("--records", type=int, help="records per table (T)")
    s.add_argument("--attrs", type=int, help="numeric attributes per record (M)")
    s.add_argument("--low", type=int)
    s.add_argument("--high", type=int)
    s.add_argument("--null-prob", type=float)
    s.add_argument("--distractors", action="store_true", default=None)
    s.add_argument("--out", help="output directory")

    t = cmd("train", "train a model and keep the best-validation checkpoint")
    t.add_argument("--data", help="directory with train.json and valid.json")
    t.add_argument("--schema", help="schema JSON overriding the one in the data files")
    t.add_argument("--variant", choices=["mham", "nhm"])
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--gru-dim", type=int)
    t.add_argument("--attr-emb", type=int)
    t.add_argument("--dec-emb", type=int)
    t.add_argument("--p-dim", type=int)
    t.add_argument("--attn-dim", type=int)
    t.add_argument("--record-emb", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--clip", type=float, help="global gradient-norm clip; 0 disables")
    t.add_argument("--eval-every", type=int)
    t.add_argument("--max-len", type=int, help="validation decode length cap")
    t.add_argument("--dtype", choices=["float32", "float64"])
    t.add_argument("--out", help="output directory")

    g = cmd("generate", "decode summaries for a table file")
    g.add_argument("--checkpoint")
    g.add_argument("--data", help="table JSON file")
    g.add_argument("--schema")
    g.add_argument("--greedy", action="store_true", default=None)
    g.add_argument("--beam", type=int)
    g.add_argument("--max-len", type=int)
    g.add_argument("--attn", help="directory for per-instance attention dumps")
    g.add_argument("--out", help="summaries file (stdout if omitted)")

    e = cmd("evaluate", "score a hypothesis file against a reference file")
    e.add_argument("--hyp")
    e.add_argument("--ref")
    e.add_argument("--tolerance", type=float)
    e.add_argument("--out", help="JSON report path (stdout if omitted)")

    i = cmd("inspect-attention", "dump attention weights for one instance")
    i.add_argument("--checkpoint")
    i.add_argument("--data")
    i.add_argument("--schema")
    i.add_argument("--index", type=int)
    i.add_argument("--max-len", type=int)
    i.add_argument("--out")

    a = cmd("audit-ops", "count attention score evaluations over a dimension sweep")
    a.add_argument("--T", help="comma-separated record counts")
    a.add_argument("--M", help="comma-separated attribute counts")
    a.add_argument("--Tp", help="comma-separated decoder lengths")
    a.add_argument("--variant", choices=["mham", "nhm"])
    a.add_argument("--out", help="CSV path (stdout if omitted)")
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    conf = dict(DEFAULTS[args.command])
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            from_file = json.load(fh)
        for k, v in from_file.items():
            k = k.replace("-", "_")
            if k not in conf:
                raise CLIError(f"unknown config key {k!r} for {args.command}")
            conf[k] = v
    for k, v in vars(args).items():
        if k in conf and v is not None:
            conf[k] = v
    return conf


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(path, command: str, conf: dict, inputs: list, outputs: list) -> None:
    manifest = {"command": command, "config": conf, "seed": conf.get("seed"),
                "inputs": [str(x) for x in inputs], "outputs": [str(x) for x in outputs],
                "version": __version__, "git_describe": _git_describe(),
                "started_at": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _manifest_path(out) -> Path | None:
    return None if out is None else Path(str(out) + ".manifest.json")


def _load_schema(path) -> Schema | None:
    if not path:
        return None
    with open(path, encoding="utf-8") as fh:
        return Schema.from_json(json.load(fh))


# --------------------------------------------------------------------------
# commands


def cmd_synth_data(conf: dict) -> int:
    if not conf["out"]:
        raise CLIError("--out is required")
    counts = _ints(conf["split"].replace("/", ","))
    if len(counts) != 3:
        raise CLIError("--split needs three counts, e.g. 20/5/5")
    if sum(counts) != conf["n"]:
        if conf["n"] == 0:
            counts = [0, 0, 0]
        else:
            raise CLIError(f"--split {conf['split']} does not add up to --n {conf['n']}")
    out = Path(conf["out"])
    out.mkdir(parents=True, exist_ok=True)
    files = [out / f"{name}.json" for name in ("train", "valid", "test")]
    write_manifest(out / "manifest.json", "synth-data", conf, [], files)
    spec = SyntheticSpec(n_record_types=conf["types"], n_records=conf["records"],
                         n_attributes=conf["attrs"], low=conf["low"], high=conf["high"],
                         null_prob=conf["null_prob"], distractors=bool(conf["distractors"]))
    data = generate_synthetic_dataset(conf["seed"], conf["n"], spec)
    schema = spec.schema()
    start = 0
    for path, k in zip(files, counts):
        dump_table_file(path, schema, data[start:start + k])
        start += k
    schema_path = out / "schema.json"
    schema_path.write_text(json.dumps(schema.to_json(), indent=1, sort_keys=True) + "\n",
                           encoding="utf-8")
    return 0


def cmd_train(conf: dict) -> int:
    if not conf["data"] or not conf["out"]:
        raise CLIError("--data and --out are required")
    data = Path(conf["data"])
    out = Path(conf["out"])
    out.mkdir(parents=True, exist_ok=True)
    ckpt, log_path = out / "best.ckpt", out / "epoch_log.csv"
    write_manifest(out / "manifest.json", "train", conf, [data / "train.json", data / "valid.json"],
                   [ckpt, log_path, out / "vocab.txt", out / "timing.csv"])
    override = _load_schema(conf["schema"])
    schema, train_inst = load_table_file(data / "train.json", override)
    valid_inst = []
    if (data / "valid.json").exists():
        _, valid_inst = load_table_file(data / "valid.json", schema)
    if not train_inst:
        raise CLIError("training split is empty")
    vocab = build_vocabulary(train_inst)
    vocab.save(out / "vocab.txt")
    cfg = ModelConfig(attr_widths=schema.attr_widths, n_record_types=schema.n_record_types,
                      vocab_size=len(vocab), variant=conf["variant"],
                      attr_embed_dim=conf["attr_emb"], record_type_embed_dim=conf["attr_emb"],
                      gru_dim=conf["gru_dim"], p_dim=conf["p_dim"], dec_embed_dim=conf["dec_emb"],
                      attn_dim=conf["attn_dim"], record_emb_dim=conf["record_emb"])
    tcfg = TrainConfig(lr=conf["lr"], epochs=conf["epochs"], batch_size=conf["batch_size"],
                       seed=conf["seed"], clip_norm=conf["clip"] or None, dtype=conf["dtype"],
                       max_decode_len=conf["max_len"], eval_every=conf["eval_every"])
    log.info("gradient clipping: %s", tcfg.clip_norm)
    result = train(prepare(train_inst, schema, vocab), prepare(valid_inst, schema, vocab), cfg, tcfg)
    save_model(ckpt, cfg, result.best_params, result.best_state, schema, vocab, tcfg)
    write_epoch_log(log_path, result.log)
    write_timing_log(out / "timing.csv", result.log)
    log.info("best epoch %d, validation sBLEU %.2f", result.best_epoch, result.best_sbleu)
    return 0


def _load_for_inference(conf: dict):
    if not conf["checkpoint"] or not conf["data"]:
        raise CLIError("--checkpoint and --data are required")
    model = load_model(conf["checkpoint"])
    schema = _load_schema(conf["schema"]) or model.schema
    data_schema, instances = load_table_file(conf["data"], schema)
    vocab = model.vocab
    if vocab is None:
        vpath = Path(conf["checkpoint"]).with_name("vocab.txt")
        if not vpath.exists():
            raise CLIError("checkpoint carries no vocabulary and no vocab.txt sits beside it")
        vocab = Vocabulary.load(vpath)
    cfg = model.config
    if len(vocab) != cfg.vocab_size:
        raise CLIError(f"vocabulary size {len(vocab)} != model vocab size {cfg.vocab_size}")
    if data_schema.attr_widths != cfg.attr_widths or data_schema.n_record_types != cfg.n_record_types:
        raise CLIError("table schema does not match the checkpoint's model config")
    return model, data_schema, vocab, instances


def cmd_generate(conf: dict) -> int:
    model, schema, vocab, instances = _load_for_inference(conf)
    target = _manifest_path(conf["out"]) or (conf["attn"] and Path(conf["attn"]) / "manifest.json")
    if target:
        write_manifest(target, "generate", conf, [conf["checkpoint"], conf["data"]],
                       [conf["out"], conf["attn"]])
    cfg, params = model.config, model.params
    use_beam = conf["beam"] is not None and not conf["greedy"]
    lines = []
    for idx, inst in enumerate(instances):
        enc = encode_table(inst.table, schema)
        if use_beam:
            ids = beam_decode(enc, params, cfg, conf["beam"], conf["max_len"]).best.tokens
        else:
            ids = greedy_decode(enc, params, cfg, conf["max_len"])
        lines.append(" ".join(vocab.decode(ids)))
        if conf["attn"]:
            enc_out, steps = attention_trace(enc, ids, params, cfg)
            dump = attention_dump(enc_out, steps)
            dump["tokens"] = vocab.decode(ids) + ["</s>"]
            adir = Path(conf["attn"])
            adir.mkdir(parents=True, exist_ok=True)
            (adir / f"attn_{idx:05d}.json").write_text(json.dumps(dump) + "\n", encoding="utf-8")
    text = "".join(line + "\n" for line in lines)
    if conf["out"]:
        Path(conf["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _read_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def cmd_evaluate(conf: dict) -> int:
    if not conf["hyp"] or not conf["ref"]:
        raise CLIError("--hyp and --ref are required")
    hyps, refs = _read_lines(conf["hyp"]), _read_lines(conf["ref"])
    if len(hyps) != len(refs):
        raise CLIError(f"line counts differ: {len(hyps)} hypotheses, {len(refs)} references")
    if not hyps:
        raise CLIError("nothing to evaluate")
    report = evaluate_pairs([(tokenize(h), tokenize(r)) for h, r in zip(hyps, refs)],
                            conf["tolerance"])
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if conf["out"]:
        Path(conf["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_inspect_attention(conf: dict) -> int:
    model, schema, vocab, instances = _load_for_inference(conf)
    if not 0 <= conf["index"] < len(instances):
        raise CLIError(f"--index {conf['index']} outside 0..{len(instances) - 1}")
    inst = instances[conf["index"]]
    enc = encode_table(inst.table, schema)
    ids = greedy_decode(enc, model.params, model.config, conf["max_len"])
    enc_out, steps = attention_trace(enc, ids, model.params, model.config)
    dump = attention_dump(enc_out, steps)
    dump["tokens"] = vocab.decode(ids) + ["</s>"]
    dump["records"] = [r.type for r in inst.table.records]
    dump["attributes"] = [a.name for a in schema.attributes]
    text = json.dumps(dump, indent=1) + "\n"
    if conf["out"]:
        Path(conf["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


AUDIT_COLUMNS = ["T", "M", "T_prime", "attr_scores", "record_scores", "fully_dynamic_attr_scores"]


def audit_rows(Ts, Ms, Tps, variant: str = "mham") -> list[dict]:
    rows = []
    for T in Ts:
        for M in Ms:
            for Tp in Tps:
                static = audit_attention_ops(T, M, Tp, variant)
                dynamic = audit_attention_ops(T, M, Tp, variant, fully_dynamic=True)
                rows.append({"T": T, "M": M, "T_prime": Tp, "attr_scores": static.attr_scores,
                             "record_scores": static.record_scores,
                             "fully_dynamic_attr_scores": dynamic.attr_scores})
    return rows


def cmd_audit_ops(conf: dict) -> int:
    if conf["out"]:
        write_manifest(_manifest_path(conf["out"]), "audit-ops", conf, [], [conf["out"]])
    rows = audit_rows(_ints(conf["T"]), _ints(conf["M"]), _ints(conf["Tp"]), conf["variant"])
    fh = open(conf["out"], "w", newline="", encoding="utf-8") if conf["out"] else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=AUDIT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


COMMANDS = {"synth-data": cmd_synth_data, "train": cmd_train, "generate": cmd_generate,
            "evaluate": cmd_evaluate, "inspect-attention": cmd_inspect_attention,
            "audit-ops": cmd_audit_ops}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MHAM_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        conf = resolve(args)
        return COMMANDS[args.command](conf)
    except (CLIError, ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"mham {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
