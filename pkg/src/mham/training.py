"""Parameter initialisation, Adam, and the epoch loop with best-sBLEU selection."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .checkpoint import load_checkpoint, save_checkpoint
from .model import ModelConfig, check_params, forward_teacher_forced, is_encoder_embedding, param_shapes
from .tables import EOS, UNK, EncodedTable, Instance, Schema, Vocabulary, encode_table

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 500
    batch_size: int = 1
    seed: int = 0
    clip_norm: float | None = 5.0
    dtype: str = "float64"
    max_decode_len: int = 80
    eval_every: int = 1

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("epochs, batch_size and eval_every must be >= 1")


def glorot_limit(shape: tuple) -> float:
    fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], shape[0])
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(cfg: ModelConfig, seed: int = 0, dtype=None) -> dict[str, Node]:
    """Encoder embeddings ~ U[-1, 1); other matrices Glorot-uniform; biases zero."""
    rng = np.random.default_rng(seed)
    dtype = dtype or ad.get_default_dtype()
    params = {}
    for name, shape in param_shapes(cfg).items():
        if is_encoder_embedding(name):
            value = rng.uniform(-1.0, 1.0, size=shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        else:
            lim = glorot_limit(shape)
            value = rng.uniform(-lim, lim, size=shape)
        params[name] = ad.parameter(value.astype(dtype), name=name)
    return params


class Adam:
    def __init__(self, params: dict[str, Node], lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        """Apply one update; parameters without a gradient count as zero gradient."""
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient in {name!r}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                g = 0.0
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values())))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


@dataclass
class Example:
    table: EncodedTable
    targets: list[int]        # summary ids followed by EOS
    reference: list[str]


def prepare(instances: Sequence[Instance], schema: Schema, vocab: Vocabulary) -> list[Example]:
    return [Example(encode_table(inst.table, schema), vocab.encode(inst.summary) + [EOS],
                    list(inst.summary)) for inst in instances]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_sbleu: float | None
    wall_seconds: float


@dataclass
class TrainResult:
    params: dict[str, Node]            # final parameters
    best_params: dict[str, np.ndarray]
    best_epoch: int
    best_sbleu: float
    log: list[EpochRecord] = field(default_factory=list)
    optimizer: Adam | None = None
    best_state: dict = field(default_factory=dict)


def _cast_examples(examples, dtype):
    for ex in examples:
        ex.table = EncodedTable([a.astype(dtype) for a in ex.table.attrs],
                                ex.table.types.astype(dtype))
    return examples


def validation_sbleu(examples: Sequence[Example], params, cfg: ModelConfig, max_len: int) -> float:
    from .decoding import greedy_decode
    from .metrics import sbleu

    # out-of-vocabulary reference words become -1 so a predicted UNK never matches them
    pairs = [(greedy_decode(ex.table, params, cfg, max_len=max_len),
              [-1 if t == UNK else t for t in ex.targets[:-1]]) for ex in examples]
    return sbleu(pairs).score


def train(train_set: Sequence[Example], valid_set: Sequence[Example], cfg: ModelConfig,
          tcfg: TrainConfig, params: dict[str, Node] | None = None) -> TrainResult:
    """Per-instance Adam training with validation-sBLEU checkpoint selection.

    Validation ties go to the lower epoch training loss, then to the earlier epoch.
    """
    if not train_set:
        raise TrainingError("empty training set")
    dtype = np.dtype(tcfg.dtype).type
    with ad.precision(dtype):
        params = params if params is not None else init_params(cfg, tcfg.seed)
        check_params(params, cfg)
        train_set = _cast_examples(list(train_set), dtype)
        valid_set = _cast_examples(list(valid_set), dtype)
        opt = Adam(params, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
        rng = np.random.default_rng([tcfg.seed, 1])
        best = None
        result = TrainResult(params, {}, 0, -1.0, [], opt)
        start = time.perf_counter()
        for epoch in range(1, tcfg.epochs + 1):
            order = rng.permutation(len(train_set))
            total, tokens = 0.0, 0
            for b0 in range(0, len(order), tcfg.batch_size):
                batch = order[b0:b0 + tcfg.batch_size]
                opt.zero_grad()
                for i in batch:
                    ex = train_set[i]
                    try:
                        out = forward_teacher_forced(ex.table, ex.targets, params, cfg)
                        if len(batch) > 1:
                            ad.backward(ad.scale(out.loss, 1.0 / len(batch)))
                        else:
                            ad.backward(out.loss)
                    except ad.NonFiniteError as exc:
                        raise TrainingError(f"epoch {epoch}, instance {i}: {exc}") from exc
                    loss = float(out.loss.value)
                    if not np.isfinite(loss):
                        raise TrainingError(f"epoch {epoch}, instance {i}: loss is {loss}")
                    total += loss
                    tokens += out.n_tokens
                grads = {k: p.grad for k, p in params.items() if p.grad is not None}
                if tcfg.clip_norm:
                    clip_global_norm(grads, tcfg.clip_norm)
                try:
                    opt.step(grads)
                except NonFiniteGradient as exc:
                    raise TrainingError(f"epoch {epoch}, batch at {b0}: {exc}") from exc
            opt.zero_grad()
            train_loss = total / tokens
            val = None
            if valid_set and (epoch % tcfg.eval_every == 0 or epoch == tcfg.epochs):
                with ad.no_grad():
                    val = validation_sbleu(valid_set, params, cfg, tcfg.max_decode_len)
            rec = EpochRecord(epoch, train_loss, val, time.perf_counter() - start)
            result.log.append(rec)
            log.info("epoch %d loss %.4f val_sbleu %s", epoch, train_loss, val)
            key = (val if val is not None else -1.0, -train_loss)
            if (val is not None or not valid_set) and (best is None or key > best):
                best = key
                result.best_epoch = epoch
                result.best_sbleu = val if val is not None else float("nan")
                result.best_params = {k: p.value.copy() for k, p in params.items()}
                result.best_state = _optimizer_state(opt, rng, epoch)
    return result


def _optimizer_state(opt: Adam, rng, epoch: int) -> dict:
    return {"epoch": epoch, "adam_t": opt.t,
            "m": {k: v.copy() for k, v in opt.m.items()},
            "v": {k: v.copy() for k, v in opt.v.items()},
            "rng_state": rng.bit_generator.state}


# --------------------------------------------------------------------------
# persistence


def save_model(path, cfg: ModelConfig, params: dict, opt_state: dict | None = None,
               schema: Schema | None = None, vocab: Vocabulary | None = None,
               train_config: TrainConfig | None = None) -> None:
    tensors = {k: (p.value if isinstance(p, Node) else p) for k, p in params.items()}
    state = {}
    if opt_state:
        for k, v in opt_state["m"].items():
            tensors[f"adam.m/{k}"] = v
        for k, v in opt_state["v"].items():
            tensors[f"adam.v/{k}"] = v
        state.update(epoch=opt_state["epoch"], adam_t=opt_state["adam_t"],
                     rng_state=opt_state["rng_state"])
    if schema is not None:
        state["schema"] = schema.to_json()
    if vocab is not None:
        state["vocab"] = list(vocab.tokens)
    if train_config is not None:
        state["train_config"] = asdict(train_config)
    save_checkpoint(path, cfg.to_json(), tensors, state)


@dataclass
class LoadedModel:
    config: ModelConfig
    params: dict[str, Node]
    state: dict
    moments: dict[str, dict[str, np.ndarray]]

    @property
    def schema(self) -> Schema | None:
        s = self.state.get("schema")
        return Schema.from_json(s) if s else None

    @property
    def vocab(self) -> Vocabulary | None:
        v = self.state.get("vocab")
        return Vocabulary(v) if v is not None else None


def load_model(path) -> LoadedModel:
    header, tensors = load_checkpoint(path)
    cfg = ModelConfig.from_json(header["model_config"])
    params, moments = {}, {"m": {}, "v": {}}
    for name, arr in tensors.items():
        if name.startswith("adam."):
            kind, pname = name[5:].split("/", 1)
            moments[kind][pname] = arr
        else:
            params[name] = Node(arr.copy(), requires_grad=True, name=name)
    check_params(params, cfg)
    return LoadedModel(cfg, params, header.get("state", {}), moments)


def write_epoch_log(path, records: Sequence[EpochRecord]) -> None:
    """Deterministic columns only; wall-clock times go to :func:`write_timing_log`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_sbleu"])
        for r in records:
            w.writerow([r.epoch, repr(r.train_loss), "" if r.val_sbleu is None else repr(r.val_sbleu)])


def write_timing_log(path, records: Sequence[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "wall_seconds"])
        for r in records:
            w.writerow([r.epoch, f"{r.wall_seconds:.3f}"])


def read_epoch_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
