"""Mixed hierarchical attention encoder-decoder (MHAM) and the flat NHM variant.

Vectors are rows: a projection is ``x @ W`` with ``W`` of shape ``(d_in, d_out)``.
A table of T records is processed in one shot at the attribute level; the
record GRU and the decoder are unrolled step by step.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .tables import BOS, EncodedTable

VARIANTS = ("mham", "nhm")
GATE_FLOOR = 1e-30


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    attr_widths: tuple[int, ...]
    n_record_types: int
    vocab_size: int
    variant: str = "mham"
    attr_embed_dim: int = 100
    record_type_embed_dim: int = 100
    gru_dim: int = 400
    p_dim: int = 150
    dec_embed_dim: int = 250
    attn_dim: int | None = None        # width of the dynamic attention MLP; gru_dim if unset
    record_emb_dim: int | None = None  # optional re-projection of B^r, off by default

    def __post_init__(self):
        self.attr_widths = tuple(int(w) for w in self.attr_widths)
        self.variant = self.variant.lower()
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.record_type_embed_dim != self.attr_embed_dim:
            raise ConfigError("record-type and attribute embeddings must share a dimension")
        dims = [self.attr_embed_dim, self.gru_dim, self.p_dim, self.dec_embed_dim,
                self.vocab_size, self.n_record_types, *self.attr_widths]
        if not self.attr_widths or min(dims) <= 0:
            raise ConfigError("all dimensions must be positive")
        if self.attn_dim is not None and self.attn_dim <= 0:
            raise ConfigError("attn_dim must be positive")
        if self.record_emb_dim is not None and self.record_emb_dim <= 0:
            raise ConfigError("record_emb_dim must be positive")

    @property
    def n_attributes(self) -> int:
        return len(self.attr_widths)

    @property
    def record_dim(self) -> int:
        """Width of B^r."""
        return self.record_emb_dim or self.attr_embed_dim

    @property
    def encoding_dim(self) -> int:
        """Width of c_r = [h_r; B^r]."""
        return self.gru_dim + self.record_dim

    @property
    def attention_dim(self) -> int:
        return self.attn_dim or self.gru_dim

    def to_json(self) -> dict:
        d = asdict(self)
        d["attr_widths"] = list(self.attr_widths)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _gru_shapes(prefix: str, d_in: int, d: int) -> dict:
    return {f"{prefix}.W": (d_in, 3 * d), f"{prefix}.U_rz": (d, 2 * d),
            f"{prefix}.U_h": (d, d), f"{prefix}.b": (3 * d,)}


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Name -> shape for every trainable tensor, in a fixed order."""
    shapes: dict[str, tuple] = {}
    d = cfg.attr_embed_dim
    if cfg.variant == "mham":
        shapes["W0"] = (cfg.n_record_types, d)
        for j, w in enumerate(cfg.attr_widths):
            shapes[f"W{j + 1}"] = (w, d)
    else:
        shapes["W_nhm"] = (sum(cfg.attr_widths) + cfg.n_record_types, d)
    if cfg.record_emb_dim:
        shapes["W_rec"] = (d, cfg.record_emb_dim)
    h, dc, a = cfg.gru_dim, cfg.encoding_dim, cfg.attention_dim
    shapes.update(_gru_shapes("enc", cfg.record_dim, h))
    shapes["P"] = (dc, cfg.p_dim)
    shapes["q"] = (cfg.p_dim, 1)
    shapes["W_s"] = (h, a)
    shapes["W_c"] = (dc, a)
    shapes["v"] = (a, 1)
    shapes["E_dec"] = (cfg.vocab_size, cfg.dec_embed_dim)
    shapes.update(_gru_shapes("dec", dc + cfg.dec_embed_dim, h))
    shapes["W_out_s"] = (h, cfg.vocab_size)
    shapes["W_out_z"] = (dc, cfg.vocab_size)
    shapes["b_out"] = (cfg.vocab_size,)
    return shapes


def is_encoder_embedding(name: str) -> bool:
    """Record-type and attribute embeddings (initialised U[-1, 1), not Glorot)."""
    return name == "W_nhm" or (name[:1] == "W" and name[1:].isdigit())


def check_params(params: dict[str, Node], cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    if set(expected) != set(params):
        missing, extra = set(expected) - set(params), set(params) - set(expected)
        raise ConfigError(f"parameter names do not match config (missing {sorted(missing)}, "
                          f"unexpected {sorted(extra)})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ConfigError(f"{name}: shape {params[name].shape} != {shape}")


@dataclass
class OpCounts:
    """Attention score evaluations performed during one pass."""
    attr_scores: int = 0
    record_scores: int = 0


@dataclass
class EncoderOutput:
    C: Node                   # (T, encoding_dim) rows c_r
    g: Node                   # (T, 1) static record gates
    B: Node                   # (T, record_dim)
    H: Node                   # (T, gru_dim)
    alpha: Node | None        # (T, M) attribute attention; None for NHM
    CW: Node                  # C @ W_c, reused every decoder step
    embedded: Node | None = None   # (T, M, d) embedded attributes, kept for audit mode
    type_embedding: Node | None = None


@dataclass
class StepAttention:
    beta: np.ndarray    # raw record scores
    w: np.ndarray       # softmax over records
    gamma: np.ndarray   # gate-modulated weights
    z: np.ndarray       # context vector


@dataclass
class StepOutput:
    logits: Node
    log_probs: Node
    state: Node
    attention: StepAttention

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.value[0])


# --------------------------------------------------------------------------
# encoder


def embed_attributes(enc: EncodedTable, params: dict[str, Node]) -> tuple[Node, Node]:
    """Per-attribute embeddings stacked to (T, M, d) and type embeddings (T, d)."""
    embedded = []
    for j, A in enumerate(enc.attrs):
        W = params[f"W{j + 1}"]
        if A.shape[1] != W.shape[0]:
            raise ConfigError(f"attribute {j}: encoded width {A.shape[1]} != {W.shape[0]}")
        embedded.append(ad.matmul(ad.constant(A), W))
    W0 = params["W0"]
    if enc.types.shape[1] != W0.shape[0]:
        raise ConfigError(f"record-type width {enc.types.shape[1]} != {W0.shape[0]}")
    return ad.stack(embedded, axis=1), ad.matmul(ad.constant(enc.types), W0)


def attribute_attention(embedded: Node, type_emb: Node,
                        counter: OpCounts | None = None) -> tuple[Node, Node]:
    """Static attention over attributes.

    Scores are inner products between each embedded attribute and the record's
    type embedding; returns ``alpha`` (T, M) and ``B`` (T, d).
    """
    T, M, d = embedded.shape
    if M == 0:
        raise ValueError("attribute attention needs at least one attribute")
    scores = ad.sum(ad.mul(embedded, ad.reshape(type_emb, (T, 1, d))), axis=2)
    if counter is not None:
        counter.attr_scores += T * M
    alpha = ad.softmax(scores, axis=1)
    B = ad.sum(ad.mul(embedded, ad.reshape(alpha, (T, M, 1))), axis=1)
    return alpha, B


def build_nhm_record(enc: EncodedTable, params: dict[str, Node]) -> Node:
    """Flat record vectors: every raw attribute encoding plus the type one-hot, projected."""
    flat = np.concatenate(list(enc.attrs) + [enc.types], axis=1)
    W = params["W_nhm"]
    if flat.shape[1] != W.shape[0]:
        raise ConfigError(f"concatenated record width {flat.shape[1]} != {W.shape[0]}")
    return ad.matmul(ad.constant(flat), W)


def _gru(prefix: str, x: Node, h: Node, params: dict[str, Node]) -> Node:
    return ad.gru_cell(x, h, params[f"{prefix}.W"], params[f"{prefix}.U_rz"],
                       params[f"{prefix}.U_h"], params[f"{prefix}.b"])


def encode_records(B: Node, params: dict[str, Node], cfg: ModelConfig) -> tuple[Node, Node, Node]:
    """Record GRU from a zero state; returns (H, C, g)."""
    T = B.shape[0]
    if T < 1:
        raise ValueError("a table needs at least one record")
    h = ad.constant(np.zeros((1, cfg.gru_dim), dtype=B.value.dtype))
    states = []
    for r in range(T):
        h = _gru("enc", B[r:r + 1], h, params)
        states.append(h)
    H = ad.concat(states, axis=0)
    C = ad.concat([H, B], axis=1)
    g = ad.sigmoid(ad.matmul(ad.tanh(ad.matmul(C, params["P"])), params["q"]))
    return H, C, g


def encode(enc: EncodedTable, params: dict[str, Node], cfg: ModelConfig,
           counter: OpCounts | None = None) -> EncoderOutput:
    alpha = embedded = type_emb = None
    if cfg.variant == "mham":
        embedded, type_emb = embed_attributes(enc, params)
        alpha, B = attribute_attention(embedded, type_emb, counter)
    else:
        B = build_nhm_record(enc, params)
    if cfg.record_emb_dim:
        B = ad.matmul(B, params["W_rec"])
    H, C, g = encode_records(B, params, cfg)
    CW = ad.matmul(C, params["W_c"])
    return EncoderOutput(C=C, g=g, B=B, H=H, alpha=alpha, CW=CW,
                         embedded=embedded, type_embedding=type_emb)


def initial_state(enc_out: EncoderOutput) -> Node:
    """Decoder starts from the last record-GRU state."""
    return enc_out.H[-1:]


# --------------------------------------------------------------------------
# decoder


def gate_attention(g: Node, w: Node) -> Node:
    """gamma_r = g_r w_r / sum_r g_r w_r, falling back to w when the sum underflows."""
    gw = ad.mul(g, w)
    total = ad.sum(gw)
    if float(total.value) < GATE_FLOOR:
        return w
    return ad.div(gw, total)


def decode_step(s_prev: Node, prev_id: int, enc_out: EncoderOutput, params: dict[str, Node],
                cfg: ModelConfig, counter: OpCounts | None = None,
                fully_dynamic: bool = False) -> StepOutput:
    """One decoder step.

    With ``fully_dynamic`` the attribute scores are re-evaluated at this step,
    as a scheme with step-dependent attribute attention would have to.  The
    values are unchanged (nothing here conditions them on the decoder); the
    mode exists so the extra work can be counted.
    """
    if s_prev.shape != (1, cfg.gru_dim):
        raise ConfigError(f"decoder state shape {s_prev.shape} != (1, {cfg.gru_dim})")
    if not 0 <= prev_id < cfg.vocab_size:
        raise ValueError(f"token id {prev_id} outside vocabulary of {cfg.vocab_size}")
    if fully_dynamic and enc_out.embedded is not None:
        attribute_attention(enc_out.embedded, enc_out.type_embedding, counter)
    T = enc_out.C.shape[0]
    e = ad.tanh(ad.add(ad.matmul(s_prev, params["W_s"]), enc_out.CW))
    beta = ad.matmul(e, params["v"])                       # (T, 1)
    if counter is not None:
        counter.record_scores += T
    w = ad.softmax(beta, axis=0)
    gamma = gate_attention(enc_out.g, w)
    z = ad.sum(ad.mul(gamma, enc_out.C), axis=0, keepdims=True)   # (1, dc)
    x = ad.concat([z, params["E_dec"][[prev_id]]], axis=1)
    s = _gru("dec", x, s_prev, params)
    logits = ad.add(ad.add(ad.matmul(s, params["W_out_s"]), ad.matmul(z, params["W_out_z"])),
                    params["b_out"])
    att = StepAttention(beta.value[:, 0].copy(), w.value[:, 0].copy(),
                        gamma.value[:, 0].copy(), z.value[0].copy())
    return StepOutput(logits, ad.log_softmax(logits, axis=1), s, att)


@dataclass
class ForwardResult:
    loss: Node
    n_tokens: int
    steps: list[StepAttention] = field(default_factory=list)
    encoder: EncoderOutput | None = None

    @property
    def per_token_loss(self) -> float:
        return float(self.loss.value) / self.n_tokens


def forward_teacher_forced(enc: EncodedTable, target_ids: list[int], params: dict[str, Node],
                           cfg: ModelConfig, counter: OpCounts | None = None,
                           fully_dynamic: bool = False) -> ForwardResult:
    """Summed cross-entropy of ``target_ids`` (which should end with EOS) given the table."""
    if not target_ids:
        raise ValueError("need at least one target token")
    # a fully-dynamic model scores attributes at every step instead of once up front
    enc_out = encode(enc, params, cfg, None if fully_dynamic else counter)
    s = initial_state(enc_out)
    prev = BOS
    picked = []
    steps = []
    for y in target_ids:
        out = decode_step(s, prev, enc_out, params, cfg, counter, fully_dynamic)
        picked.append(out.log_probs[0, y])
        steps.append(out.attention)
        s, prev = out.state, y
    loss = ad.scale(ad.sum(ad.stack(picked)), -1.0)
    return ForwardResult(loss, len(target_ids), steps, enc_out)


def attention_dump(result_or_encoder, steps: list[StepAttention]) -> dict:
    """JSON-ready attention weights: alpha (T x M), g (T), gamma (T' x T)."""
    enc_out = getattr(result_or_encoder, "encoder", None) or result_or_encoder
    alpha = enc_out.alpha.value.tolist() if enc_out.alpha is not None else None
    return {"alpha": alpha, "g": enc_out.g.value[:, 0].tolist(),
            "gamma": [s.gamma.tolist() for s in steps]}


# --------------------------------------------------------------------------
# operation-count audit


def audit_attention_ops(T: int, M: int, T_out: int, variant: str = "mham",
                        fully_dynamic: bool = False, seed: int = 0,
                        dim: int = 4) -> OpCounts:
    """Count attention score evaluations of an instrumented teacher-forced pass.

    Uses a tiny randomly initialised model with ``T`` records of ``M`` 3-bit
    attributes and a target of ``T_out`` tokens.
    """
    from .training import init_params

    cfg = ModelConfig(attr_widths=(3,) * M, n_record_types=3, vocab_size=6, variant=variant,
                      attr_embed_dim=dim, record_type_embed_dim=dim, gru_dim=dim, p_dim=dim,
                      dec_embed_dim=dim)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed)
    types = np.zeros((T, 3))
    types[np.arange(T), rng.integers(3, size=T)] = 1.0
    enc = EncodedTable([rng.integers(0, 2, size=(T, 3)).astype(float) for _ in range(M)], types)
    targets = [int(t) for t in rng.integers(4, 6, size=T_out)]
    counter = OpCounts()
    with ad.no_grad():
        forward_teacher_forced(enc, targets, params, cfg, counter, fully_dynamic)
    return counter
