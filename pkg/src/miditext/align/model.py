"""Stub encoder, projection, and a tiny decoder-only LM with LoRA adapters.

All tensors are plain numpy arrays and both passes are written out by hand;
the finite-difference gradient checker in train.py verifies the backward
pass. The LM consumes sequences [prefix music tokens; embedded text tokens]
under a causal mask, so the projection output conditions every text position.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from ..octuple import OctupleToken, QuantConfig
from .config import AlignConfig

FIELD_NAMES = ("bar", "position", "instrument", "pitch",
               "duration", "velocity", "tempo", "timesig")

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715
_NEG_INF = -1e30


class EmptySequence(ValueError):
    """Encoder or pooling called with zero tokens."""


class FieldOutOfRange(ValueError):
    """Octuple token field exceeds the encoder's embedding table."""


class ShapeMismatch(ValueError):
    """Tensor shapes disagree with the configuration."""


class SequenceTooLong(ValueError):
    """prefix + text exceeds the model's max_seq."""


class EmptyMask(ValueError):
    """Loss requested with no supervised positions."""


class NonFiniteGradient(ValueError):
    """Optimizer received NaN or infinite gradients."""


def field_sizes(quant: QuantConfig) -> dict[str, int]:
    return {
        "bar": quant.max_bars,
        "position": quant.max_positions(),
        "instrument": quant.instrument_vocab_size,
        "pitch": 128,
        "duration": quant.duration_bins,
        "velocity": quant.velocity_bins,
        "tempo": quant.tempo_bins,
        "timesig": len(quant.timesig_vocab),
    }


class StubEncoder:
    """Per-field embedding tables summed per token; a shape-compatible
    stand-in for a pretrained sequence encoder.

    Deterministic for a fixed seed. Tables may be overwritten with exported
    real-encoder weights (the `loaded` flag records that), as long as shapes
    match the quantization config.
    """

    # Tempo and time signature are constant across a clip's tokens, so their
    # embeddings survive mean pooling at full strength; a larger scale there
    # makes the clip-level embedding carry those features prominently. Pitch
    # gets the same treatment so tonal content stands out against the
    # positional fields after pooling.
    FIELD_SCALES = {"tempo": 3.0, "timesig": 3.0, "pitch": 2.0}

    def __init__(self, cfg: AlignConfig, quant: QuantConfig | None = None, seed: int | None = None):
        quant = quant if quant is not None else QuantConfig()
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.dim = cfg.encoder_dim
        self.quant = quant
        base = 1.0 / math.sqrt(len(FIELD_NAMES))
        self.tables: dict[str, np.ndarray] = {
            name: rng.normal(0.0, base * self.FIELD_SCALES.get(name, 1.0),
                             size=(size, cfg.encoder_dim))
            for name, size in field_sizes(quant).items()
        }
        self.loaded = False

    def load_tables(self, tables: dict[str, np.ndarray]) -> None:
        for name, array in tables.items():
            if name not in self.tables:
                raise ShapeMismatch(f"unknown encoder table {name!r}")
            if array.shape != self.tables[name].shape:
                raise ShapeMismatch(
                    f"table {name!r}: expected {self.tables[name].shape}, got {array.shape}"
                )
            self.tables[name] = array.astype(np.float64)
        self.loaded = True


def encode(tokens: list[OctupleToken], enc: StubEncoder) -> np.ndarray:
    """Token-level hidden states: row i is the sum of the 8 field embeddings."""
    if not tokens:
        raise EmptySequence("cannot encode an empty token sequence")
    out = np.zeros((len(tokens), enc.dim))
    for i, token in enumerate(tokens):
        for name in FIELD_NAMES:
            index = getattr(token, name)
            table = enc.tables[name]
            if not 0 <= index < table.shape[0]:
                raise FieldOutOfRange(f"{name}={index} outside table of {table.shape[0]}")
            out[i] += table[index]
    return out


def mean_pool(hidden: np.ndarray) -> np.ndarray:
    """Temporal mean pooling: clip-level embedding from token-level states."""
    if hidden.ndim != 2 or hidden.shape[0] == 0:
        raise EmptySequence("mean_pool needs a non-empty N x M matrix")
    return hidden.mean(axis=0)


@dataclass(slots=True)
class Projection:
    """Trainable map from the clip embedding to prefix_count LM-width rows."""

    W: np.ndarray  # (k*T, M)
    b: np.ndarray  # (k*T,)
    prefix_count: int

    @classmethod
    def create(cls, cfg: AlignConfig, rng: np.random.Generator) -> "Projection":
        # Same init scale as the LM's linear layers: the untrained prefix then
        # lands near the embedding distribution instead of dwarfing it.
        rows = cfg.prefix_count * cfg.lm_dim
        return cls(
            W=rng.normal(0.0, 0.02, size=(rows, cfg.encoder_dim)),
            b=np.zeros(rows),
            prefix_count=cfg.prefix_count,
        )


def project(pooled: np.ndarray, proj: Projection) -> np.ndarray:
    """Prefix music tokens: (k, T) rows from W @ pooled + b."""
    if pooled.ndim != 1 or proj.W.shape[1] != pooled.shape[0]:
        raise ShapeMismatch(f"pooled shape {pooled.shape} vs W {proj.W.shape}")
    return (proj.W @ pooled + proj.b).reshape(proj.prefix_count, -1)


@dataclass(slots=True)
class LoraAdapter:
    """Low-rank delta (alpha/r) * B @ A on a named base matrix.

    B starts at zero so an attached adapter is an exact identity until
    trained; the delta's rank never exceeds r.
    """

    A: np.ndarray  # (r, d_in)
    B: np.ndarray  # (d_out, r)
    rank: int
    alpha: float
    target: str

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def delta(self) -> np.ndarray:
        return self.scale * (self.B @ self.A)

    @classmethod
    def create(cls, target: str, d_in: int, d_out: int, rank: int, alpha: float,
               rng: np.random.Generator) -> "LoraAdapter":
        # A gets a wider-than-usual init (2/sqrt(d_in)): with B at zero the
        # forward is still exactly the base model, but early B updates then
        # produce usefully sized deltas within a short step budget.
        return cls(
            A=rng.normal(0.0, 2.0 / math.sqrt(d_in), size=(rank, d_in)),
            B=np.zeros((d_out, rank)),
            rank=rank,
            alpha=alpha,
            target=target,
        )


class TinyLm:
    """Decoder-only transformer: pre-LN blocks, GELU MLP, untied output head."""

    def __init__(self, cfg: AlignConfig, seed: int | None = None):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        T, V = cfg.lm_dim, cfg.vocab_size
        hidden = 4 * T
        residual_scale = 0.02 / math.sqrt(2 * cfg.lm_layers)
        p: dict[str, np.ndarray] = {
            "tok_emb": rng.normal(0.0, 0.02, size=(V, T)),
            "pos_emb": rng.normal(0.0, 0.02, size=(cfg.max_seq, T)),
            "ln_f.g": np.ones(T),
            "ln_f.b": np.zeros(T),
            "lm_head": rng.normal(0.0, 0.02, size=(T, V)),
        }
        for i in range(cfg.lm_layers):
            p[f"l{i}.ln1.g"] = np.ones(T)
            p[f"l{i}.ln1.b"] = np.zeros(T)
            p[f"l{i}.wq"] = rng.normal(0.0, 0.02, size=(T, T))
            p[f"l{i}.wk"] = rng.normal(0.0, 0.02, size=(T, T))
            p[f"l{i}.wv"] = rng.normal(0.0, 0.02, size=(T, T))
            p[f"l{i}.wo"] = rng.normal(0.0, residual_scale, size=(T, T))
            p[f"l{i}.ln2.g"] = np.ones(T)
            p[f"l{i}.ln2.b"] = np.zeros(T)
            p[f"l{i}.w1"] = rng.normal(0.0, 0.02, size=(T, hidden))
            p[f"l{i}.b1"] = np.zeros(hidden)
            p[f"l{i}.w2"] = rng.normal(0.0, residual_scale, size=(hidden, T))
            p[f"l{i}.b2"] = np.zeros(T)
        self.params = p


def make_adapters(cfg: AlignConfig, seed: int | None = None) -> list[LoraAdapter]:
    """Adapters on the attention query and value matrices of every layer."""
    rng = np.random.default_rng((cfg.seed if seed is None else seed) + 1)
    adapters = []
    for i in range(cfg.lm_layers):
        for target in (f"l{i}.wq", f"l{i}.wv"):
            adapters.append(
                LoraAdapter.create(target, cfg.lm_dim, cfg.lm_dim,
                                   cfg.lora_rank, cfg.lora_alpha, rng)
            )
    return adapters


@dataclass(slots=True)
class AlignModel:
    """Everything the two-stage trainer touches, in one place."""

    cfg: AlignConfig
    quant: QuantConfig
    encoder: StubEncoder
    projection: Projection
    lm: TinyLm
    adapters: list[LoraAdapter]

    @classmethod
    def create(cls, cfg: AlignConfig, quant: QuantConfig | None = None) -> "AlignModel":
        quant = quant if quant is not None else QuantConfig()
        rng = np.random.default_rng(cfg.seed + 2)
        return cls(
            cfg=cfg,
            quant=quant,
            encoder=StubEncoder(cfg, quant),
            projection=Projection.create(cfg, rng),
            lm=TinyLm(cfg),
            adapters=make_adapters(cfg),
        )

    def adapter_map(self) -> dict[str, LoraAdapter]:
        return {a.target: a for a in self.adapters}

    def tensors(self) -> dict[str, np.ndarray]:
        out = {f"enc.{name}": table for name, table in self.encoder.tables.items()}
        out["proj.W"] = self.projection.W
        out["proj.b"] = self.projection.b
        for name, param in self.lm.params.items():
            out[f"lm.{name}"] = param
        for adapter in self.adapters:
            out[f"lora.{adapter.target}.A"] = adapter.A
            out[f"lora.{adapter.target}.B"] = adapter.B
        return out

    def checksums(self) -> dict[str, str]:
        return {
            name: hashlib.sha256(np.ascontiguousarray(t).tobytes()).hexdigest()
            for name, t in self.tensors().items()
        }

    def clip_prefix(self, tokens: list[OctupleToken]) -> np.ndarray:
        return project(mean_pool(encode(tokens, self.encoder)), self.projection)


def _layernorm(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_backward(dy, xhat, inv, g):
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(x):
    inner = _GELU_C * (x + _GELU_CUBIC * (x * x * x))
    t = np.tanh(inner)
    return 0.5 * x * (1.0 + t), t


def _gelu_backward(dy, x, t):
    du = _GELU_C * (1.0 + 3.0 * _GELU_CUBIC * (x * x))
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    B, S, T = x.shape
    return x.reshape(B, S, heads, T // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    B, H, S, Dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, S, H * Dh)


def _linear_lora(x, W, adapter: LoraAdapter | None):
    y = x @ W
    u = None
    if adapter is not None:
        u = x @ adapter.A.T
        y = y + adapter.scale * (u @ adapter.B.T)
    return y, u


def _linear_lora_backward(x, dy, W, adapter, u, grads, name):
    flat_x = x.reshape(-1, x.shape[-1])
    flat_dy = dy.reshape(-1, dy.shape[-1])
    grads[f"lm.{name}"] += flat_x.T @ flat_dy
    dx = dy @ W.T
    if adapter is not None:
        du = adapter.scale * (dy @ adapter.B)
        dx = dx + du @ adapter.A
        flat_du = du.reshape(-1, du.shape[-1])
        grads[f"lora.{name}.A"] += flat_du.T @ flat_x
        grads[f"lora.{name}.B"] += adapter.scale * (flat_dy.T @ u.reshape(-1, u.shape[-1]))
    return dx


_CAUSAL_MASKS: dict[int, np.ndarray] = {}


def _causal_mask(size: int) -> np.ndarray:
    mask = _CAUSAL_MASKS.get(size)
    if mask is None:
        mask = np.triu(np.full((size, size), _NEG_INF), k=1)
        _CAUSAL_MASKS[size] = mask
    return mask


def forward_batch(
    lm: TinyLm,
    adapters: list[LoraAdapter],
    prefix: np.ndarray | None,
    ids: np.ndarray,
    want_cache: bool = False,
):
    """Causal forward over [prefix rows; embedded ids]; returns (logits, cache).

    prefix: (B, k, T) or None; ids: (B, L) int array, right-padded. Padded
    queries are harmless garbage masked out of the loss; padded keys sit
    after every real position, so the causal mask already hides them.
    """
    cfg = lm.cfg
    p = lm.params
    adapter_of = {a.target: a for a in adapters}
    B, L = ids.shape
    k = 0 if prefix is None else prefix.shape[1]
    S = k + L
    if S > cfg.max_seq:
        raise SequenceTooLong(f"sequence {S} exceeds max_seq {cfg.max_seq}")

    embedded = p["tok_emb"][ids]
    x = embedded if prefix is None else np.concatenate([prefix, embedded], axis=1)
    x = x + p["pos_emb"][:S]
    causal = _causal_mask(S)

    scale = 1.0 / math.sqrt(cfg.lm_dim // cfg.lm_heads)
    layer_caches = []
    for i in range(cfg.lm_layers):
        x0 = x
        normed1, ln1_cache = _layernorm(x0, p[f"l{i}.ln1.g"], p[f"l{i}.ln1.b"])
        q, uq = _linear_lora(normed1, p[f"l{i}.wq"], adapter_of.get(f"l{i}.wq"))
        kx, _ = _linear_lora(normed1, p[f"l{i}.wk"], None)
        v, uv = _linear_lora(normed1, p[f"l{i}.wv"], adapter_of.get(f"l{i}.wv"))
        qh = _split_heads(q, cfg.lm_heads)
        kh = _split_heads(kx, cfg.lm_heads)
        vh = _split_heads(v, cfg.lm_heads)
        scores = qh @ kh.transpose(0, 1, 3, 2) * scale + causal
        scores -= scores.max(axis=-1, keepdims=True)
        att = np.exp(scores)
        att /= att.sum(axis=-1, keepdims=True)
        context = _merge_heads(att @ vh)
        attn_out = context @ p[f"l{i}.wo"]
        x1 = x0 + attn_out
        normed2, ln2_cache = _layernorm(x1, p[f"l{i}.ln2.g"], p[f"l{i}.ln2.b"])
        h1 = normed2 @ p[f"l{i}.w1"] + p[f"l{i}.b1"]
        act, tanh_cache = _gelu(h1)
        x = x1 + act @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
        if want_cache:
            layer_caches.append(
                dict(x0=x0, normed1=normed1, ln1=ln1_cache, qh=qh, kh=kh, vh=vh,
                     att=att, context=context, uq=uq, uv=uv, x1=x1, normed2=normed2,
                     ln2=ln2_cache, h1=h1, act=act, tanh=tanh_cache)
            )
    final, lnf_cache = _layernorm(x, p["ln_f.g"], p["ln_f.b"])
    logits = final @ p["lm_head"]
    cache = None
    if want_cache:
        cache = dict(ids=ids, k=k, layers=layer_caches, final=final,
                     lnf=lnf_cache, adapters=adapter_of, scale=scale)
    return logits, cache


def backward_batch(lm: TinyLm, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter and the prefix rows.

    Returns a dict keyed like AlignModel.tensors() (lm.*, lora.*) plus
    "prefix" for the (B, k, T) gradient flowing to the projection.
    """
    cfg = lm.cfg
    p = lm.params
    adapter_of = cache["adapters"]
    grads: dict[str, np.ndarray] = {f"lm.{name}": np.zeros_like(param) for name, param in p.items()}
    for target, adapter in adapter_of.items():
        grads[f"lora.{target}.A"] = np.zeros_like(adapter.A)
        grads[f"lora.{target}.B"] = np.zeros_like(adapter.B)

    final = cache["final"]
    grads["lm.lm_head"] += final.reshape(-1, final.shape[-1]).T @ dlogits.reshape(-1, dlogits.shape[-1])
    dfinal = dlogits @ p["lm_head"].T
    dx, dg, db = _layernorm_backward(dfinal, *cache["lnf"], p["ln_f.g"])
    grads["lm.ln_f.g"] += dg
    grads["lm.ln_f.b"] += db

    for i in reversed(range(cfg.lm_layers)):
        c = cache["layers"][i]
        # MLP branch
        dact = dx @ p[f"l{i}.w2"].T
        flat_act = c["act"].reshape(-1, c["act"].shape[-1])
        grads[f"lm.l{i}.w2"] += flat_act.T @ dx.reshape(-1, dx.shape[-1])
        grads[f"lm.l{i}.b2"] += dx.sum(axis=(0, 1))
        dh1 = _gelu_backward(dact, c["h1"], c["tanh"])
        flat_n2 = c["normed2"].reshape(-1, c["normed2"].shape[-1])
        grads[f"lm.l{i}.w1"] += flat_n2.T @ dh1.reshape(-1, dh1.shape[-1])
        grads[f"lm.l{i}.b1"] += dh1.sum(axis=(0, 1))
        dnormed2 = dh1 @ p[f"l{i}.w1"].T
        dx1_from_mlp, dg2, db2 = _layernorm_backward(dnormed2, *c["ln2"], p[f"l{i}.ln2.g"])
        grads[f"lm.l{i}.ln2.g"] += dg2
        grads[f"lm.l{i}.ln2.b"] += db2
        dx1 = dx + dx1_from_mlp

        # Attention branch
        flat_ctx = c["context"].reshape(-1, c["context"].shape[-1])
        grads[f"lm.l{i}.wo"] += flat_ctx.T @ dx1.reshape(-1, dx1.shape[-1])
        dcontext = _split_heads(dx1 @ p[f"l{i}.wo"].T, cfg.lm_heads)
        datt = dcontext @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["att"].transpose(0, 1, 3, 2) @ dcontext
        att = c["att"]
        dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        dqh = dscores @ c["kh"] * cache["scale"]
        dkh = dscores.transpose(0, 1, 3, 2) @ c["qh"] * cache["scale"]
        dq = _merge_heads(dqh)
        dk = _merge_heads(dkh)
        dv = _merge_heads(dvh)
        normed1 = c["normed1"]
        dnormed1 = _linear_lora_backward(normed1, dq, p[f"l{i}.wq"],
                                         adapter_of.get(f"l{i}.wq"), c["uq"], grads, f"l{i}.wq")
        dnormed1 += _linear_lora_backward(normed1, dk, p[f"l{i}.wk"], None, None, grads, f"l{i}.wk")
        dnormed1 += _linear_lora_backward(normed1, dv, p[f"l{i}.wv"],
                                          adapter_of.get(f"l{i}.wv"), c["uv"], grads, f"l{i}.wv")
        dx0_from_attn, dg1, db1 = _layernorm_backward(dnormed1, *c["ln1"], p[f"l{i}.ln1.g"])
        grads[f"lm.l{i}.ln1.g"] += dg1
        grads[f"lm.l{i}.ln1.b"] += db1
        dx = dx1 + dx0_from_attn

    S = dx.shape[1]
    k = cache["k"]
    grads["lm.pos_emb"][:S] += dx.sum(axis=0)
    ids = cache["ids"]
    dtext = dx[:, k:, :]
    np.add.at(grads["lm.tok_emb"], ids.reshape(-1), dtext.reshape(-1, dtext.shape[-1]))
    grads["prefix"] = dx[:, :k, :].copy() if k else np.zeros((dx.shape[0], 0, cfg.lm_dim))
    return grads


def masked_nll(logits: np.ndarray, targets: np.ndarray) -> float:
    """Loss-only variant of masked_cross_entropy (no gradient arrays)."""
    rows = np.nonzero(targets >= 0)
    if rows[0].size == 0:
        raise EmptyMask("no supervised positions")
    picked_logits = logits[rows]
    shifted = picked_logits - picked_logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    chosen = shifted[np.arange(picked_logits.shape[0]), targets[rows]]
    return float((log_z - chosen).mean())


def masked_cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean next-token cross-entropy over positions with targets >= 0.

    Returns (loss, dlogits). targets[b, s] is the token the logits row
    (b, s) must predict; -1 marks unsupervised rows.
    """
    mask = targets >= 0
    count = int(mask.sum())
    if count == 0:
        raise EmptyMask("no supervised positions")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=-1, keepdims=True)
    rows = np.nonzero(mask)
    picked = targets[rows]
    log_probs = shifted - np.log(exp.sum(axis=-1, keepdims=True))
    loss = -log_probs[rows[0], rows[1], picked].mean()
    dlogits = np.zeros_like(logits)
    dlogits[rows] = probs[rows]
    dlogits[rows[0], rows[1], picked] -= 1.0
    dlogits /= count
    return float(loss), dlogits


def build_targets(ids: np.ndarray, answer_mask: np.ndarray, k: int) -> np.ndarray:
    """Next-token targets over the full sequence.

    Text token i sits at sequence position k + i, so the row predicting it
    is k + i - 1; only answer positions are supervised.
    """
    B, L = ids.shape
    targets = np.full((B, k + L), -1, dtype=np.int64)
    for b in range(B):
        for i in range(L):
            if answer_mask[b, i] and k + i - 1 >= 0:
                targets[b, k + i - 1] = ids[b, i]
    return targets


def forward_lm(
    prefix: np.ndarray,
    text_ids: list[int],
    model: TinyLm,
    adapters: list[LoraAdapter] | None = None,
) -> np.ndarray:
    """Single-sample forward: logits of shape (k + len(text_ids), vocab)."""
    if prefix.ndim != 2 or prefix.shape[1] != model.cfg.lm_dim:
        raise ShapeMismatch(f"prefix shape {prefix.shape} vs lm_dim {model.cfg.lm_dim}")
    ids = np.asarray([text_ids], dtype=np.int64)
    logits, _ = forward_batch(model, adapters or [], prefix[None, :, :], ids)
    return logits[0]


def loss(logits: np.ndarray, text_ids: list[int], answer_mask: list[bool]) -> float:
    """Single-sample masked cross-entropy matching forward_lm's layout."""
    if len(text_ids) != len(answer_mask):
        raise ShapeMismatch("text_ids and answer_mask lengths differ")
    k = logits.shape[0] - len(text_ids)
    ids = np.asarray([text_ids], dtype=np.int64)
    mask = np.asarray([answer_mask], dtype=bool)
    targets = build_targets(ids, mask, k)
    value, _ = masked_cross_entropy(logits[None, :, :], targets)
    return value


def greedy_decode(
    prefix: np.ndarray | None,
    prompt_ids: list[int],
    model: TinyLm,
    adapters: list[LoraAdapter] | None = None,
    max_new: int = 32,
    eos_id: int = 1,
) -> list[int]:
    """Argmax decoding until eos or max_new; argmax ties pick the lowest id."""
    k = 0 if prefix is None else prefix.shape[0]
    if k + len(prompt_ids) == 0:
        raise EmptySequence("decoding needs a prefix or a prompt")
    if k + len(prompt_ids) >= model.cfg.max_seq:
        raise SequenceTooLong("prompt does not fit")
    out: list[int] = []
    ids = list(prompt_ids)
    batched_prefix = None if prefix is None else prefix[None, :, :]
    for _ in range(max_new):
        if k + len(ids) >= model.cfg.max_seq:
            break
        logits, _ = forward_batch(model, adapters or [], batched_prefix,
                                  np.asarray([ids], dtype=np.int64))
        next_id = int(np.argmax(logits[0, -1]))
        out.append(next_id)
        ids.append(next_id)
        if next_id == eos_id:
            break
    return out
