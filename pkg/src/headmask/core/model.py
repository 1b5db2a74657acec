# src/headmask/core/model.py

"""
Encoder-Decoder Transformer

Pre-layer-norm transformer with sinusoidal positions, written directly against
numpy so every forward pass has a matching hand-written backward pass.

Head masking: an additive vector (0 for salient source tokens, -inf otherwise)
is added inside the softmax of selected encoder-decoder attention heads at
inference time. Self-attention is never masked this way.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Optional

import numpy as np
import numpy.typing as npt

from .errors import InputError, ShapeError
from .schema import (
    BOS_ID,
    EOS_ID,
    AttentionTrace,
    HeadMaskConfig,
    HeadMaskVector,
    ModelConfig,
    TokenSequence,
)
from .tensor import (
    NEG_INF,
    Matrix,
    Vector,
    gelu,
    gelu_grad,
    log_softmax_rows,
    matmul,
    sinusoidal_positions,
    softmax_rows,
    softmax_stable,
)

Array = npt.NDArray[np.float64]
Params = dict[str, Array]

LN_EPS = 1e-5


def attention(
    q: Vector,
    K: Matrix,
    V: Matrix,
    m: Vector,
    m_tilde: Optional[HeadMaskVector] = None,
) -> tuple[Vector, Vector]:
    """Single-query attention: softmax(qK^T / sqrt(d_k) + m [+ m_tilde]) V.

    Returns (output, weights). Positions masked by m or m_tilde get weight 0.
    This is the reference form of one head and one query row; the model
    computes all heads and rows at once in _mha_fwd.
    """
    if K.shape[0] != V.shape[0] or K.shape[0] != m.shape[0]:
        raise ShapeError("K, V and m must have the same number of rows")
    if q.shape[0] != K.shape[1]:
        raise ShapeError("query width must equal key width (d_k)")
    scores = matmul(K, q) / math.sqrt(K.shape[1]) + m
    if m_tilde is not None:
        if len(m_tilde) != K.shape[0]:
            raise ShapeError("head mask length must equal the source length")
        scores = scores + m_tilde.values
    weights = softmax_stable(scores)
    return matmul(weights, V), weights


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Checkpoint key schema: parameter name -> shape."""
    d, ff, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    shapes: dict[str, tuple[int, ...]] = {"embed": (v, d)}

    def norm(prefix: str) -> None:
        shapes[f"{prefix}.g"] = (d,)
        shapes[f"{prefix}.b"] = (d,)

    def attn(prefix: str) -> None:
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{w}"] = (d, d)

    def feed_forward(prefix: str) -> None:
        shapes[f"{prefix}.w1"] = (d, ff)
        shapes[f"{prefix}.b1"] = (ff,)
        shapes[f"{prefix}.w2"] = (ff, d)
        shapes[f"{prefix}.b2"] = (d,)

    for i in range(cfg.n_enc_layers):
        norm(f"enc.{i}.ln1")
        attn(f"enc.{i}.attn")
        norm(f"enc.{i}.ln2")
        feed_forward(f"enc.{i}.ff")
    norm("enc.ln")
    for i in range(cfg.n_dec_layers):
        norm(f"dec.{i}.ln1")
        attn(f"dec.{i}.self")
        norm(f"dec.{i}.ln2")
        attn(f"dec.{i}.cross")
        norm(f"dec.{i}.ln3")
        feed_forward(f"dec.{i}.ff")
    norm("dec.ln")
    shapes["out.w"] = (d, v)
    shapes["out.b"] = (v,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> Params:
    """Seeded initialization; keys are created in schema order."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in expected_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if name == "embed":
            params[name] = rng.normal(0.0, 1.0, shape)
        elif leaf == "g":
            params[name] = np.ones(shape)
        elif leaf in ("b", "b1", "b2") or name == "out.b":
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), shape)
    return params


def check_params(cfg: ModelConfig, params: Params, keys: Optional[list[str]] = None) -> None:
    shapes = expected_shapes(cfg)
    for name in keys if keys is not None else list(shapes):
        if name not in params:
            raise ShapeError(f"missing parameter '{name}'")
        if params[name].shape != shapes[name]:
            raise ShapeError(
                f"parameter '{name}' has shape {params[name].shape}, "
                f"expected {shapes[name]}"
            )
        if not np.all(np.isfinite(params[name])):
            raise ShapeError(f"parameter '{name}' has non-finite entries")


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


@lru_cache(maxsize=8)
def _positions(n_positions: int, d_model: int) -> Array:
    table = sinusoidal_positions(n_positions, d_model)
    table.flags.writeable = False
    return table


# Layer primitives. Each *_fwd returns (output, cache); each *_bwd consumes it.


def _ln_fwd(x: Array, g: Array, b: Array) -> tuple[Array, tuple[Array, Array, Array]]:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _ln_bwd(dy: Array, cache: tuple[Array, Array, Array]) -> tuple[Array, Array, Array]:
    xhat, inv, g = cache
    n = xhat.shape[-1]
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    dx = (inv / n) * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x: Array, n_heads: int) -> Array:
    t, d = x.shape
    return x.reshape(t, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x: Array) -> Array:
    h, t, dk = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dk)


@dataclass
class _AttnCache:
    xq: Array
    xkv: Array
    q: Array
    k: Array
    v: Array
    weights: Array
    merged: Array
    uniform: bool


def _mha_fwd(
    xq: Array,
    xkv: Array,
    params: Params,
    prefix: str,
    n_heads: int,
    mask: Optional[Array],
    uniform: bool = False,
) -> tuple[Array, _AttnCache]:
    """Multi-head attention; mask broadcasts to (heads, T_q, T_k)."""
    q = _split_heads(xq @ params[f"{prefix}.wq"], n_heads)
    k = _split_heads(xkv @ params[f"{prefix}.wk"], n_heads)
    v = _split_heads(xkv @ params[f"{prefix}.wv"], n_heads)
    if uniform:
        weights = np.full((n_heads, xq.shape[0], xkv.shape[0]), 1.0 / xkv.shape[0])
    else:
        scores = np.matmul(q, k.transpose(0, 2, 1)) / math.sqrt(q.shape[-1])
        if mask is not None:
            scores = scores + mask
        weights = softmax_rows(scores)
    merged = _merge_heads(np.matmul(weights, v))
    out = merged @ params[f"{prefix}.wo"]
    return out, _AttnCache(xq, xkv, q, k, v, weights, merged, uniform)


def _mha_bwd(
    dout: Array, cache: _AttnCache, params: Params, prefix: str, grads: Params
) -> tuple[Array, Array]:
    n_heads = cache.q.shape[0]
    grads[f"{prefix}.wo"] += cache.merged.T @ dout
    d_o = _split_heads(dout @ params[f"{prefix}.wo"].T, n_heads)
    dv = np.matmul(cache.weights.transpose(0, 2, 1), d_o)
    if cache.uniform:
        # constant weights: no gradient reaches queries or keys
        dq = np.zeros_like(cache.q)
        dk = np.zeros_like(cache.k)
    else:
        dp = np.matmul(d_o, cache.v.transpose(0, 2, 1))
        ds = cache.weights * (dp - (dp * cache.weights).sum(axis=-1, keepdims=True))
        ds = ds / math.sqrt(cache.q.shape[-1])
        dq = np.matmul(ds, cache.k)
        dk = np.matmul(ds.transpose(0, 2, 1), cache.q)
    dq_m, dk_m, dv_m = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
    grads[f"{prefix}.wq"] += cache.xq.T @ dq_m
    grads[f"{prefix}.wk"] += cache.xkv.T @ dk_m
    grads[f"{prefix}.wv"] += cache.xkv.T @ dv_m
    dxq = dq_m @ params[f"{prefix}.wq"].T
    dxkv = dk_m @ params[f"{prefix}.wk"].T + dv_m @ params[f"{prefix}.wv"].T
    return dxq, dxkv


def _ff_fwd(x: Array, params: Params, prefix: str) -> tuple[Array, tuple[Array, Array, Array]]:
    h = x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"]
    a = gelu(h)
    return a @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"], (x, h, a)


def _ff_bwd(
    dy: Array, cache: tuple[Array, Array, Array], params: Params, prefix: str, grads: Params
) -> Array:
    x, h, a = cache
    grads[f"{prefix}.w2"] += a.T @ dy
    grads[f"{prefix}.b2"] += dy.sum(axis=0)
    dh = (dy @ params[f"{prefix}.w2"].T) * gelu_grad(h)
    grads[f"{prefix}.w1"] += x.T @ dh
    grads[f"{prefix}.b1"] += dh.sum(axis=0)
    return dh @ params[f"{prefix}.w1"].T


def _ln_apply(x: Array, params: Params, prefix: str) -> tuple[Array, Any]:
    return _ln_fwd(x, params[f"{prefix}.g"], params[f"{prefix}.b"])


def _ln_grad(dy: Array, cache: Any, prefix: str, grads: Params) -> Array:
    dx, dg, db = _ln_bwd(dy, cache)
    grads[f"{prefix}.g"] += dg
    grads[f"{prefix}.b"] += db
    return dx


def _embed(params: Params, cfg: ModelConfig, ids: TokenSequence) -> Array:
    idx = np.asarray(ids, dtype=np.int64)
    return params["embed"][idx] + _positions(cfg.max_positions, cfg.d_model)[: len(ids)]


# Encoder


def encoder_forward(params: Params, cfg: ModelConfig, ids: TokenSequence) -> tuple[Array, Any]:
    """Run the encoder stack; returns (states, cache for encoder_backward)."""
    x = _embed(params, cfg, ids)
    layers = []
    for i in range(cfg.n_enc_layers):
        p = f"enc.{i}"
        h, c_ln1 = _ln_apply(x, params, f"{p}.ln1")
        a, c_att = _mha_fwd(h, h, params, f"{p}.attn", cfg.n_heads, None)
        x = x + a
        h, c_ln2 = _ln_apply(x, params, f"{p}.ln2")
        f, c_ff = _ff_fwd(h, params, f"{p}.ff")
        x = x + f
        layers.append((c_ln1, c_att, c_ln2, c_ff))
    states, c_out = _ln_apply(x, params, "enc.ln")
    return states, (ids, layers, c_out)


def encoder_backward(
    dstates: Array, cache: Any, params: Params, cfg: ModelConfig, grads: Params
) -> None:
    """Accumulate encoder parameter gradients into grads."""
    ids, layers, c_out = cache
    dx = _ln_grad(dstates, c_out, "enc.ln", grads)
    for i in reversed(range(cfg.n_enc_layers)):
        p = f"enc.{i}"
        c_ln1, c_att, c_ln2, c_ff = layers[i]
        dh = _ff_bwd(dx, c_ff, params, f"{p}.ff", grads)
        dx = dx + _ln_grad(dh, c_ln2, f"{p}.ln2", grads)
        dxq, dxkv = _mha_bwd(dx, c_att, params, f"{p}.attn", grads)
        dx = dx + _ln_grad(dxq + dxkv, c_ln1, f"{p}.ln1", grads)
    np.add.at(grads["embed"], np.asarray(ids, dtype=np.int64), dx)


# Decoder


def _causal_mask(t: int) -> Array:
    return np.triu(np.full((t, t), NEG_INF), k=1)


def decoder_forward(
    params: Params,
    cfg: ModelConfig,
    ids: TokenSequence,
    enc_states: Array,
    cross_mask: Optional[Array] = None,
    uniform: bool = False,
) -> tuple[Array, list[Array], Any]:
    """Run the decoder over a full prefix.

    Returns (logits for every position, per-layer cross-attention weights of
    shape (heads, T_dec, T_src), cache for decoder_backward).
    """
    y = _embed(params, cfg, ids)
    causal = _causal_mask(len(ids))
    layers = []
    cross_weights = []
    for i in range(cfg.n_dec_layers):
        p = f"dec.{i}"
        h, c_ln1 = _ln_apply(y, params, f"{p}.ln1")
        a, c_self = _mha_fwd(h, h, params, f"{p}.self", cfg.n_heads, causal)
        y = y + a
        h, c_ln2 = _ln_apply(y, params, f"{p}.ln2")
        c, c_cross = _mha_fwd(
            h, enc_states, params, f"{p}.cross", cfg.n_heads, cross_mask, uniform
        )
        y = y + c
        h, c_ln3 = _ln_apply(y, params, f"{p}.ln3")
        f, c_ff = _ff_fwd(h, params, f"{p}.ff")
        y = y + f
        layers.append((c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ff))
        cross_weights.append(c_cross.weights)
    z, c_out = _ln_apply(y, params, "dec.ln")
    logits = z @ params["out.w"] + params["out.b"]
    return logits, cross_weights, (ids, layers, c_out, z)


def decoder_backward(
    dlogits: Array, cache: Any, params: Params, cfg: ModelConfig, grads: Params
) -> Array:
    """Accumulate decoder gradients; returns the gradient w.r.t. encoder states."""
    ids, layers, c_out, z = cache
    grads["out.w"] += z.T @ dlogits
    grads["out.b"] += dlogits.sum(axis=0)
    dy = _ln_grad(dlogits @ params["out.w"].T, c_out, "dec.ln", grads)
    d_enc: Optional[Array] = None
    for i in reversed(range(cfg.n_dec_layers)):
        p = f"dec.{i}"
        c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ff = layers[i]
        dh = _ff_bwd(dy, c_ff, params, f"{p}.ff", grads)
        dy = dy + _ln_grad(dh, c_ln3, f"{p}.ln3", grads)
        dxq, dxkv = _mha_bwd(dy, c_cross, params, f"{p}.cross", grads)
        d_enc = dxkv if d_enc is None else d_enc + dxkv
        dy = dy + _ln_grad(dxq, c_ln2, f"{p}.ln2", grads)
        dxq, dxkv = _mha_bwd(dy, c_self, params, f"{p}.self", grads)
        dy = dy + _ln_grad(dxq + dxkv, c_ln1, f"{p}.ln1", grads)
    np.add.at(grads["embed"], np.asarray(ids, dtype=np.int64), dy)
    assert d_enc is not None
    return d_enc


@dataclass(frozen=True)
class EncoderStates:
    """Encoder output for one source sequence."""

    states: Array
    source: TokenSequence

    @property
    def source_len(self) -> int:
        return len(self.source)


class Seq2SeqModel:
    """Inference and loss/gradient entry points over a parameter dict."""

    def __init__(self, cfg: ModelConfig, params: Params) -> None:
        cfg.validate()
        check_params(cfg, params)
        self.cfg = cfg
        self.params = params

    @classmethod
    def initialize(cls, cfg: ModelConfig, seed: int = 0) -> "Seq2SeqModel":
        return cls(cfg, init_params(cfg, seed))

    def _check_ids(self, ids: TokenSequence, what: str) -> None:
        if not ids:
            raise InputError(f"{what} must not be empty")
        if len(ids) > self.cfg.max_positions:
            raise InputError(
                f"{what} length {len(ids)} exceeds max_positions {self.cfg.max_positions}"
            )
        if min(ids) < 0 or max(ids) >= self.cfg.vocab_size:
            raise InputError(f"{what} contains ids outside [0, {self.cfg.vocab_size})")

    def encode(self, source: TokenSequence) -> EncoderStates:
        self._check_ids(source, "source")
        states, _ = encoder_forward(self.params, self.cfg, source)
        return EncoderStates(states=states, source=tuple(source))

    def cross_mask(
        self, mask_cfg: HeadMaskConfig, m_tilde: Optional[HeadMaskVector], source_len: int
    ) -> list[Optional[Array]]:
        """Per-layer additive masks of shape (heads, 1, source_len)."""
        mask_cfg.check_shape(self.cfg)
        if mask_cfg.any_active != (m_tilde is not None):
            raise InputError("a head mask vector is required exactly when a head is active")
        if m_tilde is None:
            return [None] * self.cfg.n_dec_layers
        if len(m_tilde) != source_len:
            raise ShapeError(
                f"head mask length {len(m_tilde)} != source length {source_len}"
            )
        masks: list[Optional[Array]] = []
        for row in mask_cfg.active:
            if not any(row):
                masks.append(None)
                continue
            layer_mask = np.zeros((self.cfg.n_heads, 1, source_len))
            for h, on in enumerate(row):
                if on:
                    layer_mask[h, 0, :] = m_tilde.values
            masks.append(layer_mask)
        return masks

    def _run_decoder(
        self,
        enc: EncoderStates,
        prefix: TokenSequence,
        masks: list[Optional[Array]],
        uniform: bool,
        trace: Optional[AttentionTrace],
    ) -> Vector:
        self._check_ids(prefix, "prefix")
        if prefix[0] != BOS_ID:
            raise InputError("decoder prefix must start with bos")
        y = _embed(self.params, self.cfg, prefix)
        causal = _causal_mask(len(prefix))
        rows: list[list[Array]] = []
        for i in range(self.cfg.n_dec_layers):
            p = f"dec.{i}"
            h, _ = _ln_apply(y, self.params, f"{p}.ln1")
            a, _ = _mha_fwd(h, h, self.params, f"{p}.self", self.cfg.n_heads, causal)
            y = y + a
            h, _ = _ln_apply(y, self.params, f"{p}.ln2")
            c, cache = _mha_fwd(
                h, enc.states, self.params, f"{p}.cross", self.cfg.n_heads, masks[i], uniform
            )
            y = y + c
            h, _ = _ln_apply(y, self.params, f"{p}.ln3")
            f, _ = _ff_fwd(h, self.params, f"{p}.ff")
            y = y + f
            if trace is not None:
                rows.append([cache.weights[h_, -1, :].copy() for h_ in range(self.cfg.n_heads)])
        z, _ = _ln_apply(y[-1:], self.params, "dec.ln")
        logits: Vector = (z @ self.params["out.w"] + self.params["out.b"])[0]
        if trace is not None:
            trace.append_step(rows)
        return logits

    def decode_step(
        self,
        enc: EncoderStates,
        prefix: TokenSequence,
        mask_cfg: HeadMaskConfig,
        m_tilde: Optional[HeadMaskVector] = None,
        trace: Optional[AttentionTrace] = None,
    ) -> Vector:
        """Next-token logits with m_tilde added inside every active cross-attention head."""
        masks = self.cross_mask(mask_cfg, m_tilde, enc.source_len)
        return self._run_decoder(enc, prefix, masks, False, trace)

    def uniform_attention_decode_step(
        self,
        enc: EncoderStates,
        prefix: TokenSequence,
        trace: Optional[AttentionTrace] = None,
    ) -> Vector:
        """Next-token logits with every cross-attention row set to 1/source_len."""
        masks: list[Optional[Array]] = [None] * self.cfg.n_dec_layers
        return self._run_decoder(enc, prefix, masks, True, trace)

    def loss_and_grads(
        self, source: TokenSequence, target: TokenSequence
    ) -> tuple[float, int, Params]:
        """Summed token cross-entropy of bos+target -> target+eos, with gradients."""
        self._check_ids(source, "source")
        dec_in = (BOS_ID,) + tuple(target)
        gold = np.asarray(tuple(target) + (EOS_ID,), dtype=np.int64)
        self._check_ids(dec_in, "target")
        enc_states, enc_cache = encoder_forward(self.params, self.cfg, source)
        logits, _, dec_cache = decoder_forward(self.params, self.cfg, dec_in, enc_states)
        logp = log_softmax_rows(logits)
        rows = np.arange(len(gold))
        loss = float(-logp[rows, gold].sum())
        dlogits = np.exp(logp)
        dlogits[rows, gold] -= 1.0
        grads = zeros_like_params(self.params)
        d_enc = decoder_backward(dlogits, dec_cache, self.params, self.cfg, grads)
        encoder_backward(d_enc, enc_cache, self.params, self.cfg, grads)
        return loss, len(gold), grads

    def loss(self, source: TokenSequence, target: TokenSequence) -> tuple[float, int]:
        """Summed token cross-entropy and token count, forward only."""
        logp = self._teacher_forced_logp(source, target)
        gold = np.asarray(tuple(target) + (EOS_ID,), dtype=np.int64)
        return float(-logp[np.arange(len(gold)), gold].sum()), len(gold)

    def token_accuracy(self, source: TokenSequence, target: TokenSequence) -> float:
        """Teacher-forced argmax accuracy over target + eos."""
        logp = self._teacher_forced_logp(source, target)
        gold = np.asarray(tuple(target) + (EOS_ID,), dtype=np.int64)
        return float(np.mean(np.argmax(logp, axis=-1) == gold))

    def _teacher_forced_logp(self, source: TokenSequence, target: TokenSequence) -> Array:
        self._check_ids(source, "source")
        dec_in = (BOS_ID,) + tuple(target)
        self._check_ids(dec_in, "target")
        enc_states, _ = encoder_forward(self.params, self.cfg, source)
        logits, _, _ = decoder_forward(self.params, self.cfg, dec_in, enc_states)
        return log_softmax_rows(logits)
