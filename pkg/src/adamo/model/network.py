"""Encoder-decoder transformer with a Gaussian-noise refiner on the encoder output.

Pre-norm residual blocks, sinusoidal positions, separate embedding tables and
output heads per side. The encoder head is the MLM head used for encoder
pretraining; the decoder can also run without cross-attention, which is how
a stand-alone decoder is pretrained as a causal language model.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from adamo.errors import ConfigError, DomainError, StateError
from adamo.numerics import (
    IGNORE_INDEX,
    Tensor,
    add,
    cross_entropy,
    embedding,
    gelu,
    layer_norm,
    matmul,
    mul,
    reshape,
    scale,
    softmax,
    transpose,
)
from adamo.numerics.sampling import sample_gaussian, standard_normal
from adamo.tokenizer import PAD

NEG_INF = -1e9
INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    enc_vocab: int
    dec_vocab: int
    d_model: int = 128
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    ffn_mult: int = 4
    max_len: int = 256
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if self.n_enc_layers < 1 or self.n_dec_layers < 1:
            raise ConfigError("encoder and decoder need at least one layer each")
        if self.ffn_mult < 1 or self.max_len < 1:
            raise ConfigError("ffn_mult and max_len must be positive")
        if self.enc_vocab < 1 or self.dec_vocab < 1:
            raise ConfigError("vocabulary sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RefinerConfig:
    sigma: float = 0.0
    active_in_training: bool = True
    active_in_inference: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"refiner sigma must be non-negative, got {self.sigma}")


def _attn_shapes(prefix, d):
    return {f"{prefix}.{w}": (d, d) for w in ("wq", "wk", "wv", "wo")} | {
        f"{prefix}.{b}": (d,) for b in ("bq", "bk", "bv", "bo")
    }


def _ln_shapes(prefix, d):
    return {f"{prefix}.gain": (d,), f"{prefix}.bias": (d,)}


def _ffn_shapes(prefix, d, f):
    return {f"{prefix}.w1": (d, f), f"{prefix}.b1": (f,), f"{prefix}.w2": (f, d), f"{prefix}.b2": (d,)}


def encoder_shapes(config: ModelConfig) -> dict[str, tuple]:
    d, f = config.d_model, config.d_model * config.ffn_mult
    shapes = {"enc.embed": (config.enc_vocab, d)}
    for i in range(config.n_enc_layers):
        p = f"enc.layer{i}"
        shapes |= _ln_shapes(f"{p}.ln_attn", d) | _attn_shapes(f"{p}.attn", d)
        shapes |= _ln_shapes(f"{p}.ln_ffn", d) | _ffn_shapes(f"{p}.ffn", d, f)
    shapes |= _ln_shapes("enc.ln_final", d)
    shapes |= {"enc.head.w": (d, config.enc_vocab), "enc.head.b": (config.enc_vocab,)}
    return shapes


def decoder_shapes(config: ModelConfig, cross: bool = True) -> dict[str, tuple]:
    d, f = config.d_model, config.d_model * config.ffn_mult
    shapes = {"dec.embed": (config.dec_vocab, d)}
    for i in range(config.n_dec_layers):
        p = f"dec.layer{i}"
        shapes |= _ln_shapes(f"{p}.ln_self", d) | _attn_shapes(f"{p}.self_attn", d)
        if cross:
            shapes |= _ln_shapes(f"{p}.ln_cross", d) | _attn_shapes(f"{p}.cross_attn", d)
        shapes |= _ln_shapes(f"{p}.ln_ffn", d) | _ffn_shapes(f"{p}.ffn", d, f)
    shapes |= _ln_shapes("dec.ln_final", d)
    shapes |= {"dec.head.w": (d, config.dec_vocab), "dec.head.b": (config.dec_vocab,)}
    return shapes


def is_cross(name: str) -> bool:
    return ".ln_cross." in name or ".cross_attn." in name


def param_shapes(config: ModelConfig) -> dict[str, tuple]:
    return encoder_shapes(config) | decoder_shapes(config)


def param_count(config: ModelConfig) -> int:
    d, f = config.d_model, config.d_model * config.ffn_mult
    attn = 4 * d * d + 4 * d
    ffn = 2 * d * f + f + d
    ln = 2 * d
    enc = 2 * config.enc_vocab * d + config.enc_vocab + config.n_enc_layers * (attn + ffn + 2 * ln) + ln
    dec = 2 * config.dec_vocab * d + config.dec_vocab + config.n_dec_layers * (2 * attn + ffn + 3 * ln) + ln
    return enc + dec


def init_tensor(name: str, shape: tuple, seed: int, dtype=np.float32) -> np.ndarray:
    """Deterministic init for one named parameter, independent of all other names."""
    if name.endswith(".gain"):
        return np.ones(shape, dtype=dtype)
    if len(shape) == 1:
        return np.zeros(shape, dtype=dtype)
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    rng = np.random.Generator(np.random.Philox(ss))
    return (INIT_STD * standard_normal(math.prod(shape), rng)).reshape(shape).astype(dtype)


def sinusoidal_positions(length: int, d: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(length)[:, None]
    freq = np.exp(-math.log(10000.0) * (np.arange(0, d, 2) / d))
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq)[:, : d // 2]
    return pe.astype(dtype)


@dataclass
class Seq2SeqModel:
    config: ModelConfig
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    params: dict[str, Tensor] = field(default_factory=dict)
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        expected = param_shapes(self.config)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ConfigError(f"parameter set mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ConfigError(f"{name}: shape {self.params[name].shape}, expected {shape}")
        self._pe = {}

    @property
    def dtype(self):
        return self.params["enc.embed"].dtype

    def astype(self, dtype) -> "Seq2SeqModel":
        params = {k: Tensor(v.data.astype(dtype), requires_grad=True, name=k) for k, v in self.params.items()}
        return Seq2SeqModel(self.config, self.refiner, params, list(self.provenance))

    def named(self, names) -> list[Tensor]:
        return [self.params[n] for n in names]

    def encoder_names(self) -> list[str]:
        return sorted(encoder_shapes(self.config))

    def decoder_names(self, cross: bool = True) -> list[str]:
        return sorted(decoder_shapes(self.config, cross=cross))

    def cross_names(self) -> list[str]:
        return sorted(n for n in self.params if is_cross(n))

    def seq2seq_names(self) -> list[str]:
        # the MLM head takes no part in summarization
        return sorted(n for n in self.params if not n.startswith("enc.head."))

    def _positions(self, length):
        if length not in self._pe:
            self._pe[length] = sinusoidal_positions(length, self.config.d_model, self.dtype)
        return self._pe[length]

    def _dropout(self, x: Tensor, training: bool, rng) -> Tensor:
        p = self.config.dropout
        if not training or p == 0.0:
            return x
        if rng is None:
            raise StateError("training-mode dropout needs an rng")
        keep = (rng.random(x.shape) >= p).astype(self.dtype) / self.dtype.type(1.0 - p)
        return mul(x, keep)

    def _embed(self, side, ids, training, rng):
        ids = np.asarray(ids)
        if ids.shape[1] > self.config.max_len:
            raise DomainError(f"sequence length {ids.shape[1]} exceeds max_len {self.config.max_len}")
        x = scale(embedding(self.params[f"{side}.embed"], ids), math.sqrt(self.config.d_model))
        x = add(x, self._positions(ids.shape[1]))
        return self._dropout(x, training, rng)

    def _layer_norm(self, prefix, x):
        return layer_norm(x, self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"])

    def _attention(self, prefix, xq: Tensor, xkv: Tensor, bias: np.ndarray) -> Tensor:
        p = self.params
        B, Tq, d = xq.shape
        Tk = xkv.shape[1]
        H = self.config.n_heads
        dh = d // H
        q = transpose(reshape(add(matmul(xq, p[f"{prefix}.wq"]), p[f"{prefix}.bq"]), (B, Tq, H, dh)), (0, 2, 1, 3))
        k = transpose(reshape(add(matmul(xkv, p[f"{prefix}.wk"]), p[f"{prefix}.bk"]), (B, Tk, H, dh)), (0, 2, 3, 1))
        v = transpose(reshape(add(matmul(xkv, p[f"{prefix}.wv"]), p[f"{prefix}.bv"]), (B, Tk, H, dh)), (0, 2, 1, 3))
        scores = add(scale(matmul(q, k), 1.0 / math.sqrt(dh)), bias)
        ctx = matmul(softmax(scores), v)
        ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (B, Tq, d))
        return add(matmul(ctx, p[f"{prefix}.wo"]), p[f"{prefix}.bo"])

    def _ffn(self, prefix, x):
        p = self.params
        h = gelu(add(matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
        return add(matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])

    def key_bias(self, pad_mask) -> np.ndarray:
        pad_mask = np.asarray(pad_mask, dtype=bool)
        return np.where(pad_mask, NEG_INF, 0.0).astype(self.dtype)[:, None, None, :]

    def encode(self, src, pad_mask=None, training=False, rng=None) -> Tensor:
        """Bidirectional encoding of a (B, S) id batch; pad positions are never attended to."""
        src = np.asarray(src)
        if pad_mask is None:
            pad_mask = src == PAD
        x = self._embed("enc", src, training, rng)
        bias = self.key_bias(pad_mask)
        for i in range(self.config.n_enc_layers):
            pre = f"enc.layer{i}"
            h = self._layer_norm(f"{pre}.ln_attn", x)
            x = add(x, self._dropout(self._attention(f"{pre}.attn", h, h, bias), training, rng))
            h = self._layer_norm(f"{pre}.ln_ffn", x)
            x = add(x, self._dropout(self._ffn(f"{pre}.ffn", h), training, rng))
        return self._layer_norm("enc.ln_final", x)

    def mlm_logits(self, src, pad_mask=None, training=False, rng=None) -> Tensor:
        h = self.encode(src, pad_mask, training, rng)
        return add(matmul(h, self.params["enc.head.w"]), self.params["enc.head.b"])

    def decode_forward(self, tgt_in, memory: Tensor | None = None, src_pad_mask=None,
                       training=False, rng=None) -> Tensor:
        """Causal decoder logits of shape (B, T, dec_vocab).

        With ``memory=None`` the cross-attention blocks are skipped and the
        decoder acts as a left-to-right language model.
        """
        tgt_in = np.asarray(tgt_in)
        T = tgt_in.shape[1]
        x = self._embed("dec", tgt_in, training, rng)
        causal = np.triu(np.full((T, T), NEG_INF), k=1).astype(self.dtype)[None, None]
        cross_bias = None
        if memory is not None:
            if src_pad_mask is None:
                src_pad_mask = np.zeros(memory.shape[:2], dtype=bool)
            cross_bias = self.key_bias(src_pad_mask)
        for i in range(self.config.n_dec_layers):
            pre = f"dec.layer{i}"
            h = self._layer_norm(f"{pre}.ln_self", x)
            x = add(x, self._dropout(self._attention(f"{pre}.self_attn", h, h, causal), training, rng))
            if memory is not None:
                h = self._layer_norm(f"{pre}.ln_cross", x)
                x = add(x, self._dropout(self._attention(f"{pre}.cross_attn", h, memory, cross_bias), training, rng))
            h = self._layer_norm(f"{pre}.ln_ffn", x)
            x = add(x, self._dropout(self._ffn(f"{pre}.ffn", h), training, rng))
        h = self._layer_norm("dec.ln_final", x)
        return add(matmul(h, self.params["dec.head.w"]), self.params["dec.head.b"])


def init_params(config: ModelConfig, seed: int = 0, refiner: RefinerConfig | None = None,
                dtype=np.float32) -> Seq2SeqModel:
    params = {
        name: Tensor(init_tensor(name, shape, seed, dtype), requires_grad=True, name=name)
        for name, shape in param_shapes(config).items()
    }
    return Seq2SeqModel(config, refiner or RefinerConfig(), params)


def refine(memory: Tensor, refiner: RefinerConfig, mode: str = "training", rng=None) -> Tensor:
    """Add fresh N(0, sigma^2) noise to the encoder output when the refiner is active in ``mode``."""
    if mode not in ("training", "inference"):
        raise DomainError(f"unknown refiner mode {mode!r}")
    active = refiner.active_in_training if mode == "training" else refiner.active_in_inference
    if not active or refiner.sigma == 0:
        return memory
    if rng is None:
        raise StateError("an active refiner needs an rng")
    return add(memory, sample_gaussian(memory.shape, refiner.sigma, rng, dtype=memory.dtype))


def pad_ids(seqs, pad: int = PAD) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


@dataclass
class Batch:
    src: np.ndarray
    src_pad: np.ndarray
    tgt_in: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_pairs(cls, pairs) -> "Batch":
        """``pairs`` holds (src ids, tgt ids) with tgt wrapped in BOS ... EOS."""
        if not pairs:
            raise DomainError("empty batch")
        src = pad_ids([s for s, _ in pairs])
        tgt = pad_ids([t for _, t in pairs])
        labels = tgt[:, 1:].copy()
        labels[labels == PAD] = IGNORE_INDEX
        return cls(src, src == PAD, tgt[:, :-1], labels)


def seq2seq_loss(model: Seq2SeqModel, batch, training: bool = False, rng=None) -> Tensor:
    """Teacher-forced mean token cross-entropy over non-pad target positions."""
    if not isinstance(batch, Batch):
        batch = Batch.from_pairs(list(batch))
    memory = model.encode(batch.src, batch.src_pad, training, rng)
    memory = refine(memory, model.refiner, "training" if training else "inference", rng)
    logits = model.decode_forward(batch.tgt_in, memory, batch.src_pad, training, rng)
    B, T, V = logits.shape
    return cross_entropy(reshape(logits, (B * T, V)), batch.labels.reshape(-1))


def with_refiner(model: Seq2SeqModel, refiner: RefinerConfig) -> Seq2SeqModel:
    """Same parameter objects, different refiner settings."""
    out = Seq2SeqModel(model.config, refiner, model.params, model.provenance)
    return out


def with_dropout(config: ModelConfig, dropout: float) -> ModelConfig:
    return replace(config, dropout=dropout)
