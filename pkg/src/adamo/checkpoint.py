"""Binary checkpoints of named parameter sets.

Layout, all integers little-endian::

    magic     4 bytes  b"ADMO"
    version   u32
    role      u8       0 encoder, 1 decoder, 2 seq2seq
    config    u32 byte length + UTF-8 JSON (sorted keys; model dims,
              refiner settings and the provenance list)
    table     u32 count, then per parameter (sorted by name):
              u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims
    payload   float32 values of every parameter, row-major, table order

Loading validates the magic tag, version, exact payload length and every
shape against the shapes implied by the stored config.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from adamo.errors import CheckpointError, FormatError
from adamo.model.network import (
    ModelConfig,
    RefinerConfig,
    Seq2SeqModel,
    decoder_shapes,
    encoder_shapes,
    param_shapes,
)
from adamo.numerics import Tensor

MAGIC = b"ADMO"
VERSION = 1
ROLES = ("encoder", "decoder", "seq2seq")

_SHARED_KEYS = ("d_model", "n_heads", "ffn_mult", "max_len", "dropout")
_ROLE_KEYS = {
    "encoder": _SHARED_KEYS + ("n_enc_layers", "enc_vocab"),
    "decoder": _SHARED_KEYS + ("n_dec_layers", "dec_vocab"),
    "seq2seq": _SHARED_KEYS + ("n_enc_layers", "enc_vocab", "n_dec_layers", "dec_vocab"),
}


def expected_shapes(role: str, config: dict) -> dict[str, tuple]:
    full = {"enc_vocab": 1, "dec_vocab": 1, "n_enc_layers": 1, "n_dec_layers": 1} | {
        k: config[k] for k in _ROLE_KEYS[role]
    }
    mc = ModelConfig(**full)
    if role == "encoder":
        return encoder_shapes(mc)
    if role == "decoder":
        return decoder_shapes(mc, cross=False)
    return param_shapes(mc)


@dataclass
class ModelCheckpoint:
    role: str
    config: dict
    named_params: dict[str, np.ndarray]
    provenance: list[str] = field(default_factory=list)
    refiner: dict = field(default_factory=dict)
    version: int = VERSION

    def __post_init__(self):
        if self.role not in ROLES:
            raise CheckpointError(f"unknown checkpoint role {self.role!r}")
        missing = [k for k in _ROLE_KEYS[self.role] if k not in self.config]
        if missing:
            raise CheckpointError(f"{self.role} checkpoint config lacks {missing}")
        self.config = {k: self.config[k] for k in _ROLE_KEYS[self.role]}
        self.named_params = {
            k: np.ascontiguousarray(self.named_params[k], dtype="<f4") for k in sorted(self.named_params)
        }
        want = expected_shapes(self.role, self.config)
        if set(want) != set(self.named_params):
            missing = sorted(set(want) - set(self.named_params))
            extra = sorted(set(self.named_params) - set(want))
            raise CheckpointError(f"{self.role} checkpoint parameter mismatch: missing {missing[:4]}, "
                                  f"unexpected {extra[:4]}")
        for name, shape in want.items():
            if self.named_params[name].shape != tuple(shape):
                raise CheckpointError(f"{name}: stored shape {self.named_params[name].shape} "
                                      f"does not match config shape {tuple(shape)}")

    @property
    def d_model(self) -> int:
        return int(self.config["d_model"])


def checkpoint_from_model(model: Seq2SeqModel, role: str = "seq2seq") -> ModelCheckpoint:
    cfg = model.config.to_dict()
    if role == "encoder":
        names = model.encoder_names()
    elif role == "decoder":
        names = model.decoder_names(cross=False)
    else:
        names = list(model.params)
    refiner = {}
    if role == "seq2seq":
        r = model.refiner
        refiner = {"sigma": r.sigma, "active_in_training": r.active_in_training,
                   "active_in_inference": r.active_in_inference}
    return ModelCheckpoint(
        role,
        {k: cfg[k] for k in _ROLE_KEYS[role]},
        {n: model.params[n].data for n in names},
        list(model.provenance),
        refiner,
    )


def model_from_checkpoint(ckpt: ModelCheckpoint, dtype=np.float32) -> Seq2SeqModel:
    if ckpt.role != "seq2seq":
        raise CheckpointError(f"a full model needs a seq2seq checkpoint, got role {ckpt.role!r}")
    params = {n: Tensor(a.astype(dtype), requires_grad=True, name=n) for n, a in ckpt.named_params.items()}
    return Seq2SeqModel(ModelConfig(**ckpt.config), RefinerConfig(**ckpt.refiner), params, list(ckpt.provenance))


def to_bytes(ckpt: ModelCheckpoint) -> bytes:
    header = json.dumps({"model": ckpt.config, "refiner": ckpt.refiner, "provenance": ckpt.provenance},
                        sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<IB", ckpt.version, ROLES.index(ckpt.role)),
             struct.pack("<I", len(header)), header, struct.pack("<I", len(ckpt.named_params))]
    for name, arr in ckpt.named_params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    for arr in ckpt.named_params.values():
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(buf: bytes) -> ModelCheckpoint:
    r = _Reader(buf)
    magic = r.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    version, role_idx = r.unpack("<IB")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}, expected {VERSION}")
    if role_idx >= len(ROLES):
        raise FormatError(f"unknown role tag {role_idx}")
    (hlen,) = r.unpack("<I")
    try:
        header = json.loads(r.take(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint config block: {exc}") from None
    (count,) = r.unpack("<I")
    table = []
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        table.append((name, r.unpack(f"<{ndim}I")))
    params = {}
    for name, shape in table:
        n = math.prod(shape)
        params[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).copy()
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after checkpoint payload")
    try:
        return ModelCheckpoint(ROLES[role_idx], header["model"], params, header.get("provenance", []),
                               header.get("refiner", {}), version)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed checkpoint config block: {exc}") from None


def save_checkpoint(obj: ModelCheckpoint | Seq2SeqModel, path, role: str = "seq2seq") -> None:
    ckpt = obj if isinstance(obj, ModelCheckpoint) else checkpoint_from_model(obj, role)
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> ModelCheckpoint:
    return from_bytes(Path(path).read_bytes())
