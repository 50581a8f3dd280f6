"""Build one encoder-decoder model out of two separately pretrained halves."""
from __future__ import annotations

import numpy as np

from adamo.errors import AssemblyError, CheckpointError
from adamo.model.network import ModelConfig, RefinerConfig, Seq2SeqModel, init_tensor, param_shapes
from adamo.numerics import Tensor


def assemble(encoder_ckpt, decoder_ckpt, refiner: RefinerConfig | None = None, seed: int = 0,
             dropout: float | None = None, dtype=np.float32) -> Seq2SeqModel:
    """Encoder weights from ``encoder_ckpt``, decoder weights from ``decoder_ckpt``.

    Cross-attention blocks exist in neither donor and are freshly initialized
    from ``seed``.
    """
    if encoder_ckpt.role != "encoder":
        raise CheckpointError(f"expected an encoder checkpoint, got role {encoder_ckpt.role!r}")
    if decoder_ckpt.role != "decoder":
        raise CheckpointError(f"expected a decoder checkpoint, got role {decoder_ckpt.role!r}")
    ec, dc = encoder_ckpt.config, decoder_ckpt.config
    for key in ("d_model", "n_heads", "ffn_mult"):
        if ec[key] != dc[key]:
            raise AssemblyError(f"{key} differs between encoder ({ec[key]}) and decoder ({dc[key]})")
    config = ModelConfig(
        enc_vocab=ec["enc_vocab"], dec_vocab=dc["dec_vocab"], d_model=ec["d_model"], n_heads=ec["n_heads"],
        n_enc_layers=ec["n_enc_layers"], n_dec_layers=dc["n_dec_layers"], ffn_mult=ec["ffn_mult"],
        max_len=min(ec["max_len"], dc["max_len"]),
        dropout=dc["dropout"] if dropout is None else dropout,
    )
    params = {}
    for name, shape in param_shapes(config).items():
        donor = encoder_ckpt if name.startswith("enc.") else decoder_ckpt
        if name in donor.named_params:
            arr = donor.named_params[name].astype(dtype)
        elif ".ln_cross." in name or ".cross_attn." in name:
            arr = init_tensor(name, shape, seed, dtype)
        else:
            raise CheckpointError(f"{donor.role} checkpoint has no parameter {name!r}")
        params[name] = Tensor(arr, requires_grad=True, name=name)
    provenance = list(encoder_ckpt.provenance) + list(decoder_ckpt.provenance) + ["assemble"]
    return Seq2SeqModel(config, refiner or RefinerConfig(), params, provenance)
