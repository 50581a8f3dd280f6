from adamo.model.network import (
    Batch,
    ModelConfig,
    RefinerConfig,
    Seq2SeqModel,
    init_params,
    pad_ids,
    param_count,
    param_shapes,
    refine,
    seq2seq_loss,
)
from adamo.model.decoding import beam_decode, greedy_decode, greedy_decode_batch, sequence_logprob
from adamo.model.assembly import assemble

__all__ = [
    "Batch", "ModelConfig", "RefinerConfig", "Seq2SeqModel", "init_params", "pad_ids", "param_count",
    "param_shapes", "refine", "seq2seq_loss", "beam_decode", "greedy_decode", "greedy_decode_batch",
    "sequence_logprob", "assemble",
]
