"""Greedy and beam-search decoding.

Decoders return the generated decoder ids after BOS, ending with EOS when
one was produced. The refiner follows its inference flag.
"""
from __future__ import annotations

import numpy as np

from adamo.errors import DomainError
from adamo.model.network import Seq2SeqModel, pad_ids, refine
from adamo.tokenizer import BOS, EOS, PAD, TokenSeq


def _ids(src):
    return list(src.ids) if isinstance(src, TokenSeq) else [int(i) for i in src]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    x = logits.astype(np.float64)
    x = x - x.max(axis=-1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=-1, keepdims=True))


def _memory(model, srcs, rng):
    src = pad_ids(srcs)
    pad = src == PAD
    memory = refine(model.encode(src, pad), model.refiner, "inference", rng)
    return memory, pad


def greedy_decode_batch(model: Seq2SeqModel, srcs, max_out: int, rng=None) -> list[list[int]]:
    if max_out < 1:
        raise DomainError("max_out must be at least 1")
    srcs = [_ids(s) for s in srcs]
    memory, pad = _memory(model, srcs, rng)
    B = len(srcs)
    seqs = np.full((B, 1), BOS, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    for _ in range(min(max_out, model.config.max_len)):
        logits = model.decode_forward(seqs, memory, pad).data[:, -1, :]
        nxt = np.where(done, PAD, logits.argmax(axis=-1))
        seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
        done |= nxt == EOS
        if done.all():
            break
    out = []
    for row in seqs[:, 1:]:
        ids = []
        for i in row:
            if i == PAD:
                break
            ids.append(int(i))
            if i == EOS:
                break
        out.append(ids)
    return out


def greedy_decode(model: Seq2SeqModel, src, max_out: int, rng=None) -> list[int]:
    return greedy_decode_batch(model, [src], max_out, rng)[0]


def beam_decode(model: Seq2SeqModel, src, beam: int = 4, max_out: int = 30,
                length_penalty: float = 1.0, rng=None) -> list[int]:
    """Length-normalized beam search; a hypothesis scores ``logprob / len ** length_penalty``.

    Each step keeps the ``beam`` best expansions overall; expansions ending in
    EOS leave the beam as finished hypotheses. With ``beam == 1`` this is
    greedy decoding.
    """
    if beam < 1:
        raise DomainError("beam width must be at least 1")
    if max_out < 1:
        raise DomainError("max_out must be at least 1")
    memory, pad = _memory(model, [_ids(src)], rng)
    alive = [([BOS], 0.0)]
    finished = []
    for _ in range(min(max_out, model.config.max_len)):
        prefixes = np.array([seq for seq, _ in alive], dtype=np.int64)
        k = len(alive)
        mem = type(memory)(np.repeat(memory.data, k, axis=0))
        logp = _log_softmax(model.decode_forward(prefixes, mem, np.repeat(pad, k, axis=0)).data[:, -1, :])
        totals = np.array([s for _, s in alive])[:, None] + logp
        flat = totals.reshape(-1)
        order = np.argsort(-flat, kind="stable")[:beam]
        V = logp.shape[1]
        nxt = []
        for idx in order:
            row, tok = divmod(int(idx), V)
            hyp = (alive[row][0] + [tok], float(flat[idx]))
            (finished if tok == EOS else nxt).append(hyp)
        alive = nxt
        if not alive:
            break
    pool = finished + alive

    def normalized(h):
        n = len(h[0]) - 1
        return h[1] / (n ** length_penalty) if length_penalty else h[1]

    best = max(pool, key=normalized)
    return best[0][1:]


def sequence_logprob(model: Seq2SeqModel, src, out_ids, rng=None) -> float:
    """Total log-probability of emitting ``out_ids`` after BOS."""
    memory, pad = _memory(model, [_ids(src)], rng)
    prefix = np.array([[BOS] + list(out_ids)], dtype=np.int64)
    logp = _log_softmax(model.decode_forward(prefix[:, :-1], memory, pad).data[0])
    return float(sum(logp[t, tok] for t, tok in enumerate(out_ids)))
