"""Training-example transforms: MLM corruption, CLM shifting and the
concept annotation / extrapolation / interpolation stage tasks.

The three stage tasks rewrite the summary token-for-token according to
whether each summary token occurs anywhere in the code:

======  ============================  ===========================
task    token present in the code     token absent from the code
======  ============================  ===========================
CA      ``<seen>``                    ``<unseen>``
CE      ``<mask>``                    kept
CI      kept                          ``<mask>``
======  ============================  ===========================

Membership compares normalized surface strings, since the two sides use
different vocabularies. Reserved tokens are never rewritten and never count
as members.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from adamo.errors import DomainError
from adamo.numerics import IGNORE_INDEX
from adamo.tokenizer import BOS, EOS, MARK_SEEN, MARK_UNSEEN, MASK, SPECIAL_IDS, TokenSeq, decode

STAGE_TASKS = ("CA", "CE", "CI")


@dataclass
class MaskedExample:
    input_ids: TokenSeq
    label_ids: list[int]

    @property
    def masked_positions(self) -> list[int]:
        return [i for i, t in enumerate(self.label_ids) if t != IGNORE_INDEX]


def mlm_corrupt(seq: TokenSeq, rate: float, rng: np.random.Generator) -> MaskedExample:
    """Mask exactly ``max(1, round(rate * n))`` of the ``n`` non-reserved positions.

    Halves round up. Labels hold the original id at masked positions and the
    ignore marker elsewhere.
    """
    if not 0.0 < rate < 1.0:
        raise DomainError(f"mask rate must lie in (0, 1), got {rate}")
    maskable = [i for i, t in enumerate(seq.ids) if t not in SPECIAL_IDS]
    if not maskable:
        raise DomainError("sequence has no maskable (non-reserved) tokens")
    k = max(1, int(math.floor(rate * len(maskable) + 0.5)))
    chosen = rng.choice(len(maskable), size=k, replace=False)
    ids = list(seq.ids)
    labels = [IGNORE_INDEX] * len(ids)
    for c in chosen:
        pos = maskable[int(c)]
        labels[pos] = ids[pos]
        ids[pos] = MASK
    return MaskedExample(TokenSeq(ids, seq.vocab), labels)


def clm_shift(seq: TokenSeq) -> tuple[list[int], list[int]]:
    """Next-token pairs: inputs drop the final EOS, labels drop the leading BOS."""
    ids = seq.ids
    if len(ids) < 2 or ids[0] != BOS or ids[-1] != EOS:
        raise DomainError("clm_shift needs a sequence wrapped in BOS ... EOS")
    return list(ids[:-1]), list(ids[1:])


@dataclass
class StageExample:
    src_ids: TokenSeq
    tgt_ids: TokenSeq
    task: str


def source_concepts(src: TokenSeq) -> set[str]:
    return {src.vocab.tokens[i] for i in src.ids if i not in SPECIAL_IDS}


def _rewrite(src: TokenSeq, tgt: TokenSeq, task: str, seen_id: int | None, unseen_id: int | None):
    if not len(src) or not len(tgt):
        raise DomainError(f"{task} needs non-empty source and target sequences")
    concepts = source_concepts(src)
    out = []
    for i in tgt.ids:
        if i in SPECIAL_IDS:
            out.append(i)
            continue
        present = tgt.vocab.tokens[i] in concepts
        repl = seen_id if present else unseen_id
        out.append(i if repl is None else repl)
    return StageExample(src, TokenSeq(out, tgt.vocab), task)


def concept_annotation(src: TokenSeq, tgt: TokenSeq) -> StageExample:
    return _rewrite(src, tgt, "CA", MARK_SEEN, MARK_UNSEEN)


def concept_extrapolation(src: TokenSeq, tgt: TokenSeq) -> StageExample:
    return _rewrite(src, tgt, "CE", MASK, None)


def concept_interpolation(src: TokenSeq, tgt: TokenSeq) -> StageExample:
    return _rewrite(src, tgt, "CI", None, MASK)


STAGE_TRANSFORMS = {
    "CA": concept_annotation,
    "CE": concept_extrapolation,
    "CI": concept_interpolation,
}


def stage_transform(task: str):
    try:
        return STAGE_TRANSFORMS[task]
    except KeyError:
        raise DomainError(f"unknown stage task {task!r}, expected one of {STAGE_TASKS}") from None


def dump_stage_corpus(examples: list[StageExample], codes: list[str], path) -> None:
    """Write transformed pairs in the corpus format, the summary replaced by the rewritten target."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex, code in zip(examples, codes):
            summary = decode(ex.tgt_ids.vocab, ex.tgt_ids)
            fh.write(json.dumps({"code": code, "summary": summary, "task": ex.task}, ensure_ascii=False) + "\n")
