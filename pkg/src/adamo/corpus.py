"""Snippet/comment pair datasets stored as line-delimited JSON.

Each line of a corpus file is one record ``{"code": ..., "summary": ...}``;
extra fields are ignored. Pairs keep file order and are numbered from 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from adamo.errors import ConfigError, DomainError, ParseError, ValidationError

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class SamplePair:
    code: str
    summary: str
    id: int


@dataclass
class Corpus:
    pairs: list[SamplePair]
    split: str = "train"
    origin: str = ""

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}, expected one of {SPLITS}")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @classmethod
    def from_pairs(cls, items: Iterable[tuple[str, str]], split="train", origin=""):
        pairs = [SamplePair(code, summary, i) for i, (code, summary) in enumerate(items)]
        for p in pairs:
            _validate(p)
        return cls(pairs, split, origin)

    def codes(self) -> list[str]:
        return [p.code for p in self.pairs]

    def summaries(self) -> list[str]:
        return [p.summary for p in self.pairs]


def _validate(pair: SamplePair) -> None:
    if not pair.code.strip():
        raise ValidationError(f"pair {pair.id}: empty code field")
    if not pair.summary.strip():
        raise ValidationError(f"pair {pair.id}: empty summary field")


def load_corpus(path, split: str = "train", origin: str | None = None) -> Corpus:
    """Read a corpus file. Blank lines are skipped; ids count records, not lines."""
    path = Path(path)
    pairs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise ParseError(f"{path}:{lineno}: record is not an object")
            for key in ("code", "summary"):
                if key not in record:
                    raise ParseError(f"{path}:{lineno}: missing field {key!r}")
                if not isinstance(record[key], str):
                    raise ParseError(f"{path}:{lineno}: field {key!r} is not a string")
            pair = SamplePair(record["code"], record["summary"], len(pairs))
            _validate(pair)
            pairs.append(pair)
    return Corpus(pairs, split, origin if origin is not None else path.stem)


def save_corpus(corpus: Corpus | Sequence[tuple[str, str]], path) -> None:
    items = corpus.pairs if isinstance(corpus, Corpus) else corpus
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in items:
            code, summary = (p.code, p.summary) if isinstance(p, SamplePair) else p
            fh.write(json.dumps({"code": code, "summary": summary}, ensure_ascii=False) + "\n")


def split_view(corpus: Corpus, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Shuffle with ``seed`` and cut into train/valid/test views.

    Each split gets ``floor(f * n)`` pairs; the split with the largest fraction
    absorbs the remainder. Pair ids are kept from the source corpus.
    """
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three non-negative reals summing to 1, got {fractions}")
    n = len(corpus)
    sizes = [int(math.floor(f * n + 1e-9)) for f in fr]
    sizes[int(np.argmax(fr))] += n - sum(sizes)
    order = np.random.default_rng(seed).permutation(n)
    out, start = [], 0
    for split, size in zip(SPLITS, sizes):
        idx = order[start:start + size]
        out.append(Corpus([corpus.pairs[i] for i in idx], split, corpus.origin))
        start += size
    return tuple(out)


@dataclass
class StatsReport:
    pair_count: int
    code_token_mean: float
    summary_token_mean: float
    vocab_overlap_ratio: float
    origin: str = field(default="")

    def to_dict(self) -> dict:
        return asdict(self)

    def format(self) -> str:
        rows = [
            ("origin", self.origin or "-"),
            ("pairs", str(self.pair_count)),
            ("code tokens (mean)", f"{self.code_token_mean:.2f}"),
            ("summary tokens (mean)", f"{self.summary_token_mean:.2f}"),
            ("summary/code overlap", f"{self.vocab_overlap_ratio:.4f}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def corpus_stats(corpus: Corpus, tokenize: Callable[[str], list[str]]) -> StatsReport:
    """Token-length means and the macro-averaged share of summary tokens found in the code."""
    if len(corpus) == 0:
        raise DomainError("corpus_stats needs a non-empty corpus")
    code_lens, summary_lens, ratios = [], [], []
    for p in corpus:
        code_toks = tokenize(p.code)
        summary_toks = tokenize(p.summary)
        code_lens.append(len(code_toks))
        summary_lens.append(len(summary_toks))
        seen = set(code_toks)
        hits = sum(1 for t in summary_toks if t in seen)
        ratios.append(hits / len(summary_toks) if summary_toks else 0.0)
    return StatsReport(
        pair_count=len(corpus),
        code_token_mean=float(np.mean(code_lens)),
        summary_token_mean=float(np.mean(summary_lens)),
        vocab_overlap_ratio=float(np.mean(ratios)),
        origin=corpus.origin,
    )
