"""Word-level tokenization and per-side vocabularies.

Text is split on whitespace and punctuation, identifiers are broken at
camelCase and snake_case boundaries, and everything is lowercased. The
encoder (code) and decoder (summary) sides get independent vocabularies.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from adamo.corpus import Corpus
from adamo.errors import DomainError, FormatError

PAD, BOS, EOS, UNK, MASK, MARK_SEEN, MARK_UNSEEN = range(7)
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>", "<mask>", "<seen>", "<unseen>")
SPECIAL_IDS = frozenset(range(len(RESERVED)))
SIDES = ("encoder", "decoder")

# alphanumeric runs or single punctuation marks; "_" and whitespace only separate
_CHUNK = re.compile(r"[^\W_]+|[^\w\s]")
_SUBWORD = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+|[^\W\d_]+")


def tokenize(text: str) -> list[str]:
    out = []
    for chunk in _CHUNK.findall(text):
        if chunk[0].isalnum():
            out.extend(piece.lower() for piece in _SUBWORD.findall(chunk))
        else:
            out.append(chunk)
    return out


def normalize(text: str) -> str:
    return " ".join(tokenize(text))


@dataclass
class Vocab:
    side: str
    tokens: list[str]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.side not in SIDES:
            raise DomainError(f"unknown vocab side {self.side!r}")
        if tuple(self.tokens[: len(RESERVED)]) != RESERVED:
            raise FormatError("vocab must start with the reserved block " + " ".join(RESERVED))
        self._index = {t: i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise FormatError("vocab tokens are not unique")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._index.get(token, UNK)

    def token(self, i: int) -> str:
        return self.tokens[i]

    def __contains__(self, token):
        return token in self._index

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path, side: str) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(side, lines)


@dataclass
class TokenSeq:
    ids: list[int]
    vocab: Vocab

    def __post_init__(self):
        self.ids = [int(i) for i in self.ids]
        for i in self.ids:
            if not 0 <= i < self.vocab.size:
                raise DomainError(f"token id {i} outside {self.vocab.side} vocab of size {self.vocab.size}")

    @property
    def side(self) -> str:
        return self.vocab.side

    def __len__(self):
        return len(self.ids)

    def surface(self) -> list[str]:
        return [self.vocab.tokens[i] for i in self.ids]


def _side_texts(corpus: Corpus | Iterable[Corpus], side: str) -> list[str]:
    corpora = [corpus] if isinstance(corpus, Corpus) else list(corpus)
    attr = "code" if side == "encoder" else "summary"
    return [getattr(p, attr) for c in corpora for p in c]


def build_vocab(corpus, side: str, max_size: int = 8000, min_freq: int = 2) -> Vocab:
    """Reserved block followed by the most frequent tokens of one side.

    ``corpus`` may be a single Corpus or several, whose counts are pooled.
    Ties in frequency are broken lexicographically.
    """
    if side not in SIDES:
        raise DomainError(f"unknown vocab side {side!r}")
    if max_size <= len(RESERVED) or min_freq < 1:
        raise DomainError(f"need max_size > {len(RESERVED)} and min_freq >= 1")
    texts = _side_texts(corpus, side)
    if not texts:
        raise DomainError("cannot build a vocabulary from an empty corpus")
    counts = Counter(t for text in texts for t in tokenize(text))
    ranked = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocab(side, list(RESERVED) + ranked[: max_size - len(RESERVED)])


def encode(vocab: Vocab, text: str, add_bos_eos: bool = True) -> TokenSeq:
    ids = [vocab.id(t) for t in tokenize(text)]
    if add_bos_eos:
        ids = [BOS] + ids + [EOS]
    return TokenSeq(ids, vocab)


def decode(vocab: Vocab, seq: TokenSeq | Sequence[int]) -> str:
    ids = seq.ids if isinstance(seq, TokenSeq) else seq
    words = []
    for i in ids:
        i = int(i)
        if not 0 <= i < vocab.size:
            raise DomainError(f"token id {i} outside {vocab.side} vocab of size {vocab.size}")
        if i == EOS:
            break
        if i in (PAD, BOS):
            continue
        words.append(vocab.tokens[i])
    return " ".join(words)
