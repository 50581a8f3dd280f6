"""C-BLEU, S-BLEU, METEOR and ROUGE-L for single-reference corpora.

All scorers take either token lists or strings; strings go through the same
normalizing tokenizer used for training, so a decoded candidate identical to
its normalized reference scores as a perfect match.
"""
from __future__ import annotations

import math
import sys
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from adamo.errors import ConfigError, DomainError
from adamo.tokenizer import tokenize

Tokens = Sequence[str]


def _tokens(x) -> list[str]:
    return tokenize(x) if isinstance(x, str) else list(x)


@dataclass
class NGramProfile:
    order: int
    counts: Counter

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def ngram_profile(tokens, n: int) -> NGramProfile:
    if n < 1:
        raise DomainError(f"n-gram order must be >= 1, got {n}")
    toks = _tokens(tokens)
    return NGramProfile(n, Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1)))


def modified_precision(candidate, reference, n: int) -> tuple[int, int]:
    """Clipped n-gram matches and the candidate's n-gram total."""
    cand = ngram_profile(candidate, n)
    ref = ngram_profile(reference, n).counts
    clipped = sum(min(c, ref[g]) for g, c in cand.counts.items())
    return clipped, cand.total


@dataclass(frozen=True)
class BleuConfig:
    max_order: int = 4
    smoothing: str = "none"
    k: float = 1.0

    def __post_init__(self):
        if self.max_order < 1:
            raise ConfigError("BLEU max_order must be >= 1")
        if self.smoothing not in ("none", "add_k"):
            raise ConfigError(f"unknown BLEU smoothing {self.smoothing!r}")
        if self.smoothing == "add_k" and self.k <= 0:
            raise ConfigError("add_k smoothing needs k > 0")


SENTENCE_BLEU = BleuConfig(smoothing="add_k", k=1.0)


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    return 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)


def _bleu(matches, totals, cand_len, ref_len, config: BleuConfig) -> float:
    log_sum = 0.0
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        if config.smoothing == "add_k" and n >= 2:
            m, t = m + config.k, t + config.k
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    return brevity_penalty(cand_len, ref_len) * math.exp(log_sum / config.max_order)


def _counts(cand, ref, max_order):
    stats = [modified_precision(cand, ref, n) for n in range(1, max_order + 1)]
    return [m for m, _ in stats], [t for _, t in stats]


def corpus_bleu(pairs, config: BleuConfig = BleuConfig()) -> float:
    """Corpus-level BLEU: n-gram counts and lengths are summed before combining."""
    pairs = list(pairs)
    if not pairs:
        raise DomainError("corpus_bleu needs at least one pair")
    N = config.max_order
    matches, totals = [0] * N, [0] * N
    c = r = 0
    for cand, ref in pairs:
        cand, ref = _tokens(cand), _tokens(ref)
        m, t = _counts(cand, ref, N)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        c += len(cand)
        r += len(ref)
    return _bleu(matches, totals, c, r, config)


def sentence_bleu(candidate, reference, config: BleuConfig = SENTENCE_BLEU) -> float:
    cand, ref = _tokens(candidate), _tokens(reference)
    if not cand:
        return 0.0
    m, t = _counts(cand, ref, config.max_order)
    return _bleu(m, t, len(cand), len(ref), config)


@dataclass
class MeteorAlignment:
    matches: int
    chunks: int
    precision: float
    recall: float
    fmean: float
    penalty: float
    score: float


def min_chunk_alignment(cand: list[str], ref: list[str]) -> tuple[int, int]:
    """Exact-match alignment with the most matches and, among those, the fewest chunks.

    Returns ``(matches, chunks)``. A chunk is a run of matches contiguous and
    in order on both sides. Maximum matches are forced per token type
    (``min`` of the two counts); the chunk minimum is found by a memoized
    search over candidate positions.
    """
    cc, rc = Counter(cand), Counter(ref)
    need = {t: min(cc[t], rc[t]) for t in cc}
    m = sum(need.values())
    if m == 0:
        return 0, 0
    ref_pos: dict[str, list[int]] = {}
    for j, t in enumerate(ref):
        ref_pos.setdefault(t, []).append(j)
    # candidate occurrences of each type still ahead of position i (inclusive)
    ahead = [0] * len(cand)
    seen = Counter()
    for i in range(len(cand) - 1, -1, -1):
        seen[cand[i]] += 1
        ahead[i] = seen[cand[i]]
    type_bits = {t: sum(1 << j for j in ref_pos.get(t, ())) for t in cc}

    limit = sys.getrecursionlimit()
    if len(cand) + 50 > limit:
        sys.setrecursionlimit(len(cand) + 100)

    @lru_cache(maxsize=None)
    def best(i: int, used: int, prev: int) -> int:
        if i == len(cand):
            return 0
        t = cand[i]
        still = need[t] - (used & type_bits[t]).bit_count()
        out = math.inf
        if ahead[i] > still:  # enough later occurrences remain to skip this one
            out = best(i + 1, used, -1)
        if still > 0:
            for j in ref_pos[t]:
                bit = 1 << j
                if used & bit:
                    continue
                cost = 0 if prev >= 0 and j == prev + 1 else 1
                out = min(out, cost + best(i + 1, used | bit, j))
        return out

    chunks = best(0, 0, -1)
    best.cache_clear()
    return m, int(chunks)


def meteor_alignment(candidate, reference, gamma: float = 0.5, beta: float = 3.0) -> MeteorAlignment:
    cand, ref = _tokens(candidate), _tokens(reference)
    m, chunks = min_chunk_alignment(cand, ref)
    if m == 0:
        return MeteorAlignment(0, 0, 0.0, 0.0, 0.0, 0.0, 0.0)
    p, r = m / len(cand), m / len(ref)
    fmean = 10 * p * r / (r + 9 * p)
    penalty = gamma * (chunks / m) ** beta
    return MeteorAlignment(m, chunks, p, r, fmean, penalty, fmean * (1 - penalty))


def meteor(candidate, reference) -> float:
    """Exact-match METEOR: ``Fmean * (1 - 0.5 * (chunks / m) ** 3)``."""
    return meteor_alignment(candidate, reference).score


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> float:
    cand, ref = _tokens(candidate), _tokens(reference)
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return 2 * p * r / (p + r)


@dataclass
class MetricReport:
    c_bleu: float
    s_bleu: float
    meteor: float
    rouge_l: float
    candidate_count: int
    per_sentence: list[dict] | None = field(default=None, repr=False)

    def scores(self) -> dict[str, float]:
        return {"C-BLEU": self.c_bleu, "S-BLEU": self.s_bleu, "METEOR": self.meteor, "ROUGE-L": self.rouge_l}

    def to_dict(self, per_sentence: bool = False) -> dict:
        d = asdict(self)
        if not per_sentence:
            d.pop("per_sentence")
        return d

    def format(self) -> str:
        names = list(self.scores())
        cells = [f"{100 * v:.2f}%" for v in self.scores().values()]
        widths = [max(len(a), len(b)) for a, b in zip(names, cells)]
        head = "  ".join(n.rjust(w) for n, w in zip(names, widths))
        row = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return f"{head}\n{row}"


def score_corpus(candidates, references, keep_per_sentence: bool = True) -> MetricReport:
    """All four metrics against single references; sentence scores are averaged."""
    cands = [_tokens(c) for c in candidates]
    refs = [_tokens(r) for r in references]
    if len(cands) != len(refs):
        raise DomainError(f"{len(cands)} candidates but {len(refs)} references")
    if not cands:
        raise DomainError("cannot score an empty corpus")
    rows = []
    for c, r in zip(cands, refs):
        rows.append({"s_bleu": sentence_bleu(c, r), "meteor": meteor(c, r), "rouge_l": rouge_l(c, r)})
    n = len(rows)
    return MetricReport(
        c_bleu=corpus_bleu(zip(cands, refs)),
        s_bleu=sum(x["s_bleu"] for x in rows) / n,
        meteor=sum(x["meteor"] for x in rows) / n,
        rouge_l=sum(x["rouge_l"] for x in rows) / n,
        candidate_count=n,
        per_sentence=rows if keep_per_sentence else None,
    )


def score_files(candidates_path, references_path) -> MetricReport:
    """Score two parallel plain-text files, one sentence per line."""
    cands = Path(candidates_path).read_text(encoding="utf-8").splitlines()
    refs = Path(references_path).read_text(encoding="utf-8").splitlines()
    return score_corpus(cands, refs)
