import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adamo.corpus import Corpus, SamplePair, corpus_stats, load_corpus, save_corpus, split_view
from adamo.errors import ConfigError, DomainError, ParseError, ValidationError
from adamo.tokenizer import tokenize


def test_load_assigns_ids_in_file_order(write_jsonl):
    path = write_jsonl([{"code": "x = 1", "summary": "set x"}, {"code": "y = 2", "summary": "set y", "lang": "py"}])
    corpus = load_corpus(path, "train")
    assert len(corpus) == 2
    assert [p.id for p in corpus] == [0, 1]
    assert corpus[1] == SamplePair("y = 2", "set y", 1)


def test_missing_summary_names_line(write_jsonl):
    path = write_jsonl([{"code": "a", "summary": "b"}, {"code": "c"}])
    with pytest.raises(ParseError, match=":2:.*summary"):
        load_corpus(path)


def test_malformed_json_names_line(write_jsonl):
    path = write_jsonl([{"code": "a", "summary": "b"}, "{not json"])
    with pytest.raises(ParseError, match=":2:"):
        load_corpus(path)


def test_blank_field_names_id(write_jsonl):
    path = write_jsonl([{"code": "a", "summary": "b"}, {"code": "   ", "summary": "b"}])
    with pytest.raises(ValidationError, match="pair 1"):
        load_corpus(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_corpus("/nonexistent/corpus.jsonl")


def test_save_load_round_trip(tmp_path, tiny_corpus):
    path = tmp_path / "c.jsonl"
    save_corpus(tiny_corpus, path)
    again = load_corpus(path)
    assert again.pairs == tiny_corpus.pairs


def test_split_sizes_largest_absorbs_remainder():
    corpus = Corpus.from_pairs([(f"c{i}", f"s{i}") for i in range(10)])
    train, valid, test = split_view(corpus, (0.8, 0.1, 0.1), seed=7)
    assert (len(train), len(valid), len(test)) == (8, 1, 1)
    odd = Corpus.from_pairs([(f"c{i}", f"s{i}") for i in range(11)])
    assert tuple(len(c) for c in split_view(odd, (0.5, 0.25, 0.25), seed=0)) == (7, 2, 2)


def test_split_identity_case(tiny_corpus):
    train, valid, test = split_view(tiny_corpus, (1, 0, 0), seed=3)
    assert sorted(p.id for p in train) == [0, 1, 2]
    assert len(valid) == len(test) == 0


def test_split_deterministic(tiny_corpus):
    assert split_view(tiny_corpus, (0.4, 0.3, 0.3), 5) == split_view(tiny_corpus, (0.4, 0.3, 0.3), 5)


@pytest.mark.parametrize("fractions", [(0.5, 0.5, 0.5), (1.2, -0.1, -0.1), (0.5, 0.5)])
def test_split_rejects_bad_fractions(tiny_corpus, fractions):
    with pytest.raises(ConfigError):
        split_view(tiny_corpus, fractions)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(0, 40), cut=st.lists(st.integers(0, 10), min_size=3, max_size=3), seed=st.integers(0, 99))
def test_split_is_partition(n, cut, seed):
    if sum(cut) == 0:
        cut = [1, 0, 0]
    fractions = [c / sum(cut) for c in cut]
    corpus = Corpus.from_pairs([(f"c{i}", f"s{i}") for i in range(n)])
    parts = split_view(corpus, fractions, seed)
    ids = [p.id for part in parts for p in part]
    assert sorted(ids) == list(range(n))


def test_stats_overlap_cases():
    assert corpus_stats(Corpus.from_pairs([("a b", "a")]), tokenize).vocab_overlap_ratio == 1.0
    assert corpus_stats(Corpus.from_pairs([("a b", "c")]), tokenize).vocab_overlap_ratio == 0.0


def test_stats_empty_corpus():
    with pytest.raises(DomainError):
        corpus_stats(Corpus([], "train"), tokenize)


def test_stats_overlap_matches_recount():
    rng = np.random.default_rng(0)
    alphabet = [f"w{i}" for i in range(15)]
    pairs = [(" ".join(rng.choice(alphabet, rng.integers(1, 12))), " ".join(rng.choice(alphabet, rng.integers(1, 8))))
             for _ in range(100)]
    report = corpus_stats(Corpus.from_pairs(pairs), str.split)
    # independent recount: membership test against the raw code word list
    ratios = []
    for code, summary in pairs:
        words = summary.split()
        ratios.append(sum(w in code.split() for w in words) / len(words))
    assert report.vocab_overlap_ratio == pytest.approx(sum(ratios) / len(ratios), abs=1e-12)
    assert report.pair_count == 100


def test_stats_round_trip_deterministic(tmp_path, tiny_corpus):
    path = tmp_path / "c.jsonl"
    save_corpus(tiny_corpus, path)
    a = corpus_stats(load_corpus(path), tokenize)
    b = corpus_stats(load_corpus(path), tokenize)
    assert a == b
    assert json.loads(json.dumps(a.to_dict())) == a.to_dict()
    assert "pairs" in a.format()
