import pytest
from hypothesis import given
from hypothesis import strategies as st

from adamo.corpus import Corpus
from adamo.errors import DomainError, FormatError
from adamo.tokenizer import (
    BOS, EOS, PAD, RESERVED, UNK, TokenSeq, Vocab, build_vocab, decode, encode, normalize, tokenize,
)


def vocab_of(*summaries, **kw):
    corpus = Corpus.from_pairs([("x", s) for s in summaries])
    return build_vocab(corpus, "decoder", **kw)


def test_tokenize_splits_identifiers():
    assert tokenize("getUserName(user_id)") == ["get", "user", "name", "(", "user", "id", ")"]
    assert tokenize("HTTPServer.start()") == ["http", "server", ".", "start", "(", ")"]


def test_frequency_order():
    v = vocab_of("a a b", max_size=10, min_freq=1)
    assert v.tokens == list(RESERVED) + ["a", "b"]


def test_min_freq_threshold():
    assert "b" not in vocab_of("a a b", max_size=10, min_freq=2)


def test_lexicographic_tie_break():
    v = vocab_of("b a b a", max_size=10, min_freq=1)
    assert v.tokens[7:] == ["a", "b"]


def test_max_size_truncates():
    v = vocab_of("a a a b b c", max_size=9, min_freq=1)
    assert v.tokens[7:] == ["a", "b"]


@pytest.mark.parametrize("kw", [{"max_size": 7}, {"min_freq": 0}])
def test_build_vocab_rejects_bad_limits(kw):
    with pytest.raises(DomainError):
        vocab_of("a", **kw)


def test_build_vocab_empty_corpus():
    with pytest.raises(DomainError):
        build_vocab(Corpus([], "train"), "decoder")


def test_encode_decode():
    v = vocab_of("add two", min_freq=1)
    seq = encode(v, "Add Two", add_bos_eos=True)
    assert seq.ids == [BOS, v.id("add"), v.id("two"), EOS]
    assert decode(v, seq) == "add two"
    assert encode(v, "zebra", add_bos_eos=False).ids == [UNK]
    assert encode(v, "", add_bos_eos=True).ids == [BOS, EOS]
    assert decode(v, TokenSeq([PAD, PAD], v)) == ""


def test_decode_halts_at_eos():
    v = vocab_of("add two", min_freq=1)
    assert decode(v, [BOS, v.id("add"), EOS, v.id("two")]) == "add"


def test_decode_rejects_bad_id():
    v = vocab_of("add", min_freq=1)
    with pytest.raises(DomainError):
        decode(v, [v.size])
    with pytest.raises(DomainError):
        TokenSeq([v.size], v)


def test_reserved_ids_stable_across_corpora():
    a = vocab_of("one two", min_freq=1)
    b = vocab_of("three", min_freq=1)
    assert a.tokens[:7] == b.tokens[:7] == list(RESERVED)


def test_vocab_file_round_trip(tmp_path):
    v = vocab_of("alpha beta beta", min_freq=1)
    v.save(tmp_path / "v.txt")
    lines = (tmp_path / "v.txt").read_text().splitlines()
    assert lines[:7] == list(RESERVED)
    assert Vocab.load(tmp_path / "v.txt", "decoder") == v


def test_vocab_file_without_reserved_block(tmp_path):
    (tmp_path / "v.txt").write_text("a\nb\n")
    with pytest.raises(FormatError):
        Vocab.load(tmp_path / "v.txt", "decoder")


@given(st.text(alphabet=st.characters(codec="ascii"), max_size=60))
def test_normalization_idempotent(text):
    norm = normalize(text)
    assert tokenize(norm) == norm.split()


@given(st.lists(st.sampled_from(["get", "user", "(", ")", "name", "x", "2", "."]), max_size=20))
def test_round_trip_in_vocab(words):
    v = vocab_of("get user ( ) name x 2 .", min_freq=1)
    text = " ".join(words)
    assert decode(v, encode(v, text)) == text
