import json

import numpy as np
import pytest

from adamo.corpus import Corpus
from adamo.tokenizer import build_vocab
from adamo.toydata import load_toy


@pytest.fixture
def write_jsonl(tmp_path):
    def write(records, name="corpus.jsonl"):
        path = tmp_path / name
        with path.open("w", encoding="utf-8") as fh:
            for r in records:
                fh.write((r if isinstance(r, str) else json.dumps(r)) + "\n")
        return path
    return write


@pytest.fixture(scope="session")
def toy_corpora():
    return {name: load_toy(name) for name in ("general", "domain", "task_train", "task_valid", "task_test")}


@pytest.fixture(scope="session")
def toy_vocabs(toy_corpora):
    pool = [toy_corpora[n] for n in ("general", "domain", "task_train")]
    return build_vocab(pool, "encoder", min_freq=1), build_vocab(pool, "decoder", min_freq=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_corpus():
    return Corpus.from_pairs([
        ("def add(a, b): return a + b", "add two numbers"),
        ("def sub(a, b): return a - b", "subtract b from a"),
        ("def mul(a, b): return a * b", "multiply two numbers"),
    ])
