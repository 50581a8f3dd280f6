"""Deterministic synthetic corpora for desk-scale experiments.

Three families, all in the corpus interchange format:

* ``task``: Python-style helper functions with terse comments (the target task).
* ``domain``: Java-style methods over the same concepts (a related domain).
* ``general``: generic code paired with unrelated prose, standing in for the
  broad data foundation models are pretrained on.

``write_toy_fixture`` regenerates the bundled files under ``adamo/data/toy``.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from adamo.corpus import Corpus, load_corpus, save_corpus

VERBS = ["get", "set", "add", "remove", "find", "count", "sort", "load", "save", "update",
         "check", "parse", "build", "reset", "merge", "filter"]
OBJECTS = ["user", "item", "order", "file", "config", "name", "price", "score", "node", "token",
           "record", "path", "message", "value", "key", "account"]
ARGS = ["index", "text", "size", "limit", "owner", "source"]
ADJECTIVES = ["valid", "empty", "active", "ready", "locked", "visible"]

PROSE_NOUNS = ["river", "mountain", "forest", "bird", "cloud", "village", "garden", "ocean", "meadow",
               "lantern", "harbor", "valley", "candle", "orchard", "island", "willow"]
PROSE_ADJ = ["quiet", "golden", "ancient", "gentle", "misty", "bright", "silver", "distant", "calm", "wild"]
PROSE_VERBS = ["drifts", "glows", "sleeps", "rises", "wanders", "shines", "echoes", "rests", "sings", "fades"]
PROSE_PREP = ["beyond", "beneath", "across", "near", "toward", "above"]


def _task_pair(rng):
    verb, obj, arg = rng.choice(VERBS), rng.choice(OBJECTS), rng.choice(ARGS)
    kind = int(rng.integers(4))
    if kind == 0:
        code = f"def {verb}_{obj}(self, {arg}):\n    return self.{obj}_table.{verb}({arg})"
        summary = f"{verb} the {obj} for the given {arg}"
    elif kind == 1:
        code = (f"def {verb}_all_{obj}s(items):\n    result = []\n    for entry in items:\n"
                f"        result.append({verb}_{obj}(entry))\n    return result")
        summary = f"{verb} every {obj} in the list"
    elif kind == 2:
        adj = rng.choice(ADJECTIVES)
        code = f"def is_{obj}_{adj}(self):\n    return self.{obj} is not None and self.{obj}.{adj}"
        summary = f"check whether the {obj} is {adj}"
    else:
        code = (f"def {verb}_{obj}_by_{arg}(store, {arg}):\n    if {arg} is None:\n"
                f"        raise ValueError('missing {arg}')\n    return store.{verb}({arg})")
        summary = f"{verb} a {obj} by {arg} or raise an error"
    return code, summary


def _domain_pair(rng):
    verb, obj, arg = rng.choice(VERBS), rng.choice(OBJECTS), rng.choice(ARGS)
    cap = obj.capitalize()
    kind = int(rng.integers(3))
    if kind == 0:
        code = (f"public {cap} {verb}{cap}(String {arg}) {{\n"
                f"    return this.{obj}Repository.{verb}({arg});\n}}")
        summary = f"{verb} the {obj} using the given {arg}"
    elif kind == 1:
        code = (f"public List<{cap}> {verb}{cap}s(List<{cap}> items) {{\n"
                f"    return items.stream().map(this::{verb}).collect(Collectors.toList());\n}}")
        summary = f"{verb} all {obj}s in the list"
    else:
        code = f"public boolean has{cap}() {{\n    return this.{obj} != null;\n}}"
        summary = f"check whether a {obj} is present"
    return code, summary


def _general_pair(rng):
    a, b = rng.choice(["x", "y", "n", "total", "acc", "tmp"], size=2, replace=False)
    k = int(rng.integers(2, 9))
    kind = int(rng.integers(3))
    if kind == 0:
        code = f"{a} = {k}\nwhile {a} > 0:\n    {b} = {b} + {a}\n    {a} = {a} - 1"
    elif kind == 1:
        code = f"for {a} in range({k}):\n    print({a} * {b})"
    else:
        code = f"{a} = [{b} * {k} for {b} in data if {b} % 2 == 0]"
    words = [rng.choice(PROSE_ADJ), rng.choice(PROSE_NOUNS), rng.choice(PROSE_VERBS),
             rng.choice(PROSE_PREP), rng.choice(PROSE_ADJ), rng.choice(PROSE_NOUNS)]
    return code, " ".join(words)


_FAMILIES = {"task": _task_pair, "domain": _domain_pair, "general": _general_pair}


def generate(family: str, n: int, seed: int = 0, exclude=()) -> list[tuple[str, str]]:
    """``n`` distinct pairs of one family; pairs in ``exclude`` are never produced."""
    make = _FAMILIES[family]
    rng = np.random.default_rng(seed)
    seen = set(exclude)
    out = []
    while len(out) < n:
        pair = make(rng)
        if pair not in seen:
            seen.add(pair)
            out.append(pair)
    return out


SIZES = {"task_train": 256, "task_valid": 32, "task_test": 64, "domain": 512, "general": 512}


def toy_pairs() -> dict[str, list[tuple[str, str]]]:
    task = generate("task", SIZES["task_train"] + SIZES["task_valid"] + SIZES["task_test"], seed=11)
    a, b = SIZES["task_train"], SIZES["task_train"] + SIZES["task_valid"]
    return {
        "task_train": task[:a],
        "task_valid": task[a:b],
        "task_test": task[b:],
        "domain": generate("domain", SIZES["domain"], seed=23),
        "general": generate("general", SIZES["general"], seed=37),
    }


def write_toy_fixture(directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, pairs in toy_pairs().items():
        save_corpus(pairs, directory / f"{name}.jsonl")


def toy_path(name: str) -> Path:
    return Path(str(resources.files("adamo") / "data" / "toy" / f"{name}.jsonl"))


def load_toy(name: str) -> Corpus:
    split = {"task_valid": "valid", "task_test": "test"}.get(name, "train")
    return load_corpus(toy_path(name), split=split, origin=name)


if __name__ == "__main__":
    write_toy_fixture(Path(__file__).parent / "data" / "toy")
