import json
import subprocess
import sys

import pytest

from adamo.cli import RunConfig, _load_model, main, parse_config, run_command
from adamo.errors import ConfigError

TINY = ["d_model=16", "n_heads=2", "n_enc_layers=1", "n_dec_layers=1", "ffn_mult=2", "max_len=64",
        "batch_size=4", "max_out=6", "beam=2"]


def write_ini(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return path


def test_sigma_from_file_reaches_refiner(tmp_path, capsys):
    ini = write_ini(tmp_path, "[common]\nsigma = 0.3\nd_model = 16\nn_heads = 2\nn_enc_layers = 1\n"
                              "n_dec_layers = 1\nffn_mult = 2\nmax_len = 64\npretrain_corpus = toy:general\n"
                              "task_corpus = toy:task_train\nvocab_min_freq = 1\n[pretrain]\nsteps = 2\n")
    out = tmp_path / "run"
    assert main(["build-vocab", "--config", str(ini), "--out", str(out)]) == 0
    assert main(["pretrain", "--config", str(ini), "--out", str(out)]) == 0
    settings = parse_config(ini, section="finetune")
    assert settings.sigma == 0.3
    assert _load_model(out, settings, None).refiner.sigma == 0.3


def test_override_precedence(tmp_path):
    ini = write_ini(tmp_path, "[common]\nsteps = 50\n[cp]\nsteps = 70\n")
    assert parse_config(ini, section="finetune").steps == 50
    assert parse_config(ini, section="cp").steps == 70
    assert parse_config(ini, ["steps=10"], section="cp").steps == 10


def test_bundled_default_sigma():
    assert parse_config(None, section="finetune").sigma == 0.3


@pytest.mark.parametrize("override,match", [
    ("adaptive=XX", "adaptive"),
    ("steps=ten", "int"),
    ("colour=red", "valid keys: adaptive"),
    ("steps", "key=value"),
])
def test_bad_overrides(override, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(None, [override])


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write_ini(tmp_path, "[train]\nsteps = 3\n"))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    out = tmp_path_factory.mktemp("ws")
    base = ["--out", str(out)] + TINY
    assert main(["build-vocab"] + base) == 0
    assert main(["pretrain"] + base + ["steps=3"]) == 0
    return out, base


def test_if_label(workspace, capsys):
    out, base = workspace
    assert main(["if", "--adaptive", "DA", "--task", "CE", "--save", str(out / "if.ckpt")] + base + ["steps=2"]) == 0
    reports = sorted((out / "reports").glob("*-if.json"))
    assert json.loads(reports[-1].read_text())["label"] == "AdaMo-IF[DA]CE"
    assert "AdaMo-IF[DA]CE" in capsys.readouterr().out


def test_finetune_then_evaluate(workspace):
    out, base = workspace
    assert main(["finetune"] + base + ["steps=2", "sigma=0"]) == 0
    assert main(["evaluate"] + base + ["test_corpus=toy:task_valid"]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    for key in ("c_bleu", "s_bleu", "meteor", "rouge_l"):
        assert 0.0 <= metrics[key] <= 1.0
    assert metrics["label"] == "AdaMo-basic"
    assert len((out / "decoded.txt").read_text().splitlines()) == 32
    manifest = json.loads((out / "manifest.json").read_text())
    assert [e["command"] for e in manifest][-2:] == ["finetune", "evaluate"]


def test_summarize(workspace, tmp_path):
    out, base = workspace
    src = tmp_path / "in.txt"
    src.write_text("def get_user(self, index):\\n    return self.user_table.get(index)\n\nx = 3\n")
    dest = tmp_path / "summaries.txt"
    assert main(["summarize", "--input", str(src), "--output", str(dest)] + base) == 0
    lines = dest.read_text().split("\n")[:-1]
    assert len(lines) == 3 and lines[1] == ""


def test_scoring_mode(tmp_path):
    c, r = tmp_path / "c.txt", tmp_path / "r.txt"
    c.write_text("add two numbers and return the sum\nsort the items by key\n")
    r.write_text("add two numbers and return the sum\nsort the items by key\n")
    out = tmp_path / "score"
    assert main(["evaluate", "--candidates", str(c), "--references", str(r), "--out", str(out)]) == 0
    assert json.loads((out / "metrics.json").read_text())["percent"]["C-BLEU"] == "100.00%"


def test_stats(tmp_path, capsys):
    assert main(["stats", "--corpus", "toy:task_test", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "stats.json").read_text())["pair_count"] == 64


def test_missing_vocab_diagnostic(tmp_path, capsys):
    assert main(["pretrain", "--out", str(tmp_path / "empty")]) == 2
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and "build-vocab" in err


def test_corrupt_checkpoint_diagnostic(workspace, tmp_path, capsys):
    out, base = workspace
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + b"\x00" * 20)
    assert main(["finetune", "--init", str(bad)] + base + ["steps=1"]) == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1
    assert "adamo.checkpoint: FormatError" in err and "ADMO" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "adamo", "stats", "--corpus", "toy:domain", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "512" in proc.stdout


def test_run_command_unknown(tmp_path, capsys):
    assert run_command(RunConfig("train", None, [], tmp_path)) == 2
    assert "unknown command" in capsys.readouterr().err
