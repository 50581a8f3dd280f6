"""``adamo`` command line: vocabularies, training phases, evaluation and inference.

Every command works inside one output directory::

    vocab.enc.txt  vocab.dec.txt     build-vocab
    encoder.ckpt   decoder.ckpt      pretrain
    model.ckpt                       cp / if / finetune (read, then overwritten)
    reports/NN-<command>.{json,txt}  one RunReport per training command
    decoded.txt  decoded.jsonl       evaluate
    metrics.json metrics.txt         evaluate
    manifest.json                    every command appends an entry

Settings come from an INI file: ``[common]`` first, then the section named
after the command, then ``key=value`` overrides from the command line.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
import traceback
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from adamo.checkpoint import load_checkpoint, model_from_checkpoint, save_checkpoint
from adamo.corpus import Corpus, corpus_stats, load_corpus
from adamo.errors import AdamoError, ConfigError
from adamo.metrics import score_files
from adamo.model import ModelConfig, RefinerConfig, assemble
from adamo.pipeline import (
    ADAPTIVE, OBJECTIVES, SchemeConfig, decode_corpus, evaluate_model, run_continuous_pretrain, run_finetune,
    run_intermediate_finetune, run_pretrain_decoder, run_pretrain_encoder, scheme_label,
)
from adamo.stagetasks import STAGE_TASKS
from adamo.tokenizer import Vocab, build_vocab, tokenize
from adamo.toydata import toy_path

COMMANDS = ("build-vocab", "pretrain", "cp", "if", "finetune", "evaluate", "summarize", "stats")

# key -> (type, default); None defaults mean "unset"
KEYS: dict[str, tuple[type, object]] = {
    "seed": (int, 0),
    "sigma": (float, 0.3),
    "steps": (int, 100),
    "batch_size": (int, 16),
    "lr": (float, 1e-3),
    "mask_rate": (float, 0.15),
    "d_model": (int, 128),
    "n_heads": (int, 4),
    "n_enc_layers": (int, 2),
    "n_dec_layers": (int, 2),
    "ffn_mult": (int, 4),
    "max_len": (int, 256),
    "dropout": (float, 0.1),
    "adaptive": (str, None),
    "objective": (str, None),
    "stage_task": (str, None),
    "pretrain_corpus": (str, None),
    "domain_corpus": (str, None),
    "task_corpus": (str, None),
    "test_corpus": (str, None),
    "vocab_min_freq": (int, 2),
    "vocab_max_size": (int, 8000),
    "decode": (str, "beam"),
    "beam": (int, 4),
    "max_out": (int, 32),
    "length_penalty": (float, 1.0),
}
_CHOICES = {"adaptive": ADAPTIVE, "objective": OBJECTIVES, "stage_task": STAGE_TASKS, "decode": ("beam", "greedy")}


def default_config_path() -> Path:
    return Path(str(resources.files("adamo") / "data" / "toy.ini"))


@dataclass
class Settings:
    values: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def model_config(self, enc_vocab: int = 1, dec_vocab: int = 1) -> ModelConfig:
        v = self.values
        return ModelConfig(enc_vocab, dec_vocab, v["d_model"], v["n_heads"], v["n_enc_layers"], v["n_dec_layers"],
                           v["ffn_mult"], v["max_len"], v["dropout"])

    def corpus(self, key: str, split: str = "train") -> Corpus | None:
        ref = self.values[key]
        return None if ref is None else resolve_corpus(ref, self.base_dir, split)


def resolve_corpus(ref: str, base_dir: Path, split: str = "train") -> Corpus:
    """``toy:<name>`` names a bundled fixture; anything else is a path relative to ``base_dir``."""
    if ref.startswith("toy:"):
        path = toy_path(ref[4:])
    else:
        path = Path(ref)
        if not path.is_absolute():
            path = base_dir / path
    return load_corpus(path, split=split, origin=ref)


def _coerce(key: str, raw: str):
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(sorted(KEYS))}")
    kind, _ = KEYS[key]
    raw = raw.strip()
    if kind is str:
        value = raw or None
    else:
        try:
            value = kind(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects {kind.__name__}, got {raw!r}") from None
    if key in _CHOICES and value is not None and value not in _CHOICES[key]:
        raise ConfigError(f"config key {key!r} must be one of {_CHOICES[key]}, got {value!r}")
    return value


def parse_config(path=None, overrides=(), section: str | None = None) -> Settings:
    """Typed settings from ``[common]``, then ``[section]``, then ``key=value`` overrides."""
    path = Path(path) if path is not None else default_config_path()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: malformed config: {exc}".replace("\n", " ")) from None
    values = {k: d for k, (_, d) in KEYS.items()}
    unknown_sections = set(parser.sections()) - {"common", *COMMANDS}
    if unknown_sections:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown_sections)}")
    for name in ("common", section):
        if name and parser.has_section(name):
            for key, raw in parser.items(name):
                values[key] = _coerce(key, raw)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        values[key.strip()] = _coerce(key.strip(), raw)
    return Settings(values, path.parent)


# ------------------------------------------------------------ output directory

def _vocabs(out: Path) -> tuple[Vocab, Vocab]:
    enc, dec = out / "vocab.enc.txt", out / "vocab.dec.txt"
    if not enc.exists() or not dec.exists():
        raise ConfigError(f"no vocabularies in {out}; run 'adamo build-vocab --out {out}' first")
    return Vocab.load(enc, "encoder"), Vocab.load(dec, "decoder")


def _record(out: Path, command: str, settings: Settings, outputs: list[str], label: str | None = None) -> None:
    path = out / "manifest.json"
    entries = json.loads(path.read_text(encoding="utf-8")) if path.exists() else []
    entries.append({"command": command, "label": label, "settings": settings.values,
                    "outputs": outputs, "time": time.strftime("%Y-%m-%dT%H:%M:%S")})
    path.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")


def _write_report(out: Path, command: str, report) -> list[str]:
    reports = out / "reports"
    reports.mkdir(exist_ok=True)
    n = len(list(reports.glob("*.json")))
    stem = reports / f"{n:02d}-{command}"
    stem.with_suffix(".json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    stem.with_suffix(".txt").write_text(report.format() + "\n", encoding="utf-8")
    return [str(stem.with_suffix(".json")), str(stem.with_suffix(".txt"))]


def _scheme(settings: Settings, phase: str, vocabs, **extra) -> SchemeConfig:
    ev, dv = vocabs
    s = settings
    return SchemeConfig(
        phase=phase, adaptive=s.adaptive, objective=s.objective, stage_task=s.stage_task,
        pretrain_corpus=extra.get("pretrain_corpus"), domain_corpus=extra.get("domain_corpus"),
        task_corpus=extra.get("task_corpus"), steps=s.steps, batch_size=s.batch_size, lr=s.lr, seed=s.seed,
        sigma=s.sigma, mask_rate=s.mask_rate, model=s.model_config(ev.size, dv.size), enc_vocab=ev, dec_vocab=dv,
    )


def _load_model(out: Path, settings: Settings, init: str | None):
    """``--init`` if given, else the directory's model.ckpt, else a fresh assembly of the two halves."""
    path = Path(init) if init else out / "model.ckpt"
    if path.exists():
        return model_from_checkpoint(load_checkpoint(path))
    if init:
        raise ConfigError(f"checkpoint {path} does not exist")
    enc, dec = out / "encoder.ckpt", out / "decoder.ckpt"
    if not enc.exists() or not dec.exists():
        raise ConfigError(f"no model.ckpt and no encoder/decoder checkpoints in {out}; run 'adamo pretrain' first")
    return assemble(load_checkpoint(enc), load_checkpoint(dec), RefinerConfig(settings.sigma), seed=settings.seed,
                    dropout=settings.dropout)


# ------------------------------------------------------------ commands

def cmd_build_vocab(args, settings: Settings, out: Path) -> None:
    corpora = [c for c in (settings.corpus("pretrain_corpus"), settings.corpus("domain_corpus"),
                           settings.corpus("task_corpus")) if c is not None]
    if not corpora:
        raise ConfigError("build-vocab needs at least one of pretrain_corpus, domain_corpus, task_corpus")
    outputs = []
    for side, name in (("encoder", "vocab.enc.txt"), ("decoder", "vocab.dec.txt")):
        vocab = build_vocab(corpora, side, settings.vocab_max_size, settings.vocab_min_freq)
        vocab.save(out / name)
        outputs.append(str(out / name))
        print(f"{side} vocabulary: {vocab.size} tokens -> {out / name}")
    _record(out, "build-vocab", settings, outputs)


def cmd_pretrain(args, settings: Settings, out: Path) -> None:
    vocabs = _vocabs(out)
    corpus = settings.corpus("pretrain_corpus")
    sides = ("encoder", "decoder") if args.side == "both" else (args.side,)
    for side in sides:
        config = _scheme(settings, "pretrain", vocabs, pretrain_corpus=corpus)
        ckpt, report = (run_pretrain_encoder if side == "encoder" else run_pretrain_decoder)(config)
        path = out / f"{side}.ckpt"
        save_checkpoint(ckpt, path)
        outputs = [str(path)] + _write_report(out, f"pretrain-{side}", report)
        _record(out, "pretrain", settings, outputs, report.label)
        print(report.format())


def _train_command(phase: str, runner):
    def command(args, settings: Settings, out: Path) -> None:
        vocabs = _vocabs(out)
        model = _load_model(out, settings, args.init)
        config = _scheme(settings, phase, vocabs, domain_corpus=settings.corpus("domain_corpus"),
                         task_corpus=settings.corpus("task_corpus"))
        model, report = runner(model, config)
        path = Path(args.save) if args.save else out / "model.ckpt"
        save_checkpoint(model, path)
        outputs = [str(path)] + _write_report(out, phase, report)
        _record(out, phase, settings, outputs, report.label)
        print(report.format())
    return command


def cmd_evaluate(args, settings: Settings, out: Path) -> None:
    if args.candidates or args.references:
        if not (args.candidates and args.references):
            raise ConfigError("scoring mode needs both --candidates and --references")
        report = score_files(args.candidates, args.references)
    else:
        vocabs = _vocabs(out)
        model = _load_model(out, settings, args.checkpoint)
        corpus = settings.corpus("test_corpus", split="test")
        if corpus is None:
            raise ConfigError("evaluate needs test_corpus")
        report = evaluate_model(model, corpus, *vocabs, decode=settings.decode, beam=settings.beam,
                                max_out=settings.max_out, length_penalty=settings.length_penalty)
        with (out / "decoded.txt").open("w", encoding="utf-8") as fh:
            fh.writelines(row["candidate"] + "\n" for row in report.per_sentence)
        with (out / "decoded.jsonl").open("w", encoding="utf-8") as fh:
            fh.writelines(json.dumps(row) + "\n" for row in report.per_sentence)
        label = scheme_label(model.provenance)
    record = report.to_dict() | {"label": None if args.candidates else label,
                                 "percent": {k: f"{100 * v:.2f}%" for k, v in report.scores().items()}}
    (out / "metrics.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    (out / "metrics.txt").write_text(report.format() + "\n", encoding="utf-8")
    _record(out, "evaluate", settings, [str(out / "metrics.json")], record["label"])
    print(report.format())


def cmd_summarize(args, settings: Settings, out: Path) -> None:
    vocabs = _vocabs(out)
    model = _load_model(out, settings, args.checkpoint)
    lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    # one snippet per line; literal "\n" sequences stand for line breaks inside a snippet
    filled = [i for i, line in enumerate(lines) if line.strip()]
    summaries = [""] * len(lines)
    if filled:
        corpus = Corpus.from_pairs([(lines[i].replace("\\n", "\n"), "-") for i in filled])
        decoded = decode_corpus(model, corpus, *vocabs, decode=settings.decode, beam=settings.beam,
                                max_out=settings.max_out, length_penalty=settings.length_penalty)
        for i, toks in zip(filled, decoded):
            summaries[i] = " ".join(toks)
    text = "".join(s + "\n" for s in summaries)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_stats(args, settings: Settings, out: Path) -> None:
    key = args.corpus or "task_corpus"
    if key in KEYS:
        corpus = settings.corpus(key)
        if corpus is None:
            raise ConfigError(f"{key} is not set")
    else:
        corpus = resolve_corpus(key, Path.cwd())
    report = corpus_stats(corpus, tokenize)
    (out / "stats.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(report.format())


HANDLERS = {
    "build-vocab": cmd_build_vocab,
    "pretrain": cmd_pretrain,
    "cp": _train_command("cp", run_continuous_pretrain),
    "if": _train_command("if", run_intermediate_finetune),
    "finetune": _train_command("finetune", run_finetune),
    "evaluate": cmd_evaluate,
    "summarize": cmd_summarize,
    "stats": cmd_stats,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adamo", description="Assemble, adapt and evaluate code summarizers.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI settings file (default: bundled toy config)")
    common.add_argument("--out", default="adamo-run", help="output directory (default: %(default)s)")
    common.add_argument("overrides", nargs="*", metavar="key=value", help="settings applied after the file")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build-vocab", parents=[common], help="build encoder and decoder vocabularies")
    p = sub.add_parser("pretrain", parents=[common], help="pretrain encoder (MLM) and/or decoder (CLM)")
    p.add_argument("--side", choices=("encoder", "decoder", "both"), default="both")
    for name, helptext in (("cp", "continuous pretraining"), ("if", "intermediate finetuning"),
                           ("finetune", "final finetuning")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--init", help="start from this checkpoint instead of the output directory's model")
        p.add_argument("--save", help="write the trained model here instead of <out>/model.ckpt")
        if name in ("cp", "if"):
            p.add_argument("--adaptive", choices=ADAPTIVE)
        if name == "cp":
            p.add_argument("--objective", choices=OBJECTIVES)
        if name == "if":
            p.add_argument("--task", dest="stage_task", choices=STAGE_TASKS)
    p = sub.add_parser("evaluate", parents=[common], help="decode the test corpus and score it, or score files")
    p.add_argument("--checkpoint")
    p.add_argument("--candidates", help="plain-text candidates, one per line (scoring mode)")
    p.add_argument("--references", help="plain-text references, one per line (scoring mode)")
    p = sub.add_parser("summarize", parents=[common], help="summarize one code snippet per input line")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--checkpoint")
    p = sub.add_parser("stats", parents=[common], help="corpus statistics")
    p.add_argument("--corpus", help="a config key such as task_corpus, or a corpus path / toy: reference")
    return parser


def _origin(exc: BaseException) -> str:
    module = "adamo"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("adamo."):
            module = name
    return module


@dataclass
class RunConfig:
    """One parsed invocation: the command, where its settings come from and where results go."""
    command: str
    config_path: str | None
    overrides: list[str]
    output_dir: Path
    options: argparse.Namespace = field(default_factory=argparse.Namespace)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        overrides = list(args.overrides)
        for key in ("adaptive", "objective", "stage_task"):
            if getattr(args, key, None):
                overrides.append(f"{key}={getattr(args, key)}")
        return cls(args.command, args.config, overrides, Path(args.out), args)


def run_command(run: RunConfig) -> int:
    """Execute one command; returns the exit status and reports failures as one stderr line."""
    try:
        if run.command not in HANDLERS:
            raise ConfigError(f"unknown command {run.command!r}; expected one of {COMMANDS}")
        settings = parse_config(run.config_path, run.overrides, section=run.command)
        run.output_dir.mkdir(parents=True, exist_ok=True)
        HANDLERS[run.command](run.options, settings, run.output_dir)
    except (AdamoError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"adamo {run.command}: {_origin(exc)}: {type(exc).__name__}: {message}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


def main(argv=None) -> int:
    return run_command(RunConfig.from_args(build_parser().parse_args(argv)))


if __name__ == "__main__":
    sys.exit(main())
