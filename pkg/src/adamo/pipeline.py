"""Training phases and the experiment-label taxonomy.

Phases: encoder/decoder pretraining, continuous pretraining (CP), intermediate
finetuning on a stage task (IF), final finetuning and evaluation. Budgets are
step counts. Every phase starts with a fresh optimizer and a Philox stream
seeded from ``SchemeConfig.seed``, so identical configs give bit-identical
weights. Each phase appends one entry to the model's provenance, from which
the run label (``AdaMo-basic``, ``AdaMo-CP[TA]clm``, ``AdaMo-IF[DA]CE``, ...)
is derived.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from adamo.checkpoint import ModelCheckpoint, checkpoint_from_model
from adamo.corpus import Corpus
from adamo.errors import ConfigError, DomainError
from adamo.metrics import MetricReport, score_corpus
from adamo.model import (
    Batch,
    ModelConfig,
    RefinerConfig,
    Seq2SeqModel,
    beam_decode,
    greedy_decode_batch,
    init_params,
    pad_ids,
    seq2seq_loss,
)
from adamo.numerics import IGNORE_INDEX, AdamState, GradTape, adam_step, cross_entropy, make_rng, reshape
from adamo.stagetasks import STAGE_TASKS, clm_shift, mlm_corrupt, stage_transform
from adamo.tokenizer import BOS, EOS, PAD, SPECIAL_IDS, TokenSeq, Vocab, encode, tokenize

PHASES = ("pretrain", "cp", "if", "finetune", "evaluate")
ADAPTIVE = ("DA", "TA")
OBJECTIVES = ("mlm", "clm", "both")


@dataclass
class SchemeConfig:
    phase: str
    adaptive: str | None = None
    objective: str | None = None
    stage_task: str | None = None
    pretrain_corpus: Corpus | None = None
    domain_corpus: Corpus | None = None
    task_corpus: Corpus | None = None
    steps: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    sigma: float = 0.0
    mask_rate: float = 0.15
    model: ModelConfig | None = None
    enc_vocab: Vocab | None = None
    dec_vocab: Vocab | None = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigError(f"unknown phase {self.phase!r}, expected one of {PHASES}")
        if self.adaptive is not None and self.adaptive not in ADAPTIVE:
            raise ConfigError(f"adaptive must be one of {ADAPTIVE}, got {self.adaptive!r}")
        if self.objective is not None and self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.stage_task is not None and self.stage_task not in STAGE_TASKS:
            raise ConfigError(f"stage_task must be one of {STAGE_TASKS}, got {self.stage_task!r}")
        if self.phase == "cp" and (self.adaptive is None or self.objective is None):
            raise ConfigError("continuous pretraining needs both adaptive and objective")
        if self.phase == "if" and (self.adaptive is None or self.stage_task is None):
            raise ConfigError("intermediate finetuning needs both adaptive and stage_task")
        if self.phase == "finetune" and self.task_corpus is None:
            raise ConfigError("finetuning needs a task corpus")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")

    def adaptive_corpus(self) -> Corpus:
        corpus = self.domain_corpus if self.adaptive == "DA" else self.task_corpus
        if corpus is None:
            which = "domain_corpus" if self.adaptive == "DA" else "task_corpus"
            raise ConfigError(f"{self.adaptive} scheme needs {which}")
        return corpus

    def phase_tag(self) -> str:
        """Provenance entry this configuration appends."""
        if self.phase == "cp":
            return f"CP[{self.adaptive}]{self.objective}"
        if self.phase == "if":
            return f"IF[{self.adaptive}]{self.stage_task}"
        if self.phase == "finetune":
            return f"FT-noise[{self.sigma:g}]" if self.sigma > 0 else "FT"
        return self.phase

    @property
    def label(self) -> str:
        if self.phase in ("cp", "if"):
            return "AdaMo-" + self.phase_tag()
        if self.phase == "finetune":
            return scheme_label([self.phase_tag()])
        return f"AdaMo-{self.phase}"


def scheme_label(provenance) -> str:
    """Experiment label implied by a provenance list."""
    adaptive = [p for p in provenance if p.startswith(("CP[", "IF["))]
    tuned = [p for p in provenance if p.startswith("FT")]
    noise = [p[3:] for p in tuned if p.startswith("FT-noise")]
    if not adaptive and not tuned and "assemble" not in provenance and provenance:
        return "AdaMo-" + provenance[-1]
    parts = adaptive + noise[-1:]
    if parts:
        return "AdaMo-" + "-".join(parts)
    return "AdaMo-basic" if tuned else "AdaMo-0shot"


@dataclass
class RunReport:
    label: str
    steps_done: int
    final_loss: float
    wall_seconds: float
    metrics: MetricReport | None = None
    initial_loss: float = float("nan")
    losses: list[float] = field(default_factory=list, repr=False)
    updates: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metrics"] = self.metrics.to_dict() if self.metrics else None
        return d

    def format(self) -> str:
        rows = [("label", self.label), ("steps", str(self.steps_done)),
                ("initial loss", f"{self.initial_loss:.4f}"), ("final loss", f"{self.final_loss:.4f}"),
                ("wall seconds", f"{self.wall_seconds:.1f}")]
        width = max(len(k) for k, _ in rows)
        text = "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)
        if self.metrics:
            text += "\n" + self.metrics.format()
        return text


# ---------------------------------------------------------------- data prep

def _clip(ids: list[int], limit: int) -> list[int]:
    return ids if len(ids) <= limit else ids[: limit - 1] + [EOS]


def _need_vocabs(config: SchemeConfig):
    if config.enc_vocab is None or config.dec_vocab is None:
        raise ConfigError("scheme config needs both encoder and decoder vocabularies")
    return config.enc_vocab, config.dec_vocab


def encode_pairs(corpus: Corpus, enc_vocab: Vocab, dec_vocab: Vocab, max_len: int):
    return [
        (_clip(encode(enc_vocab, p.code).ids, max_len), _clip(encode(dec_vocab, p.summary).ids, max_len + 1))
        for p in corpus
    ]


class _Sampler:
    """Epoch-wise shuffled minibatches drawn from one rng."""

    def __init__(self, n: int, batch_size: int, rng):
        if n == 0:
            raise DomainError("no training examples")
        self.n, self.bs, self.rng = n, min(batch_size, n), rng
        self.order, self.pos = None, n

    def next(self) -> np.ndarray:
        if self.pos + self.bs > self.n:
            self.order, self.pos = self.rng.permutation(self.n), 0
        idx = self.order[self.pos:self.pos + self.bs]
        self.pos += self.bs
        return idx


def _mlm_batch(seqs, vocab, idx, rate, rng):
    examples = [mlm_corrupt(TokenSeq(seqs[i], vocab), rate, rng) for i in idx]
    inputs = pad_ids([e.input_ids.ids for e in examples])
    labels = pad_ids([e.label_ids for e in examples], pad=IGNORE_INDEX)
    return inputs, labels


def _clm_batch(seqs, vocab, idx):
    shifted = [clm_shift(TokenSeq(seqs[i], vocab)) for i in idx]
    inputs = pad_ids([s for s, _ in shifted])
    labels = pad_ids([t for _, t in shifted], pad=IGNORE_INDEX)
    return inputs, labels


def _mlm_loss(model, inputs, labels, rng):
    logits = model.mlm_logits(inputs, inputs == PAD, training=True, rng=rng)
    B, S, V = logits.shape
    return cross_entropy(reshape(logits, (B * S, V)), labels.reshape(-1))


def _clm_loss(model, inputs, labels, rng):
    logits = model.decode_forward(inputs, None, None, training=True, rng=rng)
    B, T, V = logits.shape
    return cross_entropy(reshape(logits, (B * T, V)), labels.reshape(-1))


def _step(model, names, state, loss_fn):
    params = model.named(names)
    with GradTape() as tape:
        loss = loss_fn()
    tape.backward(loss, leaves=params)
    adam_step(params, state)
    return float(loss.item())


def _mlm_seqs(corpus, vocab, max_len):
    seqs = [_clip(encode(vocab, p.code).ids, max_len) for p in corpus]
    return [s for s in seqs if any(t not in SPECIAL_IDS for t in s)]


def _clm_seqs(corpus, vocab, max_len):
    return [_clip(encode(vocab, p.summary).ids, max_len + 1) for p in corpus]


# ---------------------------------------------------------------- phases

def _train_side(model: Seq2SeqModel, corpus: Corpus, config: SchemeConfig, objective: str):
    """MLM on the code side, CLM on the summary side, or both alternating (even steps encoder)."""
    enc_vocab, dec_vocab = _need_vocabs(config)
    rng = make_rng(config.seed)
    max_len = model.config.max_len
    sides = {"mlm": ["mlm"], "clm": ["clm"], "both": ["mlm", "clm"]}[objective]
    data, samplers, states, names = {}, {}, {}, {}
    if "mlm" in sides:
        data["mlm"] = _mlm_seqs(corpus, enc_vocab, max_len)
        names["mlm"] = model.encoder_names()
    if "clm" in sides:
        data["clm"] = _clm_seqs(corpus, dec_vocab, max_len)
        names["clm"] = model.decoder_names(cross=False)
    for s in sides:
        samplers[s] = _Sampler(len(data[s]), config.batch_size, rng)
        states[s] = AdamState(lr=config.lr)
    losses = []
    for step in range(config.steps):
        side = sides[step % len(sides)]
        idx = samplers[side].next()
        if side == "mlm":
            inputs, labels = _mlm_batch(data["mlm"], enc_vocab, idx, config.mask_rate, rng)
            losses.append(_step(model, names[side], states[side], lambda: _mlm_loss(model, inputs, labels, rng)))
        else:
            inputs, labels = _clm_batch(data["clm"], dec_vocab, idx)
            losses.append(_step(model, names[side], states[side], lambda: _clm_loss(model, inputs, labels, rng)))
    updates = {("encoder" if s == "mlm" else "decoder"): states[s].step for s in sides}
    return losses, updates


def _train_seq2seq(model: Seq2SeqModel, pairs, config: SchemeConfig):
    rng = make_rng(config.seed)
    sampler = _Sampler(len(pairs), config.batch_size, rng)
    state = AdamState(lr=config.lr)
    names = model.seq2seq_names()
    losses = []
    for _ in range(config.steps):
        batch = Batch.from_pairs([pairs[i] for i in sampler.next()])
        losses.append(_step(model, names, state, lambda: seq2seq_loss(model, batch, training=True, rng=rng)))
    return losses, {"seq2seq": state.step}


def _report(label, losses, t0, updates=None) -> RunReport:
    return RunReport(label, len(losses), losses[-1] if losses else float("nan"), time.perf_counter() - t0,
                     initial_loss=losses[0] if losses else float("nan"), losses=losses, updates=updates or {})


def _pretrain(config: SchemeConfig, role: str):
    if config.phase != "pretrain":
        raise ConfigError(f"pretraining needs phase 'pretrain', got {config.phase!r}")
    corpus = config.pretrain_corpus
    if corpus is None:
        raise ConfigError("pretraining needs pretrain_corpus")
    if config.model is None:
        raise ConfigError("pretraining needs a model configuration")
    enc_vocab, dec_vocab = _need_vocabs(config)
    mc = replace(config.model, enc_vocab=enc_vocab.size, dec_vocab=dec_vocab.size)
    t0 = time.perf_counter()
    model = init_params(mc, config.seed)
    losses, updates = _train_side(model, corpus, config, "mlm" if role == "encoder" else "clm")
    model.provenance = ["PT[enc]" if role == "encoder" else "PT[dec]"]
    return checkpoint_from_model(model, role), _report(scheme_label(model.provenance), losses, t0, updates)


def run_pretrain_encoder(config: SchemeConfig):
    return _pretrain(config, "encoder")


def run_pretrain_decoder(config: SchemeConfig):
    return _pretrain(config, "decoder")


def pretrain_encoder(config: SchemeConfig) -> ModelCheckpoint:
    """Train encoder, embeddings and MLM head on the code side of ``pretrain_corpus``."""
    return _pretrain(config, "encoder")[0]


def pretrain_decoder(config: SchemeConfig) -> ModelCheckpoint:
    """Train a cross-attention-free decoder as a causal LM on the summary side."""
    return _pretrain(config, "decoder")[0]


def _check_phase(config, phase):
    if config.phase != phase:
        raise ConfigError(f"expected phase {phase!r}, got {config.phase!r}")


def run_continuous_pretrain(model: Seq2SeqModel, config: SchemeConfig):
    _check_phase(config, "cp")
    corpus = config.adaptive_corpus()
    t0 = time.perf_counter()
    losses, updates = _train_side(model, corpus, config, config.objective)
    model.provenance.append(config.phase_tag())
    return model, _report(scheme_label(model.provenance), losses, t0, updates)


def continuous_pretrain(model: Seq2SeqModel, config: SchemeConfig) -> Seq2SeqModel:
    """Second self-supervised phase on the DA (domain) or TA (task) corpus; updates in place."""
    return run_continuous_pretrain(model, config)[0]


def stage_pairs(corpus: Corpus, task: str, enc_vocab: Vocab, dec_vocab: Vocab, max_len: int):
    transform = stage_transform(task)
    out = []
    for p in corpus:
        src = encode(enc_vocab, p.code)
        tgt = encode(dec_vocab, p.summary)
        ex = transform(src, tgt)
        out.append((_clip(ex.src_ids.ids, max_len), _clip(ex.tgt_ids.ids, max_len + 1)))
    return out


def run_intermediate_finetune(model: Seq2SeqModel, config: SchemeConfig):
    _check_phase(config, "if")
    corpus = config.adaptive_corpus()
    enc_vocab, dec_vocab = _need_vocabs(config)
    t0 = time.perf_counter()
    model.refiner = replace(model.refiner, sigma=config.sigma)
    pairs = stage_pairs(corpus, config.stage_task, enc_vocab, dec_vocab, model.config.max_len)
    losses, updates = _train_seq2seq(model, pairs, config)
    model.provenance.append(config.phase_tag())
    return model, _report(scheme_label(model.provenance), losses, t0, updates)


def intermediate_finetune(model: Seq2SeqModel, config: SchemeConfig) -> Seq2SeqModel:
    """Seq2seq training on CA/CE/CI-rewritten summaries; updates in place."""
    return run_intermediate_finetune(model, config)[0]


def run_finetune(model: Seq2SeqModel, config: SchemeConfig):
    _check_phase(config, "finetune")
    enc_vocab, dec_vocab = _need_vocabs(config)
    t0 = time.perf_counter()
    model.refiner = replace(model.refiner, sigma=config.sigma)
    pairs = encode_pairs(config.task_corpus, enc_vocab, dec_vocab, model.config.max_len)
    losses, updates = _train_seq2seq(model, pairs, config)
    model.provenance.append(config.phase_tag())
    return model, _report(scheme_label(model.provenance), losses, t0, updates)


def finetune(model: Seq2SeqModel, config: SchemeConfig) -> Seq2SeqModel:
    """Teacher-forced training on raw (code, summary) pairs; updates in place."""
    return run_finetune(model, config)[0]


def decode_corpus(model: Seq2SeqModel, corpus: Corpus, enc_vocab: Vocab, dec_vocab: Vocab,
                  decode: str = "beam", beam: int = 4, max_out: int = 32, length_penalty: float = 1.0,
                  batch_size: int = 64) -> list[list[str]]:
    """Token lists (decoder surface tokens, specials dropped) for every pair."""
    srcs = [_clip(encode(enc_vocab, p.code).ids, model.config.max_len) for p in corpus]
    if decode == "greedy":
        outs = []
        for i in range(0, len(srcs), batch_size):
            outs.extend(greedy_decode_batch(model, srcs[i:i + batch_size], max_out))
    elif decode == "beam":
        outs = [beam_decode(model, s, beam, max_out, length_penalty) for s in srcs]
    else:
        raise ConfigError(f"unknown decode mode {decode!r}, expected 'greedy' or 'beam'")
    return [ids_to_tokens(o, dec_vocab) for o in outs]


def ids_to_tokens(ids, vocab: Vocab) -> list[str]:
    out = []
    for i in ids:
        if i == EOS:
            break
        if i in (PAD, BOS):
            continue
        out.append(vocab.tokens[i])
    return out


def evaluate_model(model: Seq2SeqModel, corpus: Corpus, enc_vocab: Vocab, dec_vocab: Vocab,
                   decode: str = "beam", beam: int = 4, max_out: int = 32,
                   length_penalty: float = 1.0) -> MetricReport:
    """Decode every pair and score against its single reference summary."""
    if len(corpus) == 0:
        raise DomainError("cannot evaluate on an empty corpus")
    cands = decode_corpus(model, corpus, enc_vocab, dec_vocab, decode, beam, max_out, length_penalty)
    refs = [tokenize(p.summary) for p in corpus]
    report = score_corpus(cands, refs)
    for row, c, r, p in zip(report.per_sentence, cands, refs, corpus):
        row.update(id=p.id, candidate=" ".join(c), reference=" ".join(r))
    return report
