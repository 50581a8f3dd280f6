import math
import struct

import numpy as np
import pytest

from adamo.checkpoint import (
    MAGIC, ModelCheckpoint, checkpoint_from_model, from_bytes, load_checkpoint, save_checkpoint, to_bytes,
)
from adamo.corpus import Corpus
from adamo.errors import CheckpointError, ConfigError, DomainError, FormatError
from adamo.model import ModelConfig, RefinerConfig, assemble
from adamo.pipeline import (
    SchemeConfig, evaluate_model, run_continuous_pretrain, run_finetune, run_intermediate_finetune,
    run_pretrain_decoder, run_pretrain_encoder, scheme_label, stage_pairs,
)
from adamo.tokenizer import MARK_SEEN, MARK_UNSEEN, SPECIAL_IDS

SMALL = ModelConfig(1, 1, d_model=16, n_heads=2, n_enc_layers=1, n_dec_layers=1, ffn_mult=2, max_len=64,
                    dropout=0.1)


@pytest.fixture(scope="module")
def setup(toy_corpora, toy_vocabs):
    ev, dv = toy_vocabs
    small_task = Corpus(toy_corpora["task_train"].pairs[:48], "train", "task")
    small_domain = Corpus(toy_corpora["domain"].pairs[:48], "train", "domain")
    return dict(ev=ev, dv=dv, general=toy_corpora["general"], task=small_task, domain=small_domain,
                test=Corpus(toy_corpora["task_test"].pairs[:8], "test", "task_test"))


def cfg(s, phase, **kw):
    base = dict(enc_vocab=s["ev"], dec_vocab=s["dv"], model=SMALL, batch_size=8, lr=3e-3,
                pretrain_corpus=s["general"], domain_corpus=s["domain"], task_corpus=s["task"], steps=20)
    return SchemeConfig(phase, **(base | kw))


@pytest.fixture(scope="module")
def halves(setup):
    enc, enc_report = run_pretrain_encoder(cfg(setup, "pretrain", steps=500))
    dec, dec_report = run_pretrain_decoder(cfg(setup, "pretrain", steps=500))
    return enc, dec, enc_report, dec_report


def fresh(halves):
    return assemble(halves[0], halves[1], RefinerConfig(0.0), seed=0)


def snapshot(model, names):
    return {n: model.params[n].data.copy() for n in names}


@pytest.mark.parametrize("kw,label", [
    (dict(phase="cp", adaptive="TA", objective="clm"), "AdaMo-CP[TA]clm"),
    (dict(phase="cp", adaptive="DA", objective="both"), "AdaMo-CP[DA]both"),
    (dict(phase="if", adaptive="DA", stage_task="CE"), "AdaMo-IF[DA]CE"),
    (dict(phase="if", adaptive="TA", stage_task="CA"), "AdaMo-IF[TA]CA"),
])
def test_config_labels(kw, label):
    assert SchemeConfig(**kw).label == label


@pytest.mark.parametrize("prov,label", [
    (["PT[enc]", "PT[dec]", "assemble"], "AdaMo-0shot"),
    (["PT[enc]", "PT[dec]", "assemble", "FT"], "AdaMo-basic"),
    (["PT[enc]", "PT[dec]", "assemble", "FT-noise[0.3]"], "AdaMo-noise[0.3]"),
    (["PT[enc]", "PT[dec]", "assemble", "CP[TA]clm", "FT"], "AdaMo-CP[TA]clm"),
    (["PT[enc]", "PT[dec]", "assemble", "IF[DA]CE", "FT"], "AdaMo-IF[DA]CE"),
])
def test_provenance_labels(prov, label):
    assert scheme_label(prov) == label


@pytest.mark.parametrize("kw", [
    dict(phase="cp", adaptive="TA"),
    dict(phase="cp", adaptive="XX", objective="mlm"),
    dict(phase="if", adaptive="DA"),
    dict(phase="if", adaptive="DA", stage_task="CX"),
    dict(phase="finetune"),
    dict(phase="finetune", task_corpus=Corpus.from_pairs([("a", "b")]), steps=0),
    dict(phase="train"),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SchemeConfig(**kw)


def test_pretrain_missing_corpus(setup):
    with pytest.raises(ConfigError):
        run_pretrain_encoder(cfg(setup, "pretrain", pretrain_corpus=None))


def test_da_needs_domain_corpus(setup, halves):
    with pytest.raises(ConfigError, match="domain_corpus"):
        run_continuous_pretrain(fresh(halves), cfg(setup, "cp", adaptive="DA", objective="mlm", domain_corpus=None))


def test_pretraining_reports(setup, halves):
    enc, dec, er, dr = halves
    assert enc.role == "encoder" and dec.role == "decoder"
    assert enc.provenance == ["PT[enc]"] and dec.provenance == ["PT[dec]"]
    assert er.final_loss < er.initial_loss
    assert dr.final_loss < dr.initial_loss
    assert abs(dr.initial_loss - math.log(setup["dv"].size)) < 0.05 * math.log(setup["dv"].size)


def test_pretraining_deterministic(setup):
    a, _ = run_pretrain_encoder(cfg(setup, "pretrain", steps=5))
    b, _ = run_pretrain_encoder(cfg(setup, "pretrain", steps=5))
    assert to_bytes(a) == to_bytes(b)
    c, _ = run_pretrain_decoder(cfg(setup, "pretrain", steps=5))
    d, _ = run_pretrain_decoder(cfg(setup, "pretrain", steps=5))
    assert to_bytes(c) == to_bytes(d)


def test_mlm_isolation(setup, halves):
    m = fresh(halves)
    dec_names = m.decoder_names()
    before = snapshot(m, dec_names)
    enc_before = m.params["enc.embed"].data.copy()
    run_continuous_pretrain(m, cfg(setup, "cp", adaptive="TA", objective="mlm", steps=4))
    for n in dec_names:
        np.testing.assert_array_equal(m.params[n].data, before[n])
    assert not np.array_equal(m.params["enc.embed"].data, enc_before)


def test_clm_isolation(setup, halves):
    m = fresh(halves)
    enc_names = m.encoder_names()
    before = snapshot(m, enc_names + m.cross_names())
    run_continuous_pretrain(m, cfg(setup, "cp", adaptive="DA", objective="clm", steps=4))
    for n in before:
        np.testing.assert_array_equal(m.params[n].data, before[n])


def test_both_alternates(setup, halves):
    m = fresh(halves)
    _, report = run_continuous_pretrain(m, cfg(setup, "cp", adaptive="TA", objective="both", steps=10))
    assert report.updates == {"encoder": 5, "decoder": 5}
    assert m.provenance[-1] == "CP[TA]both"


def test_intermediate_loss_decreases(setup, halves):
    m = fresh(halves)
    _, report = run_intermediate_finetune(m, cfg(setup, "if", adaptive="TA", stage_task="CE", steps=500))
    assert report.final_loss < report.initial_loss
    assert report.label == "AdaMo-IF[TA]CE"


def test_ca_target_alphabet(setup):
    pairs = stage_pairs(setup["task"], "CA", setup["ev"], setup["dv"], 64)
    for _, tgt in pairs:
        assert set(tgt) <= set(SPECIAL_IDS) | {MARK_SEEN, MARK_UNSEEN}


def test_finetune_appends_one_entry(setup, halves):
    m = fresh(halves)
    n = len(m.provenance)
    _, report = run_finetune(m, cfg(setup, "finetune", steps=3, sigma=0.3))
    assert m.provenance[n:] == ["FT-noise[0.3]"]
    assert report.label == "AdaMo-noise[0.3]"
    assert m.refiner.sigma == 0.3


@pytest.mark.parametrize("adaptive", ["DA", "TA"])
@pytest.mark.parametrize("phase,choice", [("cp", "mlm"), ("cp", "clm"), ("cp", "both"),
                                          ("if", "CA"), ("if", "CE"), ("if", "CI")])
def test_every_adaptive_scheme_runs(setup, halves, adaptive, phase, choice):
    m = fresh(halves)
    key = "objective" if phase == "cp" else "stage_task"
    run = run_continuous_pretrain if phase == "cp" else run_intermediate_finetune
    _, report = run(m, cfg(setup, phase, adaptive=adaptive, steps=2, **{key: choice}))
    run_finetune(m, cfg(setup, "finetune", steps=2))
    tag = f"{phase.upper()}[{adaptive}]{choice}"
    assert report.label == f"AdaMo-{tag}"
    assert scheme_label(m.provenance) == f"AdaMo-{tag}"
    assert np.isfinite(report.final_loss)


def test_evaluate_deterministic(setup, halves):
    m = fresh(halves)
    a = evaluate_model(m, setup["test"], setup["ev"], setup["dv"], decode="beam", beam=2, max_out=8)
    b = evaluate_model(m, setup["test"], setup["ev"], setup["dv"], decode="beam", beam=2, max_out=8)
    assert a.to_dict(per_sentence=True) == b.to_dict(per_sentence=True)
    assert a.candidate_count == 8
    assert {"id", "candidate", "reference"} <= set(a.per_sentence[0])


def test_evaluate_empty(setup, halves):
    with pytest.raises(DomainError):
        evaluate_model(fresh(halves), Corpus([]), setup["ev"], setup["dv"])


def test_evaluate_bad_decode(setup, halves):
    with pytest.raises(ConfigError):
        evaluate_model(fresh(halves), setup["test"], setup["ev"], setup["dv"], decode="sample")


def test_end_to_end_determinism(setup, halves):
    def chain():
        m = fresh(halves)
        run_continuous_pretrain(m, cfg(setup, "cp", adaptive="TA", objective="both", steps=4))
        run_finetune(m, cfg(setup, "finetune", steps=4, sigma=0.3))
        rep = evaluate_model(m, setup["test"], setup["ev"], setup["dv"], decode="greedy", max_out=8)
        return to_bytes(checkpoint_from_model(m)), rep.to_dict(per_sentence=True)
    assert chain() == chain()


# checkpoint file handling

@pytest.fixture
def blob(halves):
    return to_bytes(halves[0])


def test_save_load_save(tmp_path, halves):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(halves[1], p1)
    save_checkpoint(load_checkpoint(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_truncated(blob):
    for cut in (3, 10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(FormatError):
            from_bytes(blob[:cut])


def test_foreign_magic(blob):
    with pytest.raises(FormatError, match="ADMO"):
        from_bytes(b"PK\x03\x04" + blob[4:])


def test_trailing_bytes(blob):
    with pytest.raises(FormatError):
        from_bytes(blob + b"\x00")


def test_version_mismatch(blob):
    with pytest.raises(FormatError, match="version"):
        from_bytes(MAGIC + struct.pack("<I", 99) + blob[8:])


def test_shape_mismatch(halves):
    ckpt = halves[0]
    params = dict(ckpt.named_params)
    params["enc.embed"] = params["enc.embed"][:-1]
    with pytest.raises(CheckpointError, match="enc.embed"):
        ModelCheckpoint("encoder", ckpt.config, params)
    blob = to_bytes(ckpt).replace(b'"d_model": 16', b'"d_model": 32')
    with pytest.raises(CheckpointError):
        from_bytes(blob)
