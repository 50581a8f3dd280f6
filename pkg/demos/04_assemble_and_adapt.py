"""Assemble two separately pretrained halves, then compare a few adaptation schemes.

Scaled down so it finishes in a couple of minutes: a narrow model, short
phases and greedy decoding on a slice of the test split.
"""
from adamo.corpus import Corpus
from adamo.model import ModelConfig, RefinerConfig, assemble
from adamo.pipeline import (
    SchemeConfig, evaluate_model, run_continuous_pretrain, run_finetune, run_intermediate_finetune,
    run_pretrain_decoder, run_pretrain_encoder,
)
from adamo.tokenizer import build_vocab
from adamo.toydata import load_toy

general, domain, task = load_toy("general"), load_toy("domain"), load_toy("task_train")
test = Corpus(load_toy("task_test").pairs[:32], "test", "task_test")
ev = build_vocab([general, domain, task], "encoder", min_freq=1)
dv = build_vocab([general, domain, task], "decoder", min_freq=1)
small = ModelConfig(1, 1, d_model=64, n_heads=4, n_enc_layers=1, n_dec_layers=1, dropout=0.1)
common = dict(enc_vocab=ev, dec_vocab=dv, model=small, batch_size=16, lr=2e-3, seed=0,
              pretrain_corpus=general, domain_corpus=domain, task_corpus=task)

# 1. Pretrain each half on broad data: code with MLM, prose with CLM.
enc, enc_run = run_pretrain_encoder(SchemeConfig("pretrain", steps=200, **common))
dec, dec_run = run_pretrain_decoder(SchemeConfig("pretrain", steps=200, **common))
print(f"encoder MLM loss {enc_run.initial_loss:.2f} -> {enc_run.final_loss:.2f}")
print(f"decoder CLM loss {dec_run.initial_loss:.2f} -> {dec_run.final_loss:.2f}")

# 2. Zero-shot: the halves have never seen each other, and the cross-attention is untrained.
zero = assemble(enc, dec, RefinerConfig(0.0))
print("\nAdaMo-0shot\n" + evaluate_model(zero, test, ev, dv, decode="greedy").format())

# 3. A few schemes, each starting from a fresh assembly.
schemes = {
    "basic": [],
    "noise": [],
    "CP[TA]both": [SchemeConfig("cp", adaptive="TA", objective="both", steps=150, **common)],
    "IF[DA]CE": [SchemeConfig("if", adaptive="DA", stage_task="CE", steps=150, **common)],
}
for name, phases in schemes.items():
    model = assemble(enc, dec, RefinerConfig(0.0))
    for cfg in phases:
        run = run_continuous_pretrain if cfg.phase == "cp" else run_intermediate_finetune
        run(model, cfg)
    sigma = 0.3 if name == "noise" else 0.0
    model, report = run_finetune(model, SchemeConfig("finetune", steps=300, sigma=sigma, **common))
    metrics = evaluate_model(model, test, ev, dv, decode="greedy")
    print(f"\n{report.label}  (finetune loss {report.initial_loss:.2f} -> {report.final_loss:.3f})")
    print(metrics.format())
