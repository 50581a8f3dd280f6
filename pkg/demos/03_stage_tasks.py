"""The three intermediate stage tasks on one toy pair, plus MLM and CLM examples."""
import numpy as np

from adamo.stagetasks import STAGE_TRANSFORMS, clm_shift, mlm_corrupt
from adamo.tokenizer import build_vocab, decode, encode
from adamo.toydata import load_toy

corpus = load_toy("task_train")
enc_vocab = build_vocab(corpus, "encoder", min_freq=1)
dec_vocab = build_vocab(corpus, "decoder", min_freq=1)

pair = corpus[3]
print("code:")
print("   ", pair.code.replace("\n", "\n    "))
print("summary:", pair.summary)

src, tgt = encode(enc_vocab, pair.code), encode(dec_vocab, pair.summary)
print("\nsummary tokens present in the code are rewritten differently per task:")
for task, transform in STAGE_TRANSFORMS.items():
    print(f"  {task}: {decode(dec_vocab, transform(src, tgt).tgt_ids)}")

masked = mlm_corrupt(src, 0.15, np.random.default_rng(0))
print("\nMLM input :", decode(enc_vocab, masked.input_ids))
print("MLM labels:", [enc_vocab.tokens[t] for t in masked.label_ids if t >= 0])

inputs, labels = clm_shift(tgt)
print("\nCLM pairs (input -> next token):")
for i, o in zip(inputs, labels):
    print(f"  {dec_vocab.tokens[i]:>10} -> {dec_vocab.tokens[o]}")
