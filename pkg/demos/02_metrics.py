"""How the four summary metrics react to typical decoding mistakes."""
from adamo.metrics import corpus_bleu, meteor_alignment, rouge_l, score_corpus, sentence_bleu

reference = "return the user for the given index"
candidates = {
    "exact": "return the user for the given index",
    "reordered": "for the given index return the user",
    "truncated": "return the user",
    "padded": "return the user for the given index and the key",
    "unrelated": "sort every item in the list",
}

print(f"reference: {reference}\n")
print(f"{'case':<10} {'S-BLEU':>7} {'METEOR':>7} {'chunks':>6} {'ROUGE-L':>8}")
for name, cand in candidates.items():
    a = meteor_alignment(cand, reference)
    print(f"{name:<10} {sentence_bleu(cand, reference):7.4f} {a.score:7.4f} {a.chunks:6d} {rouge_l(cand, reference):8.4f}")

# METEOR's fragmentation penalty never vanishes, so even a perfect two-word
# match scores below one.
print("\nMETEOR('the cat', 'the cat') =", meteor_alignment("the cat", "the cat").score)

# Corpus BLEU pools counts before combining, so it differs from the mean of
# sentence scores.
pairs = [(candidates["exact"], reference), (candidates["truncated"], reference)]
print(f"C-BLEU {corpus_bleu(pairs):.4f} vs mean sentence BLEU "
      f"{sum(sentence_bleu(c, r) for c, r in pairs) / 2:.4f}")

print()
print(score_corpus([c for c, _ in pairs], [r for _, r in pairs]).format())
