"""Continued pretraining on a small domain corpus, and what it costs.

Pre-trains a base encoder on a general topical corpus, then continues
pretraining on a domain corpus a tenth its size under the reduced regimen
(lower peak lr). A control run violates the regimen by keeping the base lr.
The question: how much domain perplexity do we gain, and how much general
capability do we lose?

Takes about a minute on one CPU core; most of it is the base run.
"""

import time

from daptlab.model import ModelConfig, init_params
from daptlab.pretrain import (RegimenError, TrainConfig, corpus_token_count,
                              dapt, perplexity, train)
from daptlab.synth import DOMAIN_TOPICS, GENERAL_TOPICS, topic_corpus
from daptlab.tokenizer import train_vocab

general, _ = topic_corpus(GENERAL_TOPICS, 1200, words_per_doc=8, seed=11)
domain, _ = topic_corpus(DOMAIN_TOPICS, 120, words_per_doc=8, seed=12)
general_held, _ = topic_corpus(GENERAL_TOPICS, 200, words_per_doc=8, seed=21)
domain_held, _ = topic_corpus(DOMAIN_TOPICS, 150, words_per_doc=8, seed=22)

vocab = train_vocab(general + domain, target_size=600)
general_tokens = corpus_token_count(general, vocab)
domain_tokens = corpus_token_count(domain, vocab)
print(f"general corpus {len(general)} docs / {general_tokens} tokens, "
      f"domain corpus {len(domain)} docs / {domain_tokens} tokens "
      f"({domain_tokens / general_tokens:.0%} of base)")

config = ModelConfig.desk(len(vocab), dropout=0.0)
base_regimen = TrainConfig(peak_lr=1e-4, epochs=30, batch_size=64,
                           warmup_steps=100, seed=0)
adapt_regimen = TrainConfig(peak_lr=2e-5, epochs=16, batch_size=16,
                            warmup_steps=50, seed=1)

base = init_params(config, seed=0)
started = time.perf_counter()
train(config, base, general, vocab, base_regimen)
print(f"base model trained in {time.perf_counter() - started:.0f}s")

adapted, _ = dapt(config, base, domain, vocab, adapt_regimen, base_regimen,
                  base_token_count=general_tokens)
print("adapted model trained (peak lr 2e-5, an order below the base 1e-4)")

# the guard refuses an adaptation that is not actually gentler than the base
try:
    dapt(config, base, domain, vocab, base_regimen, base_regimen)
except RegimenError as err:
    print(f"regimen guard: {err}")

# ... so the control has to bypass dapt() and call train() directly
control = {name: t.copy() for name, t in base.items()}
train(config, control, domain, vocab,
      TrainConfig(peak_lr=1e-4, epochs=16, batch_size=16, warmup_steps=50, seed=1))

print("\nmasked perplexity (lower is better), fixed corruption seed:")
print(f"{'model':<10}{'general':>10}{'domain':>10}")
rows = {}
for name, params in (("base", base), ("adapted", adapted), ("control", control)):
    g = perplexity(config, params, general_held, vocab, seed=7)
    d = perplexity(config, params, domain_held, vocab, seed=7)
    rows[name] = (g, d)
    print(f"{name:<10}{g:>10.2f}{d:>10.2f}")

g0, d0 = rows["base"]
ga, da = rows["adapted"]
gc, dc = rows["control"]
print(f"\nadapted: domain perplexity improved {1 - da / d0:.1%}, "
      f"general degraded {ga / g0 - 1:.1%}")
print(f"control: domain perplexity improved {1 - dc / d0:.1%}, "
      f"general degraded {gc / g0 - 1:.1%} <- the price of ignoring the regimen")
