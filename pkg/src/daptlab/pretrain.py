"""Masked-language-model pretraining and the continued-pretraining regimen.

Masking follows the usual recipe: each content position is selected with
probability select_prob; a selected position is replaced by [MASK], by a
random non-special token, or kept, per the policy fractions. Sequences where
the draw selects nothing are resampled once.

dapt() is the guarded continuation entry point: it rejects configurations
that do not lower the learning rate (and, when the caller supplies the base
token count, those whose adaptation corpus is not smaller).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (IGNORE_INDEX, Tape, Tensor, backward,
                       cross_entropy_masked, reshape, zero_grads)
from .model import ModelConfig, forward, mlm_logits
from .optim import AdamState, LrSchedule, adam_step, lr_at_step
from .tokenizer import Encoding, Vocab, count_pieces, encode


class RegimenError(ValueError):
    """A continued-pretraining config that violates the forgetting regimen."""


class TrainingDiverged(RuntimeError):
    """Non-finite loss; parameters still hold the last good step."""

    def __init__(self, step: int, loss: float, loss_log: "LossLog"):
        super().__init__(f"non-finite loss {loss} at step {step}; aborting with "
                         f"last-good parameters")
        self.step = step
        self.loss_log = loss_log


@dataclass(frozen=True)
class MaskingPolicy:
    select_prob: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1
    keep_frac: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.select_prob <= 1.0:
            raise ValueError(f"select_prob must be in (0, 1], got {self.select_prob}")
        for name in ("mask_frac", "random_frac", "keep_frac"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        total = self.mask_frac + self.random_frac + self.keep_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mask/random/keep fractions must sum to 1, got {total}")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization regimen. Full-scale reference values are peak_lr 1e-4 for
    base pretraining vs 2e-5 for adaptation, 30 epochs, batch 64, weight decay
    0.01 and 10000 warmup steps; the desk warmup default is 100 so that short
    runs still reach their peak."""

    peak_lr: float
    epochs: int = 30
    batch_size: int = 64
    weight_decay: float = 0.01
    warmup_steps: int = 100
    seed: int = 0
    max_seq: int = 128

    def __post_init__(self):
        if self.peak_lr <= 0.0:
            raise ValueError(f"peak_lr must be > 0, got {self.peak_lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("batch_size", "warmup_steps", "max_seq"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class LossLog:
    """Per-step (step, loss) pairs plus the step index closing each epoch."""

    entries: list[tuple[int, float]] = field(default_factory=list)
    epoch_ends: list[int] = field(default_factory=list)

    def render(self) -> str:
        lines = ["step\tloss"]
        lines += [f"{step}\t{loss:.6f}" for step, loss in self.entries]
        return "\n".join(lines) + "\n"


def apply_masking(encoding: Encoding, vocab: Vocab, policy: MaskingPolicy,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt one encoding; returns (input ids, labels with IGNORE_INDEX)."""
    ids = np.asarray(encoding.ids, dtype=np.int64)
    candidates = np.array(
        [i for start, stop in encoding.word_spans for i in range(start, stop)
         if ids[i] not in vocab.special_ids],
        dtype=np.int64,
    )
    if candidates.size == 0:
        raise ValueError("encoding has no maskable content pieces")
    allowed = np.array([i for i in range(len(vocab)) if i not in vocab.special_ids],
                       dtype=np.int64)

    labels = np.full_like(ids, IGNORE_INDEX)
    corrupted = ids.copy()
    for _ in range(2):  # one resample for all-unselected draws
        selected = candidates[rng.random(candidates.size) < policy.select_prob]
        if selected.size:
            break
    if selected.size == 0:
        return corrupted, labels

    labels[selected] = ids[selected]
    action = rng.random(selected.size)
    to_mask = selected[action < policy.mask_frac]
    to_random = selected[(action >= policy.mask_frac)
                         & (action < policy.mask_frac + policy.random_frac)]
    corrupted[to_mask] = vocab.mask_id
    if to_random.size:
        corrupted[to_random] = allowed[rng.integers(0, allowed.size, to_random.size)]
    return corrupted, labels


def encode_corpus(texts, vocab: Vocab, max_seq: int) -> list[Encoding]:
    """Encode texts, dropping any that end up with no content pieces."""
    encodings = []
    for text in texts:
        enc = encode(text, vocab, max_seq)
        if any(stop > start for start, stop in enc.word_spans):
            encodings.append(enc)
    return encodings


def _batch_arrays(encodings: list[Encoding], vocab: Vocab, policy: MaskingPolicy,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mask each encoding and pad the batch to its longest sequence."""
    width = max(len(e.ids) for e in encodings)
    ids = np.full((len(encodings), width), vocab.pad_id, dtype=np.int64)
    mask = np.zeros((len(encodings), width), dtype=np.int64)
    labels = np.full((len(encodings), width), IGNORE_INDEX, dtype=np.int64)
    for row, enc in enumerate(encodings):
        got, lab = apply_masking(enc, vocab, policy, rng)
        ids[row, :got.size] = got
        labels[row, :lab.size] = lab
        mask[row, :len(enc.ids)] = enc.mask
    return ids, mask, labels


def train(config: ModelConfig, params: dict[str, Tensor], texts, vocab: Vocab,
          train_config: TrainConfig, policy: MaskingPolicy | None = None) -> LossLog:
    """MLM-train ``params`` in place; returns the full loss log.

    Runs epochs x ceil(N / batch_size) optimizer steps under the warmup/decay
    schedule. Aborts on a non-finite loss before the update is applied, so the
    parameters always hold the last good state.
    """
    policy = policy or MaskingPolicy()
    encodings = encode_corpus(texts, vocab, min(train_config.max_seq, config.max_seq))
    if not encodings:
        raise ValueError("training corpus has no usable documents")
    log = LossLog()
    if train_config.epochs == 0:
        return log
    per_epoch = math.ceil(len(encodings) / train_config.batch_size)
    total_steps = train_config.epochs * per_epoch
    if total_steps <= train_config.warmup_steps:
        raise ValueError(f"warmup_steps ({train_config.warmup_steps}) must be below "
                         f"total steps ({total_steps}); lower it for short runs")
    schedule = LrSchedule(train_config.peak_lr, train_config.warmup_steps, total_steps)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(train_config.seed)

    step = 0
    for _ in range(train_config.epochs):
        order = rng.permutation(len(encodings))
        for lo in range(0, len(encodings), train_config.batch_size):
            chunk = [encodings[i] for i in order[lo:lo + train_config.batch_size]]
            step += 1
            for _ in range(20):
                ids, mask, labels = _batch_arrays(chunk, vocab, policy, rng)
                if (labels != IGNORE_INDEX).any():
                    break
            else:
                raise RuntimeError("could not draw a batch with any masked position")
            tape = Tape()
            hidden = forward(ids, mask, config, params, train_mode=True,
                             tape=tape, rng=rng)
            logits = mlm_logits(hidden[-1], params, tape)
            flat = reshape(logits, (ids.size, config.vocab_size), tape)
            loss = cross_entropy_masked(flat, labels.reshape(-1), tape)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(step, value, log)
            log.entries.append((step, value))
            backward(tape, loss)
            grads = {name: t.grad for name, t in params.items()}
            adam_step(params, grads, state, lr_at_step(schedule, step),
                      train_config.weight_decay)
            zero_grads(params)
        log.epoch_ends.append(step)
    return log


def _eval_batches(encodings, batch_size):
    for lo in range(0, len(encodings), batch_size):
        yield encodings[lo:lo + batch_size]


def perplexity(config: ModelConfig, params: dict[str, Tensor], texts, vocab: Vocab,
               policy: MaskingPolicy | None = None, seed: int = 0,
               batch_size: int = 32, max_seq: int | None = None) -> float:
    """exp(mean masked cross-entropy) under a fixed-seed corruption draw."""
    policy = policy or MaskingPolicy()
    encodings = encode_corpus(texts, vocab, max_seq or config.max_seq)
    if not encodings:
        raise ValueError("perplexity needs at least one usable document")
    rng = np.random.default_rng(seed)
    total_nll = 0.0
    total_count = 0
    for chunk in _eval_batches(encodings, batch_size):
        ids, mask, labels = _batch_arrays(chunk, vocab, policy, rng)
        flat_labels = labels.reshape(-1)
        count = int((flat_labels != IGNORE_INDEX).sum())
        if count == 0:
            continue
        hidden = forward(ids, mask, config, params)
        logits = mlm_logits(hidden[-1], params)
        loss = cross_entropy_masked(reshape(logits, (ids.size, config.vocab_size)),
                                    flat_labels)
        total_nll += float(loss.data) * count
        total_count += count
    if total_count == 0:
        raise ValueError("masking selected no position in the whole corpus")
    return float(math.exp(total_nll / total_count))


def masked_token_accuracy(config: ModelConfig, params: dict[str, Tensor], texts,
                          vocab: Vocab, policy: MaskingPolicy | None = None,
                          seed: int = 0, batch_size: int = 32) -> float:
    """Fraction of corrupted positions whose argmax prediction is the original."""
    policy = policy or MaskingPolicy()
    encodings = encode_corpus(texts, vocab, config.max_seq)
    if not encodings:
        raise ValueError("accuracy needs at least one usable document")
    rng = np.random.default_rng(seed)
    hits = 0
    total = 0
    for chunk in _eval_batches(encodings, batch_size):
        ids, mask, labels = _batch_arrays(chunk, vocab, policy, rng)
        keep = labels != IGNORE_INDEX
        if not keep.any():
            continue
        hidden = forward(ids, mask, config, params)
        pred = mlm_logits(hidden[-1], params).data.argmax(axis=-1)
        hits += int((pred[keep] == labels[keep]).sum())
        total += int(keep.sum())
    if total == 0:
        raise ValueError("masking selected no position in the whole corpus")
    return hits / total


def corpus_token_count(texts, vocab: Vocab) -> int:
    """Total non-special WordPiece count, the unit of the data-size regimen check."""
    return sum(count_pieces(text, vocab) for text in texts)


def dapt(config: ModelConfig, base_params: dict[str, Tensor], domain_texts,
         vocab: Vocab, dapt_config: TrainConfig, base_config: TrainConfig,
         base_token_count: int | None = None,
         policy: MaskingPolicy | None = None) -> tuple[dict[str, Tensor], LossLog]:
    """Continue pretraining on a domain corpus under the reduced regimen.

    The base parameters are copied, never mutated; with epochs=0 the returned
    parameters equal the base exactly.
    """
    if dapt_config.peak_lr >= base_config.peak_lr:
        raise RegimenError(f"adaptation peak_lr ({dapt_config.peak_lr}) must be "
                           f"lower than the base peak_lr ({base_config.peak_lr})")
    if base_token_count is not None:
        domain_tokens = corpus_token_count(domain_texts, vocab)
        if domain_tokens >= base_token_count:
            raise RegimenError(f"adaptation corpus ({domain_tokens} tokens) must be "
                               f"smaller than the base corpus ({base_token_count})")
    adapted = {name: t.copy() for name, t in base_params.items()}
    log = train(config, adapted, domain_texts, vocab, dapt_config, policy)
    return adapted, log
