"""Lowercasing WordPiece tokenizer: vocabulary training, encoding, decoding.

Pre-tokenization lowercases, splits on whitespace, and breaks out every
non-alphanumeric character as a standalone single-character word (digits stay
inside words). Word-internal continuation pieces carry the usual "##" prefix.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .fileio import atomic_write_text

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
MAX_WORD_CHARS = 100


class Vocab:
    """Immutable piece list; a piece's id is its line number in the vocab file."""

    def __init__(self, pieces):
        pieces = list(pieces)
        index: dict[str, int] = {}
        for i, piece in enumerate(pieces):
            if not piece or piece == "##":
                raise ValueError(f"empty piece at id {i}")
            if piece in index:
                raise ValueError(f"duplicate piece {piece!r} at ids {index[piece]} and {i}")
            index[piece] = i
        for tok in SPECIAL_TOKENS:
            if tok not in index:
                raise ValueError(f"vocab is missing special token {tok}")
        self.pieces: tuple[str, ...] = tuple(pieces)
        self.index = index
        self.pad_id = index[PAD]
        self.unk_id = index[UNK]
        self.cls_id = index[CLS]
        self.sep_id = index[SEP]
        self.mask_id = index[MASK]
        self.special_ids = frozenset(index[t] for t in SPECIAL_TOKENS)

    def __len__(self) -> int:
        return len(self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self.index

    def id_of(self, piece: str) -> int:
        return self.index[piece]

    def piece_of(self, piece_id: int) -> str:
        if not 0 <= piece_id < len(self.pieces):
            raise ValueError(f"piece id {piece_id} out of range (vocab size {len(self.pieces)})")
        return self.pieces[piece_id]

    def save(self, path) -> None:
        atomic_write_text(path, "\n".join(self.pieces) + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        while lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


@dataclass
class Encoding:
    """One encoded text: ids/pieces/mask of equal length plus word piece spans.

    word_spans[i] is the half-open piece range of pre-tokenized word i; spans
    partition the content pieces (everything except [CLS]/[SEP]/padding).
    """

    ids: list[int]
    pieces: list[str]
    mask: list[int]
    word_spans: list[tuple[int, int]]


def split_words(text: str) -> list[str]:
    """Lowercase and split into words; punctuation becomes single-char words."""
    words: list[str] = []
    current: list[str] = []
    for ch in text.lower():
        if ch.isspace():
            if current:
                words.append("".join(current))
                current = []
        elif not ch.isalnum():
            if current:
                words.append("".join(current))
                current = []
            words.append(ch)
        else:
            current.append(ch)
    if current:
        words.append("".join(current))
    return words


def wordpiece(word: str, vocab: Vocab) -> list[str] | None:
    """Greedy longest-prefix-match segmentation; None when the word is unrepresentable."""
    if len(word) > MAX_WORD_CHARS:
        return None
    pieces: list[str] = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while start < end:
            sub = word[start:end]
            if start > 0:
                sub = "##" + sub
            if sub in vocab:
                found = sub
                break
            end -= 1
        if found is None:
            return None
        pieces.append(found)
        start = end
    return pieces


def _assemble(word_groups: list[list[str]], vocab: Vocab, max_seq: int,
              pad: bool) -> Encoding:
    if max_seq < 2:
        raise ValueError(f"max_seq must be >= 2, got {max_seq}")
    pieces: list[str] = [CLS]
    spans: list[tuple[int, int]] = []
    for group in word_groups:
        spans.append((len(pieces), len(pieces) + len(group)))
        pieces.extend(group)
    pieces.append(SEP)

    if len(pieces) > max_seq:
        pieces = pieces[:max_seq - 1] + [SEP]
        limit = max_seq - 1
        spans = [(s, min(e, limit)) for s, e in spans if s < limit]

    ids = [vocab.id_of(p) for p in pieces]
    mask = [1] * len(ids)
    if pad and len(ids) < max_seq:
        short = max_seq - len(ids)
        ids.extend([vocab.pad_id] * short)
        pieces.extend([PAD] * short)
        mask.extend([0] * short)
    return Encoding(ids=ids, pieces=pieces, mask=mask, word_spans=spans)


def encode(text: str, vocab: Vocab, max_seq: int, pad: bool = False) -> Encoding:
    """[CLS] + pieces + [SEP], truncated from the tail with [SEP] preserved."""
    groups = [wordpiece(word, vocab) or [UNK] for word in split_words(text)]
    return _assemble(groups, vocab, max_seq, pad)


def encode_words(words, vocab: Vocab, max_seq: int, pad: bool = False) -> Encoding:
    """Encode pre-tokenized input; word_spans[i] always covers input word i.

    Each input word may still normalize into several sub-words (punctuation
    splits); all resulting pieces stay inside that word's span.
    """
    groups: list[list[str]] = []
    for word in words:
        pieces: list[str] = []
        for sub in split_words(word):
            pieces.extend(wordpiece(sub, vocab) or [UNK])
        groups.append(pieces or [UNK])
    return _assemble(groups, vocab, max_seq, pad)


def decode(ids, vocab: Vocab) -> str:
    """Drop specials, fuse "##" continuations, join words with single spaces."""
    words: list[str] = []
    for piece_id in ids:
        piece = vocab.piece_of(int(piece_id))
        if piece_id in vocab.special_ids:
            continue
        if piece.startswith("##") and words:
            words[-1] += piece[2:]
        else:
            words.append(piece[2:] if piece.startswith("##") else piece)
    return " ".join(words)


def count_pieces(text: str, vocab: Vocab) -> int:
    """Non-special piece count of a text, with no length truncation."""
    total = 0
    for word in split_words(text):
        got = wordpiece(word, vocab)
        total += len(got) if got else 1
    return total


def _merge_symbol(left: str, right: str) -> str:
    return left + (right[2:] if right.startswith("##") else right)


def train_vocab(documents, target_size: int, min_frequency: int = 2) -> Vocab:
    """Train a WordPiece vocab by frequency-driven within-word pair merging.

    Characters below min_frequency are left out (words containing them encode
    to [UNK]); merges stop when no adjacent pair reaches min_frequency or the
    target size is hit. Deterministic: ties break on the lexicographically
    smallest pair.
    """
    if target_size < 1:
        raise ValueError(f"target_size must be >= 1, got {target_size}")
    if min_frequency < 1:
        raise ValueError(f"min_frequency must be >= 1, got {min_frequency}")
    word_freq = Counter()
    for text in documents:
        word_freq.update(split_words(text))
    if not word_freq:
        raise ValueError("cannot train a vocab on an empty corpus")

    char_freq = Counter()
    initial_chars: set[str] = set()
    inner_chars: set[str] = set()
    for word, freq in word_freq.items():
        initial_chars.add(word[0])
        inner_chars.update(word[1:])
        for ch in word:
            char_freq[ch] += freq
    kept_chars = {c for c, f in char_freq.items() if f >= min_frequency}
    alphabet = sorted(c for c in initial_chars if c in kept_chars)
    alphabet += sorted("##" + c for c in inner_chars if c in kept_chars)

    floor = len(SPECIAL_TOKENS) + len(alphabet)
    if target_size <= floor:
        raise ValueError(f"target_size {target_size} must exceed specials + alphabet ({floor})")

    pieces = list(SPECIAL_TOKENS) + alphabet
    known = set(pieces)

    # Symbol sequences for mergeable words; rare-char words fall back to [UNK] later.
    seqs: list[tuple[list[str], int]] = []
    for word, freq in sorted(word_freq.items()):
        if all(c in kept_chars for c in word):
            seqs.append(([word[0]] + ["##" + c for c in word[1:]], freq))

    while len(pieces) < target_size:
        pair_freq = Counter()
        for symbols, freq in seqs:
            for i in range(len(symbols) - 1):
                pair_freq[(symbols[i], symbols[i + 1])] += freq
        if not pair_freq:
            break
        best_pair, best_freq = min(pair_freq.items(), key=lambda kv: (-kv[1], kv[0]))
        if best_freq < min_frequency:
            break
        merged = _merge_symbol(*best_pair)
        for symbols, _ in seqs:
            i = 0
            while i < len(symbols) - 1:
                if (symbols[i], symbols[i + 1]) == best_pair:
                    symbols[i:i + 2] = [merged]
                else:
                    i += 1
        if merged not in known:
            pieces.append(merged)
            known.add(merged)
    return Vocab(pieces)
