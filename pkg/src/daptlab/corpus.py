"""Corpus ingestion, per-source filtering, exact dedupe, and token statistics.

Dumps are JSON Lines with fields id/source/text. Filtering is data-driven:
each source kind gets at most one FilterRule (minimum character length and/or
a keyword allowlist matched on whole lowercased word tokens).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import fileio
from .tokenizer import Vocab, count_pieces, split_words

SOURCES = ("blog", "arxiv", "nvd", "twitter")

# Whole-token keyword allowlist for the tweet stream.
TWITTER_KEYWORDS = frozenset({
    "infosec", "security", "threat", "vulnerability", "cyber", "cybersec",
    "infrasec", "netsec", "hacking", "siem", "soc", "offsec", "osing",
    "bugbounty",
})

# More than this share of malformed lines marks a dump as corrupt.
MAX_MALFORMED_FRACTION = 0.10


@dataclass(frozen=True)
class Document:
    id: str
    source: str
    text: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}; expected one of {SOURCES}")

    @property
    def char_len(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class FilterRule:
    """Keep a document of ``source`` iff it passes every set criterion."""

    source: str
    min_chars: int = 0
    keywords: frozenset[str] | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}; expected one of {SOURCES}")
        if self.min_chars < 0:
            raise ValueError("min_chars must be >= 0")
        if self.keywords is not None and not self.keywords:
            raise ValueError("keyword rule must list at least one keyword")

    def keeps(self, doc: Document) -> bool:
        if doc.char_len < self.min_chars:
            return False
        if self.keywords is not None:
            words = set(split_words(doc.text))
            if not words & self.keywords:
                return False
        return True


def default_rules() -> list[FilterRule]:
    """Shipped rule set: length floors for blog/arxiv, keyword gate for twitter,
    nvd passed through untouched."""
    return [
        FilterRule("blog", min_chars=300),
        FilterRule("arxiv", min_chars=3000),
        FilterRule("twitter", keywords=TWITTER_KEYWORDS),
        FilterRule("nvd"),
    ]


@dataclass
class IngestResult:
    documents: list[Document]
    skipped: int


def ingest(path) -> IngestResult:
    """Read one dump in file order; malformed lines are counted, never silent."""
    documents: list[Document] = []
    attempts = 0
    skipped = 0
    for _, rec in fileio.read_jsonl(path):
        attempts += 1
        if not isinstance(rec, dict):
            skipped += 1
            continue
        doc_id, source, text = rec.get("id"), rec.get("source"), rec.get("text")
        if not isinstance(doc_id, str) or not isinstance(text, str) or source not in SOURCES:
            skipped += 1
            continue
        documents.append(Document(id=doc_id, source=source, text=text))
    if attempts and skipped / attempts > MAX_MALFORMED_FRACTION:
        raise ValueError(f"corrupt dump {path}: {skipped}/{attempts} lines malformed")
    return IngestResult(documents=documents, skipped=skipped)


@dataclass
class DropReport:
    dropped: dict[str, int] = field(default_factory=dict)
    kept: int = 0

    def render(self) -> str:
        lines = ["source\tdropped"]
        lines += [f"{src}\t{n}" for src, n in sorted(self.dropped.items())]
        lines.append(f"kept\t{self.kept}")
        return "\n".join(lines) + "\n"


def apply_filters(documents, rules) -> tuple[list[Document], DropReport]:
    """Apply at most one rule per source; sources without a rule pass through."""
    by_source: dict[str, FilterRule] = {}
    for rule in rules:
        if rule.source in by_source:
            raise ValueError(f"duplicate filter rule for source {rule.source!r}")
        by_source[rule.source] = rule
    kept: list[Document] = []
    report = DropReport(dropped={src: 0 for src in by_source})
    for doc in documents:
        rule = by_source.get(doc.source)
        if rule is None or rule.keeps(doc):
            kept.append(doc)
        else:
            report.dropped[doc.source] += 1
    report.kept = len(kept)
    return kept, report


def dedupe(documents) -> list[Document]:
    """Drop exact text duplicates, keeping the first occurrence."""
    seen: set[str] = set()
    kept: list[Document] = []
    for doc in documents:
        if doc.text in seen:
            continue
        seen.add(doc.text)
        kept.append(doc)
    return kept


def build_corpus(paths, rules=None) -> tuple[list[Document], DropReport, int]:
    """Ingest dumps in sorted path order, filter, dedupe; returns skip count too."""
    if rules is None:
        rules = default_rules()
    merged: list[Document] = []
    skipped = 0
    for path in sorted(str(p) for p in paths):
        result = ingest(path)
        merged.extend(result.documents)
        skipped += result.skipped
    seen_ids: dict[str, str] = {}
    for doc in merged:
        if doc.id in seen_ids:
            raise ValueError(f"duplicate document id {doc.id!r} across dumps")
        seen_ids[doc.id] = doc.source
    kept, report = apply_filters(merged, rules)
    return dedupe(kept), report, skipped


@dataclass(frozen=True)
class SourceStats:
    min: int
    max: int
    sum: int
    median: int
    mean: float
    entries: int


def _stats_of(counts: list[int]) -> SourceStats:
    if not counts:
        return SourceStats(0, 0, 0, 0, 0.0, 0)
    ordered = sorted(counts)
    n = len(ordered)
    # Even-sized samples take the lower middle value.
    return SourceStats(
        min=ordered[0],
        max=ordered[-1],
        sum=sum(ordered),
        median=ordered[(n - 1) // 2],
        mean=sum(ordered) / n,
        entries=n,
    )


@dataclass
class CorpusStats:
    per_source: dict[str, SourceStats]
    total: SourceStats

    def render(self) -> str:
        lines = ["Source\tMin\tMax\tSum\tMedian\tMean\tEntries"]
        for name in (*SOURCES, "total"):
            s = self.total if name == "total" else self.per_source[name]
            lines.append(f"{name}\t{s.min}\t{s.max}\t{s.sum}\t{s.median}"
                         f"\t{s.mean:.4f}\t{s.entries}")
        return "\n".join(lines) + "\n"


def compute_stats(documents, vocab: Vocab) -> CorpusStats:
    """Tokenizer-based length stats (non-special WordPiece counts) per source."""
    counts: dict[str, list[int]] = {src: [] for src in SOURCES}
    everything: list[int] = []
    for doc in documents:
        n = count_pieces(doc.text, vocab)
        counts[doc.source].append(n)
        everything.append(n)
    return CorpusStats(
        per_source={src: _stats_of(counts[src]) for src in SOURCES},
        total=_stats_of(everything),
    )


def write_corpus(documents, path) -> None:
    fileio.write_jsonl(path, ({"id": d.id, "source": d.source, "text": d.text}
                              for d in documents))


def read_corpus(path) -> list[Document]:
    result = ingest(path)
    if result.skipped:
        raise ValueError(f"corpus file {path} has {result.skipped} malformed lines")
    return result.documents
