"""Corpus curation walkthrough: raw dumps in, curated corpus and stats out.

Builds two fake JSONL dumps (with the kinds of junk real dumps contain),
runs the filter/dedupe pipeline, then trains a WordPiece vocabulary on the
survivors and shows a few greedy segmentations.
"""

import json
import tempfile
from pathlib import Path

from daptlab.corpus import build_corpus, compute_stats, write_corpus
from daptlab.tokenizer import train_vocab, wordpiece

LONG_BLOG = ("we traced the intrusion to a phishing mail that dropped a loader, "
             "the loader pulled a second stage from a rented server and began "
             "enumerating shares. " * 4)
LONG_PAPER = ("abstract. we study detection of lateral movement in enterprise "
              "networks using graph features over authentication events. " * 30)

records = [
    {"id": "b1", "source": "blog", "text": LONG_BLOG},
    {"id": "b2", "source": "blog", "text": "short teaser post"},      # under 300 chars
    {"id": "a1", "source": "arxiv", "text": LONG_PAPER},
    {"id": "a2", "source": "arxiv", "text": "withdrawn."},            # under 3000 chars
    {"id": "n1", "source": "nvd", "text": "buffer overflow in the parser allows remote code execution"},
    {"id": "n2", "source": "nvd", "text": "buffer overflow in the parser allows remote code execution"},  # exact dup
    {"id": "n3", "source": "nvd", "text": "improper input validation in the upload handler"},
    {"id": "n4", "source": "nvd", "text": "use after free in the scheduler leads to privilege escalation"},
    {"id": "n5", "source": "nvd", "text": "path traversal in the archive extractor discloses files"},
    {"id": "n6", "source": "nvd", "text": "race condition in the session cache allows token reuse"},
    {"id": "n7", "source": "nvd", "text": "integer overflow in the length field crashes the daemon"},
    {"id": "n8", "source": "nvd", "text": "hardcoded credentials in the management interface"},
    {"id": "t1", "source": "twitter", "text": "new vulnerability drops tomorrow"},
    {"id": "t2", "source": "twitter", "text": "lunch was great"},     # no keyword
]

with tempfile.TemporaryDirectory() as tmp:
    dump_a = Path(tmp) / "dump_a.jsonl"
    dump_b = Path(tmp) / "dump_b.jsonl"
    dump_a.write_text("".join(json.dumps(r) + "\n" for r in records[:4]))
    # one malformed line; the pipeline counts it instead of failing silently
    dump_b.write_text("".join(json.dumps(r) + "\n" for r in records[4:]) + "{oops\n")

    documents, report, skipped = build_corpus([dump_a, dump_b])
    print(f"ingested {len(records)} records from 2 dumps, "
          f"{skipped} malformed line(s) skipped")
    print()
    print(report.render())
    print(f"after exact dedupe: {len(documents)} documents")
    for doc in documents:
        print(f"  {doc.id:>2} [{doc.source}] {doc.text[:60]}...")

    corpus_path = Path(tmp) / "corpus.jsonl"
    write_corpus(documents, corpus_path)
    print(f"\nwrote {corpus_path.name} ({corpus_path.stat().st_size} bytes)")

    texts = [d.text for d in documents]
    vocab = train_vocab(texts, target_size=120, min_frequency=1)
    print(f"\ntrained WordPiece vocab: {len(vocab)} pieces")
    for word in ("overflow", "phishing", "authentication", "zzzgremlin"):
        pieces = wordpiece(word, vocab)
        note = pieces if pieces is not None else "unsegmentable -> [UNK] at encode time"
        print(f"  {word!r:>18} -> {note}")

    print("\nper-source token statistics:")
    print(compute_stats(documents, vocab).render())
