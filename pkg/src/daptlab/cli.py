"""Command-line pipeline runner.

One subcommand per pipeline stage. Exit codes: 0 success, 1 validation error
(single-line `error: <reason>` on stderr), 2 runtime failure. All artifacts
are written atomically into the output directory; re-running a command with
the same config and seed reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import build_corpus, compute_stats, read_corpus, write_corpus
from .evaluate import (SIMILAR, build_pairs, cluster_eval, evaluate_pairs,
                       forgetting_report, load_pairs, model_cloze_predictor,
                       render_cluster_report, render_similarity_report)
from .fileio import atomic_write_text, read_jsonl
from .finetune import (FinetuneConfig, LabeledTextDataset, TaggedTokenDataset,
                       finetune_classify, finetune_tag)
from .model import ModelConfig, init_params, load_checkpoint, save_checkpoint
from .pretrain import (TrainConfig, TrainingDiverged, corpus_token_count,
                       dapt, train)
from .tokenizer import Vocab, train_vocab


class CliError(ValueError):
    """Input or configuration problem; reported on stderr, exit code 1."""


# ---------------------------------------------------------------------------
# configuration

def load_config(path: str | None, overrides: list[str]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    if path is not None:
        if not Path(path).is_file():
            raise CliError(f"config file not found: {path}")
        cp.read(path, encoding="utf-8")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise CliError(f"bad --set override {item!r} (expected section.key=value)")
        section, option = key.rsplit(".", 1)  # sections may be dotted (train.base)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option.strip(), value.strip())
    return cp


def cfg_get(cp, section: str, key: str, default, cast=str):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise CliError(f"bad config value [{section}] {key} = {raw!r}") from None


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in raw.replace(",", " ").split())


def cfg_path(cp, key: str, flag_value, what: str):
    """Resolve an input path from a flag or [paths]; must exist."""
    value = flag_value if flag_value is not None else cfg_get(cp, "paths", key, None)
    if value is None:
        raise CliError(f"{what} not configured (set [paths] {key} or pass the flag)")
    path = Path(value)
    if not path.is_file():
        raise CliError(f"{what} not found: {path}")
    return path


def out_dir_of(args, cp) -> Path:
    out = args.out if args.out is not None else cfg_get(cp, "paths", "out", "runs")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def model_config_from(cp, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        num_layers=cfg_get(cp, "model", "num_layers", 4, int),
        hidden=cfg_get(cp, "model", "hidden", 64, int),
        num_heads=cfg_get(cp, "model", "num_heads", 4, int),
        ffn_dim=cfg_get(cp, "model", "ffn_dim", 256, int),
        vocab_size=vocab_size,
        max_seq=cfg_get(cp, "model", "max_seq", 128, int),
        dropout=cfg_get(cp, "model", "dropout", 0.1, float),
    )


def train_config_from(cp, section: str, default_lr: float, seed_override) -> TrainConfig:
    seed = seed_override if seed_override is not None else cfg_get(cp, section, "seed", 0, int)
    return TrainConfig(
        peak_lr=cfg_get(cp, section, "peak_lr", default_lr, float),
        epochs=cfg_get(cp, section, "epochs", 30, int),
        batch_size=cfg_get(cp, section, "batch_size", 64, int),
        weight_decay=cfg_get(cp, section, "weight_decay", 0.01, float),
        warmup_steps=cfg_get(cp, section, "warmup_steps", 100, int),
        seed=seed,
        max_seq=cfg_get(cp, "model", "max_seq", 128, int),
    )


def _load_texts(path: Path) -> list[str]:
    return [doc.text for doc in read_corpus(path)]


def _load_vocab(cp, flag_value) -> Vocab:
    return Vocab.load(cfg_path(cp, "vocab", flag_value, "vocab file"))


def _load_model(cp, flag_value, vocab: Vocab):
    path = cfg_path(cp, "checkpoint", flag_value, "checkpoint")
    params, config = load_checkpoint(path)
    if config.vocab_size != len(vocab.pieces):
        raise CliError(f"vocab size {len(vocab.pieces)} does not match checkpoint "
                       f"vocab_size {config.vocab_size}")
    return params, config, path


def _model_name(args, path: Path) -> str:
    return args.model_name if args.model_name else path.stem


def _read_records(path: Path, what: str) -> list[dict]:
    records = []
    for lineno, rec in read_jsonl(path):
        if rec is None:
            raise CliError(f"{what} line {lineno}: malformed JSON")
        if not isinstance(rec, dict):
            raise CliError(f"{what} line {lineno}: expected an object")
        records.append(rec)
    if not records:
        raise CliError(f"{what} is empty: {path}")
    return records


# ---------------------------------------------------------------------------
# commands

def cmd_corpus_build(args, cp) -> int:
    dumps = [Path(p) for p in args.dumps] if args.dumps else None
    if dumps is None:
        raw = cfg_get(cp, "paths", "dumps", None)
        if raw is None:
            raise CliError("no dump files given (positional args or [paths] dumps)")
        dumps = [Path(p) for p in raw.split()]
    for dump in dumps:
        if not dump.is_file():
            raise CliError(f"dump file not found: {dump}")
    out = out_dir_of(args, cp)
    documents, report, skipped = build_corpus(dumps)
    write_corpus(documents, out / "corpus.jsonl")
    atomic_write_text(out / "drop_report.tsv", report.render())
    print(f"kept {len(documents)} documents ({sum(report.dropped.values())} dropped, "
          f"{skipped} skipped lines)")
    print(f"wrote {out / 'corpus.jsonl'} and {out / 'drop_report.tsv'}")
    return 0


def cmd_corpus_stats(args, cp) -> int:
    out = out_dir_of(args, cp)
    documents = read_corpus(cfg_path(cp, "corpus", args.corpus, "corpus file"))
    vocab = _load_vocab(cp, args.vocab)
    table = compute_stats(documents, vocab).render()
    atomic_write_text(out / "corpus_stats.tsv", table)
    print(table, end="")
    print(f"wrote {out / 'corpus_stats.tsv'}")
    return 0


def cmd_tokenizer_train(args, cp) -> int:
    out = out_dir_of(args, cp)
    texts = _load_texts(cfg_path(cp, "corpus", args.corpus, "corpus file"))
    vocab = train_vocab(
        texts,
        target_size=cfg_get(cp, "tokenizer", "vocab_size", 800, int),
        min_frequency=cfg_get(cp, "tokenizer", "min_frequency", 2, int),
    )
    vocab.save(out / "vocab.txt")
    print(f"trained vocab of {len(vocab.pieces)} pieces")
    print(f"wrote {out / 'vocab.txt'}")
    return 0


def cmd_pretrain(args, cp) -> int:
    out = out_dir_of(args, cp)
    vocab = _load_vocab(cp, args.vocab)
    texts = _load_texts(cfg_path(cp, "corpus", args.corpus, "corpus file"))
    config = model_config_from(cp, len(vocab.pieces))
    train_config = train_config_from(cp, "train.base", 1e-4, args.seed)
    params = init_params(config, train_config.seed)
    log = train(config, params, texts, vocab, train_config)
    save_checkpoint(params, config, out / f"{args.name}.ckpt")
    atomic_write_text(out / f"{args.name}_loss.tsv", log.render())
    final = f"{log.entries[-1][1]:.6f}" if log.entries else "n/a"
    print(f"trained {len(log.entries)} steps, final loss {final}")
    print(f"wrote {out / (args.name + '.ckpt')} and {out / (args.name + '_loss.tsv')}")
    return 0


def cmd_dapt(args, cp) -> int:
    out = out_dir_of(args, cp)
    vocab = _load_vocab(cp, args.vocab)
    domain_texts = _load_texts(cfg_path(cp, "domain_corpus", args.corpus, "domain corpus"))
    base_params, config, _ = _load_model(cp, args.checkpoint, vocab)
    base_config = train_config_from(cp, "train.base", 1e-4, None)
    dapt_config = train_config_from(cp, "train.dapt", 2e-5, args.seed)
    base_tokens = None
    base_corpus = cfg_get(cp, "paths", "corpus", None)
    if base_corpus is not None and Path(base_corpus).is_file():
        base_tokens = corpus_token_count(_load_texts(Path(base_corpus)), vocab)
    adapted, log = dapt(config, base_params, domain_texts, vocab, dapt_config,
                        base_config, base_token_count=base_tokens)
    save_checkpoint(adapted, config, out / f"{args.name}.ckpt")
    atomic_write_text(out / f"{args.name}_loss.tsv", log.render())
    final = f"{log.entries[-1][1]:.6f}" if log.entries else "n/a"
    print(f"adapted for {len(log.entries)} steps, final loss {final}")
    print(f"wrote {out / (args.name + '.ckpt')} and {out / (args.name + '_loss.tsv')}")
    return 0


def cmd_eval_cluster(args, cp) -> int:
    out = out_dir_of(args, cp)
    vocab = _load_vocab(cp, args.vocab)
    params, config, ckpt = _load_model(cp, args.checkpoint, vocab)
    texts = _load_texts(cfg_path(cp, "eval_corpus", args.corpus, "evaluation corpus"))
    k_min = cfg_get(cp, "eval", "k_min", 5, int)
    k_max = cfg_get(cp, "eval", "k_max", 9, int)
    if k_max < k_min:
        raise CliError(f"bad k range: k_min {k_min} > k_max {k_max}")
    seed = args.seed if args.seed is not None else cfg_get(cp, "eval", "seed", 0, int)
    runs = cluster_eval(config, params, vocab, texts,
                        k_values=range(k_min, k_max + 1), seed=seed)
    name = _model_name(args, ckpt)
    table = render_cluster_report(name, runs)
    atomic_write_text(out / f"cluster_{name}.tsv", table)
    print(table, end="")
    print(f"wrote {out / ('cluster_' + name + '.tsv')}")
    return 0


def cmd_eval_similarity(args, cp) -> int:
    out = out_dir_of(args, cp)
    vocab = _load_vocab(cp, args.vocab)
    params, config, ckpt = _load_model(cp, args.checkpoint, vocab)
    pairs = load_pairs(cfg_path(cp, "pairs", args.pairs, "word pair file"))
    seed = args.seed if args.seed is not None else cfg_get(cp, "eval", "seed", 0, int)
    if all(pair.label == SIMILAR for pair in pairs):
        n_pos = len(pairs)
        pairs = build_pairs(pairs, np.random.default_rng(seed))
        print(f"balanced {n_pos} positive pairs with {len(pairs) - n_pos} "
              f"sampled negatives")
    predictor = model_cloze_predictor(config, params, vocab)
    f1, predictions = evaluate_pairs(pairs, predictor)
    name = _model_name(args, ckpt)
    table = render_similarity_report(name, f1, predictions)
    atomic_write_text(out / f"similarity_{name}.tsv", table)
    print(f"{name}\tf1={f1:.6f}")
    print(f"wrote {out / ('similarity_' + name + '.tsv')}")
    return 0


def _finetune_common(args, cp):
    out = out_dir_of(args, cp)
    vocab = _load_vocab(cp, args.vocab)
    params, config, ckpt = _load_model(cp, args.checkpoint, vocab)
    if args.seed is not None:
        seeds = tuple(range(args.seed, args.seed + 5))
    else:
        seeds = cfg_get(cp, "finetune", "seeds", (0, 1, 2, 3, 4), _int_list)
    ft = FinetuneConfig(
        lr=cfg_get(cp, "finetune", "lr", 2e-5, float),
        epochs=cfg_get(cp, "finetune", "epochs", 4, int),
        batch_size=cfg_get(cp, "finetune", "batch_size", 16, int),
        weight_decay=cfg_get(cp, "finetune", "weight_decay", 0.01, float),
        max_seq=cfg_get(cp, "model", "max_seq", 128, int),
    )
    return out, vocab, params, config, ckpt, seeds, ft


def cmd_finetune_classify(args, cp) -> int:
    out, vocab, params, config, ckpt, seeds, ft = _finetune_common(args, cp)
    data_path = cfg_path(cp, "classify_data", args.data, "classification data")
    records = _read_records(data_path, "classification data")
    dataset = LabeledTextDataset.from_records(
        records,
        positive_label=cfg_get(cp, "finetune", "positive_label", None),
        seed=cfg_get(cp, "finetune", "split_seed", 0, int),
    )
    task = args.task if args.task else data_path.stem
    name = _model_name(args, ckpt)
    report = finetune_classify(config, params, vocab, dataset, seeds, ft,
                               task=task, model_name=name)
    atomic_write_text(out / f"classify_{task}_{name}.tsv", report.render())
    print(f"{task}\t{name}\tf1={report.formatted}")
    print(f"wrote {out / ('classify_' + task + '_' + name + '.tsv')}")
    return 0


def cmd_finetune_tag(args, cp) -> int:
    out, vocab, params, config, ckpt, seeds, ft = _finetune_common(args, cp)
    data_path = cfg_path(cp, "tag_data", args.data, "tagging data")
    records = _read_records(data_path, "tagging data")
    dataset = TaggedTokenDataset.from_records(
        records, seed=cfg_get(cp, "finetune", "split_seed", 0, int))
    task = args.task if args.task else data_path.stem
    name = _model_name(args, ckpt)
    report = finetune_tag(config, params, vocab, dataset, seeds, ft,
                          task=task, model_name=name)
    atomic_write_text(out / f"tag_{task}_{name}.tsv", report.render())
    print(f"{task}\t{name}\tspan f1={report.formatted}")
    print(f"wrote {out / ('tag_' + task + '_' + name + '.tsv')}")
    return 0


def _read_scores(path: Path, what: str) -> dict[str, float]:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or not data:
        raise CliError(f"{what} must be a non-empty JSON object of task -> score")
    scores = {}
    for task, value in data.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise CliError(f"{what}: score for task {task!r} is not a number")
        scores[str(task)] = float(value)
    return scores


def cmd_forgetting(args, cp) -> int:
    out = out_dir_of(args, cp)
    base = _read_scores(cfg_path(cp, "base_scores", args.base, "base score file"),
                        "base score file")
    adapted = _read_scores(
        cfg_path(cp, "adapted_scores", args.adapted, "adapted score file"),
        "adapted score file")
    report = forgetting_report(base, adapted)
    atomic_write_text(out / "forgetting.tsv", report.render())
    print(report.render(), end="")
    print(f"wrote {out / 'forgetting.tsv'}")
    return 0


# ---------------------------------------------------------------------------
# consolidated report

def _mark_best(cells: list[str], means: list[float | None]) -> list[str]:
    present = [m for m in means if m is not None]
    if len(present) < 2:
        return cells
    best = max(present)
    return [cell + "*" if mean is not None and mean == best else cell
            for cell, mean in zip(cells, means)]


def _merge_grid(rows: list[str], columns: list[str],
                cells: dict[tuple[str, str], tuple[str, float]],
                row_label: str) -> list[str]:
    lines = [row_label + "\t" + "\t".join(columns)]
    mark = len(columns) >= 2
    for row in rows:
        text, means = [], []
        for column in columns:
            if (row, column) in cells:
                value, mean = cells[(row, column)]
                text.append(value)
                means.append(mean)
            else:
                text.append("-")
                means.append(None)
        if mark:
            text = _mark_best(text, means)
        lines.append(row + "\t" + "\t".join(text))
    return lines


def _parse_table(path: Path) -> list[list[str]]:
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line]
    return [line.split("\t") for line in lines]


def _collect_cells(entries, what: str):
    """entries: (row, column, display, mean, source). Errors on duplicates."""
    cells: dict[tuple[str, str], tuple[str, float]] = {}
    sources: dict[tuple[str, str], str] = {}
    duplicates = []
    for row, column, display, mean, source in entries:
        key = (row, column)
        if key in cells:
            duplicates.append(f"{what} row {row!r} model {column!r} "
                              f"(files {sources[key]}, {source})")
            continue
        cells[key] = (display, mean)
        sources[key] = source
    if duplicates:
        raise CliError("conflicting duplicate rows: " + "; ".join(duplicates))
    return cells


def _ordered(values) -> list[str]:
    return sorted(dict.fromkeys(values))


def cmd_report(args, cp) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise CliError(f"run directory not found: {run_dir}")
    cluster_files = sorted(run_dir.glob("cluster_*.tsv"))
    similarity_files = sorted(run_dir.glob("similarity_*.tsv"))
    classify_files = sorted(run_dir.glob("classify_*.tsv"))
    tag_files = sorted(run_dir.glob("tag_*.tsv"))
    forgetting_file = run_dir / "forgetting.tsv"
    if not (cluster_files or similarity_files or classify_files or tag_files
            or forgetting_file.is_file()):
        raise CliError(f"no result files found in {run_dir} (expected cluster_*.tsv, "
                       "similarity_*.tsv, classify_*.tsv, tag_*.tsv, forgetting.tsv)")

    sections: list[str] = []

    if cluster_files:
        entries = []
        for path in cluster_files:
            for row in _parse_table(path)[1:]:
                if len(row) != 3:
                    raise CliError(f"malformed cluster report {path.name}: {row!r}")
                model, k, value = row
                entries.append((k, model, value, float(value), path.name))
        cells = _collect_cells(entries, "clustering k")
        ks = sorted({key[0] for key in cells}, key=int)
        models = _ordered(key[1] for key in cells)
        lines = _merge_grid(ks, models, cells, "k")
        sections.append("# clustering (silhouette)\n" + "\n".join(lines))

    if similarity_files:
        entries = []
        for path in similarity_files:
            table = _parse_table(path)
            if len(table) < 2 or len(table[1]) != 2:
                raise CliError(f"malformed similarity report {path.name}")
            model, value = table[1]
            entries.append(("f1", model, value, float(value), path.name))
        cells = _collect_cells(entries, "similarity")
        models = _ordered(key[1] for key in cells)
        lines = _merge_grid(["f1"], models, cells, "metric")
        sections.append("# word similarity (cloze)\n" + "\n".join(lines))

    for title, files, what in (("classification", classify_files, "classification task"),
                               ("tagging", tag_files, "tagging task")):
        if not files:
            continue
        entries = []
        for path in files:
            table = _parse_table(path)
            if len(table) < 2 or len(table[1]) < 6:
                raise CliError(f"malformed run report {path.name}")
            row = table[1]
            task, model, metric, mean, formatted = (row[0], row[1], row[2],
                                                    row[3], row[5])
            entries.append((f"{task} ({metric})", model, formatted,
                            float(mean), path.name))
        cells = _collect_cells(entries, what)
        tasks = _ordered(key[0] for key in cells)
        models = _ordered(key[1] for key in cells)
        lines = _merge_grid(tasks, models, cells, "task")
        sections.append(f"# {title} (mean (std) over seeds)\n" + "\n".join(lines))

    if forgetting_file.is_file():
        sections.append("# forgetting\n" + forgetting_file.read_text(encoding="utf-8").rstrip())

    text = "\n\n".join(sections) + "\n"
    atomic_write_text(run_dir / "report.txt", text)
    print(text, end="")
    print(f"wrote {run_dir / 'report.txt'}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    """Usage problems exit 1 (not argparse's default 2) with usage text."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(sub):
    sub.add_argument("--config", help="INI config file")
    sub.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                     help="override a config value (repeatable)")
    sub.add_argument("--out", help="output directory (default: [paths] out or ./runs)")
    sub.add_argument("--seed", type=int, help="override the command's seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="daptlab",
                     description="Desk-scale domain-adaptive pretraining pipeline.")
    parser.add_argument("--version", action="version", version=f"daptlab {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="command")

    sub = commands.add_parser("corpus-build", help="filter/dedupe raw dumps into a corpus")
    sub.add_argument("dumps", nargs="*", help="raw JSONL dump files")
    _add_common(sub)
    sub.set_defaults(func=cmd_corpus_build)

    sub = commands.add_parser("corpus-stats", help="per-source token statistics table")
    sub.add_argument("--corpus", help="curated corpus JSONL")
    sub.add_argument("--vocab", help="vocab file")
    _add_common(sub)
    sub.set_defaults(func=cmd_corpus_stats)

    sub = commands.add_parser("tokenizer-train", help="train a WordPiece vocab")
    sub.add_argument("--corpus", help="curated corpus JSONL")
    _add_common(sub)
    sub.set_defaults(func=cmd_tokenizer_train)

    sub = commands.add_parser("pretrain", help="train a base model from scratch")
    sub.add_argument("--corpus", help="curated corpus JSONL")
    sub.add_argument("--vocab", help="vocab file")
    sub.add_argument("--name", default="base", help="checkpoint name (default base)")
    _add_common(sub)
    sub.set_defaults(func=cmd_pretrain)

    sub = commands.add_parser("dapt", help="continue pretraining on a domain corpus")
    sub.add_argument("--corpus", help="domain corpus JSONL")
    sub.add_argument("--vocab", help="vocab file")
    sub.add_argument("--checkpoint", help="base checkpoint")
    sub.add_argument("--name", default="dapt", help="checkpoint name (default dapt)")
    _add_common(sub)
    sub.set_defaults(func=cmd_dapt)

    sub = commands.add_parser("eval-cluster", help="k-means silhouette over embeddings")
    sub.add_argument("--corpus", help="evaluation corpus JSONL")
    sub.add_argument("--vocab", help="vocab file")
    sub.add_argument("--checkpoint", help="model checkpoint")
    sub.add_argument("--model-name", help="name in the report (default: checkpoint stem)")
    _add_common(sub)
    sub.set_defaults(func=cmd_eval_cluster)

    sub = commands.add_parser("eval-similarity", help="zero-shot cloze word similarity")
    sub.add_argument("--pairs", help="word pair JSONL")
    sub.add_argument("--vocab", help="vocab file")
    sub.add_argument("--checkpoint", help="model checkpoint")
    sub.add_argument("--model-name", help="name in the report (default: checkpoint stem)")
    _add_common(sub)
    sub.set_defaults(func=cmd_eval_similarity)

    sub = commands.add_parser("finetune-classify", help="5-seed classification fine-tune")
    sub.add_argument("--data", help="labeled JSONL (text/label)")
    sub.add_argument("--vocab", help="vocab file")
    sub.add_argument("--checkpoint", help="model checkpoint")
    sub.add_argument("--task", help="task name (default: data file stem)")
    sub.add_argument("--model-name", help="name in the report (default: checkpoint stem)")
    _add_common(sub)
    sub.set_defaults(func=cmd_finetune_classify)

    sub = commands.add_parser("finetune-tag", help="5-seed IOB tagging fine-tune")
    sub.add_argument("--data", help="tagged JSONL (tokens/tags)")
    sub.add_argument("--vocab", help="vocab file")
    sub.add_argument("--checkpoint", help="model checkpoint")
    sub.add_argument("--task", help="task name (default: data file stem)")
    sub.add_argument("--model-name", help="name in the report (default: checkpoint stem)")
    _add_common(sub)
    sub.set_defaults(func=cmd_finetune_tag)

    sub = commands.add_parser("forgetting", help="base vs adapted score deltas")
    sub.add_argument("--base", help="JSON file of task -> base score")
    sub.add_argument("--adapted", help="JSON file of task -> adapted score")
    _add_common(sub)
    sub.set_defaults(func=cmd_forgetting)

    sub = commands.add_parser("report", help="merge run artifacts into one summary")
    sub.add_argument("run_dir", help="directory with result files")
    _add_common(sub)
    sub.set_defaults(func=cmd_report)

    return parser


def _single_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return 1
    try:
        cp = load_config(args.config, args.set)
        return args.func(args, cp)
    except TrainingDiverged as exc:
        print(f"error: {_single_line(exc)}", file=sys.stderr)
        return 2
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {_single_line(exc)}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a runtime failure
        print(f"error: unexpected failure: {_single_line(repr(exc))}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
