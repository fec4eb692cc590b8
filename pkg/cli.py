"""Command-line entry point: `python cli.py <command> ...`."""
import json
import logging
import os
import sys
from argparse import ArgumentParser
from pathlib import Path
from typing import List, Optional

from classifiers import ModelKind, load_model, save_model, train_classifier
from corpus import (
    REFERENCE_DISTRIBUTION,
    Label,
    SyntheticSpec,
    class_distribution,
    generate_synthetic_corpus,
    load_corpus,
    proportional_counts,
    save_corpus,
    stratified_split,
    summary_json,
)
from errors import ArtifactMissingError, ConfigError, EmoForgeError
from metrics import confusion, format_percent, weighted_report
from runner import load_experiment_config, run_grid, seed_override
from tagcloud import CloudParams, cloud_for_label, render_cloud
from textprep import prepare
from vectorizer import TfidfConfig

logger = logging.getLogger("EmoForge")

DEFAULT_MODEL_PATH = os.getenv("EMOFORGE_MODEL_PATH", "model.json")


def resolve_seed(seed: int) -> int:
    override = seed_override()
    return seed if override is None else override


def _require(path: Path) -> Path:
    if not path.exists():
        raise ArtifactMissingError(path)
    return path


# --- ingest / split / synth ---

def ingest_parser(subparsers):
    parser = subparsers.add_parser("ingest", help="load a labeled corpus and print its class distribution")
    parser.set_defaults(func=run_ingest)
    parser.add_argument("path")
    parser.add_argument("--format", choices=["csv", "tsv"])
    return parser


def run_ingest(args) -> int:
    print(summary_json(load_corpus(args.path, args.format)))
    return 0


def split_parser(subparsers):
    parser = subparsers.add_parser("split", help="stratified train/test split into DIR/train.csv and DIR/test.csv")
    parser.set_defaults(func=run_split)
    parser.add_argument("path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--fraction", type=float, default=0.7)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--format", choices=["csv", "tsv"])
    return parser


def run_split(args) -> int:
    docs = load_corpus(args.path, args.format)
    split = stratified_split(docs, args.fraction, resolve_seed(args.seed))
    out = Path(args.out)
    save_corpus(split.train, out / "train.csv")
    save_corpus(split.test, out / "test.csv")
    print(json.dumps({
        "train": class_distribution(split.train).to_dict(),
        "test": class_distribution(split.test).to_dict(),
    }))
    return 0


def synth_parser(subparsers):
    parser = subparsers.add_parser("synth", help="write a seeded synthetic corpus CSV")
    parser.set_defaults(func=run_synth)
    parser.add_argument("--out", required=True, help="output CSV path")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--size", type=int, default=3000, help="total documents, in the reference class mix")
    group.add_argument("--counts", help="explicit counts as positive,negative,neutral")
    parser.add_argument("--overlap", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    return parser


def run_synth(args) -> int:
    if args.counts:
        try:
            values = [int(v) for v in args.counts.split(",")]
        except ValueError:
            raise ConfigError(f"--counts must be three integers, got {args.counts!r}")
        if len(values) != len(Label):
            raise ConfigError(f"--counts needs {len(Label)} values, got {len(values)}")
        counts = dict(zip(Label, values))
    else:
        counts = proportional_counts(args.size, REFERENCE_DISTRIBUTION)
    try:
        spec = SyntheticSpec(counts=counts, overlap=args.overlap)
    except ValueError as e:
        raise ConfigError(f"invalid synthetic corpus settings: {e}")
    docs = generate_synthetic_corpus(spec, resolve_seed(args.seed))
    save_corpus(docs, args.out)
    print(summary_json(docs))
    return 0


# --- train / evaluate / predict ---

def train_parser(subparsers):
    parser = subparsers.add_parser("train", help="train one classifier on DIR/train.csv")
    parser.set_defaults(func=run_train)
    parser.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    parser.add_argument("--max-features", type=int, default=10000)
    parser.add_argument("--min-df", type=int, default=1)
    parser.add_argument("--max-df", type=float, default=1.0)
    parser.add_argument("--data", default=".", help="directory holding train.csv (see `split`)")
    parser.add_argument("--out", default=DEFAULT_MODEL_PATH, help="model file to write")
    parser.add_argument("--params", help="JSON object of hyperparameter overrides")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def run_train(args) -> int:
    train_path = _require(Path(args.data) / "train.csv")
    try:
        overrides = json.loads(args.params) if args.params else None
    except json.JSONDecodeError as e:
        raise ConfigError(f"--params is not valid JSON: {e}")
    try:
        tfidf_config = TfidfConfig(min_df=args.min_df, max_df=args.max_df, max_features=args.max_features)
    except ValueError as e:
        raise ConfigError(f"invalid vectorizer settings: {e}")

    docs = prepare(load_corpus(train_path))
    classifier = train_classifier(args.model, docs, tfidf_config, overrides, resolve_seed(args.seed))
    save_model(classifier, args.out)
    if classifier.history is not None:
        classifier.history.to_csv(Path(args.out).with_suffix(".history.csv"))
    print(json.dumps({**classifier.describe(), "path": str(args.out), "train_seconds": classifier.train_seconds}))
    return 0


def evaluate_parser(subparsers):
    parser = subparsers.add_parser("evaluate", help="score a saved model on DIR/test.csv")
    parser.set_defaults(func=run_evaluate)
    parser.add_argument("--model-path", default=DEFAULT_MODEL_PATH)
    parser.add_argument("--data", default=".", help="directory holding test.csv")
    parser.add_argument("--input", help="labeled corpus to score instead of DIR/test.csv")
    return parser


def run_evaluate(args) -> int:
    test_path = _require(Path(args.input) if args.input else Path(args.data) / "test.csv")
    classifier = load_model(_require(Path(args.model_path)))
    docs = prepare(load_corpus(test_path))
    cm = confusion([d.label for d in docs], classifier.predict_tokens(docs))
    report = weighted_report(cm)
    print(json.dumps({
        "classifier": classifier.kind.value,
        **report.as_percentages(),
        "confusion": cm.to_dict(),
        "per_class": report.to_dict()["per_class"],
    }))
    return 0


def predict_parser(subparsers):
    parser = subparsers.add_parser("predict", help="label free text with a saved model")
    parser.set_defaults(func=run_predict)
    parser.add_argument("--model-path", default=DEFAULT_MODEL_PATH)
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--text", help="a single document")
    source.add_argument("--input", help="file with one document per line")
    return parser


def run_predict(args) -> int:
    classifier = load_model(_require(Path(args.model_path)))
    if args.text is not None:
        texts = [args.text]
    else:
        texts = [line for line in _require(Path(args.input)).read_text(encoding="utf-8").splitlines() if line.strip()]
    for label in classifier.predict_texts(texts):
        print(label.text)
    return 0


# --- grid / tagcloud / serve ---

def grid_parser(subparsers):
    parser = subparsers.add_parser("grid", help="run the feature-count x classifier experiment grid")
    parser.set_defaults(func=run_grid_command)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, help="parallel grid cells (overrides the config)")
    parser.add_argument("--seed", type=int, help="base seed for the grid cells (overrides the config)")
    return parser


def run_grid_command(args) -> int:
    config = load_experiment_config(args.config)
    updates = {}
    if args.out:
        updates["out_dir"] = args.out
    if args.workers:
        updates["max_workers"] = args.workers
    if args.seed is not None:
        seed = resolve_seed(args.seed)
        if seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {seed}")
        updates["seed"] = seed
    if updates:
        config = config.model_copy(update=updates)
    result = run_grid(config)
    print((result.out_dir / "results.txt").read_text(encoding="utf-8"), end="")
    return 1 if result.failed else 0


def tagcloud_parser(subparsers):
    parser = subparsers.add_parser("tagcloud", help="word-frequency cloud for one label")
    parser.set_defaults(func=run_tagcloud)
    parser.add_argument("path", help="labeled corpus")
    parser.add_argument("--label", required=True, choices=[label.text for label in Label])
    parser.add_argument("--max-words", type=int, default=50)
    parser.add_argument("--min-freq", type=int, default=2)
    parser.add_argument("--group-similar", action="store_true")
    parser.add_argument("--keep-case", action="store_true", help="do not lowercase words")
    parser.add_argument("--keep-stopwords", action="store_true")
    parser.add_argument("--format", choices=["text", "html"], default="text")
    parser.add_argument("--out", help="write to this file instead of standard output")
    return parser


def run_tagcloud(args) -> int:
    try:
        params = CloudParams(
            max_words=args.max_words,
            min_freq=args.min_freq,
            lowercase=not args.keep_case,
            group_similar=args.group_similar,
            **({"exclude": frozenset()} if args.keep_stopwords else {}),
        )
    except ValueError as e:
        raise ConfigError(f"invalid tag cloud settings: {e}")
    label = Label.parse(args.label)
    entries = cloud_for_label(prepare(load_corpus(args.path)), label, params)
    rendered = render_cloud(entries, args.format, title=f"{label.text.capitalize()} tweets")
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
        logger.info(f"Wrote {len(entries)}-word cloud to {args.out}")
    else:
        print(rendered)
    return 0


def serve_parser(subparsers):
    parser = subparsers.add_parser("serve", help="serve a saved model over HTTP and MCP")
    parser.set_defaults(func=run_serve)
    parser.add_argument("--model-path", default=DEFAULT_MODEL_PATH)
    parser.add_argument("--host", default="0.0.0.0")
    parser.add_argument("--port", type=int, default=8000)
    return parser


def run_serve(args) -> int:
    import uvicorn

    os.environ["EMOFORGE_MODEL_PATH"] = str(args.model_path)
    import main as service

    service.MODEL_PATH = str(args.model_path)
    uvicorn.run(service.app, host=args.host, port=args.port)
    return 0


def build_parser() -> ArgumentParser:
    parser = ArgumentParser("emoforge", description="Emotion classification toolkit for tweets")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings and errors only")

    subparsers = parser.add_subparsers(required=True, dest="command")
    ingest_parser(subparsers)
    split_parser(subparsers)
    synth_parser(subparsers)
    train_parser(subparsers)
    evaluate_parser(subparsers)
    predict_parser(subparsers)
    grid_parser(subparsers)
    tagcloud_parser(subparsers)
    serve_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level)
    logger.setLevel(level)

    try:
        return args.func(args)
    except (EmoForgeError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
