"""Command-line entry point: prepare, synth, train, eval, viz, params.

Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import attention, treelstm
from .doctree import (
    DepthSpec,
    ParseError,
    StructureError,
    parse_json_tree,
    parse_sectioned_text,
    passes_length_filter,
    read_corpus,
    synth_corpus,
    synth_vocab,
    write_corpus,
)
from .embeddings import EmbeddingStore, FormatError, load_word2vec_text, random_store
from .metrics import dumps_report
from .models import MODEL_KINDS, CheckpointError, Model, count_for
from .numerics import NumericError, make_rng
from .training import (
    ConfigError,
    TrainConfig,
    env_overrides,
    evaluate,
    prepare,
    read_config_file,
    split_indices,
    train,
)

log = logging.getLogger("structree")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# prepare


def _percentiles(values):
    if not values:
        return {}
    arr = np.asarray(values, dtype=np.float64)
    return {str(q): float(np.percentile(arr, q)) for q in (25, 50, 75)}


def cmd_prepare(args) -> int:
    root = Path(args.input)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if class_dirs:
        labelled = [(i, f) for i, d in enumerate(class_dirs) for f in sorted(d.iterdir()) if f.is_file()]
        class_names = [d.name for d in class_dirs]
    else:
        labelled = [(0, f) for f in sorted(root.iterdir()) if f.is_file()]
        class_names = None

    trees, dropped, failed = [], 0, 0
    for label, path in labelled:
        try:
            if args.format == "json":
                tree = parse_json_tree(path.read_bytes())
            else:
                tree = parse_sectioned_text(path.read_text(encoding="utf-8"), label=label, granularity=args.granularity)
        except (ParseError, StructureError, UnicodeDecodeError) as exc:
            log.warning("skipping %s: %s", path, exc)
            failed += 1
            continue
        if args.filter and not passes_length_filter(tree.stats()):
            dropped += 1
            continue
        trees.append(tree)
    if not trees:
        raise DataError("no documents survived parsing and filtering")
    write_corpus(trees, args.out)

    stats = [t.stats() for t in trees]
    per_class: dict[str, int] = {}
    for t in trees:
        key = class_names[t.label] if class_names and t.label < len(class_names) else str(t.label)
        per_class[key] = per_class.get(key, 0) + 1
    summary = {
        "documents": len(trees),
        "filtered_out": dropped,
        "parse_failures": failed,
        "per_class": per_class,
        "classes": class_names,
        "percentiles": {
            "sections": _percentiles([s.sections for s in stats]),
            "paragraphs": _percentiles([s.paragraphs for s in stats]),
            "sentences": _percentiles([s.sentences for s in stats]),
        },
    }
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    Path(str(args.out) + ".stats.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    spec = DepthSpec(args.sections, args.paragraphs, args.sentences, args.words, args.filler)
    rng = make_rng(args.seed)
    docs = synth_corpus(args.n_docs, args.n_classes, spec, rng)
    write_corpus(docs, args.out)
    if args.embeddings_out:
        store = random_store(synth_vocab(args.n_classes, spec), args.dim, make_rng(args.seed + 1))
        store.save_word2vec_text(args.embeddings_out)
    print(f"wrote {len(docs)} documents to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# shared loading


def _load_corpus(path):
    try:
        trees = read_corpus(path)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    if not trees:
        raise DataError(f"{path}: empty corpus")
    return trees


def _load_store(path, trees) -> EmbeddingStore:
    if path:
        try:
            return load_word2vec_text(path)
        except OSError as exc:
            raise DataError(str(exc)) from exc
    for t in trees:
        for nid in t.leaf_ids:
            vec = t.nodes[nid].vector
            if vec is None:
                raise ConfigError("--embeddings is required unless every leaf carries a vector")
    first = trees[0].nodes[trees[0].leaf_ids[0]].vector
    return EmbeddingStore(len(first))


def _load_checkpoint(path) -> Model:
    if not path or not Path(path).exists():
        raise ConfigError(f"checkpoint {path!r} not found")
    return Model.load(path)


def _check_labels(model: Model, trees) -> None:
    top = max(t.label for t in trees)
    if top >= model.n_classes:
        raise ConfigError(f"corpus has label {top} but the checkpoint was trained for {model.n_classes} classes")


# ---------------------------------------------------------------------------
# train


def build_config(args) -> TrainConfig:
    """Defaults < config file < STRUCTREE_* environment < command-line flags."""
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    values.update(env_overrides())
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if args.seed is not None:
        values["seed"] = args.seed
    return TrainConfig().updated(values)


def cmd_train(args) -> int:
    cfg = build_config(args)
    trees = _load_corpus(args.corpus)
    store = _load_store(args.embeddings, trees)
    n_classes = args.n_classes or max(t.label for t in trees) + 1
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.jsonl")

    with open(log_path, "a", encoding="utf-8", newline="\n") as fh:

        def on_epoch(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            if rec["metric"] == "macro_f1":
                log.info("epoch %d validation macro-F1 %.4f", rec["epoch"], rec["value"])

        result = train(trees, store, cfg, n_classes=n_classes, on_epoch=on_epoch)
    result.model.save(args.out)
    print(f"best epoch {result.best_epoch}; checkpoint written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _split_for(model: Model, n: int, split: str):
    seed = model.meta.get("config", {}).get("seed", model.seed)
    tr, va, te = split_indices(n, seed)
    return {"train": tr, "validation": va, "test": te, "all": list(range(n))}[split]


def cmd_eval(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    trees = _load_corpus(args.corpus)
    _check_labels(model, trees)
    store = _load_store(args.embeddings, trees)
    data = prepare(model, trees, store)
    idx = _split_for(model, len(trees), args.split)
    if not idx:
        raise ConfigError(f"split {args.split!r} is empty")
    rep = evaluate(model, data, idx)
    text = dumps_report(rep)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# viz


def cmd_viz(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    if model.kind != "tree-lstm":
        raise ConfigError("attention visualization needs a tree-lstm checkpoint")
    trees = _load_corpus(args.corpus)
    _check_labels(model, trees)
    store = _load_store(args.embeddings, trees)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = [int(x) for x in args.ids.split(",")] if args.ids else [0]
    for doc_id in ids:
        if not 0 <= doc_id < len(trees):
            raise ConfigError(f"document id {doc_id} out of range (corpus has {len(trees)})")
        tree = trees[doc_id]
        L = model.leaf_vectors(tree, store)
        trace = treelstm.encode_tree(tree, model.variant, model.params, L)
        probs = model.predict_proba(tree, L)
        atree = attention.attention_weights(trace, prediction=int(np.argmax(probs)))
        attention.export_json(atree, out_dir / f"doc{doc_id}.json")
        attention.render_html(atree, path=out_dir / f"doc{doc_id}.html")
        print(f"doc {doc_id}: predicted {atree.prediction}, true {atree.label}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# params


def cmd_params(args) -> int:
    print(count_for(args.model, args.e, args.h, args.l))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="structree", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("prepare", help="parse a directory of documents into a JSON-lines corpus")
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", choices=("json", "sectioned"), default="sectioned")
    sp.add_argument("--granularity", choices=("sentence", "word"), default="sentence")
    sp.add_argument("--filter", action="store_true", help="drop documents below the length thresholds")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("synth", help="generate a synthetic structured corpus")
    sp.add_argument("--n-docs", type=int, default=1000)
    sp.add_argument("--n-classes", type=int, default=4)
    sp.add_argument("--sections", type=int, default=DepthSpec.sections)
    sp.add_argument("--paragraphs", type=int, default=DepthSpec.paragraphs)
    sp.add_argument("--sentences", type=int, default=DepthSpec.sentences)
    sp.add_argument("--words", type=int, default=DepthSpec.words)
    sp.add_argument("--filler", type=int, default=DepthSpec.n_filler)
    sp.add_argument("--dim", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--embeddings-out")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a model")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--embeddings")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--log")
    sp.add_argument("--n-classes", type=int)
    sp.add_argument("--seed", type=int)
    for f in dataclasses.fields(TrainConfig):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            sp.add_argument(flag, dest=f.name, default=None, type=lambda s: s)
        elif f.name == "model":
            sp.add_argument(flag, dest=f.name, default=None, choices=MODEL_KINDS)
        else:
            typ = {"float": float, "int": int}.get(f.type, str)
            sp.add_argument(flag, dest=f.name, default=None, type=typ)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--embeddings")
    sp.add_argument("--split", choices=("train", "validation", "test", "all"), default="test")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("viz", help="write attention HTML and JSON for selected documents")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--embeddings")
    sp.add_argument("--ids", help="comma-separated corpus line indices")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_viz)

    sp = sub.add_parser("params", help="print the parameter count of a model")
    sp.add_argument("--model", required=True, choices=MODEL_KINDS + ("mlp",))
    sp.add_argument("--e", type=int, required=True)
    sp.add_argument("--h", type=int, required=True)
    sp.add_argument("--l", type=int, required=True)
    sp.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"structree: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, UsageError) as exc:
        print(f"structree: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ParseError, StructureError, FormatError) as exc:
        print(f"structree: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"structree: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
