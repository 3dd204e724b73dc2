"""Command-line entry point: ``docee {synth,import,train,predict,eval,ablate}``.

Exit codes:
    0  success
    1  unexpected internal error
    2  bad command line (argparse usage error)
    3  a named input file does not exist
    4  invalid corpus, schema, checkpoint or config content
    5  training diverged (NaN/inf loss); the last good checkpoint is saved

Failures print exactly one JSON line to stderr:
``{"error": <kind>, "exit_code": <int>, "message": <text>}``.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .corpus import CorpusError, EventSchema, SynthConfig, dump_corpus, import_chfinann, load_corpus, synth_corpus
from .evalkit import dump_report, evaluate
from .hetgraph import EDGE_TYPES
from .trainer import Checkpoint, DivergenceError, TrainConfig, predict, train

logger = logging.getLogger("docee")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISSING, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5

LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}

# variant name -> (dotted override, value); every variant is the full model with one change
VARIANTS = {
    "no-ss": ("model.edge_types", [e for e in EDGE_TYPES if e != "ss"]),
    "no-sm": ("model.edge_types", [e for e in EDGE_TYPES if e != "sm"]),
    "no-mm-intra": ("model.edge_types", [e for e in EDGE_TYPES if e != "mm_intra"]),
    "no-mm-inter": ("model.edge_types", [e for e in EDGE_TYPES if e != "mm_inter"]),
    "no-graph": ("model.gcn_layers", 0),
    "git-ot": ("model.decoder_mode", "git-ot"),
    "git-op": ("model.decoder_mode", "git-op"),
    "git-nt": ("model.decoder_mode", "git-nt"),
    "greedy": ("model.decoder_mode", "greedy"),
}


class MissingFile(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage errors in the same one-line JSON form."""

    def error(self, message):
        _fail("usage", EXIT_USAGE, message)


def _fail(kind: str, code: int, message: str):
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)
    raise SystemExit(code)


# -- config plumbing -------------------------------------------------------

def parse_value(text: str):
    """JSON literal if it parses, otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: Dict, overrides: Sequence[str]) -> Dict:
    """Apply ``dotted.key=value`` overrides on a copy of ``config``."""
    out = copy.deepcopy(config)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"override {item!r} is not of the form key=value")
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {key!r} descends into a non-object value")
        node[parts[-1]] = parse_value(value)
    return out


def _read_json(path) -> Dict:
    _require(path)
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise CorpusError(f"{path}: not valid JSON ({e})") from None


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"{p} does not exist")
    return p


def _base_config(args) -> Dict:
    return _read_json(args.config) if args.config else {}


def train_config(args) -> TrainConfig:
    obj = apply_overrides(_base_config(args), args.set)
    if args.seed is not None:
        obj["seed"] = args.seed
    return TrainConfig.from_dict(obj)


def _schema_for(args, corpus_path) -> EventSchema:
    if args.schema:
        return EventSchema.load(_require(args.schema))
    sibling = Path(corpus_path).with_name("schema.json")
    if sibling.exists():
        return EventSchema.load(sibling)
    logger.info("no schema given; using the bundled ChFinAnn schema")
    return EventSchema.chfinann()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -----------------------------------------------------------

def cmd_synth(args) -> int:
    obj = apply_overrides(_base_config(args), args.set)
    cfg = SynthConfig.from_dict(obj)
    docs = synth_corpus(cfg, args.seed if args.seed is not None else 0)
    out = _out_dir(args)
    dump_corpus(docs, out / "corpus.json")
    cfg.schema().dump(out / "schema.json")
    print(json.dumps({"documents": len(docs), "corpus": str(out / "corpus.json")}))
    return EXIT_OK


def cmd_import(args) -> int:
    schema = EventSchema.load(_require(args.schema)) if args.schema else EventSchema.chfinann()
    docs = import_chfinann(_require(args.input), schema)
    out = _out_dir(args)
    dump_corpus(docs, out / "corpus.json")
    schema.dump(out / "schema.json")
    print(json.dumps({"documents": len(docs), "corpus": str(out / "corpus.json")}))
    return EXIT_OK


def _train(docs, cfg, schema, dev, out: Path, name: str) -> Checkpoint:
    try:
        ckpt, _ = train(docs, cfg, schema, dev=dev, log_path=out / f"{name}_log.jsonl")
    except DivergenceError as e:
        if e.checkpoint is not None:
            e.checkpoint.save(out / f"{name}_last_good.ckpt")
        raise
    ckpt.save(out / f"{name}.ckpt")
    return ckpt


def cmd_train(args) -> int:
    cfg = train_config(args)
    schema = _schema_for(args, args.corpus)
    docs = load_corpus(_require(args.corpus), schema)
    dev = load_corpus(_require(args.dev), schema) if args.dev else None
    out = _out_dir(args)
    _train(docs, cfg, schema, dev, out, "model")
    print(json.dumps({"checkpoint": str(out / "model.ckpt")}))
    return EXIT_OK


def cmd_predict(args) -> int:
    ckpt = Checkpoint.load(_require(args.checkpoint))
    docs = load_corpus(_require(args.corpus), ckpt.schema)
    out = _out_dir(args)
    dump = predict(docs, ckpt)
    with open(out / "predictions.json", "w", encoding="utf-8") as f:
        json.dump(dump, f, indent=1, ensure_ascii=False)
    print(json.dumps({"predictions": str(out / "predictions.json")}))
    return EXIT_OK


def cmd_eval(args) -> int:
    schema = _schema_for(args, args.corpus)
    docs = load_corpus(_require(args.corpus), schema)
    preds = _read_json(args.predictions)
    if not isinstance(preds, list):
        raise CorpusError(f"{args.predictions}: prediction dump must be a JSON array")
    report = evaluate(docs, preds, schema)
    out = _out_dir(args)
    dump_report(report, out / "report.json", out / "report.txt")
    print(report.to_text(), end="")
    return EXIT_OK


def ablation_table(rows: List[Dict]) -> str:
    width = max(len(r["variant"]) for r in rows)
    lines = [f"{'variant':<{width}}  {'F1':>7}  {'delta':>7}"]
    for r in rows:
        lines.append(f"{r['variant']:<{width}}  {100 * r['f1']:>7.1f}  {100 * r['delta']:>+7.1f}")
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    names = args.variants or list(VARIANTS)
    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown ablation variants {unknown}; choose from {sorted(VARIANTS)}")
    base = apply_overrides(_base_config(args), args.set)
    if args.seed is not None:
        base["seed"] = args.seed
    schema = _schema_for(args, args.corpus)
    docs = load_corpus(_require(args.corpus), schema)
    test = load_corpus(_require(args.test), schema) if args.test else docs
    out = _out_dir(args)

    rows = []
    for name in ["full"] + names:
        obj = base if name == "full" else apply_overrides(base, [f"{VARIANTS[name][0]}={json.dumps(VARIANTS[name][1])}"])
        ckpt = _train(docs, TrainConfig.from_dict(obj), schema, None, out, name)
        report = evaluate(test, predict(test, ckpt), schema)
        rows.append({"variant": name, "f1": report.record_f1})
        logger.info("ablation %s: record F1 %.4f", name, report.record_f1)
    for r in rows:
        r["delta"] = r["f1"] - rows[0]["f1"]
    with open(out / "ablation.json", "w", encoding="utf-8") as f:
        json.dump(rows, f, indent=2)
    table = ablation_table(rows)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key after loading (dotted keys reach nested fields)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default=".", help="output directory")

    parser = _Parser(prog="docee", description="Document-level event extraction toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import", parents=[common], help="convert a ChFinAnn file to the canonical layout")
    p.add_argument("input")
    p.add_argument("--schema")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("corpus")
    p.add_argument("--schema")
    p.add_argument("--dev", help="dev corpus for checkpoint selection")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="write a prediction dump")
    p.add_argument("corpus")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="score a prediction dump against gold")
    p.add_argument("corpus")
    p.add_argument("predictions")
    p.add_argument("--schema")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="train variants and compare with the full model")
    p.add_argument("corpus")
    p.add_argument("variants", nargs="*", help=f"subset of {', '.join(VARIANTS)} (default: all)")
    p.add_argument("--schema")
    p.add_argument("--test", help="corpus to score on (default: the training corpus)")
    p.set_defaults(func=cmd_ablate)
    return parser


def _setup_logging() -> None:
    name = os.environ.get("DOCEE_LOG", "warn").lower()
    if name not in LOG_LEVELS:
        _fail("usage", EXIT_USAGE, f"DOCEE_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", force=True)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the exit code instead of exiting."""
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        try:
            return args.func(args)
        except MissingFile as e:
            _fail("missing_file", EXIT_MISSING, str(e))
        except DivergenceError as e:
            _fail("diverged", EXIT_DIVERGED, str(e))
        except (CorpusError, ValueError, KeyError, TypeError) as e:
            _fail("invalid_input", EXIT_INVALID, str(e))
        except Exception as e:  # noqa: BLE001
            logger.debug("internal error", exc_info=True)
            _fail("internal", EXIT_INTERNAL, f"{type(e).__name__}: {e}")
    except SystemExit as e:
        return int(e.code or 0)


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
