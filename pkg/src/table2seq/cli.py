"""Command-line entry point: ``table2seq {convert,train,generate,evaluate,stats}``.

Exit codes: 0 success, 1 invalid input or arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import decoder as dec
from .autodiff import no_grad
from .baselines import RandomCopySystem, TemplateSystem, template_induce
from .checkpoint import CheckpointError, load_checkpoint
from .evaluation import NeuralSystem, evaluate, export_attention
from .io_utils import atomic_open
from .model import ModelConfig
from .table_data import ValidationError, corpus_stats, load_jsonl, load_rows, parse_triples_tsv
from .trainer import TrainConfig, TrainingError, train

logger = logging.getLogger("table2seq")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# option name -> (type, default); None defaults mean "not given" so a config file can fill them
TRAIN_OPTIONS = {
    "epochs": (int, 50),
    "batch_size": (int, 1),
    "embed_dim": (int, 300),
    "attr_dim": (int, 300),
    "hidden_dim": (int, 500),
    "vocab_limit": (int, 20000),
    "rho": (float, 0.95),
    "eps": (float, 1e-6),
    "clip_norm": (float, 5.0),
    "patience": (int, 6),
    "beam": (int, 5),
    "max_len": (int, 40),
    "seed": (int, 1),
    "target_bleu": (float, None),
}
TRAIN_FLAGS = ("no_copy", "no_global", "no_local", "no_caption", "plusplus", "tc_nlm")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes and underscores are interchangeable."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key in TRAIN_OPTIONS:
                typ = TRAIN_OPTIONS[key][0]
                try:
                    out[key] = typ(value)
                except ValueError:
                    raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
            elif key in TRAIN_FLAGS:
                out[key] = _bool(value)
            else:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def resolve_train_options(args) -> dict:
    file_opts = read_config_file(args.config) if args.config else {}
    opts = {}
    for key, (_, default) in TRAIN_OPTIONS.items():
        value = getattr(args, key)
        opts[key] = value if value is not None else file_opts.get(key, default)
    for key in TRAIN_FLAGS:
        value = getattr(args, key)
        opts[key] = bool(value) if value is not None else file_opts.get(key, False)
    return opts


def build_train_config(opts: dict) -> TrainConfig:
    dims = dict(
        embed_dim=opts["embed_dim"],
        attr_dim=opts["attr_dim"],
        hidden_dim=opts["hidden_dim"],
        attention_dim=opts["hidden_dim"],
        use_caption=not opts["no_caption"],
    )
    if opts["tc_nlm"]:
        model = ModelConfig.tc_nlm(**dims)
    else:
        model = ModelConfig(
            copy=not opts["no_copy"],
            use_global=not opts["no_global"],
            use_local=not opts["no_local"],
            plusplus=opts["plusplus"],
            **dims,
        )
    try:
        return TrainConfig(
            model=model,
            vocab_limit=opts["vocab_limit"],
            batch_size=opts["batch_size"],
            max_epochs=opts["epochs"],
            rho=opts["rho"],
            eps=opts["eps"],
            clip_norm=opts["clip_norm"],
            patience=opts["patience"],
            beam=opts["beam"],
            max_len=opts["max_len"],
            seed=opts["seed"],
            target_bleu=opts["target_bleu"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def cmd_convert(args) -> int:
    src = _require_file(args.input, "input")
    with open(src, encoding="utf-8") as fh:
        records = list(parse_triples_tsv(fh))
    with atomic_open(args.output) as out:
        for rec in records:
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    logger.info("wrote %d records to %s", len(records), args.output)
    return EXIT_OK


def cmd_train(args) -> int:
    opts = resolve_train_options(args)
    config = build_train_config(opts)
    include_caption = config.model.use_caption
    train_set = load_jsonl(_require_file(args.train, "training file"), include_caption)
    dev_set = load_jsonl(_require_file(args.dev, "dev file"), include_caption) if args.dev else []
    if not train_set:
        raise UsageError("training file has no instances")
    result = train(train_set, dev_set, config, log_path=args.log, checkpoint_path=args.checkpoint)
    if args.figures:
        from .plotting import plot_training_curve

        Path(args.figures).mkdir(parents=True, exist_ok=True)
        plot_training_curve(result.history, Path(args.figures) / "training_curve.png")
    last = result.history[-1]
    print(json.dumps({"epochs": len(result.history), "final_train_loss": last["train_loss"], "best_dev_bleu": result.best_dev}))
    return EXIT_OK


def cmd_generate(args) -> int:
    model, _ = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    rows = load_rows(_require_file(args.input, "input"), model.config.use_caption)
    if args.beam < 1 or args.max_len < 1:
        raise UsageError("--beam and --max-len must be >= 1")
    attn_dir = Path(args.dump_attention) if args.dump_attention else None
    if attn_dir:
        attn_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, row in enumerate(rows):
        with no_grad():
            memory = dec.prepare(row, model)
        if args.beam == 1:
            hyp = dec.greedy_decode(memory, model, args.max_len)
        else:
            hyp = dec.beam_search(memory, model, args.beam, args.max_len)[0]
        lines.append(" ".join(hyp.words))
        if attn_dir and model.config.use_attention:
            export_attention(hyp, memory, model, attn_dir / f"attention_{i:05d}.csv")
            if args.figures:
                from .evaluation import attention_matrix
                from .plotting import plot_attention

                labels, _, tokens, weights = attention_matrix(hyp, memory, model)
                plot_attention(labels, tokens, weights, attn_dir / f"attention_{i:05d}.png")
    text = "".join(line + "\n" for line in lines)
    if args.output:
        with atomic_open(args.output) as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.baseline is None and args.checkpoint is None:
        raise UsageError("evaluate needs --checkpoint or --baseline")
    if args.baseline == "template":
        if not args.train:
            raise UsageError("--baseline template needs --train to induce templates")
        test = load_jsonl(_require_file(args.test, "test file"))
        system = TemplateSystem(template_induce(load_jsonl(_require_file(args.train, "training file"))))
        name = "template"
    else:
        if not args.checkpoint:
            raise UsageError(f"--baseline {args.baseline} needs --checkpoint")
        model, _ = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
        test = load_jsonl(_require_file(args.test, "test file"), model.config.use_caption)
        if args.baseline == "random-copy":
            if model.config.copy:
                raise UsageError("random-copy post-processes a checkpoint trained with --no-copy")
            system = RandomCopySystem(model, args.beam, args.max_len, seed=args.seed)
            name = "random-copy"
        elif args.baseline == "tc-nlm":
            if model.config.use_attention or model.config.copy:
                raise UsageError("checkpoint was not trained as a TC-NLM (use train --tc-nlm)")
            system = NeuralSystem(model, args.beam, args.max_len)
            name = "tc-nlm"
        else:
            system = NeuralSystem(model, args.beam, args.max_len)
            name = "table2seq++" if model.config.plusplus else "table2seq"
    if not test:
        raise UsageError("test file has no instances")
    report = evaluate(system, test, name).to_dict(include_outputs=args.include_outputs)
    text = json.dumps(report, indent=2) + "\n"
    if args.output:
        with atomic_open(args.output) as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.figures:
        from .plotting import plot_bucket_bleu

        Path(args.figures).mkdir(parents=True, exist_ok=True)
        plot_bucket_bleu(report, Path(args.figures) / "bucket_bleu.png")
    return EXIT_OK


def cmd_stats(args) -> int:
    instances = load_jsonl(_require_file(args.input, "input"))
    if not instances:
        raise UsageError("no instances to summarize")
    text = json.dumps(corpus_stats(instances).to_dict(), indent=2) + "\n"
    if args.output:
        with atomic_open(args.output) as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="table2seq", description="Train, run and evaluate table-row-to-sentence models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="convert triples to canonical JSONL")
    p.add_argument("--format", choices=["triples-tsv"], default="triples-tsv")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", help="per-epoch JSON-lines log")
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--figures", help="directory for the training-curve figure")
    for key, (typ, _) in TRAIN_OPTIONS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    for key in TRAIN_FLAGS:
        p.add_argument("--" + key.replace("_", "-"), dest=key, action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode sentences for rows")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--dump-attention", metavar="DIR", help="write one attention CSV per instance")
    p.add_argument("--figures", action="store_true", help="also render attention heat maps (PNG)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="BLEU-4 report for a model or baseline")
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", choices=["template", "random-copy", "tc-nlm"])
    p.add_argument("--train", help="training JSONL (template baseline)")
    p.add_argument("--test", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.add_argument("--figures", help="directory for the unseen-attribute BLEU figure")
    p.add_argument("--include-outputs", action="store_true", help="add generated sentences to the report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("input")
    p.add_argument("--output")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or an argument error already reported by argparse
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValidationError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        logger.debug("unhandled", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
