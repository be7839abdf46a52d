"""Command-line entry points.

Machine-readable results are a single JSON document on stdout; progress and
diagnostics go to stderr. Exit codes: 0 success, 1 usage error, 2 runtime
error (for example a missing file, named in the message).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from cosum.attribution import AttributionConfig, attribute
from cosum.autodiff import ContractViolation
from cosum.inference import GenerationMode, lever_demo
from cosum.model import ModelConfig
from cosum.rng import Prng
from cosum.service import create_app, engine_from_dir, session_to_json
from cosum.session import create_session, run_forward, set_selection
from cosum.textproc import (
    VocabSpec,
    corpus_vocab,
    generate_synthetic_corpus,
    load_corpus,
    save_corpus,
    tokenize,
)
from cosum.training import (
    TrainConfig,
    evaluate,
    split_corpus,
    train_attribution,
    train_forward,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage problems."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    return p


def build_parser() -> _Parser:
    parser = _Parser(prog="cosum", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    gen.add_argument("--out", required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--sentences", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)

    train = sub.add_parser("train", help="train models on a corpus file")
    train.add_argument("--corpus", required=True)
    train.add_argument("--out-dir", required=True)
    train.add_argument("--epochs", type=int, required=True)
    train.add_argument("--hidden-dim", type=int, required=True)
    train.add_argument("--seed", type=int, required=True)
    train.add_argument("--backward", action="store_true",
                       help="also train the backward usage model")

    ev = sub.add_parser("eval", help="evaluate checkpoints on a corpus")
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--model", required=True)

    serve = sub.add_parser("serve", help="serve the HTTP API")
    serve.add_argument("--model", required=True)
    serve.add_argument("--port", type=int, required=True)
    serve.add_argument("--persist", default=None)

    summ = sub.add_parser("summarize", help="one-shot scripted summarization")
    summ.add_argument("--model", required=True)
    summ.add_argument("--input", required=True)
    summ.add_argument("--select", required=True,
                      help='"all" or comma-separated sentence indices like "0,2,5"')
    summ.add_argument("--mode", choices=["init_with", "add"], required=True)
    summ.add_argument("--n", type=int, default=1)

    attr = sub.add_parser("attribute", help="attribute a summary to its source")
    attr.add_argument("--model", required=True)
    attr.add_argument("--input", required=True)
    attr.add_argument("--summary", required=True)
    attr.add_argument("--threshold", type=float, default=0.5)

    sub.add_parser("lever-demo", help="print the two-position lever walkthrough")

    return parser


def _cmd_gen_corpus(args) -> int:
    examples = generate_synthetic_corpus(
        Prng(args.seed), args.n, args.sentences, VocabSpec()
    )
    save_corpus(args.out, examples)
    print(f"wrote {len(examples)} examples to {args.out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    corpus_path = _require_file(args.corpus)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    examples = load_corpus(corpus_path)
    vocab = corpus_vocab(examples)
    config = TrainConfig(epochs=args.epochs, seed=args.seed)
    metrics_path = out_dir / "metrics.jsonl"
    if metrics_path.exists():
        metrics_path.unlink()

    model_config = ModelConfig(
        vocab_size=len(vocab),
        embed_dim=args.hidden_dim,
        hidden_dim=args.hidden_dim,
    )
    print(
        f"training forward model: {len(examples)} examples, "
        f"hidden {args.hidden_dim}, {args.epochs} epochs",
        file=sys.stderr,
    )
    trained = train_forward(examples, vocab, model_config, config, metrics_path)
    trained.model.save(out_dir / "forward.ckpt", vocab)
    for row in trained.history:
        print(json.dumps(row), file=sys.stderr)

    if args.backward:
        attr_config = AttributionConfig(
            vocab_size=len(vocab),
            embed_dim=args.hidden_dim,
            hidden_dim=args.hidden_dim,
        )
        print("training backward usage model", file=sys.stderr)
        trained_attr = train_attribution(
            examples, vocab, attr_config, config, metrics_path
        )
        trained_attr.model.save(out_dir / "backward.ckpt", vocab)
        for row in trained_attr.history:
            print(json.dumps(row), file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    corpus_path = _require_file(args.corpus)
    model_dir = Path(args.model)
    engine = engine_from_dir(model_dir)
    examples = load_corpus(corpus_path)
    _, held_out = split_corpus(examples)
    report = evaluate(engine.model, engine.attribution, engine.vocab, held_out)
    print(json.dumps(report.to_json()))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    engine = engine_from_dir(Path(args.model))
    app = create_app(engine, persist_dir=args.persist)
    print(f"serving on port {args.port}", file=sys.stderr)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    return 0


def _cmd_summarize(args) -> int:
    input_path = _require_file(args.input)
    engine = engine_from_dir(Path(args.model))
    text = input_path.read_text(encoding="utf-8")
    session = create_session("cli", text)

    if args.select == "all":
        selection = list(range(session.document.n_sentences))
    else:
        try:
            selection = [int(part) for part in args.select.split(",") if part != ""]
        except ValueError:
            raise UsageError(f"cannot parse --select {args.select!r}") from None
    try:
        set_selection(session, selection)
    except ContractViolation as exc:
        raise UsageError(str(exc)) from None

    mode = (
        GenerationMode.INIT_WITH if args.mode == "init_with"
        else GenerationMode.ADD_SENTENCE
    )
    try:
        run_forward(session, engine, mode, n_sentences=args.n)
    except ContractViolation as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(session_to_json(session), ensure_ascii=False))
    return 0


def _cmd_attribute(args) -> int:
    input_path = _require_file(args.input)
    summary_path = _require_file(args.summary)
    engine = engine_from_dir(Path(args.model))
    from cosum.textproc import Document

    document = Document.from_text(input_path.read_text(encoding="utf-8"))
    summary_tokens = tokenize(summary_path.read_text(encoding="utf-8"))
    report = attribute(
        engine.attribution, engine.vocab, document, summary_tokens,
        threshold=args.threshold,
    )
    print(json.dumps(report.to_json()))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    handlers = {
        "gen-corpus": _cmd_gen_corpus,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "serve": _cmd_serve,
        "summarize": _cmd_summarize,
        "attribute": _cmd_attribute,
        "lever-demo": lambda _args: (print(lever_demo(), end=""), 0)[1],
    }
    handler = handlers[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"cosum: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"cosum: missing file: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 2
        print(f"cosum: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
