"""``prunerank`` command line.

Exit codes: 0 success, 1 input/usage errors, 2 remote or client failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional, Sequence

from . import config as cfg
from .errors import InputError, ParseError, PruneRankError, RemoteError
from .evaluator import (
    ExtractiveGenerator,
    LLMGenerator,
    evaluate_rankings,
    load_eval_dataset,
    report_csv,
    sweep,
    write_report,
)
from .labeler import (
    HTTPLLMClient,
    HTTPTranslatorClient,
    build_dataset,
    load_prompt_template,
    read_training_jsonl,
    translate_example,
    write_training_jsonl,
)
from .pruner import PruningOptions, dslr_prune, prune_many
from .scorer import as_scorer
from .segmenter import segment

logger = logging.getLogger("prunerank")

DEFAULT_GRID = ",".join(f"{i / 20:g}" for i in range(21))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@contextmanager
def _open_out(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            yield f


@contextmanager
def _open_in(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdin
    else:
        with open(path, encoding="utf-8") as f:
            yield f


def _read_jsonl(stream):
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), lineno) from exc


def _values(args) -> dict:
    overrides = {
        "scorer.backend": getattr(args, "scorer", None),
        "scorer.endpoint": getattr(args, "endpoint", None),
        "scorer.model_path": getattr(args, "model", None),
        "scorer.batch_size": getattr(args, "batch_size", None),
        "scorer.timeout": getattr(args, "timeout", None),
        "pruning.threshold": getattr(args, "threshold", None),
        "pruning.basis": getattr(args, "basis", None),
        "pruning.always_keep_first": getattr(args, "always_keep_first", None) or None,
        "service.listen": getattr(args, "listen", None),
        "service.max_batch": getattr(args, "max_batch", None),
        "service.request_timeout": getattr(args, "request_timeout", None),
        "service.max_concurrency": getattr(args, "max_concurrency", None),
    }
    return cfg.resolve(overrides, config_path=args.config)


def _parse_thresholds(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"bad threshold list {text!r}") from exc


# -- subcommands ----------------------------------------------------------------


def cmd_prune(args) -> int:
    values = _values(args)
    opts = cfg.pruning_options(values)
    scorer = as_scorer(cfg.scorer_config(values))
    with _open_in(args.input) as src, _open_out(args.output) as out:
        for lineno, item in _read_jsonl(src):
            if not isinstance(item, dict) or not isinstance(item.get("query"), str) or not isinstance(item.get("passages"), list):
                raise ParseError("expected {\"query\": str, \"passages\": [str]}", lineno)
            language = item.get("language")
            passages = [segment(p, language) for p in item["passages"]]
            line_opts = opts
            if "threshold" in item:
                line_opts = PruningOptions(float(item["threshold"]), opts.always_keep_first, opts.basis)
            if args.dslr:
                pruned = [dslr_prune(item["query"], p, scorer, line_opts.threshold) for p in passages]
            else:
                pruned = prune_many(item["query"], passages, scorer, line_opts, workers=args.workers)
            results = [{"index": i, **p.to_dict()} for i, p in enumerate(pruned)]
            out.write(json.dumps({"query": item["query"], "results": results}, ensure_ascii=False) + "\n")
    return 0


def cmd_sweep(args) -> int:
    values = _values(args)
    if args.synthetic:
        from .synthetic import bilingual_qa_set

        records = bilingual_qa_set(args.synthetic, seed=args.seed)
    elif args.data:
        records = load_eval_dataset(args.data)
    else:
        raise InputError("sweep needs --data or --synthetic")
    generator = LLMGenerator(HTTPLLMClient(args.generator_endpoint)) if args.generator_endpoint else ExtractiveGenerator()
    points = sweep(
        records,
        _parse_thresholds(args.thresholds),
        cfg.scorer_config(values),
        pruner_kind=args.pruner,
        generator=generator,
        metric=args.metric,
        top_k=args.top_k,
        basis=values["pruning.basis"],
        workers=args.workers,
    )
    if not args.out:
        sys.stdout.write(report_csv(points))
        return 0
    csv_path, jsonl_path = write_report(points, args.out)
    print(f"wrote {csv_path} and {jsonl_path}", file=sys.stderr)
    if not args.no_figure:
        from .plotting import save_pareto

        fig_path = Path(args.figure) if args.figure else csv_path.with_suffix(".png")
        save_pareto(points, fig_path, title=f"{args.pruner} Pareto front", metric_label=args.metric)
        print(f"wrote {fig_path}", file=sys.stderr)
    return 0


def _pairs(path):
    with _open_in(path) as src:
        for lineno, item in _read_jsonl(src):
            if not isinstance(item, dict) or not isinstance(item.get("query"), str):
                raise ParseError("expected an object with a query", lineno)
            passages = item.get("passages", [item["passage"]] if "passage" in item else None)
            if not isinstance(passages, list):
                raise ParseError("expected passage or passages", lineno)
            for p in passages:
                yield item["query"], p, item.get("language")


def cmd_annotate(args) -> int:
    values = _values(args)
    options = {"context_budget": args.context_budget, "max_tokens": args.max_tokens}
    if args.prompt:
        options["template"] = load_prompt_template(args.prompt)
    if args.language:
        options["default_language"] = args.language
    report = build_dataset(
        _pairs(args.pairs),
        HTTPLLMClient(args.llm_endpoint, timeout=values["scorer.timeout"]),
        cfg.scorer_config(values),
        args.limit,
        args.out,
        seed=args.seed,
        workers=args.workers,
        **options,
    )
    print(json.dumps(report.to_dict()))
    return 0


def cmd_translate(args) -> int:
    values = _values(args)
    translator = HTTPTranslatorClient(args.translator_endpoint)
    rescore = cfg.scorer_config(values) if args.rescore else None
    examples = read_training_jsonl(args.data)
    out = [translate_example(ex, translator, args.target_language, rescore) for ex in examples]
    write_training_jsonl(out, args.out)
    return 0


def cmd_train_toy(args) -> int:
    from .trainer import TrainConfig, save_model, train

    if args.synthetic:
        from .synthetic import separable_training_set

        data = separable_training_set(args.synthetic, seed=args.seed)
    elif args.data:
        data = read_training_jsonl(args.data)
    else:
        raise InputError("train-toy needs --data or --synthetic")
    tc = TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size, lam=args.lam, seed=args.seed)
    model, history = train(data, tc)
    save_model(model, args.out)
    print(json.dumps({"history": history, "out": args.out}))
    return 0


def cmd_eval(args) -> int:
    values = _values(args)
    records = load_eval_dataset(args.data)
    scorer = cfg.scorer_config(values) if args.rerank else None
    result = evaluate_rankings(records, args.k, args.metric, scorer)
    print(json.dumps({"metric": f"{args.metric}@{args.k}", "results": result}))
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    return serve(cfg.service_config(_values(args)))


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="config file (default: $PRUNERANK_CONFIG)")
    common.add_argument("--seed", type=int, default=0, help="seed for sampling and shuffling")
    common.add_argument("--workers", type=int, default=1, help="worker threads for batch work")
    common.add_argument("--log-level", default="WARNING")

    scoring = _Parser(add_help=False)
    scoring.add_argument("--scorer", choices=("lexical", "remote", "toy-model"))
    scoring.add_argument("--endpoint", help="model server URL for --scorer remote")
    scoring.add_argument("--model", help="model file for --scorer toy-model")
    scoring.add_argument("--batch-size", type=int)
    scoring.add_argument("--timeout", type=float)

    pruning = _Parser(add_help=False)
    pruning.add_argument("--threshold", type=float)
    pruning.add_argument("--basis", choices=("characters", "tokens"))
    pruning.add_argument("--always-keep-first", action="store_true")

    parser = _Parser(prog="prunerank", description="Zero-cost context pruning for RAG pipelines.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prune", parents=[common, scoring, pruning], help="prune passages from JSONL")
    p.add_argument("--input", default="-")
    p.add_argument("--output", default="-")
    p.add_argument("--dslr", action="store_true", help="use the sentence-level DSLR baseline")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("sweep", parents=[common, scoring, pruning], help="threshold sweep to a Pareto report")
    p.add_argument("--data", help="eval JSONL")
    p.add_argument("--synthetic", type=int, metavar="N", help="use N records of the bundled bilingual QA set")
    p.add_argument("--thresholds", default=DEFAULT_GRID)
    p.add_argument("--pruner", choices=("provence", "dslr"), default="provence")
    p.add_argument("--metric", choices=("char3gram", "accuracy"), default="char3gram")
    p.add_argument("--top-k", type=int, default=5, help="passages fed to the generator")
    p.add_argument("--generator-endpoint", help="LLM server; default is the offline extractive stub")
    p.add_argument("--out", help="report path; writes .csv and .jsonl (stdout CSV if absent)")
    p.add_argument("--figure", help="figure path (default: report stem + .png)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("annotate", parents=[common, scoring], help="label pairs with an LLM")
    p.add_argument("--pairs", required=True, help="JSONL of {query, passage|passages, language?}")
    p.add_argument("--llm-endpoint", required=True)
    p.add_argument("--limit", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--language", help="default language tag")
    p.add_argument("--prompt", help="prompt template file")
    p.add_argument("--context-budget", type=int, default=8000)
    p.add_argument("--max-tokens", type=int, default=256)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("translate", parents=[common, scoring], help="translate training JSONL")
    p.add_argument("--data", required=True)
    p.add_argument("--translator-endpoint", required=True)
    p.add_argument("--target-language", required=True)
    p.add_argument("--rescore", action="store_true", help="re-score translated pairs with the scorer")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("train-toy", parents=[common], help="train the toy joint model")
    p.add_argument("--data")
    p.add_argument("--synthetic", type=int, metavar="N", help="train on N separable synthetic examples")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", parents=[common, scoring], help="Recall@k / nDCG@k of rankings")
    p.add_argument("--data", required=True)
    p.add_argument("--metric", choices=("recall", "ndcg"), default="ndcg")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--rerank", action="store_true", help="rank passages with the scorer when no ranking is given")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", parents=[common, scoring, pruning], help="run the HTTP service")
    p.add_argument("--listen", help="host:port")
    p.add_argument("--max-batch", type=int)
    p.add_argument("--request-timeout", type=float)
    p.add_argument("--max-concurrency", type=int)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RemoteError as exc:
        print(f"prunerank: remote failure: {exc}", file=sys.stderr)
        return 2
    except (PruneRankError, OSError, ValueError) as exc:
        print(f"prunerank: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
