"""Command-line entry point: ``guardrail <subcommand> ...``.

Backends come from ``--config`` (YAML/JSON); without one, the built-in mock
backends are used. Exit status is 0 on success, 1 on runtime failure and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from guardrail.backends import build_backend
from guardrail.config import build_wrapper, load_config
from guardrail.customizer import StaticBlocklist, StaticReachability, UrlWarningWrapper, benchmark_chain
from guardrail.dataprep import process_dataset, read_raw_records, write_training_records
from guardrail.detector import check_input, detect_hallucination
from guardrail.errors import GuardrailError
from guardrail.grounding import (
    IndexStrategy,
    build_index,
    ground_query,
    read_corpus,
    run_callback_experiment,
    write_callback_csv,
)
from guardrail.policy import Query
from guardrail.repairer import RepairRequest, repair


def _emit(obj, out=None):
    json.dump(obj, out or sys.stdout, indent=2, ensure_ascii=False)
    (out or sys.stdout).write("\n")


def _k_list(raw: str) -> list[int]:
    try:
        ks = [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def _backend(config, slot):
    if slot not in config.backends:
        raise GuardrailError(f"config has no {slot!r} backend")
    return build_backend(config.backends[slot])


def _load_corpus(path):
    with open(path, encoding="utf-8") as fh:
        return list(read_corpus(fh))


def cmd_check_input(args, config):
    v = check_input(Query(args.text), _backend(config, "moderation"), config.policy.input_unsafe_threshold)
    _emit(v.to_dict())


def cmd_detect_halu(args, config):
    a = detect_hallucination(args.question, args.context, args.answer, config.policy, _backend(config, "generation"))
    _emit(a.to_dict())


def cmd_ground(args, config):
    index = build_index(_load_corpus(args.corpus), IndexStrategy(args.strategy), _backend(config, "embedding"))
    _emit(ground_query(Query(args.text), index, args.k or config.policy.top_k_contexts).to_dict())


def cmd_repair(args, config):
    req = RepairRequest(args.question, args.context, args.answer, args.reason)
    _emit(repair(req, _backend(config, "fixing")).to_dict())


def cmd_prep_data(args, config):
    with open(args.input, encoding="utf-8") as fh:
        records = list(read_raw_records(fh))
    out = process_dataset(records, _backend(config, "reasoning"), args.skip_failures, args.workers)
    with open(args.output, "w", encoding="utf-8") as fh:
        n = write_training_records(out, fh)
    _emit({"input_records": len(records), "output_records": n})


def cmd_eval_callback(args, config):
    corpus = _load_corpus(args.corpus)
    embedder = _backend(config, "embedding")
    strategies = list(IndexStrategy) if args.strategy == "both" else [IndexStrategy(args.strategy)]
    modes = ["original", "rephrased"] if args.query_mode == "both" else [args.query_mode]
    rows = []
    for strategy in strategies:
        for mode in modes:
            rows += run_callback_experiment(corpus, strategy, mode, args.k, embedder, args.sample_size, args.seed)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            write_callback_csv(rows, fh)
    else:
        write_callback_csv(rows, sys.stdout)


def cmd_bench_wrapper(args, config):
    with open(args.input, encoding="utf-8") as fh:
        texts = [json.loads(line)["text"] for line in fh if line.strip()]
    if config.wrappers and not (args.blocklist or args.statuses):
        wrappers = [build_wrapper(w) for w in config.wrappers]
    else:
        urls = []
        if args.blocklist:
            with open(args.blocklist, encoding="utf-8") as fh:
                urls = [ln.strip() for ln in fh if ln.strip()]
        statuses = {}
        if args.statuses:
            with open(args.statuses, encoding="utf-8") as fh:
                statuses = json.load(fh)
        wrappers = [UrlWarningWrapper(StaticBlocklist(urls), StaticReachability(statuses))]
    report = benchmark_chain(texts, wrappers)
    _emit(report.to_dict())


def cmd_serve(args, config):
    from guardrail.service import serve

    if args.host:
        config.host = args.host
    if args.port is not None:
        config.port = args.port
    serve(config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guardrail", description="LLM inference guardrail pipeline")
    parser.add_argument("--config", help="YAML/JSON service config (default: built-in mocks)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-input", help="classify a user query as safe/unsafe")
    p.add_argument("text")
    p.set_defaults(func=cmd_check_input)

    p = sub.add_parser("detect-halu", help="score an answer for hallucination")
    p.add_argument("--question", required=True)
    p.add_argument("--context", default="")
    p.add_argument("--answer", required=True)
    p.set_defaults(func=cmd_detect_halu)

    p = sub.add_parser("ground", help="retrieve context blocks for a query")
    p.add_argument("text")
    p.add_argument("--corpus", required=True)
    p.add_argument("--strategy", choices=[s.value for s in IndexStrategy], default="key_information")
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("repair", help="rewrite a hallucinated answer")
    p.add_argument("--question", required=True)
    p.add_argument("--context", default="")
    p.add_argument("--answer", required=True)
    p.add_argument("--reason", required=True)
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("prep-data", help="build detector training records from labelled JSONL")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--skip-failures", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_prep_data)

    p = sub.add_parser("eval-callback", help="callback@k table for an index strategy")
    p.add_argument("--corpus", required=True)
    p.add_argument("--strategy", choices=[s.value for s in IndexStrategy] + ["both"], default="both")
    p.add_argument("--query-mode", choices=["original", "rephrased", "both"], default="original")
    p.add_argument("--k", type=_k_list, default=[1, 3, 5, 10])
    p.add_argument("--sample-size", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_eval_callback)

    p = sub.add_parser("bench-wrapper", help="latency of the URL warning wrapper")
    p.add_argument("--input", required=True, help='JSONL with a "text" field per line')
    p.add_argument("--blocklist", help="file with one malicious URL per line")
    p.add_argument("--statuses", help="JSON object mapping URL to probe status code")
    p.set_defaults(func=cmd_bench_wrapper)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = load_config(args.config)
        args.func(args, config)
    except (GuardrailError, ValueError, OSError, KeyError) as exc:
        print(f"guardrail: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
