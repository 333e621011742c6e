"""Subcommand front-end: analyze -> select -> (mask | transfer) -> certify,
plus toy-training and token-frequency utilities.

Every stage reads and writes plain files, so a full experiment is a shell
script. Exit codes: 0 success, 1 usage error, 2 data/validation error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ._text import fmt_float
from .certify import (
    alpha_sweep,
    filter_first_k,
    read_prediction_log,
    write_prediction_log,
    write_reports,
)
from .checkpoint import (
    CheckpointError,
    get_embedding,
    read_checkpoint,
    validate_pair,
    write_checkpoint,
)
from .selection import (
    analyze_pair,
    read_scores_csv,
    read_ticket_file,
    select_by_alpha,
    select_top_k,
    count_frequencies,
    write_scores_csv,
    write_ticket_file,
)
from .toytrain import (
    TRAIN_MODES,
    TrainConfig,
    emit_prediction_log,
    evaluate,
    generate_task,
    init_model,
    model_from_checkpoint,
    model_to_checkpoint,
    read_task_csv,
    train,
    write_task_csv,
)
from .transfer import emit_mask, splice_partial_transfer, write_mask_file

__all__ = ["run", "main", "build_parser"]

COUNTS_HEADER = "token_id,count"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _write_counts_csv(counts: np.ndarray, path, top_k: int | None) -> None:
    ids = np.arange(counts.size)
    if top_k is not None:
        if top_k > counts.size:
            raise ValueError(f"top-k {top_k} exceeds vocab size {counts.size}")
        order = np.lexsort((ids, -counts))[:top_k]
        ids = order
    lines = [COUNTS_HEADER]
    lines.extend(f"{int(i)},{int(counts[i])}" for i in ids)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_counts_csv(path) -> dict[int, int]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != COUNTS_HEADER:
        raise ValueError(f"{path}: not a counts CSV (bad header)")
    counts: dict[int, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 2:
            raise ValueError(f"{path}: bad counts row at line {lineno}")
        counts[int(cells[0])] = int(cells[1])
    return counts


def _read_corpus(path) -> list[int]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split()
    try:
        return [int(tok) for tok in lines]
    except ValueError as exc:
        raise ValueError(f"{path}: corpus must contain integer token ids") from exc


def _cmd_analyze(args) -> None:
    base = read_checkpoint(args.base)
    tuned = read_checkpoint(args.tuned)
    validate_pair(base, tuned, args.tensor)
    scores = analyze_pair(
        get_embedding(base, args.tensor), get_embedding(tuned, args.tensor)
    )
    if args.freq is not None:
        counts = _read_counts_csv(args.freq)
        for s in scores:
            s.frequency = counts.get(s.token_id, 0)
    write_scores_csv(scores, args.out)


def _cmd_select(args) -> None:
    by_alpha = args.alpha is not None
    by_metric = args.method is not None
    if by_alpha == by_metric:
        raise _UsageError("give either --alpha with --dim, or --method with --top-k")
    scores = read_scores_csv(args.scores)
    if by_alpha:
        if args.dim is None:
            raise _UsageError("--alpha requires --dim")
        tickets = select_by_alpha(scores, args.alpha, args.dim)
    else:
        if args.top_k is None:
            raise _UsageError("--method requires --top-k")
        tickets = select_top_k(scores, args.method, args.top_k)
    write_ticket_file(tickets, args.out)


def _cmd_mask(args) -> None:
    tickets = read_ticket_file(args.tickets)
    write_mask_file(emit_mask(tickets, complement=args.complement), args.out)


def _cmd_transfer(args) -> None:
    base = read_checkpoint(args.base)
    tuned = read_checkpoint(args.tuned)
    tickets = read_ticket_file(args.tickets)
    write_checkpoint(
        splice_partial_transfer(base, tuned, args.tensor, tickets), args.out
    )


def _cmd_certify(args) -> None:
    records = read_prediction_log(args.log)
    if args.first_k is not None:
        records = filter_first_k(records, args.first_k)
    try:
        alphas = [float(a) for a in args.alpha.split(",") if a]
    except ValueError as exc:
        raise _UsageError(f"bad --alpha list: {args.alpha!r}") from exc
    if not alphas:
        raise _UsageError("at least one alpha required")
    reports = alpha_sweep(records, alphas, args.dim, args.prob_source)
    write_reports(reports, args.out)


def _cmd_freq(args) -> None:
    corpus = _read_corpus(args.corpus)
    counts = count_frequencies(corpus, args.vocab)
    _write_counts_csv(counts, args.out, args.top_k)


def _cmd_toy_gen(args) -> None:
    task = generate_task(args.seed, args.vocab, args.pairs, args.zipf)
    write_task_csv(task, args.out)


def _cmd_toy_init(args) -> None:
    write_checkpoint(model_to_checkpoint(init_model(args.seed, args.vocab, args.dim)), args.out)


def _cmd_toy_train(args) -> None:
    model = model_from_checkpoint(read_checkpoint(args.model))
    task = read_task_csv(args.task, model.vocab_size)
    tickets = None
    if args.tickets is not None:
        tickets = read_ticket_file(args.tickets)
    elif args.mode in ("partial", "frozen_complement"):
        raise _UsageError(f"--mode {args.mode} requires --tickets")
    config = TrainConfig(
        mode=args.mode,
        tickets=tickets,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size,
    )
    tuned, losses = train(model, task, config)
    write_checkpoint(model_to_checkpoint(tuned), args.out)
    if args.loss_out is not None:
        lines = ["epoch,loss"]
        lines.extend(f"{i},{fmt_float(l)}" for i, l in enumerate(losses))
        with open(args.loss_out, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")


def _cmd_toy_eval(args) -> None:
    model = model_from_checkpoint(read_checkpoint(args.model))
    task = read_task_csv(args.task, model.vocab_size)
    line = f"accuracy={fmt_float(evaluate(model, task))}"
    print(line)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(line + "\n")


def _cmd_toy_predict_log(args) -> None:
    tuned = model_from_checkpoint(read_checkpoint(args.tuned))
    partial = (
        model_from_checkpoint(read_checkpoint(args.partial))
        if args.partial is not None
        else None
    )
    base = (
        model_from_checkpoint(read_checkpoint(args.base))
        if args.base is not None
        else None
    )
    task = read_task_csv(args.task, tuned.vocab_size)
    write_prediction_log(emit_prediction_log(tuned, partial, base, task), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kstickets", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("analyze", help="score every row of a checkpoint pair")
    p.add_argument("--base", required=True)
    p.add_argument("--tuned", required=True)
    p.add_argument("--tensor", required=True)
    p.add_argument("--freq", help="counts CSV to attach as the frequency column")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("select", help="pick winning-ticket rows from a scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--method", choices=["ks", "cos", "abs", "relative", "ratio", "kl", "frequency"])
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_select)

    p = sub.add_parser("mask", help="emit a 0/1 trainability mask from tickets")
    p.add_argument("--tickets", required=True)
    p.add_argument("--complement", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_mask)

    p = sub.add_parser("transfer", help="splice ticket rows from tuned into base")
    p.add_argument("--base", required=True)
    p.add_argument("--tuned", required=True)
    p.add_argument("--tensor", required=True)
    p.add_argument("--tickets", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_transfer)

    p = sub.add_parser("certify", help="certified-accuracy report from a prediction log")
    p.add_argument("--log", required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--alpha", required=True, help="comma-separated significance levels")
    p.add_argument("--prob-source", choices=["tuned", "base"], default="tuned", dest="prob_source")
    p.add_argument("--first-k", type=int, dest="first_k", help="keep only the first K positions per example")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_certify)

    p = sub.add_parser("freq", help="count token occurrences in an id stream")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--top-k", type=int, dest="top_k", help="write only the K most frequent tokens")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_freq)

    toy = sub.add_parser("toy", help="desk-scale trainer utilities")
    toysub = toy.add_subparsers(dest="toy_command", parser_class=_Parser)

    p = toysub.add_parser("gen", help="generate a seeded Zipf token-mapping task")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--zipf", type=float, default=1.5)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_toy_gen)

    p = toysub.add_parser("init", help="initialize a seeded model checkpoint")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_toy_init)

    p = toysub.add_parser("train", help="train a model on a task (maskable modes)")
    p.add_argument("--model", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--mode", choices=list(TRAIN_MODES), required=True)
    p.add_argument("--tickets")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32, dest="batch_size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-out", dest="loss_out")
    p.set_defaults(handler=_cmd_toy_train)

    p = toysub.add_parser("eval", help="pair accuracy of a model on a task")
    p.add_argument("--model", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_toy_eval)

    p = toysub.add_parser("predict-log", help="emit a per-pair prediction log CSV")
    p.add_argument("--tuned", required=True)
    p.add_argument("--partial")
    p.add_argument("--base")
    p.add_argument("--task", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_toy_predict_log)

    return parser


def run(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args.handler(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
