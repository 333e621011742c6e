#!/usr/bin/env python3
"""End-to-end desk-scale experiment driven entirely through the CLI.

Generates a Zipf token-mapping task, embed-tunes a seeded model, selects
winning-ticket rows with the per-row KS test, then compares partial tuning,
partial transfer, frequency tuning, and frozen-complement training against
the embed-tuned reference. All artifacts land in --workdir.
"""

import argparse
import sys
from pathlib import Path

from kstickets.cli import run
from kstickets.checkpoint import read_checkpoint
from kstickets.selection import read_ticket_file
from kstickets.toytrain import evaluate, model_from_checkpoint, read_task_csv


def sh(args):
    code = run([str(a) for a in args])
    if code != 0:
        sys.exit(f"stage failed ({code}): {' '.join(str(a) for a in args)}")


def accuracy(workdir, model_path, task_path):
    model = model_from_checkpoint(read_checkpoint(model_path))
    return evaluate(model, read_task_csv(task_path, model.vocab_size))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="toy_run", help="output directory")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--vocab", type=int, default=256)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--zipf", type=float, default=1.8)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--lr", type=float, default=0.1)
    args = ap.parse_args()

    w = Path(args.workdir)
    w.mkdir(parents=True, exist_ok=True)
    task = w / "task.csv"
    base = w / "base.ckpt"

    sh(["toy", "gen", "--seed", args.seed, "--vocab", args.vocab,
        "--pairs", args.pairs, "--zipf", args.zipf, "--out", task])
    sh(["toy", "init", "--seed", args.seed, "--vocab", args.vocab,
        "--dim", args.dim, "--out", base])

    train_common = ["--model", base, "--task", task, "--lr", args.lr,
                    "--epochs", args.epochs, "--seed", args.seed]
    sh(["toy", "train", *train_common, "--mode", "embed",
        "--out", w / "embed.ckpt", "--loss-out", w / "embed_loss.csv"])

    sh(["analyze", "--base", base, "--tuned", w / "embed.ckpt",
        "--tensor", "embedding", "--out", w / "scores.csv"])
    sh(["select", "--scores", w / "scores.csv", "--alpha", args.alpha,
        "--dim", args.dim, "--out", w / "tickets.txt"])
    tickets = read_ticket_file(w / "tickets.txt")

    sh(["mask", "--tickets", w / "tickets.txt", "--out", w / "mask.txt"])
    sh(["toy", "train", *train_common, "--mode", "partial",
        "--tickets", w / "tickets.txt", "--out", w / "partial.ckpt"])
    sh(["toy", "train", *train_common, "--mode", "frozen_complement",
        "--tickets", w / "tickets.txt", "--out", w / "frozen.ckpt"])
    sh(["transfer", "--base", base, "--tuned", w / "embed.ckpt",
        "--tensor", "embedding", "--tickets", w / "tickets.txt",
        "--out", w / "transfer.ckpt"])

    # frequency tuning: rank rows by corpus counts instead of the KS test
    corpus = w / "corpus.txt"
    src = task.read_text().splitlines()[1:]
    corpus.write_text("\n".join(line.split(",")[0] for line in src) + "\n")
    sh(["freq", "--corpus", corpus, "--vocab", args.vocab,
        "--out", w / "counts.csv"])
    sh(["analyze", "--base", base, "--tuned", w / "embed.ckpt",
        "--tensor", "embedding", "--freq", w / "counts.csv",
        "--out", w / "scores_freq.csv"])
    sh(["select", "--scores", w / "scores_freq.csv", "--method", "frequency",
        "--top-k", len(tickets.token_ids), "--out", w / "freq_tickets.txt"])
    sh(["toy", "train", *train_common, "--mode", "partial",
        "--tickets", w / "freq_tickets.txt", "--out", w / "freqtune.ckpt"])

    sh(["toy", "predict-log", "--tuned", w / "embed.ckpt",
        "--partial", w / "partial.ckpt", "--base", base,
        "--task", task, "--out", w / "log.csv"])
    sh(["certify", "--log", w / "log.csv", "--dim", args.dim,
        "--alpha", "0.01,0.05,0.1,0.25,0.5,1.0", "--first-k", "20",
        "--out", w / "report.txt"])

    rows = [
        ("untrained", base),
        ("embed tuning", w / "embed.ckpt"),
        ("partial tuning", w / "partial.ckpt"),
        ("partial transfer", w / "transfer.ckpt"),
        ("frequency tuning", w / "freqtune.ckpt"),
        ("frozen complement", w / "frozen.ckpt"),
    ]
    print(f"\nseed={args.seed} vocab={args.vocab} dim={args.dim} "
          f"tickets={len(tickets.token_ids)} (alpha={args.alpha})")
    for name, path in rows:
        print(f"  {name:<18} accuracy={accuracy(w, path, task):.4f}")
    print(f"\ncertification report: {w / 'report.txt'}")


if __name__ == "__main__":
    main()
