import pytest

from kstickets.checkpoint import read_checkpoint, write_checkpoint
from kstickets.cli import run
from kstickets.selection import read_scores_csv, read_ticket_file
from kstickets.toytrain import (
    TrainConfig,
    generate_task,
    init_model,
    model_to_checkpoint,
    train,
    write_task_csv,
)


@pytest.fixture()
def workdir(tmp_path):
    """Seeded task, base checkpoint, and embed-tuned checkpoint on disk."""
    task = generate_task(1, 64, 300, 1.5)
    model = init_model(1, 64, 32)
    tuned, _ = train(model, task, TrainConfig(mode="embed", epochs=15, seed=1))
    write_task_csv(task, tmp_path / "task.csv")
    write_checkpoint(model_to_checkpoint(model), tmp_path / "base.ckpt")
    write_checkpoint(model_to_checkpoint(tuned), tmp_path / "tuned.ckpt")
    (tmp_path / "corpus.txt").write_text(
        "\n".join(str(s) for s in task.sources) + "\n"
    )
    return tmp_path


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "analyze" in capsys.readouterr().out


@pytest.mark.parametrize(
    "cmd",
    [
        ["analyze"],
        ["select"],
        ["mask"],
        ["transfer"],
        ["certify"],
        ["freq"],
        ["toy"],
        ["toy", "gen"],
        ["toy", "init"],
        ["toy", "train"],
        ["toy", "eval"],
        ["toy", "predict-log"],
    ],
)
def test_subcommand_help_exits_zero(cmd, capsys):
    assert run(cmd + ["--help"]) == 0


def test_no_subcommand_is_usage_error(capsys):
    assert run([]) == 1


def test_missing_required_flag(capsys):
    assert run(["analyze", "--base", "x"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert run(["mask", "--nope"]) == 1


def test_corrupt_checkpoint_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    code = run(
        [
            "analyze",
            "--base",
            str(bad),
            "--tuned",
            str(bad),
            "--tensor",
            "embedding",
            "--out",
            str(tmp_path / "scores.csv"),
        ]
    )
    assert code == 2
    assert "not a checkpoint" in capsys.readouterr().err


def test_analyze_writes_scores(workdir):
    out = workdir / "scores.csv"
    code = run(
        [
            "analyze",
            "--base",
            str(workdir / "base.ckpt"),
            "--tuned",
            str(workdir / "tuned.ckpt"),
            "--tensor",
            "embedding",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    scores = read_scores_csv(out)
    assert len(scores) == 64
    assert all(s.frequency is None for s in scores)


def test_analyze_attaches_frequencies(workdir):
    assert (
        run(
            [
                "freq",
                "--corpus",
                str(workdir / "corpus.txt"),
                "--vocab",
                "64",
                "--out",
                str(workdir / "counts.csv"),
            ]
        )
        == 0
    )
    assert (
        run(
            [
                "analyze",
                "--base",
                str(workdir / "base.ckpt"),
                "--tuned",
                str(workdir / "tuned.ckpt"),
                "--tensor",
                "embedding",
                "--freq",
                str(workdir / "counts.csv"),
                "--out",
                str(workdir / "scores.csv"),
            ]
        )
        == 0
    )
    scores = read_scores_csv(workdir / "scores.csv")
    assert all(s.frequency is not None for s in scores)
    assert sum(s.frequency for s in scores) == 300


def full_analyze(workdir):
    run(
        [
            "analyze",
            "--base",
            str(workdir / "base.ckpt"),
            "--tuned",
            str(workdir / "tuned.ckpt"),
            "--tensor",
            "embedding",
            "--out",
            str(workdir / "scores.csv"),
        ]
    )


def test_select_by_alpha_then_mask_and_transfer(workdir):
    full_analyze(workdir)
    assert (
        run(
            [
                "select",
                "--scores",
                str(workdir / "scores.csv"),
                "--alpha",
                "0.05",
                "--dim",
                "32",
                "--out",
                str(workdir / "tickets.txt"),
            ]
        )
        == 0
    )
    tickets = read_ticket_file(workdir / "tickets.txt")
    assert tickets.method == "ks"
    assert 0 < len(tickets.token_ids) < 64

    assert (
        run(
            [
                "mask",
                "--tickets",
                str(workdir / "tickets.txt"),
                "--out",
                str(workdir / "mask.txt"),
            ]
        )
        == 0
    )
    mask_lines = (workdir / "mask.txt").read_text().splitlines()
    assert len(mask_lines) == 64
    assert sum(int(x) for x in mask_lines) == len(tickets.token_ids)

    assert (
        run(
            [
                "transfer",
                "--base",
                str(workdir / "base.ckpt"),
                "--tuned",
                str(workdir / "tuned.ckpt"),
                "--tensor",
                "embedding",
                "--tickets",
                str(workdir / "tickets.txt"),
                "--out",
                str(workdir / "spliced.ckpt"),
            ]
        )
        == 0
    )
    spliced = read_checkpoint(workdir / "spliced.ckpt")
    base = read_checkpoint(workdir / "base.ckpt")
    assert (
        spliced.tensor("output_weights").data.tobytes()
        == base.tensor("output_weights").data.tobytes()
    )


def test_select_requires_exactly_one_mode(workdir):
    full_analyze(workdir)
    args = ["select", "--scores", str(workdir / "scores.csv"), "--out", "t.txt"]
    assert run(args) == 1
    assert run(args + ["--alpha", "0.05", "--dim", "32", "--method", "ks"]) == 1
    assert run(args + ["--alpha", "0.05"]) == 1  # missing --dim


def test_select_top_k(workdir):
    full_analyze(workdir)
    assert (
        run(
            [
                "select",
                "--scores",
                str(workdir / "scores.csv"),
                "--method",
                "abs",
                "--top-k",
                "5",
                "--out",
                str(workdir / "topk.txt"),
            ]
        )
        == 0
    )
    tickets = read_ticket_file(workdir / "topk.txt")
    assert tickets.method == "abs"
    assert len(tickets.token_ids) == 5


def test_freq_top_k(workdir):
    assert (
        run(
            [
                "freq",
                "--corpus",
                str(workdir / "corpus.txt"),
                "--vocab",
                "64",
                "--top-k",
                "3",
                "--out",
                str(workdir / "top3.csv"),
            ]
        )
        == 0
    )
    lines = (workdir / "top3.csv").read_text().splitlines()
    assert lines[0] == "token_id,count"
    assert len(lines) == 4
    counts = [int(l.split(",")[1]) for l in lines[1:]]
    assert counts == sorted(counts, reverse=True)


def test_toy_pipeline_via_cli(tmp_path, capsys):
    root = tmp_path
    assert run(["toy", "gen", "--seed", "3", "--vocab", "32", "--pairs", "100",
                "--zipf", "1.2", "--out", str(root / "task.csv")]) == 0
    assert run(["toy", "init", "--seed", "3", "--vocab", "32", "--dim", "16",
                "--out", str(root / "model.ckpt")]) == 0
    assert run(["toy", "train", "--model", str(root / "model.ckpt"),
                "--task", str(root / "task.csv"), "--mode", "embed",
                "--epochs", "10", "--seed", "3",
                "--out", str(root / "tuned.ckpt"),
                "--loss-out", str(root / "loss.csv")]) == 0
    loss_lines = (root / "loss.csv").read_text().splitlines()
    assert loss_lines[0] == "epoch,loss"
    assert len(loss_lines) == 11

    assert run(["toy", "eval", "--model", str(root / "tuned.ckpt"),
                "--task", str(root / "task.csv"),
                "--out", str(root / "acc.txt")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("accuracy=")
    assert (root / "acc.txt").read_text().startswith("accuracy=")

    assert run(["toy", "predict-log", "--tuned", str(root / "tuned.ckpt"),
                "--partial", str(root / "tuned.ckpt"),
                "--base", str(root / "model.ckpt"),
                "--task", str(root / "task.csv"),
                "--out", str(root / "log.csv")]) == 0

    assert run(["certify", "--log", str(root / "log.csv"), "--dim", "16",
                "--alpha", "0.05,0.5,1.0", "--first-k", "20",
                "--out", str(root / "report.txt")]) == 0
    report = (root / "report.txt").read_text()
    assert report.count("alpha=") == 3

    assert run(["certify", "--log", str(root / "log.csv"), "--dim", "16",
                "--alpha", "0.05", "--prob-source", "base",
                "--out", str(root / "report_base.txt")]) == 0
    assert "certified_accuracy=" in (root / "report_base.txt").read_text()


def test_toy_train_partial_requires_tickets(tmp_path):
    run(["toy", "gen", "--seed", "1", "--vocab", "16", "--pairs", "20",
         "--out", str(tmp_path / "task.csv")])
    run(["toy", "init", "--seed", "1", "--vocab", "16", "--dim", "4",
         "--out", str(tmp_path / "model.ckpt")])
    code = run(["toy", "train", "--model", str(tmp_path / "model.ckpt"),
                "--task", str(tmp_path / "task.csv"), "--mode", "partial",
                "--out", str(tmp_path / "out.ckpt")])
    assert code == 1


def test_certify_bad_alpha_list(workdir):
    (workdir / "log.csv").write_text(
        "example_id,position,reference_id,tuned_pred_id,tuned_p1,tuned_p2,"
        "partial_pred_id,base_p1,base_p2\n0,0,1,1,0.9,0.1,,,\n"
    )
    code = run(["certify", "--log", str(workdir / "log.csv"), "--dim", "16",
                "--alpha", "abc", "--out", str(workdir / "r.txt")])
    assert code == 1


def test_freq_out_of_range_token(tmp_path, capsys):
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("1\n2\n99\n")
    code = run(["freq", "--corpus", str(corpus), "--vocab", "8",
                "--out", str(tmp_path / "c.csv")])
    assert code == 2
    assert "out of range" in capsys.readouterr().err
