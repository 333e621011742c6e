"""Desk-scale trainer: a one-layer token-mapping model with maskable updates.

The model predicts a target token from a single source token via
softmax(output_weights @ embedding[source]); output weights stay frozen in
every mode except full tuning, so the embedding rows carry all task signal.
Training is plain seeded minibatch SGD and bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .certify import PredictionRecord
from .checkpoint import Checkpoint, TensorRecord
from .selection import WinningTicketSet

__all__ = [
    "ToyModel",
    "TrainConfig",
    "SyntheticTask",
    "TRAIN_MODES",
    "EMBEDDING_TENSOR",
    "OUTPUT_TENSOR",
    "EXAMPLE_GROUP",
    "generate_task",
    "init_model",
    "forward",
    "train",
    "evaluate",
    "emit_prediction_log",
    "grad_check",
    "model_to_checkpoint",
    "model_from_checkpoint",
    "write_task_csv",
    "read_task_csv",
]

TRAIN_MODES = ("full", "embed", "partial", "frozen_complement")

EMBEDDING_TENSOR = "embedding"
OUTPUT_TENSOR = "output_weights"

# Prediction logs group consecutive pairs into pseudo-examples of this size so
# first-k filtering has positions to act on.
EXAMPLE_GROUP = 20

TASK_HEADER = "source,target"


@dataclass
class ToyModel:
    embedding: np.ndarray
    output_weights: np.ndarray

    def __post_init__(self) -> None:
        emb = np.ascontiguousarray(np.asarray(self.embedding, dtype=np.float32))
        out = np.ascontiguousarray(np.asarray(self.output_weights, dtype=np.float32))
        if emb.ndim != 2 or out.ndim != 2 or emb.shape != out.shape:
            raise ValueError(
                f"embedding and output_weights must both be [V, d], got "
                f"{emb.shape} and {out.shape}"
            )
        self.embedding = emb
        self.output_weights = out

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    def copy(self) -> "ToyModel":
        return ToyModel(self.embedding.copy(), self.output_weights.copy())


@dataclass
class TrainConfig:
    mode: str
    tickets: WinningTicketSet | None = None
    learning_rate: float = 0.1
    epochs: int = 50
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode in ("partial", "frozen_complement") and self.tickets is None:
            raise ValueError(f"mode {self.mode!r} requires a ticket set")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class SyntheticTask:
    """Source -> target token pairs; targets follow a fixed permutation.

    Sources are drawn from a designated content sub-vocabulary with
    rank^(-zipf_exponent) weights, so a handful of tokens dominate the stream.
    `mapping` is None for tasks loaded from file.
    """

    vocab_size: int
    sources: np.ndarray
    targets: np.ndarray
    mapping: dict[int, int] | None = None

    def __post_init__(self) -> None:
        src = np.asarray(self.sources, dtype=np.int64).ravel()
        tgt = np.asarray(self.targets, dtype=np.int64).ravel()
        if src.size != tgt.size:
            raise ValueError("sources and targets must have equal length")
        for arr, label in ((src, "source"), (tgt, "target")):
            if arr.size and (arr.min() < 0 or arr.max() >= self.vocab_size):
                raise ValueError(f"{label} ids must lie in [0, {self.vocab_size})")
        self.sources = src
        self.targets = tgt

    @property
    def n_pairs(self) -> int:
        return int(self.sources.size)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.sources.tolist(), self.targets.tolist()))


def generate_task(
    seed: int, vocab_size: int, n_pairs: int, zipf_exponent: float = 1.5
) -> SyntheticTask:
    """Seeded Zipf-weighted token-mapping task over half the vocabulary."""
    if vocab_size < 4:
        raise ValueError("vocab_size must be >= 4")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    content = rng.choice(vocab_size, size=vocab_size // 2, replace=False)
    permuted = rng.permutation(content)
    ranks = np.arange(1, content.size + 1, dtype=np.float64)
    weights = ranks ** (-float(zipf_exponent))
    weights /= weights.sum()
    idx = rng.choice(content.size, size=n_pairs, p=weights)
    mapping = {int(s): int(t) for s, t in zip(content, permuted)}
    return SyntheticTask(
        vocab_size=vocab_size,
        sources=content[idx],
        targets=permuted[idx],
        mapping=mapping,
    )


def init_model(seed: int, vocab_size: int, dim: int) -> ToyModel:
    """Both matrices i.i.d. uniform in [-0.1, 0.1] from one seeded stream."""
    if vocab_size < 1 or dim < 1:
        raise ValueError("vocab_size and dim must be >= 1")
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-0.1, 0.1, size=(vocab_size, dim)).astype(np.float32)
    out = rng.uniform(-0.1, 0.1, size=(vocab_size, dim)).astype(np.float32)
    return ToyModel(emb, out)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: ToyModel, source_token: int) -> np.ndarray:
    """Next-token probability vector for one source token."""
    if not 0 <= source_token < model.vocab_size:
        raise ValueError(
            f"token {source_token} out of range [0, {model.vocab_size})"
        )
    logits = model.output_weights.astype(np.float64) @ model.embedding[
        source_token
    ].astype(np.float64)
    return _softmax(logits)


def _batch_probs(model: ToyModel, sources: np.ndarray) -> np.ndarray:
    emb = model.embedding.astype(np.float64)
    w = model.output_weights.astype(np.float64)
    return _softmax(emb[sources] @ w.T)


def _trainable_rows(mode: str, tickets: WinningTicketSet | None, v: int) -> np.ndarray:
    if mode in ("full", "embed"):
        return np.arange(v)
    selected = np.zeros(v, dtype=bool)
    selected[list(tickets.token_ids)] = True
    if mode == "frozen_complement":
        selected = ~selected
    return np.flatnonzero(selected)


def train(
    model: ToyModel, task: SyntheticTask, config: TrainConfig
) -> tuple[ToyModel, list[float]]:
    """Seeded minibatch SGD on cross-entropy; returns (tuned model, loss curve).

    The mode's gradient mask is exact: rows outside the trainable set are never
    written, so they stay bit-identical to the input model. Output weights
    update only in full mode.
    """
    if task.vocab_size != model.vocab_size:
        raise ValueError(
            f"task vocab {task.vocab_size} does not match model vocab "
            f"{model.vocab_size}"
        )
    if config.tickets is not None and config.tickets.vocab_size != model.vocab_size:
        raise ValueError("ticket vocab_size does not match model")
    if task.n_pairs == 0:
        raise ValueError("task has no pairs")

    emb = model.embedding.copy()
    out = model.output_weights.copy()
    v, d = emb.shape
    rows = _trainable_rows(config.mode, config.tickets, v)
    update_out = config.mode == "full"
    lr = config.learning_rate

    rng = np.random.default_rng(config.seed)
    n = task.n_pairs
    losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            src = task.sources[batch]
            tgt = task.targets[batch]
            e64 = emb[src].astype(np.float64)
            w64 = out.astype(np.float64)
            probs = _softmax(e64 @ w64.T)
            picked = probs[np.arange(batch.size), tgt]
            epoch_loss += float(-np.log(picked).sum())

            delta = probs
            delta[np.arange(batch.size), tgt] -= 1.0
            delta /= batch.size
            grad_emb = np.zeros((v, d))
            np.add.at(grad_emb, src, delta @ w64)
            if update_out:
                out = (w64 - lr * (delta.T @ e64)).astype(np.float32)
            emb[rows] = (emb[rows].astype(np.float64) - lr * grad_emb[rows]).astype(
                np.float32
            )
        losses.append(epoch_loss / n)
    return ToyModel(emb, out), losses


def evaluate(model: ToyModel, task: SyntheticTask) -> float:
    """Fraction of pairs predicted exactly; argmax ties go to the lowest id."""
    if task.n_pairs == 0:
        raise ValueError("task has no pairs")
    probs = _batch_probs(model, task.sources)
    preds = np.argmax(probs, axis=1)
    return float((preds == task.targets).mean())


def _top2(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.argsort(-probs, axis=1, kind="stable")
    rows = np.arange(probs.shape[0])
    top = order[:, 0]
    return top, probs[rows, top], probs[rows, order[:, 1]]


def emit_prediction_log(
    tuned_model: ToyModel,
    partial_model: ToyModel | None,
    base_model: ToyModel | None,
    task: SyntheticTask,
) -> list[PredictionRecord]:
    """One record per pair, grouped into pseudo-examples of 20 positions."""
    shape = (tuned_model.vocab_size, tuned_model.dim)
    for other in (partial_model, base_model):
        if other is not None and (other.vocab_size, other.dim) != shape:
            raise ValueError(
                f"model shape mismatch: {shape} vs {(other.vocab_size, other.dim)}"
            )
    if task.n_pairs == 0:
        raise ValueError("task has no pairs")

    tuned_pred, p1, p2 = _top2(_batch_probs(tuned_model, task.sources))
    partial_pred = None
    if partial_model is not None:
        partial_pred = np.argmax(_batch_probs(partial_model, task.sources), axis=1)
    base_p1 = base_p2 = None
    if base_model is not None:
        _, base_p1, base_p2 = _top2(_batch_probs(base_model, task.sources))

    records = []
    for i in range(task.n_pairs):
        records.append(
            PredictionRecord(
                example_id=i // EXAMPLE_GROUP,
                position=i % EXAMPLE_GROUP,
                reference_token=int(task.targets[i]),
                tuned_prediction=int(tuned_pred[i]),
                p1=float(p1[i]),
                p2=float(p2[i]),
                partial_prediction=None
                if partial_pred is None
                else int(partial_pred[i]),
                base_p1=None if base_p1 is None else float(base_p1[i]),
                base_p2=None if base_p2 is None else float(base_p2[i]),
            )
        )
    return records


def grad_check(model: ToyModel, task: SyntheticTask, epsilon: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks the cross-entropy gradient w.r.t. embedding entries on a fixed
    batch (first 32 pairs); entries are strided deterministically when the
    embedding is too large to sweep entirely.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if task.n_pairs == 0:
        raise ValueError("task has no pairs")
    b = min(32, task.n_pairs)
    src = task.sources[:b]
    tgt = task.targets[:b]
    w64 = model.output_weights.astype(np.float64)
    emb64 = model.embedding.astype(np.float64)
    v, d = emb64.shape

    probs = _softmax(emb64[src] @ w64.T)
    delta = probs
    delta[np.arange(b), tgt] -= 1.0
    delta /= b
    analytic = np.zeros((v, d))
    np.add.at(analytic, src, delta @ w64)

    def loss_at(e: np.ndarray) -> float:
        p = _softmax(e[src] @ w64.T)
        return float(-np.log(p[np.arange(b), tgt]).mean())

    total = v * d
    if total <= 512:
        flat_indices = np.arange(total)
    else:
        flat_indices = np.linspace(0, total - 1, 512).astype(np.int64)
    worst = 0.0
    for flat in flat_indices:
        i, j = divmod(int(flat), d)
        e = emb64.copy()
        e[i, j] += epsilon
        lp = loss_at(e)
        e[i, j] -= 2.0 * epsilon
        lm = loss_at(e)
        fd = (lp - lm) / (2.0 * epsilon)
        ga = analytic[i, j]
        err = abs(ga - fd) / max(1e-8, abs(ga) + abs(fd))
        worst = max(worst, err)
    return worst


def model_to_checkpoint(model: ToyModel) -> Checkpoint:
    return Checkpoint(
        [
            TensorRecord(EMBEDDING_TENSOR, model.embedding.shape, model.embedding.ravel()),
            TensorRecord(
                OUTPUT_TENSOR, model.output_weights.shape, model.output_weights.ravel()
            ),
        ]
    )


def model_from_checkpoint(ckpt: Checkpoint) -> ToyModel:
    emb = ckpt.tensor(EMBEDDING_TENSOR)
    out = ckpt.tensor(OUTPUT_TENSOR)
    return ToyModel(emb.array.copy(), out.array.copy())


def write_task_csv(task: SyntheticTask, path) -> None:
    lines = [TASK_HEADER]
    lines.extend(f"{s},{t}" for s, t in zip(task.sources, task.targets))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_task_csv(path, vocab_size: int) -> SyntheticTask:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TASK_HEADER:
        raise ValueError(f"{path}: not a task file (bad header)")
    if len(lines) < 2:
        raise ValueError(f"{path}: no pairs")
    sources = []
    targets = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 2:
            raise ValueError(f"{path}: bad pair at line {lineno}")
        try:
            sources.append(int(cells[0]))
            targets.append(int(cells[1]))
        except ValueError as exc:
            raise ValueError(f"{path}: bad pair at line {lineno}") from exc
    return SyntheticTask(
        vocab_size=vocab_size,
        sources=np.asarray(sources, dtype=np.int64),
        targets=np.asarray(targets, dtype=np.int64),
    )
