"""Row splicing between checkpoints and trainability masks.

Splicing is a byte copy, never a numeric transformation, so the diff_rows
oracle below can verify it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, TensorRecord, validate_pair
from .selection import WinningTicketSet

__all__ = [
    "RowMask",
    "splice_partial_transfer",
    "emit_mask",
    "diff_rows",
    "write_mask_file",
]


@dataclass
class RowMask:
    """Per-row trainability flags for an embedding matrix."""

    vocab_size: int
    trainable: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.trainable, dtype=bool).ravel()
        if arr.size != self.vocab_size:
            raise ValueError(
                f"mask length {arr.size} does not match vocab_size {self.vocab_size}"
            )
        self.trainable = arr


def splice_partial_transfer(
    base: Checkpoint,
    tuned: Checkpoint,
    tensor_name: str,
    tickets: WinningTicketSet,
) -> Checkpoint:
    """Copy ticket rows of tensor_name from tuned into base, bit-exactly.

    Every other byte of every tensor comes from base unchanged.
    """
    v, d = validate_pair(base, tuned, tensor_name)
    if tickets.vocab_size != v:
        raise ValueError(
            f"ticket vocab_size {tickets.vocab_size} does not match tensor rows {v}"
        )
    ids = list(tickets.token_ids)
    out = []
    for t in base.tensors:
        data = t.data.copy()
        if t.name == tensor_name and ids:
            m = data.reshape(v, d)
            m[ids] = tuned.tensor(tensor_name).data.reshape(v, d)[ids]
        out.append(TensorRecord(t.name, t.shape, data))
    return Checkpoint(out, format_version=base.format_version)


def emit_mask(tickets: WinningTicketSet, complement: bool = False) -> RowMask:
    """trainable[i] = (i in tickets) XOR complement."""
    trainable = np.zeros(tickets.vocab_size, dtype=bool)
    trainable[list(tickets.token_ids)] = True
    if complement:
        trainable = ~trainable
    return RowMask(tickets.vocab_size, trainable)


def diff_rows(a: Checkpoint, b: Checkpoint, tensor_name: str) -> set[int]:
    """Row indices whose payload bytes differ between the two checkpoints."""
    ta = a.tensor(tensor_name)
    tb = b.tensor(tensor_name)
    if ta.shape != tb.shape:
        raise ValueError(
            f"tensor {tensor_name!r} shape mismatch: {ta.shape} vs {tb.shape}"
        )
    rows = ta.shape[0]
    av = ta.data.view(np.uint32).reshape(rows, -1)
    bv = tb.data.view(np.uint32).reshape(rows, -1)
    return set(np.flatnonzero((av != bv).any(axis=1)).tolist())


def write_mask_file(mask: RowMask, path) -> None:
    """One line per row: 1 if trainable, 0 if frozen."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("".join("1\n" if t else "0\n" for t in mask.trainable))
