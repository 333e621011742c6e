"""Per-row diff scores, winning-ticket selection, and consistency checks.

Works on any rank-2 tensor pair: each row is treated as a sample of `dim`
values, scored with the two-sample KS test plus five baseline change metrics
(cosine, absolute L2, relative value, relative ratio, histogram KL).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._text import fmt_float, parse_optional_float, parse_optional_int
from .checkpoint import EmbeddingView
from .ksstat import (
    Sample,
    ks_critical_value,
    ks_pvalue_asymptotic,
    ks_statistic,
    ks_two_sample_test,
)

__all__ = [
    "TokenScore",
    "WinningTicketSet",
    "SELECTION_METHODS",
    "score_row",
    "analyze_pair",
    "select_by_alpha",
    "select_top_k",
    "normalized_rank",
    "count_frequencies",
    "select_by_frequency",
    "compare_ticket_distributions",
    "write_scores_csv",
    "read_scores_csv",
    "write_ticket_file",
    "read_ticket_file",
]

SELECTION_METHODS = ("ks", "cos", "abs", "relative", "ratio", "kl", "frequency")

_DIV_FLOOR = 1e-8
_KL_BINS = 64
_KL_MASS_FLOOR = 1e-9

SCORES_HEADER = "token_id,ks_statistic,p_value,cos,abs_l2,relative,ratio,kl,frequency"
_TICKET_FIELDS = ("method", "alpha", "tau", "vocab_size", "token_ids")


@dataclass
class TokenScore:
    """Change metrics for one row of a base/tuned tensor pair."""

    token_id: int
    ks_statistic: float
    p_value: float
    cos: float
    abs_l2: float
    relative: float
    ratio: float
    kl: float
    frequency: int | None = None


@dataclass
class WinningTicketSet:
    """Selected row indices plus the method and threshold that produced them."""

    method: str
    vocab_size: int
    token_ids: tuple[int, ...]
    alpha: float | None = None
    tau: float | None = None

    def __post_init__(self) -> None:
        if self.method not in SELECTION_METHODS:
            raise ValueError(f"unknown selection method {self.method!r}")
        ids = tuple(int(i) for i in self.token_ids)
        if any(ids[k] >= ids[k + 1] for k in range(len(ids) - 1)):
            raise ValueError("token_ids must be strictly ascending")
        if ids and (ids[0] < 0 or ids[-1] >= self.vocab_size):
            raise ValueError(
                f"token_ids must lie in [0, {self.vocab_size}), got {ids[0]}..{ids[-1]}"
            )
        self.token_ids = ids

    def __len__(self) -> int:
        return len(self.token_ids)

    def __contains__(self, token_id: int) -> bool:
        return token_id in set(self.token_ids)


def _guarded_divisor(x: np.ndarray) -> np.ndarray:
    # sign-preserving floor keeps near-zero base weights from exploding ratios
    return np.where(np.abs(x) >= _DIV_FLOOR, x, np.copysign(_DIV_FLOOR, x))


def _histogram_kl(t: np.ndarray, b: np.ndarray) -> float:
    """KL(P_t || P_b) over shared equal-width bins spanning both rows."""
    lo = min(t.min(), b.min())
    hi = max(t.max(), b.max())
    if lo == hi:
        return 0.0  # both rows collapse onto a single shared bin
    edges = np.linspace(lo, hi, _KL_BINS + 1)
    pt = np.histogram(t, bins=edges)[0] / t.size
    pb = np.histogram(b, bins=edges)[0] / b.size
    pt = np.maximum(pt, _KL_MASS_FLOOR)
    pb = np.maximum(pb, _KL_MASS_FLOOR)
    pt /= pt.sum()
    pb /= pb.sum()
    return float(np.sum(pt * np.log(pt / pb)))


def score_row(base_row, tuned_row) -> TokenScore:
    """Score one row pair with every metric; token_id is left unset (-1).

    The p-value uses n = m = d, matching the per-row reading where one row of
    dimension d is one sample of size d.
    """
    b = np.asarray(base_row, dtype=np.float64).ravel()
    t = np.asarray(tuned_row, dtype=np.float64).ravel()
    if b.size != t.size:
        raise ValueError(f"row length mismatch: {b.size} vs {t.size}")
    if b.size < 2:
        raise ValueError("rows must have at least 2 entries")
    if not (np.isfinite(b).all() and np.isfinite(t).all()):
        raise ValueError("row values must be finite")
    d = b.size

    stat = ks_statistic(Sample(b), Sample(t))
    p = ks_pvalue_asymptotic(stat, d, d)

    norm_b = float(np.linalg.norm(b))
    norm_t = float(np.linalg.norm(t))
    if norm_b == 0.0 and norm_t == 0.0:
        cos = 1.0
    elif norm_b == 0.0 or norm_t == 0.0:
        cos = 0.0
    else:
        cos = float(np.clip(np.dot(b, t) / (norm_b * norm_t), -1.0, 1.0))

    g = _guarded_divisor(b)
    return TokenScore(
        token_id=-1,
        ks_statistic=stat,
        p_value=p,
        cos=cos,
        abs_l2=float(np.linalg.norm(t - b)),
        relative=float(np.mean(np.abs(t / g))),
        ratio=float(np.mean(np.abs((t - b) / g))),
        kl=_histogram_kl(t, b),
    )


def analyze_pair(base: EmbeddingView, tuned: EmbeddingView) -> list[TokenScore]:
    """Score every row of a shape-matched pair, ordered by token_id."""
    if (base.vocab_size, base.dim) != (tuned.vocab_size, tuned.dim):
        raise ValueError(
            f"shape mismatch: {(base.vocab_size, base.dim)} vs "
            f"{(tuned.vocab_size, tuned.dim)}"
        )
    bm = base.matrix
    tm = tuned.matrix
    out = []
    for i in range(base.vocab_size):
        s = score_row(bm[i], tm[i])
        s.token_id = i
        out.append(s)
    return out


def _vocab_size(scores: Sequence[TokenScore]) -> int:
    ids = sorted(s.token_id for s in scores)
    if ids != list(range(len(scores))):
        raise ValueError("scores must cover token ids 0..V-1 exactly once")
    return len(scores)


def select_by_alpha(
    scores: Sequence[TokenScore], alpha: float, d: int
) -> WinningTicketSet:
    """Rows whose per-row test rejects at significance alpha.

    For alpha < 1 a row is selected iff its p-value is below alpha. alpha = 1
    uses the threshold convention tau(1) = 0: every row with any distributional
    change (statistic > 0) is selected.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if d < 2:
        raise ValueError("d must be >= 2")
    v = _vocab_size(scores)
    if alpha == 1.0:
        tau = 0.0
        ids = sorted(s.token_id for s in scores if s.ks_statistic > 0.0)
    else:
        tau = ks_critical_value(alpha, d, d)
        ids = sorted(s.token_id for s in scores if s.p_value < alpha)
    return WinningTicketSet(
        method="ks", alpha=alpha, tau=tau, vocab_size=v, token_ids=tuple(ids)
    )


def _ranked(scores: Sequence[TokenScore], metric: str) -> list[TokenScore]:
    """Most-changed-first ordering for a metric, ties by ascending token_id."""
    if metric not in SELECTION_METHODS:
        raise ValueError(f"unknown selection method {metric!r}")
    if metric == "cos":
        key = lambda s: (s.cos, s.token_id)  # low cosine = large change
    else:
        attr = {"ks": "ks_statistic", "abs": "abs_l2"}.get(metric, metric)
        if metric == "frequency" and any(s.frequency is None for s in scores):
            raise ValueError("frequency ranking requires counts on every score")
        key = lambda s: (-getattr(s, attr), s.token_id)
    return sorted(scores, key=key)


def select_top_k(
    scores: Sequence[TokenScore], metric: str, k: int
) -> WinningTicketSet:
    """The k most-changed rows under a metric, returned in token_id order."""
    v = _vocab_size(scores)
    if k > v:
        raise ValueError(f"k={k} exceeds vocab size {v}")
    chosen = _ranked(scores, metric)[:k]
    return WinningTicketSet(
        method=metric,
        vocab_size=v,
        token_ids=tuple(sorted(s.token_id for s in chosen)),
    )


def normalized_rank(
    scores: Sequence[TokenScore], metric: str, token_id: int
) -> float:
    """1-based most-changed rank divided by V; most-changed row gives 1/V."""
    order = _ranked(scores, metric)
    for pos, s in enumerate(order, start=1):
        if s.token_id == token_id:
            return pos / len(order)
    raise ValueError(f"unknown token_id {token_id}")


def count_frequencies(corpus: Iterable[int], vocab_size: int) -> np.ndarray:
    """Exact occurrence counts per token id; absent ids count 0."""
    counts = np.zeros(vocab_size, dtype=np.int64)
    for pos, tok in enumerate(corpus):
        t = int(tok)
        if not 0 <= t < vocab_size:
            raise ValueError(
                f"token id {t} out of range [0, {vocab_size}) at position {pos}"
            )
        counts[t] += 1
    return counts


def select_by_frequency(counts, k: int) -> WinningTicketSet:
    """Top-k rows by corpus count, ties by ascending token_id."""
    counts = np.asarray(counts, dtype=np.int64)
    v = int(counts.size)
    if k > v:
        raise ValueError(f"k={k} exceeds vocab size {v}")
    order = np.lexsort((np.arange(v), -counts))
    return WinningTicketSet(
        method="frequency",
        vocab_size=v,
        token_ids=tuple(sorted(int(i) for i in order[:k])),
    )


def compare_ticket_distributions(
    tuned_a: EmbeddingView,
    tuned_b: EmbeddingView,
    tickets: WinningTicketSet,
    alpha: float,
) -> float:
    """Fraction of ticket rows whose two tuned versions pass the KS test.

    1.0 means every ticket row keeps the same distribution across the two
    checkpoints; 0.0 means every ticket row rejects at alpha.
    """
    if (tuned_a.vocab_size, tuned_a.dim) != (tuned_b.vocab_size, tuned_b.dim):
        raise ValueError(
            f"shape mismatch: {(tuned_a.vocab_size, tuned_a.dim)} vs "
            f"{(tuned_b.vocab_size, tuned_b.dim)}"
        )
    if tickets.vocab_size != tuned_a.vocab_size:
        raise ValueError(
            f"ticket vocab_size {tickets.vocab_size} does not match "
            f"matrix rows {tuned_a.vocab_size}"
        )
    if not tickets.token_ids:
        return 1.0
    am = tuned_a.matrix
    bm = tuned_b.matrix
    rejected = sum(
        ks_two_sample_test(Sample(am[i]), Sample(bm[i]), alpha).reject
        for i in tickets.token_ids
    )
    return 1.0 - rejected / len(tickets.token_ids)


def write_scores_csv(scores: Sequence[TokenScore], path) -> None:
    lines = [SCORES_HEADER]
    for s in scores:
        freq = "" if s.frequency is None else str(s.frequency)
        lines.append(
            ",".join(
                [
                    str(s.token_id),
                    fmt_float(s.ks_statistic),
                    fmt_float(s.p_value),
                    fmt_float(s.cos),
                    fmt_float(s.abs_l2),
                    fmt_float(s.relative),
                    fmt_float(s.ratio),
                    fmt_float(s.kl),
                    freq,
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_scores_csv(path) -> list[TokenScore]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != SCORES_HEADER:
        raise ValueError(f"{path}: not a scores CSV (bad header)")
    scores = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 9:
            raise ValueError(f"{path}: bad scores row at line {lineno}")
        scores.append(
            TokenScore(
                token_id=int(cells[0]),
                ks_statistic=float(cells[1]),
                p_value=float(cells[2]),
                cos=float(cells[3]),
                abs_l2=float(cells[4]),
                relative=float(cells[5]),
                ratio=float(cells[6]),
                kl=float(cells[7]),
                frequency=parse_optional_int(cells[8]),
            )
        )
    return scores


def write_ticket_file(tickets: WinningTicketSet, path) -> None:
    def opt(x):
        return "" if x is None else repr(float(x))

    lines = [
        f"method={tickets.method}",
        f"alpha={opt(tickets.alpha)}",
        f"tau={opt(tickets.tau)}",
        f"vocab_size={tickets.vocab_size}",
        "token_ids=" + ",".join(str(i) for i in tickets.token_ids),
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_ticket_file(path) -> WinningTicketSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    fields = {}
    for line in lines:
        if not line:
            continue
        key, _, value = line.partition("=")
        fields[key] = value
    missing = [k for k in _TICKET_FIELDS if k not in fields]
    if missing:
        raise ValueError(f"{path}: ticket file missing fields {missing}")
    ids_text = fields["token_ids"].strip()
    ids = tuple(int(i) for i in ids_text.split(",")) if ids_text else ()
    return WinningTicketSet(
        method=fields["method"].strip(),
        alpha=parse_optional_float(fields["alpha"]),
        tau=parse_optional_float(fields["tau"]),
        vocab_size=int(fields["vocab_size"]),
        token_ids=ids,
    )
