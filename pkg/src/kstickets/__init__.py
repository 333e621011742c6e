"""Checkpoint diffing with per-row two-sample KS tests.

Finds the embedding rows whose value distribution shifted during fine-tuning
("winning tickets"), emits masks and partial-transfer checkpoints for them,
and reports certified prediction accuracy; includes a desk-scale trainer for
end-to-end verification.
"""

from .certify import (
    CertificationReport,
    PredictionRecord,
    alpha_sweep,
    certification_report,
    certify_record,
    filter_first_k,
)
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    EmbeddingView,
    TensorRecord,
    get_embedding,
    import_csv_matrix,
    read_checkpoint,
    validate_pair,
    write_checkpoint,
)
from .ksstat import (
    KsResult,
    Sample,
    empirical_cdf_at,
    ks_critical_value,
    ks_pvalue_asymptotic,
    ks_pvalue_permutation,
    ks_statistic,
    ks_two_sample_test,
    tau_from_pvalue_inversion,
)
from .selection import (
    TokenScore,
    WinningTicketSet,
    analyze_pair,
    compare_ticket_distributions,
    count_frequencies,
    normalized_rank,
    score_row,
    select_by_alpha,
    select_by_frequency,
    select_top_k,
)
from .toytrain import (
    SyntheticTask,
    ToyModel,
    TrainConfig,
    emit_prediction_log,
    evaluate,
    forward,
    generate_task,
    grad_check,
    init_model,
    train,
)
from .transfer import RowMask, diff_rows, emit_mask, splice_partial_transfer

__version__ = "0.1.0"
