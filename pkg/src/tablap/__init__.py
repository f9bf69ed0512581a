"""Dual-branch table question answering with trustworthiness labels.

The pipeline answers a question about a free-form table twice (a
chain-of-thought sampling branch and a script-planning numerical branch),
lets a selector model pick one answer, and attaches a [True]/[False]
trust label whose false rejections are corrected by an expanding-window
or UCB-bandit filter.
"""

from .datasets import DatasetStats, QaInstance, compute_stats, load_dataset, save_dataset
from .gateway import (
    ApiError,
    CacheMiss,
    Completion,
    CompletionCache,
    Gateway,
    ModelRole,
    PromptTemplate,
    UnboundSlot,
    cache_key,
    render,
)
from .metrics import Metrics, compute_metrics, exact_match, normalize_answer
from .pipeline import PipelineConfig, RunRecord, run_pipeline
from .sandbox import ExecResult, SandboxRequest, StubSandbox, SubprocessSandbox
from .selection import (
    BranchLabel,
    SelectionInput,
    export_finetune_corpus,
    make_selector_label,
    make_twe_label,
    select,
)
from .solver import (
    AnswerRecord,
    NoAnswer,
    ParseFailure,
    SolverOutput,
    parse_solver_response,
    resolve_answer,
    self_consistency_vote,
    solve_numerical,
    solve_self_consistency,
)
from .table import (
    KeywordHit,
    NUMERICAL_KEYWORDS,
    Question,
    Table,
    flatten_table,
    is_numerical_question,
    parse_table,
    unflatten_table,
)
from .trust import (
    ArmState,
    EwState,
    MabState,
    RejectionFilter,
    TrustLabel,
    evaluate_raw,
    ew_accuracy,
    ew_filter,
    ew_update,
    mab_filter,
    mab_update,
    simulate_filter,
    synthetic_stream,
    ucb_value,
)

__version__ = "0.1.0"
