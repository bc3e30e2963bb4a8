"""Python access to the mteforge core.

Annotation records are exchanged as canonical JSON strings, one per record,
the same lines the JSONL files hold.
"""

import json

from ._core import (
    MteforgeError,
    agreement_gate,
    bleu,
    canonicalize,
    chrf,
    cross_filter,
    document_split,
    evaluate_run,
    icc3k,
    kendall_tau_b,
    normalize_scores,
    parse_judge_score,
    pearson,
    pseudo_embed,
    run_pipeline,
    spearman,
    zscore_per_evaluator,
)


def records_to_lines(records):
    """Dicts to the JSON lines the core functions take."""
    return [json.dumps(r, ensure_ascii=False) for r in records]


def lines_to_records(lines):
    return [json.loads(line) for line in lines]


__all__ = [
    "MteforgeError",
    "agreement_gate",
    "bleu",
    "canonicalize",
    "chrf",
    "cross_filter",
    "document_split",
    "evaluate_run",
    "icc3k",
    "kendall_tau_b",
    "lines_to_records",
    "normalize_scores",
    "parse_judge_score",
    "pearson",
    "pseudo_embed",
    "records_to_lines",
    "run_pipeline",
    "spearman",
    "zscore_per_evaluator",
]
