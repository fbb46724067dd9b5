"""Unsupervised entity alignment over two knowledge graphs."""

from ._core import (
    DataError,
    NumericError,
    Trainer,
    compose_relation,
    csls_adjust,
    evaluate,
    householder_apply,
    mutual_nearest_labels,
    read_emb,
    sampling_logit,
    similarity_matrix,
    synth,
    write_emb,
)

__all__ = [
    "DataError",
    "NumericError",
    "Trainer",
    "compose_relation",
    "csls_adjust",
    "evaluate",
    "householder_apply",
    "mutual_nearest_labels",
    "read_emb",
    "sampling_logit",
    "similarity_matrix",
    "synth",
    "write_emb",
]
