"""Composed image retrieval with multi-scale reasoning and reward-penalty scoring."""

from ._core import (
    CotmrError,
    average_precision_at_k,
    default_hyperparams,
    embed,
    evaluate,
    fingerprint,
    fuse,
    parse_image_reply,
    parse_object_reply,
    rank,
    recall_at_k,
    recall_subset_at_k,
    render_prompt,
    retrieve,
    write_synthetic,
)

__all__ = [
    "CotmrError",
    "average_precision_at_k",
    "default_hyperparams",
    "embed",
    "evaluate",
    "fingerprint",
    "fuse",
    "parse_image_reply",
    "parse_object_reply",
    "rank",
    "recall_at_k",
    "recall_subset_at_k",
    "render_prompt",
    "retrieve",
    "write_synthetic",
]
