"""Landmark recognition retrieval, verification and re-ranking."""

from ._core import (
    DomainError,
    Error,
    FormatError,
    Guess,
    IoError,
    LookupError,
    ParseError,
    Prediction,
    Submission,
    UsageError,
    ValidationError,
    contrastive_loss,
    format_submission,
    gap,
    gem_pool,
    knn_search,
    load_descriptors,
    load_ground_truth,
    load_submission,
    mac_pool,
    parse_submission,
    ranked,
    recipes,
    rmac_pool,
    run_pipeline,
    save_descriptors,
    save_submission,
    set_thread_count,
    spoc_pool,
    triplet_loss,
    write_benchmark,
)

__all__ = [name for name in dir() if not name.startswith("_")]
