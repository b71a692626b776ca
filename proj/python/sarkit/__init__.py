"""Speech-act recognition for conversations with adversarial domain adaptation."""

import json

from ._core import (
    TAGS,
    ConfigError,
    ContractError,
    DataError,
    FormatError,
    Model,
    adapt,
    crf_initial_transitions,
    crf_log_partition,
    lambda_schedule,
    normalize_corpus,
    preprocess,
    synth,
    train,
    verify,
    viterbi,
)
from ._core import score_json as _score_json


def score(gold, pred):
    """Accuracy, macro-F1 and per-class scores for parallel tag sequences."""
    return json.loads(_score_json(gold, pred))


def evaluate(model, jsonl):
    """Metrics report of a loaded Model on a labeled JSONL corpus."""
    return json.loads(model.evaluate_json(jsonl))


__all__ = [
    "TAGS",
    "ConfigError",
    "ContractError",
    "DataError",
    "FormatError",
    "Model",
    "adapt",
    "crf_initial_transitions",
    "crf_log_partition",
    "evaluate",
    "lambda_schedule",
    "normalize_corpus",
    "preprocess",
    "score",
    "synth",
    "train",
    "verify",
    "viterbi",
]
