"""AUC-ROC by the exact rank statistic and the evaluation report schema."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata


def auc_roc(scores, labels) -> float:
    """Probability a random positive outranks a random negative.

    Exact pair-counting via midranks: tied score pairs get 0.5 credit.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be 1-D and equal length")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores)  # average rank on ties
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class EvalReport:
    horizon: str
    auc_roc: float
    n_pos: int
    n_neg: int
    seed: int
    config_hash: str

    def __post_init__(self):
        if not 0.0 <= self.auc_roc <= 1.0:
            raise ValueError(f"auc_roc out of [0, 1]: {self.auc_roc}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_file(cls, path) -> "EvalReport":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
