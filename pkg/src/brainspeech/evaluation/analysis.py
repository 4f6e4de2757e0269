"""Ridge-regression prediction analysis of decoder outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np


def ridge_solve(x: np.ndarray, y: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Closed-form normal equations: (X^T X + alpha I) w = X^T y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = x.shape[1]
    return np.linalg.solve(x.T @ x + alpha * np.eye(d), x.T @ y)


def pearson_r(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))


def _fold_slices(n: int, folds: int) -> List[np.ndarray]:
    """Contiguous, near-equal folds (deterministic, no shuffling)."""
    sizes = np.full(folds, n // folds)
    sizes[: n % folds] += 1
    idx = np.arange(n)
    out = []
    start = 0
    for s in sizes:
        out.append(idx[start : start + s])
        start += s
    return out


def cross_validated_r(features: np.ndarray, target: np.ndarray, alpha: float = 1.0,
                      folds: int = 5) -> float:
    """Mean held-out Pearson R over K folds of a standardized ridge fit."""
    features = np.asarray(features, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != target.shape[0]:
        raise ValueError(
            f"feature rows {features.shape} do not align with {target.shape[0]} trials"
        )
    n = features.shape[0]
    folds = min(folds, n)
    rs = []
    for test_idx in _fold_slices(n, folds):
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        if train_idx.size == 0 or test_idx.size == 0:
            continue
        mu = features[train_idx].mean(axis=0)
        sd = features[train_idx].std(axis=0)
        sd[sd == 0] = 1.0
        xtr = (features[train_idx] - mu) / sd
        xte = (features[test_idx] - mu) / sd
        y_mu = target[train_idx].mean()
        w = ridge_solve(xtr, target[train_idx] - y_mu, alpha)
        pred = xte @ w + y_mu
        rs.append(pearson_r(pred, target[test_idx]))
    return float(np.mean(rs)) if rs else 0.0


@dataclass
class PredictionAnalysis:
    per_feature_r: Dict[str, float]
    per_subject_r: Dict[str, Dict[int, float]] = field(default_factory=dict)
    sem: Dict[str, float] = field(default_factory=dict)


def prediction_analysis(
    true_word_prob: np.ndarray,
    feature_tables: Dict[str, np.ndarray],
    subjects: Optional[Sequence[int]] = None,
    alpha: float = 1.0,
    folds: int = 5,
) -> PredictionAnalysis:
    """How well each feature set predicts the decoder's true-word probability.

    One cross-validated R per feature table; per-subject breakdown (mean and
    SEM across subjects) when subject labels are given.
    """
    true_word_prob = np.asarray(true_word_prob, dtype=np.float64)
    result = PredictionAnalysis(per_feature_r={})
    for name, table in feature_tables.items():
        table = np.asarray(table, dtype=np.float64)
        if table.ndim == 1:
            table = table[:, None]
        if table.shape[0] != true_word_prob.shape[0]:
            raise ValueError(
                f"feature table {name!r} has {table.shape[0]} rows for "
                f"{true_word_prob.shape[0]} trials"
            )
        result.per_feature_r[name] = cross_validated_r(table, true_word_prob, alpha, folds)
        if subjects is not None:
            subjects_arr = np.asarray(subjects)
            per_sub = {}
            for s in np.unique(subjects_arr):
                mask = subjects_arr == s
                if mask.sum() >= folds:
                    per_sub[int(s)] = cross_validated_r(
                        table[mask], true_word_prob[mask], alpha, folds
                    )
            if per_sub:
                result.per_subject_r[name] = per_sub
                vals = np.array(list(per_sub.values()))
                result.sem[name] = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return result
