"""Label-based evaluation metrics for scores and weight estimates.

These are the only functions in the package that look at labels. Everything
upstream (discovery, weight estimation) is unsupervised; these metrics exist
to score those outputs in simulations and held-out evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    LengthMismatchError,
    SingleClassError,
    TooFewSamplesError,
    ZeroVarianceError,
)


@dataclass(frozen=True)
class DecileReport:
    """Positive counts by score decile, highest scores first."""

    counts: np.ndarray  # length 10, ints
    sizes: np.ndarray  # length 10, ints
    rates: np.ndarray  # counts / sizes

    def __post_init__(self):
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=np.int64))
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))


@dataclass(frozen=True)
class BestIndividual:
    """Strongest single predictor, oriented so higher scores mean positive."""

    index: int
    auc: float
    flipped: bool  # True when the column had to be negated
    report: "EvalReport"


@dataclass(frozen=True)
class WeightRecovery:
    """Agreement between estimated and true weights."""

    pearson: float
    spearman: float


def _check_binary(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape[0] != y.shape[0]:
        raise LengthMismatchError(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    if s.shape[0] < 2:
        raise TooFewSamplesError("need at least 2 samples")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    uniq = np.unique(y)
    if not np.all(np.isin(uniq, (0, 1))):
        raise ValueError(f"labels must be 0/1, got values {uniq}")
    if uniq.size < 2:
        raise SingleClassError("labels contain a single class")
    return s, y.astype(np.int64)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank statistic.

    Average ranks make tied scores contribute 1/2, so the value matches the
    trapezoidal curve exactly. Both numerator terms are integers (twice a sum
    of half-integer ranks), so the only rounding is the final division.
    """
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = stats.rankdata(s, method="average")
    two_rank_sum = int(round(2.0 * ranks[y == 1].sum()))
    num = two_rank_sum - n_pos * (n_pos + 1)
    return num / (2 * n_pos * n_neg)


def prc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the precision-recall curve as average precision.

    Samples are visited in descending score order; ties break by ascending
    original index so the value is deterministic. Each positive contributes
    its precision at the cut that first includes it, averaged over positives.
    """
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    k = np.arange(1, y.size + 1)
    precision = tp / k
    return float(precision[y_sorted == 1].mean())


def decile_analysis(scores: np.ndarray, labels: np.ndarray) -> DecileReport:
    """Count positives in each tenth of the sample, best scores first.

    When N is not a multiple of 10 the earliest deciles absorb the remainder
    one extra sample each. Ties in scores break by ascending original index.
    """
    s, y = _check_binary(scores, labels)
    n = y.size
    if n < 10:
        raise TooFewSamplesError(f"decile analysis needs N >= 10, got {n}")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    base, rem = divmod(n, 10)
    sizes = np.full(10, base, dtype=np.int64)
    sizes[:rem] += 1
    edges = np.concatenate(([0], np.cumsum(sizes)))
    counts = np.array(
        [int(y_sorted[edges[d]:edges[d + 1]].sum()) for d in range(10)], dtype=np.int64
    )
    return DecileReport(counts=counts, sizes=sizes, rates=counts / sizes)


def best_individual(scores_matrix: np.ndarray, labels: np.ndarray) -> BestIndividual:
    """Best single column by ROC AUC, allowing orientation flips.

    Each column is scored as max(auc, 1 - auc); the earliest column wins
    ties. `flipped` reports whether the winning column needed negation.
    """
    x = np.asarray(scores_matrix, dtype=float)
    if x.ndim != 2:
        raise ValueError("scores_matrix must be 2-dimensional")
    best_idx, best_auc, best_flip = 0, -np.inf, False
    for j in range(x.shape[1]):
        a = roc_auc(x[:, j], labels)
        oriented, flip = (a, False) if a >= 1.0 - a else (1.0 - a, True)
        if oriented > best_auc:
            best_idx, best_auc, best_flip = j, oriented, flip
    winner = -x[:, best_idx] if best_flip else x[:, best_idx]
    report = evaluate_scores(winner, labels, method=f"best_individual[{best_idx}]")
    return BestIndividual(index=best_idx, auc=float(best_auc), flipped=best_flip, report=report)


def weight_recovery(estimated: np.ndarray, true: np.ndarray) -> WeightRecovery:
    """Pearson and Spearman correlation between weight vectors."""
    e = np.asarray(estimated, dtype=float).ravel()
    t = np.asarray(true, dtype=float).ravel()
    if e.shape != t.shape:
        raise LengthMismatchError(f"shapes {e.shape} vs {t.shape}")
    if e.size < 2:
        raise TooFewSamplesError("need at least 2 weights")
    if np.ptp(e) == 0.0 or np.ptp(t) == 0.0:
        raise ZeroVarianceError("constant weight vector has no correlation")
    pear = stats.pearsonr(e, t).statistic
    spear = stats.spearmanr(e, t).statistic
    return WeightRecovery(pearson=float(pear), spearman=float(spear))


@dataclass(frozen=True)
class EvalReport:
    """Bundle of metrics for one score vector against labels."""

    roc: float
    prc: float
    deciles: DecileReport
    n_samples: int
    n_positive: int
    method: str = ""


def evaluate_scores(scores: np.ndarray, labels: np.ndarray, method: str = "") -> EvalReport:
    """ROC, PRC and decile metrics for one combined score vector."""
    s, y = _check_binary(scores, labels)
    return EvalReport(
        roc=roc_auc(s, y),
        prc=prc_auc(s, y),
        deciles=decile_analysis(s, y),
        n_samples=int(y.size),
        n_positive=int(y.sum()),
        method=method,
    )
