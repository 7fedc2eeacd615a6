"""Core domain types and closed-form operations.

The data model: M continuous predictors score N samples. Each predictor i
belongs to one of K latent groups; within a group, scores are a loading b_i
times a shared latent signal plus independent noise. The latent signal for
group k is a two-component Gaussian mixture over the binary class y, with
class-conditional means mu_k0 (class 0) and mu_k1 (class 1) and a common
within-class standard deviation sigma_k. All estimators in this package
operate on column-standardized scores; the parameters stored in ModelParams
are understood on that standardized scale, with each latent signal centered
(pi * mu_k1 + (1 - pi) * mu_k0 = 0).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import (
    AutoStandardizeWarning,
    ConstantColumnError,
    DegenerateDenominatorError,
    InvalidConfigError,
    LengthMismatchError,
    NotStandardizedError,
    NotSymmetricError,
    SampleSizeWarning,
    ZeroVarianceError,
)

SD_FLOOR = 1e-12
DENOM_FLOOR = 1e-9
STANDARDIZED_TOL = 1e-9


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ScoreMatrix:
    """N x M matrix of continuous scores, one column per predictor."""

    values: np.ndarray
    predictor_names: tuple[str, ...] = ()
    standardized: bool = False

    def __post_init__(self):
        vals = _frozen_array(self.values)
        if vals.ndim != 2:
            raise InvalidConfigError("scores must be a 2-D array")
        n, m = vals.shape
        if n < 2:
            raise InvalidConfigError(f"need at least 2 samples, got {n}")
        if m < 1:
            raise InvalidConfigError("need at least 1 predictor")
        if not np.all(np.isfinite(vals)):
            raise InvalidConfigError("scores contain non-finite entries")
        names = tuple(self.predictor_names) or tuple(f"f{i + 1}" for i in range(m))
        if len(names) != m:
            raise LengthMismatchError(f"{len(names)} names for {m} predictors")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "predictor_names", names)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelVector:
    """Binary 0/1 labels aligned with the rows of a ScoreMatrix."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, copy=True)
        if vals.ndim != 1:
            raise InvalidConfigError("labels must be 1-D")
        if not np.isin(vals, (0, 1)).all():
            raise InvalidConfigError("labels must be 0 or 1")
        vals = _frozen_array(vals, dtype=np.int64)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric M x M covariance, plus the sample count that produced it.

    sample_count is None for model-implied (closed-form) covariances.
    """

    entries: np.ndarray
    sample_count: int | None = None

    def __post_init__(self):
        ent = _frozen_array(self.entries)
        if ent.ndim != 2 or ent.shape[0] != ent.shape[1]:
            raise InvalidConfigError("covariance must be square")
        if not np.all(np.isfinite(ent)):
            raise InvalidConfigError("covariance has non-finite entries")
        if np.max(np.abs(ent - ent.T), initial=0.0) > 1e-12:
            raise NotSymmetricError("covariance is not symmetric within 1e-12")
        object.__setattr__(self, "entries", ent)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class LatentStructure:
    """Assignment of M predictors to groups 1..k (1-based group ids)."""

    k: int
    assignment: np.ndarray

    def __post_init__(self):
        assign = _frozen_array(self.assignment, dtype=np.int64)
        if assign.ndim != 1:
            raise InvalidConfigError("assignment must be 1-D")
        m = assign.shape[0]
        if not (1 <= self.k <= m):
            raise InvalidConfigError(f"k={self.k} outside 1..{m}")
        present = np.unique(assign)
        if present.min(initial=1) < 1 or present.max(initial=1) > self.k:
            raise InvalidConfigError("group ids must lie in 1..k")
        if len(present) != self.k:
            raise InvalidConfigError("every group 1..k must be nonempty")
        object.__setattr__(self, "assignment", assign)

    @property
    def n_predictors(self) -> int:
        return int(self.assignment.shape[0])

    def groups(self) -> list[np.ndarray]:
        """0-based predictor indices per group, in group-id order."""
        return [np.flatnonzero(self.assignment == g) for g in range(1, self.k + 1)]

    @staticmethod
    def from_groups(groups: list[list[int]] | list[np.ndarray], m: int) -> "LatentStructure":
        assign = np.zeros(m, dtype=np.int64)
        for gid, members in enumerate(groups, start=1):
            assign[np.asarray(members, dtype=np.int64)] = gid
        return LatentStructure(k=len(groups), assignment=assign)

    def canonical(self) -> "LatentStructure":
        """Relabel groups 1..k in order of their smallest member index."""
        order = sorted(range(1, self.k + 1), key=lambda g: int(np.flatnonzero(self.assignment == g)[0]))
        remap = {g: i + 1 for i, g in enumerate(order)}
        new = np.array([remap[int(g)] for g in self.assignment], dtype=np.int64)
        return LatentStructure(k=self.k, assignment=new)


@dataclass(frozen=True)
class MixtureParams:
    """Two-component Gaussian mixture for one latent signal."""

    mu0: float
    mu1: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidConfigError("sigma must be nonnegative")


@dataclass(frozen=True)
class PredictorMixture:
    """Per-predictor class-conditional Gaussians with a common sd."""

    mu_i0: float
    mu_i1: float
    sigma_i: float

    def __post_init__(self):
        if self.sigma_i < 0:
            raise InvalidConfigError("sigma_i must be nonnegative")


@dataclass(frozen=True)
class ModelParams:
    """Full structured-model parameter set on the standardized scale."""

    pi: float
    b: np.ndarray
    latent: tuple[MixtureParams, ...]
    theta: np.ndarray
    structure: LatentStructure

    def __post_init__(self):
        if not (0.0 < self.pi < 1.0):
            raise InvalidConfigError("pi must lie strictly between 0 and 1")
        b = _frozen_array(self.b)
        theta = _frozen_array(self.theta)
        m = self.structure.n_predictors
        if b.shape != (m,):
            raise LengthMismatchError(f"b has shape {b.shape}, expected ({m},)")
        if theta.shape != (m,):
            raise LengthMismatchError(f"theta has shape {theta.shape}, expected ({m},)")
        if np.any(theta < 0):
            raise InvalidConfigError("theta entries must be nonnegative")
        if len(self.latent) != self.structure.k:
            raise LengthMismatchError(
                f"{len(self.latent)} latent mixtures for k={self.structure.k} groups"
            )
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "latent", tuple(self.latent))


ScaleNote = Literal["absolute", "relative"]


@dataclass(frozen=True)
class WeightVector:
    """Ensemble weights; scale_note records whether the overall scale means
    anything ("absolute") or only the direction does ("relative")."""

    w: np.ndarray
    scale_note: ScaleNote = "absolute"

    def __post_init__(self):
        w = _frozen_array(self.w)
        if w.ndim != 1:
            raise InvalidConfigError("weights must be 1-D")
        if not np.all(np.isfinite(w)):
            raise InvalidConfigError("weights contain non-finite entries")
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return int(self.w.shape[0])


@dataclass(frozen=True)
class EnsembleScores:
    """Combined score per sample."""

    g: np.ndarray

    def __post_init__(self):
        g = _frozen_array(self.g)
        if g.ndim != 1:
            raise InvalidConfigError("ensemble scores must be 1-D")
        object.__setattr__(self, "g", g)

    def __len__(self) -> int:
        return int(self.g.shape[0])


def standardize(scores: ScoreMatrix) -> ScoreMatrix:
    """Center each column and scale it to unit sample variance (ddof=1).

    Raises ConstantColumnError for any column with sd below 1e-12.
    Idempotent to within floating-point noise, far below the 1e-12 floor.
    """
    x = scores.values
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd < SD_FLOOR)
    if bad.size:
        raise ConstantColumnError(int(bad[0]))
    out = (x - mean) / sd
    return ScoreMatrix(out, scores.predictor_names, standardized=True)


def sample_covariance(scores: ScoreMatrix) -> CovarianceMatrix:
    """Sample covariance (ddof=1) of standardized scores.

    Requires the standardized flag; warns when N < M because the estimate is
    then rank-deficient.
    """
    if not scores.standardized:
        raise NotStandardizedError("sample_covariance requires standardized scores")
    n, m = scores.values.shape
    if n < m:
        warnings.warn(
            f"covariance from {n} samples of {m} predictors is rank-deficient",
            SampleSizeWarning,
            stacklevel=2,
        )
    x = scores.values
    r = (x.T @ x) / (n - 1)
    r = (r + r.T) / 2.0  # force exact symmetry
    return CovarianceMatrix(r, sample_count=n)


def model_covariance(params: ModelParams) -> CovarianceMatrix:
    """Covariance implied by the structured model on the standardized scale.

    Same-group entries are (sigma_k b_i)(sigma_k b_j); cross-group entries are
    products of sqrt((1-pi)/pi) * mu_k0 * b_i factors; the diagonal is 1.
    """
    struct = params.structure
    assign = struct.assignment
    sigma = np.array([params.latent[g - 1].sigma for g in assign])
    mu0 = np.array([params.latent[g - 1].mu0 for g in assign])
    c = np.sqrt((1.0 - params.pi) / params.pi)
    v_on = sigma * params.b
    v_off = c * mu0 * params.b
    r = np.outer(v_off, v_off)
    same = assign[:, None] == assign[None, :]
    on = np.outer(v_on, v_on)
    r[same] = on[same]
    np.fill_diagonal(r, 1.0)
    r = (r + r.T) / 2.0
    return CovarianceMatrix(r, sample_count=None)


def ml_weight(mix: PredictorMixture) -> float:
    """Maximum-likelihood ensemble weight for one conditionally independent
    predictor: (mu_i1 - mu_i0) / (2 sigma_i^2)."""
    if mix.sigma_i**2 <= SD_FLOOR:
        raise ZeroVarianceError("predictor variance is numerically zero")
    return (mix.mu_i1 - mix.mu_i0) / (2.0 * mix.sigma_i**2)


def structured_weight(pi: float, b_i: float, mu_k0: float) -> float:
    """Ensemble weight for one predictor under the latent structured model:
    -b_i mu_k0 / (pi - (1 - pi) b_i^2 mu_k0^2).

    Raises DegenerateDenominatorError when the denominator is within 1e-9
    of zero or negative.
    """
    if not (0.0 < pi < 1.0):
        raise InvalidConfigError("pi must lie strictly between 0 and 1")
    denom = pi - (1.0 - pi) * (b_i * mu_k0) ** 2
    if denom <= DENOM_FLOOR:
        raise DegenerateDenominatorError(f"denominator {denom!r} <= {DENOM_FLOOR}")
    return -b_i * mu_k0 / denom


def combine(scores: ScoreMatrix, weights: WeightVector) -> EnsembleScores:
    """Weighted sum of predictor columns, one combined score per sample.

    Standardizes raw input first (with a warning): every estimator in this
    package hands out weights on the standardized scale.
    """
    if len(weights) != scores.n_predictors:
        raise LengthMismatchError(
            f"{len(weights)} weights for {scores.n_predictors} predictors"
        )
    if not scores.standardized:
        warnings.warn(
            "combining raw scores; columns were standardized first",
            AutoStandardizeWarning,
            stacklevel=2,
        )
        scores = standardize(scores)
    return EnsembleScores(scores.values @ weights.w)
