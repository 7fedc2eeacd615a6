"""Reference combiners: spectral rank-one, unweighted average, ground truth.

These are the comparison points for the benchmark harness. The spectral
baseline fits a rank-one vector to the off-diagonal of the sample covariance
and uses it directly as weights; the average ignores the data entirely; the
ground-truth combiner reads the analytic weights retained by the simulator.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .core import LatentStructure, ScoreMatrix, WeightVector, sample_covariance
from .errors import (
    EigenFailureError,
    NonConvergenceError,
    TooFewPredictorsError,
    TruthUnavailableError,
)
from .simulate import SimulationTruth

EIGEN_TOL = 1e-10
EIGEN_MAX_ITER = 10_000


class BaselineKind(Enum):
    """Which reference combiner to run."""

    EIGEN = "eigen"
    AVERAGE = "average"
    GROUND_TRUTH = "ground_truth"


def fit_eigen(
    scores: ScoreMatrix,
    structure: LatentStructure | None = None,
    cross_block_only: bool = False,
) -> WeightVector:
    """Rank-one fit to the off-diagonal of the sample covariance.

    Power-iteration-style refinement with the data diagonal excluded from
    the fit and the model's own diagonal standing in for it: starting from
    the leading eigenvector of the zero-diagonal covariance, sweeps of
    exact coordinate updates v_i <- (sum_{j != i} R_ij v_j) / sum_{j != i}
    v_j^2 run until no entry moves by more than EIGEN_TOL. Each update is
    the closed-form minimizer of the rank-one least-squares objective on
    the off-diagonal entries in that coordinate, so the objective never
    increases, the fixed point is the stationarity condition of that fit,
    and an exactly rank-one off-diagonal is recovered exactly. Weights are
    the fitted vector itself, flipped if needed so the majority of entries
    are positive.

    With cross_block_only (requires a structure), same-group entries are
    zeroed along with the diagonal and the weights are the leading
    eigenvector of that masked covariance directly, with whole-group signs
    flipped to agree with the retained entries. No refinement runs there:
    with two groups the cross-block residual is invariant under scaling
    one side up and the other down, so the least-squares stationary set is
    a curve rather than a point, and with more groups a near-flat version
    of the same mode remains. The spectral solve is the standard variant
    and stays well posed.
    """
    if scores.n_predictors < 3:
        raise TooFewPredictorsError("spectral baseline needs at least 3 predictors")
    r = sample_covariance(scores).entries.copy()
    np.fill_diagonal(r, 0.0)
    m = scores.n_predictors
    fit_pairs = ~np.eye(m, dtype=bool)
    if cross_block_only:
        if structure is None:
            raise TruthUnavailableError("cross-block fit needs a structure")
        same = structure.assignment[:, None] == structure.assignment[None, :]
        r[same] = 0.0
        fit_pairs &= ~same
    def repair_group_signs(vec: np.ndarray, assignment: np.ndarray) -> np.ndarray:
        # the masked leading eigenvector can come out sign-frustrated across
        # groups (nothing ties a group's sign once its block is zeroed), which
        # strands the iteration in a bad basin; flip whole-group signs to agree
        # with the fitted entries before iterating
        groups = np.unique(assignment)
        k = groups.size
        agree = np.zeros((k, k))
        for a in range(k):
            ia = assignment == groups[a]
            for b_idx in range(a + 1, k):
                ib = assignment == groups[b_idx]
                agree[a, b_idx] = agree[b_idx, a] = float(
                    vec[ia] @ r[np.ix_(ia, ib)] @ vec[ib]
                )
        if k <= 12:
            best, best_sig = -np.inf, np.ones(k)
            for code in range(1 << (k - 1)):
                sig = np.ones(k)
                sig[1:] = [1.0 if code >> b_idx & 1 else -1.0 for b_idx in range(k - 1)]
                val = float(sig @ agree @ sig)
                if val > best:
                    best, best_sig = val, sig
            sig = best_sig
        else:
            sig = np.ones(k)
            improved = True
            while improved:
                improved = False
                for a in range(k):
                    if sig[a] * float(agree[a] @ sig) < 0.0:
                        sig[a] = -sig[a]
                        improved = True
        out = vec.copy()
        for a in range(k):
            out[assignment == groups[a]] *= sig[a]
        return out

    try:
        eigvals, eigvecs = np.linalg.eigh(r)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(f"baseline eigendecomposition failed: {exc}") from exc
    v = eigvecs[:, int(np.argmax(np.abs(eigvals)))].copy()
    pivot = int(np.argmax(np.abs(v)))
    if v[pivot] < 0:
        v = -v
    # scale the start to the fixed-point magnitude so the first sweeps
    # refine rather than rescale
    lead = abs(float(eigvals[int(np.argmax(np.abs(eigvals)))]))
    v *= np.sqrt(lead)
    if cross_block_only:
        v = repair_group_signs(v, structure.assignment)
        if int(np.sum(v > 0)) < int(np.sum(v < 0)):
            v = -v
        return WeightVector(w=v, scale_note="relative")

    def off_diag_sse(vec: np.ndarray) -> float:
        resid = np.where(fit_pairs, r - np.outer(vec, vec), 0.0)
        return float(np.sum(resid * resid))

    for _ in range(EIGEN_MAX_ITER):
        shift = 0.0
        for i in range(m):
            part = fit_pairs[i]
            denom = float(v[part] @ v[part])
            if denom <= 1e-300:
                continue
            new_i = float(r[i, part] @ v[part]) / denom
            shift = max(shift, abs(new_i - v[i]))
            v[i] = new_i
        if shift <= EIGEN_TOL:
            break
        # coordinate sweeps converge slowly when the spectrum is nearly flat;
        # a damped Newton step on the stationarity system finishes the job,
        # accepted only if the fitted-pair residual never increases
        part_sq = fit_pairs @ (v * v)
        grad = r @ v - v * part_sq
        jac = np.where(fit_pairs, r - 2.0 * np.outer(v, v), 0.0)
        jac[np.arange(m), np.arange(m)] = -part_sq
        try:
            step = np.linalg.solve(jac, grad)
        except np.linalg.LinAlgError:
            continue
        base = off_diag_sse(v)
        scale = 1.0
        for _ in range(8):
            cand = v - scale * step
            if off_diag_sse(cand) <= base:
                v = cand
                break
            scale *= 0.5
    else:
        raise NonConvergenceError("rank-one baseline fit did not converge")
    if int(np.sum(v > 0)) < int(np.sum(v < 0)):
        v = -v
    return WeightVector(w=v, scale_note="relative")


def fit_average(scores: ScoreMatrix) -> WeightVector:
    """Every predictor gets weight 1/M."""
    m = scores.n_predictors
    return WeightVector(w=np.full(m, 1.0 / m), scale_note="relative")


def fit_ground_truth(truth: SimulationTruth | None) -> WeightVector:
    """Analytic weights from the generating parameters (simulation only)."""
    if truth is None:
        raise TruthUnavailableError("ground-truth combiner needs simulation truth")
    return WeightVector(w=truth.true_weights.w.copy(), scale_note="absolute")
