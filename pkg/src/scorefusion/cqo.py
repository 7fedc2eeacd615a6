"""Constrained quadratic weight estimator on the log-covariance scale.

Off-diagonal entries of the standardized covariance factor multiplicatively:
within a group |r_ij| = sigma_k^2 b_i b_j, across groups
|r_ij| = ((1 - pi) / pi) |mu_v mu_u| b_i b_j. Taking logs turns each entry
into a sparse linear equation in per-predictor, per-group and global terms.
Solving the resulting least squares under nonpositivity and undoing the log
recovers parameter magnitudes; signs come from the covariance directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .core import (
    CovarianceMatrix,
    LatentStructure,
    ScoreMatrix,
    WeightVector,
    sample_covariance,
    standardize,
    structured_weight,
)
from .errors import (
    AmbiguousSignsWarning,
    AutoStandardizeWarning,
    DegenerateDenominatorError,
    DegenerateWeightWarning,
    NoUsableEquationsError,
    SolverDivergedError,
)
from .structure import DiscoveryReport, discover

MIN_ABS_COVARIANCE = 1e-6
RIDGE = 1e-10
KKT_TOL = 1e-8


@dataclass(frozen=True)
class LogLinearSystem:
    """Sparse design for log |r_ij| equations.

    Columns are ordered [p, d_1..d_M, s_1..s_K, l_1..l_K]: the prevalence
    log-odds term, per-predictor log loadings, per-group log signal
    variances, and per-group log mean magnitudes. row_weights carries the
    inverse delta-method variance of each log equation, normalized to mean
    one: Var(log|r|) is roughly (1 - r^2)^2 / (N r^2), so near-zero pairs,
    whose log is mostly noise, count for little.
    """

    a: np.ndarray
    z: np.ndarray
    row_weights: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    dropped_pairs: tuple[tuple[int, int], ...]
    n_predictors: int
    n_groups: int

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        object.__setattr__(self, "row_weights", np.asarray(self.row_weights, dtype=float))

    @property
    def n_params(self) -> int:
        return self.n_predictors + 2 * self.n_groups + 1


@dataclass(frozen=True)
class CqoSolution:
    """Nonpositive solution of the log-linear system plus diagnostics."""

    g: np.ndarray
    objective: float
    kkt_residual: float

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))


@dataclass(frozen=True)
class CqoParams:
    """Back-transformed parameter estimates on the standardized scale."""

    pi: float
    b: np.ndarray  # signed loadings
    sigma2: np.ndarray  # per-group signal variance
    mu0: np.ndarray  # signed per-group class-0 latent means

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=float))
        object.__setattr__(self, "mu0", np.asarray(self.mu0, dtype=float))


@dataclass(frozen=True)
class CqoFit:
    """Full estimation result: weights plus everything that produced them."""

    weights: WeightVector
    params: CqoParams
    solution: CqoSolution
    system: LogLinearSystem
    structure: LatentStructure
    discovery: DiscoveryReport | None


def assemble_system(cov: CovarianceMatrix, structure: LatentStructure) -> LogLinearSystem:
    """Build log |r_ij| = (sparse linear form) equations for all i < j.

    Pairs whose covariance magnitude falls below 1e-6 carry no usable log
    signal and are dropped (recorded in dropped_pairs).
    """
    r = cov.entries
    m = cov.size
    k = structure.k
    assign = structure.assignment
    rows, zs, omegas, pairs, dropped = [], [], [], [], []
    p_col = 0
    d_col = lambda i: 1 + i
    s_col = lambda g: 1 + m + (g - 1)
    l_col = lambda g: 1 + m + k + (g - 1)
    n_params = m + 2 * k + 1
    for i in range(m):
        for j in range(i + 1, m):
            mag = abs(r[i, j])
            if mag < MIN_ABS_COVARIANCE:
                dropped.append((i, j))
                continue
            row = np.zeros(n_params)
            row[d_col(i)] = 1.0
            row[d_col(j)] = 1.0
            gi, gj = int(assign[i]), int(assign[j])
            if gi == gj:
                row[s_col(gi)] = 1.0
            else:
                row[p_col] = 1.0
                row[l_col(gi)] += 1.0
                row[l_col(gj)] += 1.0
            rows.append(row)
            zs.append(np.log(mag))
            clipped = min(mag, 0.999)
            omegas.append(clipped**2 / (1.0 - clipped**2) ** 2)
            pairs.append((i, j))
    if not rows:
        raise NoUsableEquationsError("every covariance pair fell below the magnitude floor")
    om = np.array(omegas)
    return LogLinearSystem(
        a=np.array(rows),
        z=np.array(zs),
        row_weights=om / om.mean(),
        pairs=tuple(pairs),
        dropped_pairs=tuple(dropped),
        n_predictors=m,
        n_groups=k,
    )


def solve_cqo(system: LogLinearSystem, ridge: float = RIDGE) -> CqoSolution:
    """Minimize the row-weighted ||A g - z||^2 subject to g <= 0.

    Solved as nonnegative least squares in h = -g on the sqrt-weighted
    system. A tiny ridge term pins the solution of underdetermined systems
    to the minimum-norm point, which keeps results deterministic; it is far
    below the solve tolerance. Violating the stationarity conditions signals
    a failed solve.
    """
    sw = np.sqrt(system.row_weights)
    a, z = system.a * sw[:, None], system.z * sw
    n = system.n_params
    b_aug = np.vstack([-a, np.sqrt(ridge) * np.eye(n)])
    z_aug = np.concatenate([z, np.zeros(n)])
    try:
        h, _ = nnls(b_aug, z_aug, maxiter=50 * n)
    except Exception as exc:
        raise SolverDivergedError(f"nonnegative least squares failed: {exc}") from exc
    grad = b_aug.T @ (b_aug @ h - z_aug)
    scale = max(1.0, float(np.abs(a.T @ z).max()))
    active = h > 0
    viol = 0.0
    if np.any(active):
        viol = float(np.abs(grad[active]).max())
    if np.any(~active):
        viol = max(viol, float(max(0.0, -grad[~active].min())))
    kkt = viol / scale
    if kkt > KKT_TOL:
        raise SolverDivergedError(f"stationarity residual {kkt:.2e} exceeds {KKT_TOL}")
    g = -h
    resid = a @ g - z
    return CqoSolution(g=g, objective=float(resid @ resid), kkt_residual=kkt)


def back_transform(solution: CqoSolution, m: int, k: int) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Undo the log parameterization: (pi, |b|, sigma^2, |mu0|)."""
    g = solution.g
    p = g[0]
    d = g[1:1 + m]
    s = g[1 + m:1 + m + k]
    l = g[1 + m + k:1 + m + 2 * k]
    pi = 1.0 / (1.0 + np.exp(p))
    return float(pi), np.exp(d), np.exp(s), np.exp(l)


def recover_signs(
    cov: CovarianceMatrix, structure: LatentStructure, b_mag: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Resolve loading and latent-mean signs from covariance signs.

    Within each group the lowest-index member anchors b > 0 and the others
    take the sign of their covariance with it. Cross-group covariance signs
    then vote on the sign of each mu_v mu_u product; group mean signs follow
    by fixing group 1 negative and propagating through groups in ascending
    order. Vote ties resolve to +1 with a warning.
    """
    r = cov.entries
    m = cov.size
    k = structure.k
    assign = structure.assignment
    groups = structure.groups()

    sign_b = np.ones(m)
    for members in groups:
        anchor = members[0]
        for i in members[1:]:
            v = r[i, anchor]
            if v < 0:
                sign_b[i] = -1.0
            elif v == 0:
                warnings.warn(
                    f"zero covariance between predictor {i} and its group anchor",
                    AmbiguousSignsWarning,
                    stacklevel=2,
                )

    # Evidence-weighted vote matrix for the sign of each mu_v * mu_u product.
    # Summing signed covariance (not just its sign) lets strong pairs, whose
    # signs are reliable, outvote near-zero pairs whose signs are noise.
    votes = np.zeros((k, k))
    for i in range(m):
        for j in range(i + 1, m):
            gi, gj = int(assign[i]) - 1, int(assign[j]) - 1
            if gi == gj:
                continue
            votes[gi, gj] += r[i, j] * sign_b[i] * sign_b[j]
            votes[gj, gi] = votes[gi, gj]

    # In population votes = D V D with V entrywise positive and D the
    # diagonal of mean signs, so the leading eigenvector carries the sign
    # pattern exactly; with noise it is the least-squares synchronization.
    if k == 1:
        mu_sign = np.array([-1.0])
    else:
        eigvals, eigvecs = np.linalg.eigh(votes)
        lead = eigvecs[:, np.argmax(eigvals)]
        mu_sign = np.where(lead >= 0, 1.0, -1.0)
        nonzero = np.flatnonzero(np.abs(lead) > 1e-12)
        if nonzero.size == 0:
            warnings.warn(
                "no cross-group sign evidence; latent mean signs are a convention",
                AmbiguousSignsWarning,
                stacklevel=2,
            )
            mu_sign = -np.ones(k)
        elif mu_sign[nonzero[0]] > 0:
            mu_sign = -mu_sign
        if np.any(np.abs(lead) <= 1e-12):
            warnings.warn(
                "some latent mean signs had no usable evidence",
                AmbiguousSignsWarning,
                stacklevel=2,
            )
    return sign_b * b_mag, mu_sign


def fit_cqo(
    scores: ScoreMatrix,
    structure: LatentStructure | None = None,
    override_k: int | None = None,
) -> CqoFit:
    """Estimate combination weights from scores alone.

    Discovers the latent grouping when none is supplied, assembles and
    solves the log-covariance system, restores signs, and converts the
    parameter estimates to per-predictor weights. Predictors whose weight
    denominator degenerates get weight zero with a warning. The final
    weight vector is flipped, if needed, so most weights are positive.
    """
    if not scores.standardized:
        warnings.warn(
            "fitting on raw scores; standardizing first", AutoStandardizeWarning, stacklevel=2
        )
        scores = standardize(scores)
    report = None
    if structure is None:
        report = discover(scores, override_k=override_k)
        structure = report.structure
        cov = report.covariance
    else:
        cov = sample_covariance(scores)
    system = assemble_system(cov, structure)
    solution = solve_cqo(system)
    pi, b_mag, sigma2, mu_mag = back_transform(solution, cov.size, structure.k)
    b_signed, mu_sign = recover_signs(cov, structure, b_mag)
    mu0 = mu_sign * mu_mag
    w = np.zeros(cov.size)
    for i in range(cov.size):
        g = int(structure.assignment[i]) - 1
        try:
            w[i] = structured_weight(pi, b_signed[i], mu0[g])
        except DegenerateDenominatorError:
            warnings.warn(
                f"weight denominator for predictor {i} is degenerate; using 0",
                DegenerateWeightWarning,
                stacklevel=2,
            )
            w[i] = 0.0
    if np.sum(w < 0) > w.size / 2:
        w = -w
        mu0 = -mu0
    params = CqoParams(pi=pi, b=b_signed, sigma2=sigma2, mu0=mu0)
    return CqoFit(
        weights=WeightVector(w=w, scale_note="absolute"),
        params=params,
        solution=solution,
        system=system,
        structure=structure,
        discovery=report,
    )
