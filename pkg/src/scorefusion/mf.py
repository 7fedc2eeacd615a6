"""Masked low-rank factorization estimator for combination weights.

Writes the standardized covariance as R = B Lambda B^T + Theta with B a
group-masked loading matrix (one nonzero block column per latent group),
Lambda the latent second-moment matrix and Theta diagonal noise. Block
coordinate descent alternates a spectral fit of the low-rank part, a masked
loading update, an orthogonal alignment, and a diagonal refresh. The latent
class separation lives in the rank-one structure of Lambda's off-diagonal,
from which the weights follow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CovarianceMatrix,
    LatentStructure,
    ScoreMatrix,
    WeightVector,
    sample_covariance,
    standardize,
)
from .cqo import assemble_system, back_transform, solve_cqo
from .errors import (
    AutoStandardizeWarning,
    DegenerateWeightWarning,
    EigenFailureError,
    InvalidConfigError,
    ScoreFusionError,
    SvdFailureError,
)
from .structure import DiscoveryReport, discover

BCD_MAX_ITER = 200
BCD_TOL = 1e-8
WEIGHT_DEGENERACY_TOL = 1e-9
# trust-region half-width (multiplicative) for the separation magnitude polish
SEPARATION_BOX = 1.5
# pooled-skewness evidence gate and per-score clip for the two-group split
SPLIT_GATE_Z = 0.0
SPLIT_WINSOR = 2.0


@dataclass(frozen=True)
class FactorState:
    """Final BCD iterate: loadings, alignment, latent spectrum, noise."""

    b_mat: np.ndarray  # M x K, masked loadings
    u: np.ndarray  # K x K, orthonormal eigenbasis of the latent matrix
    v: np.ndarray  # K, latent eigenvalues descending (indefinite allowed)
    theta_diag: np.ndarray  # M, diagonal noise
    iteration: int
    objective: float
    converged: bool
    objective_trace: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        for name in ("b_mat", "u", "v", "theta_diag", "objective_trace"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def latent_second_moment(self) -> np.ndarray:
        """Lambda = U diag(v) U^T, the latent factor covariance estimate."""
        return self.u @ np.diag(self.v) @ self.u.T

    def low_rank(self) -> np.ndarray:
        """The fitted structured part B Lambda B^T."""
        bl = self.b_mat @ self.latent_second_moment()
        return bl @ self.b_mat.T


@dataclass(frozen=True)
class MfFit:
    """Estimation result: weights plus the factorization they came from."""

    weights: WeightVector
    state: FactorState
    q: np.ndarray  # per-group latent separation, gauge-scaled
    structure: LatentStructure
    discovery: DiscoveryReport | None


def _objective(r: np.ndarray, b: np.ndarray, lam: np.ndarray, theta: np.ndarray) -> float:
    low = b @ lam @ b.T
    resid = r - np.diag(theta) - low
    return float(np.sum(resid * resid))


def procrustes(s: np.ndarray) -> np.ndarray:
    """Closest orthogonal matrix to s: the orthogonal polar factor.

    From the SVD s = D diag(sv) F^T, returns D F^T, which maximizes
    trace(U^T s) over orthogonal U.
    """
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise InvalidConfigError("alignment target contains non-finite entries")
    try:
        d, _, ft = np.linalg.svd(s)
    except np.linalg.LinAlgError as exc:
        raise SvdFailureError(f"alignment SVD failed: {exc}") from exc
    return d @ ft


def _refit_latent(r: np.ndarray, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Exact least-squares Lambda given loadings and noise.

    Minimizes ||(R - Theta) - B Lambda B^T||_F^2 over K x K matrices; the
    solution G^{-1} B^T (R - Theta) B G^{-1} with G = B^T B is symmetric
    whenever the target is, so no symmetry constraint is needed.
    """
    x = r - np.diag(theta)
    g = b.T @ b
    mid = b.T @ x @ b
    try:
        lam = np.linalg.solve(g, np.linalg.solve(g, mid).T).T
    except np.linalg.LinAlgError:
        g_pinv = np.linalg.pinv(g)
        lam = g_pinv @ mid @ g_pinv
    return 0.5 * (lam + lam.T)


def _spectral_form(lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose Lambda, eigenvalues sorted descending.

    Eigenvalues keep their signs: the latent matrix consistent with the
    covariance structure can be indefinite when a group's class separation
    exceeds its within-class variance.
    """
    try:
        eigvals, eigvecs = np.linalg.eigh(lam)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(f"latent eigendecomposition failed: {exc}") from exc
    order = np.argsort(eigvals)[::-1]
    return eigvecs[:, order], eigvals[order]


def _coordinate_loadings(
    r: np.ndarray,
    load: np.ndarray,
    lam: np.ndarray,
    theta: np.ndarray,
    group_idx: np.ndarray,
) -> np.ndarray:
    """One exact coordinate pass over the per-predictor loadings.

    Fixing everything else, the objective as a function of one loading is a
    quartic; its minimizer is a real root of the cubic derivative, found in
    closed form. Updates run in place, each using the freshest values, so
    the pass never increases the objective.
    """
    m = load.shape[0]
    out = load.copy()
    for i in range(m):
        k = group_idx[i]
        d = lam[k, group_idx] * out
        d[i] = 0.0
        c = r[i, :]
        sum_dd = float(d @ d)
        sum_cd = float(d @ c)
        e = r[i, i] - theta[i]
        g = lam[k, k]
        if g * g <= 1e-300:
            out[i] = sum_cd / sum_dd if sum_dd > 1e-300 else out[i]
            continue
        roots = np.roots([g * g, 0.0, sum_dd - e * g, -sum_cd])
        real = roots[np.abs(roots.imag) < 1e-9].real
        if real.size == 0:
            continue
        # objective restricted to this coordinate, up to a constant
        vals = [
            sum_dd * x * x - 2.0 * sum_cd * x + 0.5 * (e - g * x * x) ** 2 for x in real
        ]
        out[i] = float(real[int(np.argmin(vals))])
    return out


def bcd_fit(
    cov: CovarianceMatrix,
    structure: LatentStructure,
    max_iter: int = BCD_MAX_ITER,
    tol: float = BCD_TOL,
) -> FactorState:
    """Block coordinate descent for the masked factorization.

    Each sweep evaluates two candidate moves from the current iterate and
    keeps the better. The exact move runs one coordinate pass over the
    loadings (closed-form quartic minimizers), then refits the latent matrix
    by least squares and the noise diagonal by its floored residual; every
    step is an exact coordinate minimization, so this move never increases
    the objective. The spectral move proposes loadings from the dominant
    K-dimensional eigenspace of R - Theta (largest-magnitude eigenvalues,
    since the latent matrix can be indefinite), projected onto the sparsity
    mask and aligned by an orthogonal Procrustes factor, then applies the
    same exact latent and noise refits; it can escape poor loading
    configurations but is only accepted when it beats the exact move. The
    recorded per-sweep objective trace is therefore nonincreasing.
    """
    r = cov.entries
    m = cov.size
    k = structure.k
    gidx = structure.assignment - 1
    mask = np.zeros((m, k))
    mask[np.arange(m), gidx] = 1.0

    load = np.ones(m)
    u_align = np.eye(k)
    theta = np.full(m, 0.5)
    lam = _refit_latent(r, mask, theta)

    def scatter(vals: np.ndarray) -> np.ndarray:
        out = np.zeros((m, k))
        out[np.arange(m), gidx] = vals
        return out

    b = scatter(load)
    trace: list[float] = []
    prev_obj = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        load_e = _coordinate_loadings(r, load, lam, theta, gidx)
        b_e = scatter(load_e)
        lam_e = _refit_latent(r, b_e, theta)
        theta_e = np.maximum(np.diag(r - b_e @ lam_e @ b_e.T), 0.0)
        obj_e = _objective(r, b_e, lam_e, theta_e)

        try:
            eigvals, eigvecs = np.linalg.eigh(r - np.diag(theta))
        except np.linalg.LinAlgError as exc:
            raise EigenFailureError(f"spectral step failed: {exc}") from exc
        w = eigvecs[:, np.argsort(np.abs(eigvals))[::-1][:k]]
        b_p = mask * (w @ u_align.T)
        u_p = procrustes(b_p.T @ w)
        lam_p = _refit_latent(r, b_p, theta)
        theta_p = np.maximum(np.diag(r - b_p @ lam_p @ b_p.T), 0.0)
        obj_p = _objective(r, b_p, lam_p, theta_p)

        if obj_p < obj_e and obj_p <= prev_obj:
            load = b_p[np.arange(m), gidx]
            b, u_align, lam, theta, obj = b_p, u_p, lam_p, theta_p, obj_p
        else:
            load, b, lam, theta, obj = load_e, b_e, lam_e, theta_e, obj_e
        trace.append(obj)
        if np.isfinite(prev_obj) and abs(prev_obj - obj) <= tol * abs(prev_obj) + 1e-12:
            prev_obj = obj
            converged = True
            break
        prev_obj = obj

    u, v = _spectral_form(lam)
    if not np.isfinite(prev_obj):
        prev_obj = _objective(r, b, lam, theta)
    return FactorState(
        b_mat=b,
        u=u,
        v=v,
        theta_diag=theta,
        iteration=it,
        objective=float(prev_obj),
        converged=converged,
        objective_trace=np.array(trace),
    )


def _latent_separation(
    lam: np.ndarray,
    group_mass: np.ndarray,
    caps: np.ndarray | None = None,
    group_sizes: np.ndarray | None = None,
    skew_logs: np.ndarray | None = None,
    skew_prec: np.ndarray | None = None,
    n_samples: int | None = None,
) -> np.ndarray:
    """Per-group separation q from the off-diagonal of the fitted Lambda.

    Off-diagonal entries of Lambda equal q_k q_v (in the loading gauge).
    Each entry pools every member pair of the two groups, so its sampling
    variance scales like 1 / (G_k G_v) with G_k the group's squared loading
    mass, and the natural fit minimizes

        F(q) = sum_{k<v} G_k G_v (Lambda_kv - q_k q_v)^2.

    The fit happens in three stages. Magnitudes come from the pairwise
    log-linear system log|Lambda_kv| = l_k + l_v, weighted by each
    entry's relative precision; taking absolute values makes this stage
    immune to sign errors in weakly-resolved entries. The system is flat
    along reallocations that preserve the products of a dominant group
    pair, so when per-group third-moment readings are supplied
    (skew_logs, skew_prec, with n_samples calibrating the covariance
    rows) they join the solve as extra rows l_k + beta = skew_logs_k with
    a free shared offset beta; the offset limits the skew channel to
    relative information, which is exactly the part the covariance
    entries cannot pin down. The orientation
    comes next: in the model every entry is a product of two group
    separations, so some pattern d in {-1, +1}^K makes every entry
    nonnegative, and the fit enumerates the 2^(K-1) patterns and keeps
    the one minimizing F with the magnitudes pinned at m_k. Pinning is
    deliberate: sampling noise flips the sign of weakly-resolved entries,
    and a pattern that chases a flipped entry can outscore the true one
    if it is allowed to bend the magnitudes first, so all patterns are
    scored on the same magnitudes and the entries with real evidence
    decide. Last, exact coordinate descent polishes the magnitudes under
    the chosen pattern (the closed-form quadratic minimizer, clipped to a
    trust region around m_k). The trust region is what keeps the polish
    honest: a few sign-flipped noise entries can otherwise drag the
    unconstrained minimizer into a degenerate solution where one group
    absorbs all the mass and the rest collapse to compensate (the flipped
    entry gets fit exactly and everything else is written off as
    residual). Each magnitude is confined to
    [m_k / SEPARATION_BOX, m_k * SEPARATION_BOX], making the collapse
    infeasible so the orientations compete on even terms, with two
    adjustments: the upper end is also capped at the group's fitted
    latent scale (cap_k), and the lower end applies only to groups with
    at least two members. A multi-member group pools every member pair
    into each of its entries, so its log-linear magnitude is evidence
    worth holding; a singleton group's magnitude rests on individual
    unpooled correlations, the noisiest quantities in the pipeline, and
    pinning a floor there would freeze pure noise into the solution, so
    singletons stay free to shrink to zero when the descent writes them
    off. Groups with no usable entry get q = 0. Past twelve groups the
    enumeration is replaced by the single orientation taken from the
    leading eigenvector of the zero-diagonal Lambda.
    """
    k = lam.shape[0]
    m_off = lam.copy()
    np.fill_diagonal(m_off, 0.0)
    rows = []
    logs = []
    wts = []
    for a in range(k):
        for v in range(a + 1, k):
            mag = abs(m_off[a, v])
            if mag < 1e-8:
                continue
            evidence = mag * np.sqrt(group_mass[a] * group_mass[v])
            row = np.zeros(k)
            row[a] = 1.0
            row[v] = 1.0
            rows.append(row)
            logs.append(np.log(mag))
            wts.append(evidence**2)
    if not rows:
        return np.zeros(k)
    a_mat = np.array(rows)
    logs_vec = np.array(logs)
    used = a_mat.any(axis=0)
    n_used = int(np.sum(used))
    prec = np.array(wts)
    fuse = (
        skew_logs is not None
        and skew_prec is not None
        and n_samples is not None
        and np.any(skew_prec[used] > 0.0)
    )
    if fuse:
        # third-moment rows carry the relative magnitude information the
        # cross entries leave flat (a swap of two groups' separations keeps
        # their product fixed); the shared offset column absorbs the common
        # scale of the skew channel, so miscalibration there cannot tilt the
        # absolute level set by the covariance entries. Cross-entry rows get
        # absolute precision N * evidence^2 (delta method on log|Lambda|),
        # skew rows their empirical inverse squared standard error.
        sel = np.flatnonzero(used)
        a_sys = np.zeros((a_mat.shape[0], n_used + 1))
        a_sys[:, :n_used] = a_mat[:, used]
        prec = prec * float(n_samples)
        skew_rows = []
        skew_targets = []
        skew_weights = []
        for pos, g in enumerate(sel):
            if skew_prec[g] > 0.0:
                row = np.zeros(n_used + 1)
                row[pos] = 1.0
                row[-1] = 1.0
                skew_rows.append(row)
                skew_targets.append(skew_logs[g])
                skew_weights.append(skew_prec[g])
        a_sys = np.vstack([a_sys, np.array(skew_rows)])
        logs_vec = np.concatenate([logs_vec, np.array(skew_targets)])
        prec = np.concatenate([prec, np.array(skew_weights)])
    else:
        a_sys = a_mat[:, used]
    sw = np.sqrt(prec / np.mean(prec))
    sol, *_ = np.linalg.lstsq(a_sys * sw[:, None], logs_vec * sw, rcond=None)
    mags = np.zeros(k)
    mags[used] = np.exp(sol[:n_used])
    upper = mags * SEPARATION_BOX
    if caps is not None:
        upper = np.minimum(upper, caps)
    mags = np.minimum(mags, upper)
    lower = mags / SEPARATION_BOX
    if group_sizes is not None:
        lower = np.where(group_sizes >= 2, lower, 0.0)
    lower = np.minimum(lower, upper)
    if k > 12:
        try:
            eigvals, eigvecs = np.linalg.eigh(m_off)
        except np.linalg.LinAlgError as exc:
            raise EigenFailureError(f"sign synchronization failed: {exc}") from exc
        lead = eigvecs[:, np.argmax(np.abs(eigvals))]
        pivot = int(np.argmax(np.abs(lead)))
        d = np.sign(lead) if lead[pivot] > 0 else -np.sign(lead)
        d[d == 0] = 1.0
        pats = d[None, :]
    else:
        bits = np.arange(2 ** (k - 1))[:, None] >> np.arange(k - 1)[None, :]
        pats = np.hstack(
            [np.ones((bits.shape[0], 1)), np.where(bits & 1, -1.0, 1.0)]
        )
    # orientation is scored with the magnitudes pinned at the log-linear
    # estimates; letting each pattern polish its own magnitudes first would
    # hand the trust-region slack to patterns that chase sign-flipped noise
    # entries, and those can outscore the true orientation
    pair_weight = np.triu(np.outer(group_mass, group_mass), 1)
    m_signed = m_off[None, :, :] * pats[:, :, None] * pats[:, None, :]
    resid_fixed = m_signed - np.outer(mags, mags)[None, :, :]
    misfit_fixed = np.sum(pair_weight[None, :, :] * resid_fixed**2, axis=(1, 2))
    chosen = pats[int(np.argmin(misfit_fixed))]
    signed = m_off * np.outer(chosen, chosen)
    q = mags.copy()
    idx = np.arange(k)
    for _ in range(200):
        shift = 0.0
        for a in range(k):
            others = idx != a
            gq = group_mass[others] * q[others]
            denom = float(np.sum(gq * q[others]))
            if denom <= 1e-300:
                continue
            new = float(np.clip(np.sum(gq * signed[a, others]) / denom, lower[a], upper[a]))
            shift = max(shift, abs(new - q[a]))
            q[a] = new
        if shift <= 1e-12 * (1.0 + float(np.max(np.abs(q)))):
            break
    return chosen * q


def _skew_constant(pi: float) -> float:
    """Third-moment coefficient of a standardized predictor.

    For a centered two-component mixture with class balance pi, the third
    moment of a standardized score is -C(pi) a_i^3 with a_i the separation
    product. C vanishes at pi = 1/2 (symmetric mixture) and the split
    information disappears with it.
    """
    ratio = pi / (1.0 - pi)
    return (1.0 - pi) * ratio**1.5 * (pi**2 - (1.0 - pi) ** 2) / pi**2


def _two_group_split(
    t_product: float,
    x: np.ndarray,
    assign: np.ndarray,
    skew_scores: np.ndarray | None,
    sign_pattern: np.ndarray,
    split_pi: float | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Resolve the two-group separation-to-spread ratios t_1, t_2.

    Second moments fix only the product t_1 t_2; the split between the
    groups is invisible to any covariance fit. Third moments break the tie:
    each predictor's skewness is -C(pi) a_i^3, so group-pooled skewness
    yields a per-group ratio estimate. The sign pattern inherited from the
    factorization gauge is oriented first so that total pooled skewness is
    positive (the gauge is arbitrary, and a flipped gauge would otherwise
    make every sign test backwards). Scores are winsorized at SPLIT_WINSOR
    spreads before cubing; the cube amplifies tail draws enough that a few
    extreme samples can otherwise flip a group's estimate outright, and the
    mild attenuation the clip causes is shared by both groups so their
    ratio survives. A group's estimate counts only when its pooled skewness
    clears SPLIT_GATE_Z standard errors (computed from the per-sample
    pooled statistic). Surviving estimates are reconciled with the trusted
    second-moment product by an evidence-weighted projection onto the
    constraint log t_1 + log t_2 = log(t_1 t_2); when none survive (or pi
    is unavailable or too close to 1/2) both groups fall back to the
    shared-ratio convention t_1 = t_2. Returns the ratios and the oriented
    sign pattern.
    """
    t_shared = np.sqrt(t_product) if t_product > 0 else 0.0
    t_pair = np.array([t_shared, t_shared])
    if skew_scores is None or split_pi is None or t_product <= 0:
        return t_pair, sign_pattern
    c_pi = _skew_constant(split_pi)
    if abs(c_pi) < 0.05:
        return t_pair, sign_pattern
    cubes = np.clip(skew_scores, -SPLIT_WINSOR, SPLIT_WINSOR) ** 3
    if -float(np.sum(sign_pattern * np.mean(cubes, axis=0))) / c_pi < 0:
        sign_pattern = -sign_pattern
    n = cubes.shape[0]
    log_targets = np.zeros(2)
    evidence = np.zeros(2)
    for g in (0, 1):
        members = assign == g + 1
        mass = float(np.sum(x[members] ** 1.5))
        per_sample = cubes[:, members] @ sign_pattern[members]
        pooled = -float(np.mean(per_sample)) / c_pi
        stderr = float(np.std(per_sample)) / (np.sqrt(n) * abs(c_pi))
        if mass < 1e-12 or pooled <= SPLIT_GATE_Z * stderr:
            continue
        t_g = (pooled / mass) ** (1.0 / 3.0)
        ratio = t_g / t_shared
        if not 0.125 <= ratio <= 8.0:
            continue
        log_targets[g] = np.log(t_g)
        evidence[g] = mass
    if evidence.sum() <= 0:
        return t_pair, sign_pattern
    total = np.log(t_product)
    gap = total - log_targets[0] - log_targets[1]
    if evidence[0] <= 0:
        log_targets[0] = total - log_targets[1]
    elif evidence[1] <= 0:
        log_targets[1] = total - log_targets[0]
    else:
        log_targets[0] += gap * evidence[1] / evidence.sum()
        log_targets[1] = total - log_targets[0]
    return np.exp(log_targets), sign_pattern


def _group_skew_logs(
    values: np.ndarray, assign: np.ndarray, load: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-group log separation magnitudes read from member third moments.

    A standardized predictor's third moment scales with the cube of its
    separation product, so log|m3_i| / 3 - log|load_i| estimates the group's
    log separation up to a shift shared by every group (the mixing constant
    and the winsorization attenuation). Returns the per-group mean of that
    member statistic and its inverse squared standard error; groups with
    fewer than two usable members get precision zero.
    """
    x = np.clip(values, -SPLIT_WINSOR, SPLIT_WINSOR)
    s3 = np.mean(x**3, axis=0)
    logs = np.zeros(k)
    prec = np.zeros(k)
    for g in range(k):
        members = (assign == g + 1) & (np.abs(load) > 1e-9) & (np.abs(s3) > 1e-12)
        if int(np.sum(members)) < 2:
            continue
        li = np.log(np.abs(s3[members])) / 3.0 - np.log(np.abs(load[members]))
        sem2 = float(np.var(li, ddof=1)) / li.size
        if sem2 > 1e-12:
            logs[g] = float(np.mean(li))
            prec[g] = 1.0 / sem2
    return logs, prec


def _separation_products(
    state: FactorState,
    structure: LatentStructure,
    skew_scores: np.ndarray | None = None,
    split_pi: float | None = None,
) -> np.ndarray:
    """Gauge-invariant per-predictor products a_i = b_i q_{k(i)}.

    With three or more groups the rank-one off-diagonal of Lambda pins every
    group's separation down, pooling all member pairs of each group pair.
    With two groups the covariance fixes only the product of the two
    separation-to-spread ratios; the split is resolved from pooled
    per-predictor skewness when available (see _two_group_split), anchored
    on the invariant within-group scale x_i = load_i^2 Lambda_kk. A single
    group carries no cross-class information at all and falls back to the
    leading diagonal entry of Lambda. The separation share of a predictor's
    variance can never exceed its shared-signal share, so each group's ratio
    estimate is capped at sqrt(Lambda_kk) in the fitted gauge; that keeps a
    noisy sparse cross-group block from inflating one group's separation
    past the degeneracy point.
    """
    assign = structure.assignment
    load = state.b_mat[np.arange(structure.n_predictors), assign - 1]
    lam = state.latent_second_moment()
    x = np.maximum(load * load * np.diag(lam)[assign - 1], 0.0)
    if structure.k >= 3:
        group_mass = np.zeros(structure.k)
        group_sizes = np.zeros(structure.k, dtype=int)
        caps = np.sqrt(np.maximum(np.diag(lam), 0.0))
        for g in range(structure.k):
            members = assign == g + 1
            group_mass[g] = float(np.sum(load[members] ** 2))
            group_sizes[g] = int(np.sum(members))
        skew_logs = skew_prec = n_samples = None
        if skew_scores is not None:
            skew_logs, skew_prec = _group_skew_logs(skew_scores, assign, load, structure.k)
            n_samples = int(skew_scores.shape[0])
        q = _latent_separation(
            lam,
            group_mass,
            caps=caps,
            group_sizes=group_sizes,
            skew_logs=skew_logs,
            skew_prec=skew_prec,
            n_samples=n_samples,
        )
        return load * q[assign - 1]
    if structure.k == 2:
        d1 = max(float(lam[0, 0]), 1e-12)
        d2 = max(float(lam[1, 1]), 1e-12)
        t_product = abs(float(lam[0, 1])) / np.sqrt(d1 * d2)
        signs = np.sign(load)
        signs[signs == 0] = 1.0
        if float(lam[0, 1]) < 0:
            signs[assign == 2] = -signs[assign == 2]
        t_pair, signs = _two_group_split(
            t_product, x, assign, skew_scores, signs, split_pi
        )
        return signs * t_pair[assign - 1] * np.sqrt(x)
    return load * np.sqrt(max(float(lam[0, 0]), 0.0))


def _group_separation(
    a: np.ndarray, load: np.ndarray, assign: np.ndarray, k: int
) -> np.ndarray:
    """Per-group separation implied by the products, in the loading gauge."""
    q = np.zeros(k)
    for g in range(k):
        members = (assign == g + 1) & (np.abs(load) > 1e-9)
        if np.any(members):
            q[g] = float(np.median(a[members] / load[members]))
    return q


def extract_weights(
    state: FactorState,
    structure: LatentStructure,
    pi: float | None = None,
    skew_scores: np.ndarray | None = None,
    split_pi: float | None = None,
) -> WeightVector:
    """Combination weights from a fitted factorization.

    Forms the gauge-invariant separation products a_i = b_i q_{k(i)} from
    the fitted low-rank structure. Relative weights are a_i / (1 - a_i^2);
    supplying the class balance pi rescales by 1 / sqrt(pi (1 - pi)) to the
    absolute scale (pi can come from a constrained-optimization fit or be
    fixed externally). A standardized score sample (skew_scores), together
    with a class balance (split_pi, defaulting to pi), supplies the third
    moments that resolve the two-group scale split covariances cannot.
    Products within 1e-9 of magnitude one degenerate to weight zero with a
    warning. The vector is flipped, if needed, so the total weight mass is
    positive.
    """
    if pi is not None and not (0.0 < pi < 1.0):
        raise InvalidConfigError("pi must lie strictly between 0 and 1")
    a = _separation_products(
        state,
        structure,
        skew_scores=skew_scores,
        split_pi=split_pi if split_pi is not None else pi,
    )
    m = structure.n_predictors
    w = np.zeros(m)
    for i in range(m):
        if abs(a[i]) >= 1.0 - WEIGHT_DEGENERACY_TOL:
            warnings.warn(
                f"predictor {i} separation product is degenerate; using weight 0",
                DegenerateWeightWarning,
                stacklevel=2,
            )
            continue
        w[i] = a[i] / (1.0 - a[i] ** 2)
    if float(np.sum(w)) < 0:
        w = -w
    if pi is None:
        return WeightVector(w=w, scale_note="relative")
    return WeightVector(w=w / np.sqrt(pi * (1.0 - pi)), scale_note="absolute")


def fit_mf(
    scores: ScoreMatrix,
    structure: LatentStructure | None = None,
    override_k: int | None = None,
    pi: float | None = None,
    max_iter: int = BCD_MAX_ITER,
    tol: float = BCD_TOL,
) -> MfFit:
    """Estimate combination weights by masked factorization.

    Discovers the latent grouping when none is supplied, runs the block
    coordinate descent, and converts the fitted structure to weights
    (relative scale unless pi is given). Per-predictor third moments are
    passed along to the extraction to settle the two-group scale split,
    with the class balance taken from pi when given and otherwise estimated
    by the constrained log-linear solver on the same covariance (best
    effort; the shared-ratio fallback applies if it fails).
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
    state = bcd_fit(cov, structure, max_iter=max_iter, tol=tol)
    split_pi = pi
    if split_pi is None and structure.k == 2:
        try:
            system = assemble_system(cov, structure)
            solution = solve_cqo(system)
            split_pi = back_transform(solution, cov.size, structure.k)[0]
        except ScoreFusionError:
            split_pi = None
    weights = extract_weights(
        state, structure, pi=pi, skew_scores=scores.values, split_pi=split_pi
    )
    assign = structure.assignment
    load = state.b_mat[np.arange(structure.n_predictors), assign - 1]
    a = _separation_products(
        state, structure, skew_scores=scores.values, split_pi=split_pi
    )
    return MfFit(
        weights=weights,
        state=state,
        q=_group_separation(a, load, assign, structure.k),
        structure=structure,
        discovery=report,
    )
