"""Synthetic-benchmark generator for the three standard scenarios.

Samples follow the structured model: a binary class y ~ Bernoulli(pi), one
latent signal per group drawn from its class-conditional Gaussian, and each
predictor column equal to its loading times the group signal plus unit-free
Gaussian noise. Columns are standardized before they leave this module.

Randomness is split by numpy SeedSequence spawning: one child stream for the
labels, one per latent signal, and one per predictor (loading draw followed
by that predictor's noise). Column i therefore does not depend on how many
other columns exist or the order they are filled in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    LabelVector,
    LatentStructure,
    MixtureParams,
    ModelParams,
    ScoreMatrix,
    WeightVector,
    standardize,
)
from .errors import InvalidConfigError, LengthMismatchError


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to draw one synthetic dataset."""

    n: int
    pi: float
    latent: tuple[MixtureParams, ...]
    group_sizes: tuple[int, ...]
    b_range: tuple[float, float] = (0.4, 0.9)
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidConfigError("need at least 2 samples")
        if not (0.0 < self.pi < 1.0):
            raise InvalidConfigError("pi must lie strictly between 0 and 1")
        if len(self.latent) != len(self.group_sizes):
            raise LengthMismatchError("one mixture per group required")
        if len(self.latent) == 0:
            raise InvalidConfigError("need at least one group")
        if any(s < 1 for s in self.group_sizes):
            raise InvalidConfigError("group sizes must be positive")
        lo, hi = self.b_range
        if not (0.0 < lo <= hi):
            raise InvalidConfigError("b_range must satisfy 0 < lo <= hi")
        if self.noise_sd < 0:
            raise InvalidConfigError("noise_sd must be nonnegative")
        object.__setattr__(self, "latent", tuple(self.latent))
        object.__setattr__(self, "group_sizes", tuple(int(s) for s in self.group_sizes))

    @property
    def n_predictors(self) -> int:
        return int(sum(self.group_sizes))

    @property
    def k(self) -> int:
        return len(self.group_sizes)

    def structure(self) -> LatentStructure:
        assign = np.concatenate(
            [np.full(size, gid, dtype=np.int64) for gid, size in enumerate(self.group_sizes, start=1)]
        )
        return LatentStructure(k=self.k, assignment=assign)


@dataclass(frozen=True)
class SimulationTruth:
    """Ground truth retained from a simulation run."""

    labels: LabelVector
    latent_scores: np.ndarray  # N x K, one column per latent signal
    b_true: np.ndarray
    structure: LatentStructure
    true_weights: WeightVector


def true_weights(config: ScenarioConfig, b: np.ndarray) -> WeightVector:
    """Analytic maximum-likelihood weights on the standardized scale.

    For predictor i in group k with loading b_i: the class-mean gap is
    b_i * (mu_k1 - mu_k0), the within-class variance is b_i^2 sigma_k^2 +
    noise_sd^2, and the total variance adds the between-class part
    pi (1 - pi) times the squared gap. Standardizing divides the gap by the
    total sd and the within-class variance by the total variance, so the
    weight is gap * total_sd / (2 * within_class_variance).
    """
    struct = config.structure()
    gaps = np.array([config.latent[g - 1].mu1 - config.latent[g - 1].mu0 for g in struct.assignment])
    sig = np.array([config.latent[g - 1].sigma for g in struct.assignment])
    d_mu = b * gaps
    s2 = b**2 * sig**2 + config.noise_sd**2
    tau2 = s2 + config.pi * (1.0 - config.pi) * d_mu**2
    w = d_mu * np.sqrt(tau2) / (2.0 * s2)
    return WeightVector(w, scale_note="absolute")


def standardized_params(config: ScenarioConfig, b: np.ndarray) -> ModelParams:
    """Map raw generative parameters to the standardized-scale form.

    The standardized column is (b_i h_k + eps_i) / tau_i, so the loading
    becomes b_i / tau_i. The latent signal is re-described by its total sd
    (within-class plus between-class variance) and by class means centered
    so the mixture mean is zero: mu_k0 maps to -pi * (mu_k1 - mu_k0).
    Under this mapping model_covariance reproduces the correlation matrix of
    the raw simulated scores.
    """
    struct = config.structure()
    gaps_k = np.array([mix.mu1 - mix.mu0 for mix in config.latent])
    var_h = np.array([mix.sigma**2 for mix in config.latent]) + config.pi * (1.0 - config.pi) * gaps_k**2
    pi = config.pi
    latent_std = tuple(
        MixtureParams(mu0=-pi * gaps_k[k], mu1=(1.0 - pi) * gaps_k[k], sigma=float(np.sqrt(var_h[k])))
        for k in range(config.k)
    )
    var_h_per = var_h[struct.assignment - 1]
    tau = np.sqrt(b**2 * var_h_per + config.noise_sd**2)
    return ModelParams(
        pi=pi,
        b=b / tau,
        latent=latent_std,
        theta=np.full(config.n_predictors, config.noise_sd) / tau,
        structure=struct,
    )


def simulate(config: ScenarioConfig) -> tuple[ScoreMatrix, SimulationTruth]:
    """Draw one dataset. Deterministic in config.seed; rerunning with the
    same config reproduces every byte."""
    n, m, k = config.n, config.n_predictors, config.k
    struct = config.structure()
    streams = np.random.SeedSequence(config.seed).spawn(1 + k + m)
    rng_y = np.random.Generator(np.random.PCG64(streams[0]))
    y = rng_y.binomial(1, config.pi, size=n)

    h = np.empty((n, k))
    for g in range(k):
        mix = config.latent[g]
        rng_h = np.random.Generator(np.random.PCG64(streams[1 + g]))
        z = rng_h.standard_normal(n)
        means = np.where(y == 1, mix.mu1, mix.mu0)
        h[:, g] = means + mix.sigma * z

    raw = np.empty((n, m))
    b = np.empty(m)
    for i in range(m):
        rng_i = np.random.Generator(np.random.PCG64(streams[1 + k + i]))
        b[i] = rng_i.uniform(*config.b_range)
        eps = config.noise_sd * rng_i.standard_normal(n)
        raw[:, i] = b[i] * h[:, struct.assignment[i] - 1] + eps

    scores = standardize(ScoreMatrix(raw))
    truth = SimulationTruth(
        labels=LabelVector(y),
        latent_scores=h,
        b_true=b,
        structure=struct,
        true_weights=true_weights(config, b),
    )
    return scores, truth


def scenario_presets(seed: int = 0, n: int = 400) -> dict[int, ScenarioConfig]:
    """The three benchmark scenarios.

    1: eight singleton groups (every predictor its own latent signal).
    2: four groups of 9/6/7/5 predictors.
    3: a dominant 20-predictor group plus a 2-predictor group.
    """
    mixes = {
        "a": MixtureParams(mu0=-5.0, mu1=1.25, sigma=0.0),
        "b": MixtureParams(mu0=-1.0, mu1=0.25, sigma=0.0),
        "c": MixtureParams(mu0=-5.2, mu1=1.3, sigma=0.0),
        "d": MixtureParams(mu0=-1.04, mu1=0.26, sigma=0.0),
    }

    def mix(tag: str, sigma: float) -> MixtureParams:
        base = mixes[tag]
        return MixtureParams(mu0=base.mu0, mu1=base.mu1, sigma=sigma)

    scenario1 = ScenarioConfig(
        n=n,
        pi=0.8,
        latent=tuple(
            mix(tag, sigma)
            for tag, sigma in zip("abcdabcd", (4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0))
        ),
        group_sizes=(1,) * 8,
        seed=seed,
    )
    scenario2 = ScenarioConfig(
        n=n,
        pi=0.8,
        latent=(mix("a", 6.0), mix("b", 6.0), mix("c", 3.0), mix("d", 3.0)),
        group_sizes=(9, 6, 7, 5),
        seed=seed,
    )
    scenario3 = ScenarioConfig(
        n=n,
        pi=0.8,
        latent=(mix("a", 5.0), mix("b", 2.0)),
        group_sizes=(20, 2),
        seed=seed,
    )
    return {1: scenario1, 2: scenario2, 3: scenario3}
