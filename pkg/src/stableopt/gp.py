"""Gaussian-process posterior inference with incremental factor updates.

A :class:`GPPosterior` is an immutable snapshot of an observation history
together with the lower-triangular Cholesky factor of the regularized kernel
matrix.  Queries are pure; :func:`extend` produces a new snapshot via a
rank-1 extension of the factor without touching the original.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .kernels import (
    GRAM_NUGGET,
    LEAF_FAMILIES,
    LINEAR,
    KernelSpec,
    cross,
    gram,
    prior_variances,
)

# Pre-clamp posterior variances below this (relative to the prior variance
# scale) indicate a bug or a pathological system rather than roundoff.
NEGATIVE_VARIANCE_FLOOR = -1e-6


class FactorizationError(RuntimeError):
    """Cholesky factorization failed even after the nugget retry."""


class NegativeVarianceError(RuntimeError):
    """Posterior variance went negative far beyond roundoff level."""


@dataclass(frozen=True)
class ObservationSet:
    """Ordered noisy observations ``(x_i, y_i)`` with homoskedastic noise."""

    inputs: np.ndarray  # (t, p)
    outputs: np.ndarray  # (t,)
    noise_variance: float

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1)
        if inputs.ndim != 2:
            raise ValueError("inputs must be a (t, p) array")
        outputs = np.asarray(self.outputs, dtype=float).ravel()
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError(
                f"{inputs.shape[0]} inputs but {outputs.shape[0]} outputs"
            )
        if not (self.noise_variance > 0.0):
            raise ValueError("noise_variance must be strictly positive")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @classmethod
    def empty(cls, dim: int, noise_variance: float) -> "ObservationSet":
        return cls(np.zeros((0, dim)), np.zeros(0), noise_variance)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def append(self, x, y: float) -> "ObservationSet":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if x.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: {x.shape[1]} vs {self.dim}")
        return replace(
            self,
            inputs=np.vstack([self.inputs, x]),
            outputs=np.append(self.outputs, float(y)),
        )


@dataclass(frozen=True)
class GPPosterior:
    """Immutable posterior snapshot: observations plus factorized system.

    ``chol`` is the lower-triangular factor of ``K_t + (noise + nugget) I``
    and ``weights`` solves ``(K_t + noise I) w = y``.
    """

    kernel: KernelSpec
    observations: ObservationSet
    chol: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.observations)


def _factor(matrix: np.ndarray) -> np.ndarray:
    """Cholesky with a nugget retry; raises FactorizationError when hopeless."""
    n = matrix.shape[0]
    scale = max(1.0, float(np.max(np.diag(matrix)))) if n else 1.0
    try:
        return np.linalg.cholesky(matrix + GRAM_NUGGET * np.eye(n))
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(matrix + 1e-6 * scale * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            "kernel system is not positive definite even after nugget retry"
        ) from exc


def posterior(kernel: KernelSpec, obs: ObservationSet) -> GPPosterior:
    """Condition a zero-mean GP prior on the given observations."""
    t = len(obs)
    if t == 0:
        return GPPosterior(kernel, obs, np.zeros((0, 0)), np.zeros(0))
    K = gram(kernel, obs.inputs)
    L = _factor(K + obs.noise_variance * np.eye(t))
    weights = cho_solve((L, True), obs.outputs)
    return GPPosterior(kernel, obs, L, weights)


def extend(post: GPPosterior, x, y: float) -> GPPosterior:
    """Posterior with one more observation, via rank-1 factor extension.

    Equivalent to recomputing :func:`posterior` on the extended history;
    the parent snapshot is left untouched.
    """
    obs = post.observations.append(x, y)
    t = len(post)
    if t == 0:
        return posterior(post.kernel, obs)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    b = cross(post.kernel, post.observations.inputs, x)[:, 0]
    c = (
        float(prior_variances(post.kernel, x)[0])
        + obs.noise_variance
        + GRAM_NUGGET
    )
    l_col = solve_triangular(post.chol, b, lower=True)
    d_sq = c - float(l_col @ l_col)
    if d_sq <= 0.0:
        # Conditioning collapsed; rebuild from scratch with the retry path.
        return posterior(post.kernel, obs)
    L = np.zeros((t + 1, t + 1))
    L[:t, :t] = post.chol
    L[t, :t] = l_col
    L[t, t] = math.sqrt(d_sq)
    weights = cho_solve((L, True), obs.outputs)
    return GPPosterior(post.kernel, obs, L, weights)


def mean_var_batch(post: GPPosterior, X) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances at a batch of query points.

    Variances are clamped at zero from below; a pre-clamp value below
    ``NEGATIVE_VARIANCE_FLOOR`` times the prior-variance scale raises
    :class:`NegativeVarianceError` instead of being hidden by the clamp.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    prior = prior_variances(post.kernel, X)
    if len(post) == 0:
        return np.zeros(X.shape[0]), prior.copy()
    if X.shape[1] != post.observations.dim:
        raise ValueError(
            f"dimension mismatch: {X.shape[1]} vs {post.observations.dim}"
        )
    k_star = cross(post.kernel, post.observations.inputs, X)
    means = k_star.T @ post.weights
    v = solve_triangular(post.chol, k_star, lower=True)
    variances = prior - np.sum(v * v, axis=0)
    scale = max(1.0, float(np.max(prior)) if prior.size else 1.0)
    worst = float(np.min(variances)) if variances.size else 0.0
    if worst < NEGATIVE_VARIANCE_FLOOR * scale:
        raise NegativeVarianceError(
            f"posterior variance {worst:.3e} is negative beyond roundoff"
        )
    return means, np.maximum(variances, 0.0)


def mean_var(post: GPPosterior, x) -> tuple[float, float]:
    """Posterior mean and variance at a single query point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("mean_var expects a single input vector")
    means, variances = mean_var_batch(post, x[None, :])
    return float(means[0]), float(variances[0])


def log_marginal_likelihood(kernel: KernelSpec, obs: ObservationSet) -> float:
    """Exact Gaussian log marginal likelihood of the observations."""
    t = len(obs)
    if t == 0:
        return 0.0
    post = posterior(kernel, obs)
    fit = -0.5 * float(obs.outputs @ post.weights)
    logdet = -float(np.sum(np.log(np.diag(post.chol))))
    return fit + logdet - 0.5 * t * math.log(2.0 * math.pi)


def fit_hyperparameters(
    template: KernelSpec,
    obs: ObservationSet,
    search_budget: int,
    seed: int = 0,
    lengthscale_bounds: tuple[float, float] = (1e-2, 1e2),
    signal_variance_bounds: tuple[float, float] = (1e-2, 1e4),
) -> KernelSpec:
    """Maximum-likelihood hyperparameters via seeded multi-start search.

    The template is always candidate 0, so the returned spec never scores
    below it; the remaining ``search_budget - 1`` candidates draw
    lengthscales and signal variance log-uniformly within the bounds.
    Deterministic for a fixed seed.  Degenerate data (all outputs equal)
    returns the template unchanged with a warning.
    """
    if len(obs) < 2:
        raise ValueError("hyperparameter fitting needs at least two observations")
    if search_budget < 1:
        raise ValueError("search_budget must be at least 1")
    if template.family not in LEAF_FAMILIES:
        raise ValueError("hyperparameter search supports leaf kernels only")
    if float(np.ptp(obs.outputs)) == 0.0:
        warnings.warn(
            "all outputs identical; returning the template unchanged",
            RuntimeWarning,
            stacklevel=2,
        )
        return template

    rng = np.random.default_rng(seed)
    lo_l, hi_l = lengthscale_bounds
    lo_s, hi_s = signal_variance_bounds
    n_ls = len(template.lengthscales)

    def draw() -> KernelSpec:
        sv = float(np.exp(rng.uniform(math.log(lo_s), math.log(hi_s))))
        if template.family == LINEAR:
            return replace(template, signal_variance=sv)
        ls = tuple(
            np.exp(rng.uniform(math.log(lo_l), math.log(hi_l), size=n_ls))
        )
        return replace(template, lengthscales=ls, signal_variance=sv)

    best = template
    best_score = log_marginal_likelihood(template, obs)
    for _ in range(search_budget - 1):
        candidate = draw()
        try:
            score = log_marginal_likelihood(candidate, obs)
        except FactorizationError:
            continue
        if score > best_score:
            best, best_score = candidate, score
    return best
