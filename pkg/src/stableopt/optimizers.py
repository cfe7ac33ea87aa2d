"""Max-min acquisition rules, confidence fields, and the sampling loop.

The main entry point is :func:`run`, which executes StableOpt or one of the
four baselines over a :class:`~stableopt.robust.PerturbationSet` and returns
a per-round :class:`RunRecord`.  All argmax/argmin ties break toward the
lowest index so runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .gp import GPPosterior, ObservationSet, extend, mean_var_batch, posterior
from .kernels import KernelSpec, gram
from .robust import FiniteDomain, PerturbationSet

STABLEOPT = "stableopt"
GP_UCB = "gp-ucb"
MAXIMIN_GP_UCB = "maximin-gp-ucb"
STABLE_GP_RANDOM = "stable-gp-random"
STABLE_GP_UCB = "stable-gp-ucb"

ALGORITHMS = (STABLEOPT, GP_UCB, MAXIMIN_GP_UCB, STABLE_GP_RANDOM, STABLE_GP_UCB)
BASELINES = ALGORITHMS[1:]

# Algorithms whose reported point is the best past candidate under the
# min-lcb score; the others simply report their current selection.
_SCORE_REPORTERS = (STABLEOPT, STABLE_GP_RANDOM, STABLE_GP_UCB)

PER_ROUND_LCB = "per-round-lcb"
COMMON_LCB_MONOTONE = "common-lcb-monotone"
REPORTING_RULES = (PER_ROUND_LCB, COMMON_LCB_MONOTONE)


@dataclass(frozen=True)
class BetaSchedule:
    """Confidence-width multiplier per round.

    ``constant`` uses a fixed root value (practitioner choice); the
    ``theoretical`` schedule widens with the information gain accumulated
    so far:  beta_t = (B + sigma * sqrt(2 * (gamma + log(e / xi))))^2.
    ``gamma_override``, when set, replaces the realized information gain
    with a user-supplied bound.
    """

    kind: str = "constant"
    const_root: float = 2.0
    rkhs_bound: float = 1.0
    noise_std: float = 0.1
    failure_prob: float = 0.1
    gamma_override: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "theoretical"):
            raise ValueError(f"unknown beta schedule kind {self.kind!r}")
        if self.kind == "constant" and not (self.const_root > 0.0):
            raise ValueError("constant beta root must be positive")
        if self.kind == "theoretical":
            if not (self.rkhs_bound > 0.0 and self.noise_std > 0.0):
                raise ValueError("theoretical schedule needs positive B and sigma")
            if not 0.0 < self.failure_prob < 1.0:
                raise ValueError("failure probability must lie in (0, 1)")

    def beta(self, t: int, gamma_prev: float = 0.0) -> float:
        if self.kind == "constant":
            return self.const_root**2
        gamma = self.gamma_override if self.gamma_override is not None else gamma_prev
        if gamma < 0.0:
            raise ValueError("information gain must be non-negative")
        root = self.rkhs_bound + self.noise_std * math.sqrt(
            2.0 * (gamma + math.log(math.e / self.failure_prob))
        )
        return root**2


@dataclass(frozen=True)
class ConfidenceField:
    """Per-point confidence interval ``mean +- sqrt(beta) * sigma``."""

    mean: np.ndarray
    sigma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    beta: float


def confidence_field(
    post: GPPosterior,
    domain: FiniteDomain,
    schedule: BetaSchedule,
    t: int,
    gamma_prev: float = 0.0,
) -> ConfidenceField:
    """Confidence bounds over the whole domain at round ``t``."""
    if t < 1:
        raise ValueError("rounds are 1-indexed")
    beta = schedule.beta(t, gamma_prev)
    means, variances = mean_var_batch(post, domain.points)
    sigmas = np.sqrt(variances)
    half = math.sqrt(beta) * sigmas
    return ConfidenceField(means, sigmas, means - half, means + half, beta)


def stableopt_step(
    fld: ConfidenceField, pset: PerturbationSet
) -> tuple[int, int]:
    """One StableOpt selection.

    Returns the index with the highest worst-case upper bound and, within
    its neighborhood, the index minimizing the lower bound (the anticipated
    adversarial perturbation).  Ties break toward the lowest index.
    """
    worst_ucb = pset.worst_case(fld.upper)
    x_idx = int(np.argmax(worst_ucb))
    nb = pset.neighborhood(x_idx)
    delta_idx = int(nb[np.argmin(fld.lower[nb])])
    return x_idx, delta_idx


def baseline_step(
    kind: str,
    fld: ConfidenceField,
    pset: PerturbationSet,
    rng: np.random.Generator,
) -> int:
    """Sampling choice of one baseline round; ties break to lowest index."""
    if kind in (GP_UCB, STABLE_GP_UCB):
        return int(np.argmax(fld.upper))
    if kind == MAXIMIN_GP_UCB:
        return int(np.argmax(pset.worst_case(fld.upper)))
    if kind == STABLE_GP_RANDOM:
        return int(rng.integers(len(pset.domain)))
    raise ValueError(f"unknown baseline {kind!r}")


def _candidate_scores(
    candidates: Sequence[int], lower: np.ndarray, pset: PerturbationSet
) -> np.ndarray:
    """Min of ``lower`` over each candidate's neighborhood."""
    return np.array(
        [float(np.min(lower[pset.neighborhood(c)])) for c in candidates]
    )


def report_point(
    candidates: Sequence[int],
    fields: Sequence[ConfidenceField],
    pset: PerturbationSet,
    rule: str = PER_ROUND_LCB,
) -> tuple[int, int]:
    """Pick the candidate with the best pessimistic (min-lcb) score.

    ``per-round-lcb`` scores each candidate with its own round's lower
    bound; ``common-lcb-monotone`` first intersects the bounds across
    rounds (running max of lower, running min of upper) and scores every
    candidate with the resulting latest lower bound.  Returns the reported
    index and the 1-based round it was selected in; ties break toward the
    earliest round.
    """
    if len(candidates) == 0:
        raise ValueError("cannot report from an empty history")
    if len(candidates) != len(fields):
        raise ValueError("need one confidence field per completed round")
    if rule not in REPORTING_RULES:
        raise ValueError(f"unknown reporting rule {rule!r}")
    if rule == PER_ROUND_LCB:
        scores = np.array(
            [
                float(np.min(fld.lower[pset.neighborhood(c)]))
                for c, fld in zip(candidates, fields)
            ]
        )
    else:
        common_lower = np.maximum.reduce([fld.lower for fld in fields])
        scores = _candidate_scores(candidates, common_lower, pset)
    t_star = int(np.argmax(scores))
    return int(candidates[t_star]), t_star + 1


def information_gain(kernel: KernelSpec, points, noise_variance: float) -> float:
    """Realized information gain ``0.5 * log det(I + K / noise)``.

    Computed through the Cholesky factor of the well-conditioned matrix
    ``I + K / noise`` rather than a raw determinant.
    """
    if not (noise_variance > 0.0):
        raise ValueError("noise_variance must be positive")
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return 0.0
    K = gram(kernel, points)
    M = np.eye(K.shape[0]) + K / noise_variance
    L = np.linalg.cholesky(M)
    return float(np.sum(np.log(np.diag(L))))


def worst_case_gain_bound(count: int, noise_variance: float) -> float:
    """Upper bound on the information gain of any ``count`` measurements.

    Valid for normalized kernels (prior variance at most one): each sample
    contributes at most ``0.5 * log(1 + 1/noise)``.  Useful as a rigorous
    ``gamma_override`` for the theoretical beta schedule.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if not (noise_variance > 0.0):
        raise ValueError("noise_variance must be positive")
    return 0.5 * count * math.log(1.0 + 1.0 / noise_variance)


def eps_regret(pset: PerturbationSet, f_values, reported: int) -> float:
    """Gap between the best and the reported worst-case value; never negative."""
    robust = pset.worst_case(f_values)
    if not 0 <= reported < len(robust):
        raise IndexError(f"reported index {reported} outside the domain")
    return float(np.max(robust) - robust[reported])


@dataclass
class RunRecord:
    """Complete per-round log of one optimization run.

    ``candidates`` holds the round's report-eligible selection (StableOpt's
    max-min point; the sampled point for the baselines), ``scores`` its
    pessimistic min-lcb value under that round's own field, and
    ``reported``/``regrets`` the point the algorithm would return after
    each round along with its regret when ground truth was supplied.
    """

    algorithm: str
    candidates: list[int] = field(default_factory=list)
    delta_targets: list[int] = field(default_factory=list)
    sampled: list[int] = field(default_factory=list)
    observations: list[float] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    betas: list[float] = field(default_factory=list)
    sampled_sigmas: list[float] = field(default_factory=list)
    reported: list[int] = field(default_factory=list)
    regrets: list[float] = field(default_factory=list)
    fields: list[ConfidenceField] | None = None
    final_reported: int = -1
    final_round: int = -1

    def __len__(self) -> int:
        return len(self.sampled)


def run(
    algorithm: str,
    objective: Callable[[int], float],
    pset: PerturbationSet,
    kernel: KernelSpec,
    schedule: BetaSchedule,
    rounds: int,
    noise_variance: float,
    init: Sequence[tuple[int, float]] = (),
    seed: int = 0,
    true_values=None,
    reporting_rule: str = PER_ROUND_LCB,
    keep_fields: bool = False,
) -> RunRecord:
    """Execute one full optimization run.

    ``objective`` maps a domain index to a (noisy) observation.  ``init``
    observations are conditioned on before the first round and are shared
    verbatim across algorithms by the benchmark harness.  When
    ``true_values`` is given, the per-round reported point is scored
    against the exhaustive worst-case optimum.  Deterministic for a fixed
    seed and deterministic objective.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if rounds < 1:
        raise ValueError("need at least one round")
    domain = pset.domain
    obs = ObservationSet.empty(domain.dimension, noise_variance)
    for idx, value in init:
        obs = obs.append(domain.points[int(idx)], float(value))
    post = posterior(kernel, obs)
    rng = np.random.default_rng(seed)

    robust_truth = None
    truth_optimum = 0.0
    if true_values is not None:
        robust_truth = pset.worst_case(np.asarray(true_values, dtype=float))
        truth_optimum = float(np.max(robust_truth))

    record = RunRecord(algorithm=algorithm, fields=[] if keep_fields else None)
    running_lower: np.ndarray | None = None  # intersected lcb across rounds
    best_score = -math.inf
    best_round = 0

    for t in range(1, rounds + 1):
        gamma_prev = 0.0
        if schedule.kind == "theoretical" and schedule.gamma_override is None:
            gamma_prev = information_gain(
                kernel, post.observations.inputs, noise_variance
            )
        fld = confidence_field(post, domain, schedule, t, gamma_prev)

        if algorithm == STABLEOPT:
            candidate, delta_target = stableopt_step(fld, pset)
            sample_idx = delta_target
        else:
            sample_idx = baseline_step(algorithm, fld, pset, rng)
            candidate = sample_idx
            delta_target = sample_idx

        nb = pset.neighborhood(candidate)
        score = float(np.min(fld.lower[nb]))

        if reporting_rule == COMMON_LCB_MONOTONE:
            running_lower = (
                fld.lower.copy()
                if running_lower is None
                else np.maximum(running_lower, fld.lower)
            )

        y = float(objective(sample_idx))
        sampled_sigma = float(fld.sigma[sample_idx])
        post = extend(post, domain.points[sample_idx], y)

        record.candidates.append(candidate)
        record.delta_targets.append(delta_target)
        record.sampled.append(sample_idx)
        record.observations.append(y)
        record.scores.append(score)
        record.betas.append(fld.beta)
        record.sampled_sigmas.append(sampled_sigma)
        if keep_fields:
            record.fields.append(fld)

        if algorithm in _SCORE_REPORTERS:
            if reporting_rule == PER_ROUND_LCB:
                if score > best_score:
                    best_score, best_round = score, t
                reported_idx = record.candidates[best_round - 1]
                reported_round = best_round
            else:
                scores = _candidate_scores(record.candidates, running_lower, pset)
                reported_round = int(np.argmax(scores)) + 1
                reported_idx = record.candidates[reported_round - 1]
        else:
            reported_idx = candidate
            reported_round = t
        record.reported.append(reported_idx)

        if robust_truth is not None:
            record.regrets.append(truth_optimum - float(robust_truth[reported_idx]))

    record.final_reported = record.reported[-1]
    record.final_round = reported_round
    return record
