"""Benchmark objectives and exhaustive ground-truth oracles.

Everything here is deliberately brute force: :func:`robust_table` enumerates
every neighborhood to produce the reference worst-case values against which
optimizer output is scored.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gp import FactorizationError, _factor
from .kernels import KernelSpec, cross, gram
from .robust import L2, DistanceSpec, FiniteDomain, PerturbationSet, build_neighborhoods

# Box and grid size for the two-dimensional polynomial benchmark.
POLY_BOUNDS = ((-0.95, 3.2), (-0.45, 4.4))
POLY_GRID_SHAPE = (100, 100)


@dataclass(frozen=True)
class ObjectiveTable:
    """True objective values plus their worst-case counterparts on a domain."""

    domain: FiniteDomain
    values: np.ndarray
    robust_values: np.ndarray
    robust_optimum_index: int
    robust_optimum_value: float

    def to_csv(self, path) -> Path:
        """Write (index, coordinates, value, robust value) rows."""
        path = Path(path)
        dim = self.domain.dimension
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["index"] + [f"x{d}" for d in range(dim)] + ["value", "robust_value"]
            )
            for i, point in enumerate(self.domain.points):
                writer.writerow(
                    [i]
                    + [repr(float(c)) for c in point]
                    + [repr(float(self.values[i])), repr(float(self.robust_values[i]))]
                )
        return path


def evaluate_objective(f, points: np.ndarray) -> np.ndarray:
    """Evaluate a scalar objective over an (n, p) point array.

    Accepts a precomputed (n,) value array, a vectorized callable mapping
    the full array to (n,) values, or a per-point callable.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not callable(f):
        values = np.asarray(f, dtype=float)
        if values.shape != (points.shape[0],):
            raise ValueError(
                f"precomputed values have shape {values.shape}, "
                f"expected ({points.shape[0]},)"
            )
        return values
    try:
        with warnings.catch_warnings():
            # a per-point callable probed with the full array may trigger
            # size-1 conversion warnings; treat those as "not vectorized"
            warnings.simplefilter("error", DeprecationWarning)
            out = np.asarray(f(points), dtype=float)
        if out.shape == (points.shape[0],):
            return out
    except (TypeError, ValueError, DeprecationWarning):
        pass
    return np.array([float(f(x)) for x in points])


def robust_table(domain: FiniteDomain, f, pset: PerturbationSet) -> ObjectiveTable:
    """Exhaustive worst-case table: the ground truth for regret scoring."""
    if pset.domain is not domain and len(pset.domain) != len(domain):
        raise ValueError("perturbation set does not cover the domain")
    values = evaluate_objective(f, domain.points)
    robust = pset.worst_case(values)
    best = int(np.argmax(robust))
    return ObjectiveTable(domain, values, robust, best, float(robust[best]))


def f_poly(x, y):
    """Degree-six bivariate polynomial benchmark with several local maxima.

    Vectorized; the global maximum over the usual box sits near
    (2.82, 4.0) with value about 20.82, while the worst-case-optimal
    region under an l2 ball of radius 0.5 lies near (-0.195, 0.284).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (
        -2.0 * x**6
        + 12.2 * x**5
        - 21.2 * x**4
        - 6.2 * x
        + 6.4 * x**3
        + 4.7 * x**2
        - y**6
        + 11.0 * y**5
        - 43.3 * y**4
        + 10.0 * y
        + 74.8 * y**3
        - 56.9 * y**2
        + 4.1 * x * y
        + 0.1 * y**2 * x**2
        - 0.4 * y**2 * x
        - 0.4 * x**2 * y
    )


def poly_values(points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    return f_poly(points[:, 0], points[:, 1])


def poly_grid(shape=POLY_GRID_SHAPE) -> FiniteDomain:
    """The polynomial benchmark's uniformly spaced evaluation grid."""
    return FiniteDomain.grid(POLY_BOUNDS, shape)


@dataclass(frozen=True)
class RkhsFunctionSpec:
    """Finite kernel expansion ``f(x) = sum_i alpha_i k(centers[i], x)``."""

    kernel: KernelSpec
    centers: np.ndarray
    coefficients: np.ndarray
    rkhs_norm: float

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return cross(self.kernel, self.centers, X).T @ self.coefficients

    def norm_from_quadratic_form(self) -> float:
        K = gram(self.kernel, self.centers)
        return math.sqrt(float(self.coefficients @ K @ self.coefficients))


def sample_rkhs_function(
    kernel: KernelSpec,
    domain: FiniteDomain,
    norm_budget: float,
    n_centers: int,
    seed: int = 0,
    max_retries: int = 5,
) -> RkhsFunctionSpec:
    """Random function with RKHS norm exactly ``norm_budget``.

    Centers are drawn from the domain without replacement and Gaussian
    coefficients are rescaled so the quadratic-form norm hits the budget.
    Deterministic per seed; a center set with a numerically singular Gram
    is resampled up to ``max_retries`` times.
    """
    if norm_budget <= 0.0:
        raise ValueError("norm_budget must be positive")
    if n_centers < 1:
        raise ValueError("need at least one center")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        idx = rng.choice(len(domain), size=min(n_centers, len(domain)), replace=False)
        centers = domain.points[np.sort(idx)]
        K = gram(kernel, centers)
        try:
            _factor(K)
        except FactorizationError:
            continue
        alpha = rng.standard_normal(len(centers))
        q = float(alpha @ K @ alpha)
        if q <= 1e-12:
            continue
        alpha *= norm_budget / math.sqrt(q)
        return RkhsFunctionSpec(kernel, centers, alpha, float(norm_budget))
    raise FactorizationError(
        "could not draw a well-conditioned center set within the retry cap"
    )


def valley_instance(
    domain: FiniteDomain,
    eta: float,
    width: float,
    center,
    pset: PerturbationSet | None = None,
) -> ObjectiveTable:
    """Hard instance: a narrow smooth dip of depth ``-2 * eta``.

    The dip is a scaled squared-exponential profile whose sharpness is set
    so every point at infinity-norm distance at least ``width`` from the
    center stays strictly above ``-eta``.  The stated center is snapped to
    the nearest grid point so the minimum is attained exactly.  Useful as
    an adversarial benchmark: any reported point whose perturbation ball
    contains the dip has worst-case value ``-2 * eta``.

    When ``pset`` is omitted, the robust columns use singleton
    neighborhoods (no perturbation).
    """
    if not 0.0 < eta < 0.5:
        raise ValueError("eta must lie in (0, 1/2)")
    if not 0.0 < width < 0.5:
        raise ValueError("width must lie in (0, 1/2)")
    center = np.asarray(center, dtype=float).ravel()
    if center.shape[0] != domain.dimension:
        raise ValueError("center dimension does not match the domain")
    if np.any(center <= 0.0) or np.any(center >= 1.0):
        raise ValueError("center must be interior to the unit box")
    # snap to the nearest grid point so the dip bottom is realized exactly
    sq = np.sum((domain.points - center) ** 2, axis=1)
    center = domain.points[int(np.argmin(sq))]
    # profile decays to 1/16 at distance `width`; anything below 1/2 keeps
    # points beyond the width strictly above -eta
    s = width / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    d_sq = np.sum((domain.points - center) ** 2, axis=1)
    values = -2.0 * eta * np.exp(-0.5 * d_sq / (s * s))
    if pset is None:
        pset = _singleton_pset(domain)
    return robust_table(domain, values, pset)


def _singleton_pset(domain: FiniteDomain) -> PerturbationSet:
    return build_neighborhoods(domain, DistanceSpec(L2), 0.0)


# Fixed coefficients of the two-peak 1-D benchmark: a tall narrow peak and
# a lower, much wider one.  With |x - x'| perturbations of size 0.06 the
# worst-case optimum sits on the wide peak while the plain maximum sits on
# the narrow one.
TWO_PEAKS_COEFFS = (
    (1.0, 0.2, 0.018),  # (height, center, width) of the narrow peak
    (0.7, 0.7, 0.10),  # wide peak
)
RUNNING_EXAMPLE_EPSILON = 0.06


def two_peaks(x) -> np.ndarray:
    """The fixed 1-D benchmark shape; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for height, center, width in TWO_PEAKS_COEFFS:
        out = out + height * np.exp(-0.5 * ((x - center) / width) ** 2)
    return out


def two_peaks_values(points: np.ndarray) -> np.ndarray:
    return two_peaks(np.atleast_2d(points)[:, 0])


def running_example_1d(domain: FiniteDomain) -> ObjectiveTable:
    """Two-peak table with its canonical epsilon-0.06 worst-case columns."""
    if domain.dimension != 1:
        raise ValueError("the running example is one-dimensional")
    pset = build_neighborhoods(domain, DistanceSpec(L2), RUNNING_EXAMPLE_EPSILON)
    return robust_table(domain, two_peaks_values, pset)
