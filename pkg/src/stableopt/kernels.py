"""Covariance functions and kernel-matrix construction.

Kernels are described declaratively by :class:`KernelSpec` and evaluated by
the module-level functions :func:`evaluate`, :func:`cross` and :func:`gram`.
Specs are immutable; all evaluation functions are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

SQUARED_EXPONENTIAL = "squared-exponential"
MATERN = "matern"
LINEAR = "linear"
SUM_COMPOSITE = "sum-composite"
PRODUCT_COMPOSITE = "product-composite"

LEAF_FAMILIES = (SQUARED_EXPONENTIAL, MATERN, LINEAR)
COMPOSITE_FAMILIES = (SUM_COMPOSITE, PRODUCT_COMPOSITE)
SUPPORTED_NU = (0.5, 1.5, 2.5)

_FAMILY_ALIASES = {
    "se": SQUARED_EXPONENTIAL,
    "rbf": SQUARED_EXPONENTIAL,
    "squared-exponential": SQUARED_EXPONENTIAL,
    "matern": MATERN,
    "linear": LINEAR,
    "sum": SUM_COMPOSITE,
    "sum-composite": SUM_COMPOSITE,
    "product": PRODUCT_COMPOSITE,
    "product-composite": PRODUCT_COMPOSITE,
}

# Diagonal jitter used when factorizing Gram matrices for conditioning on
# clustered grids.  Distinct from the observation-noise variance.
GRAM_NUGGET = 1e-10


def canonical_family(name: str) -> str:
    try:
        return _FAMILY_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown kernel family {name!r}") from None


@dataclass(frozen=True)
class KernelSpec:
    """Declarative description of a positive-definite covariance function.

    Parameters
    ----------
    family:
        One of ``squared-exponential``, ``matern``, ``linear``,
        ``sum-composite`` or ``product-composite`` (short aliases ``se``,
        ``sum``, ``product`` are accepted).
    lengthscales:
        One strictly positive value per input dimension, or a single shared
        value.  Ignored by ``linear`` and composites.
    nu:
        Smoothness of the Matern family; one of 0.5, 1.5, 2.5.
    signal_variance:
        Overall output scale; ``k(x, x) = signal_variance`` for the
        stationary families.
    children:
        Exactly two child specs for composites; composites evaluate both
        children on the full input vectors and combine with ``+`` or ``*``.
    """

    family: str
    lengthscales: tuple[float, ...] = (1.0,)
    nu: float | None = None
    signal_variance: float = 1.0
    children: tuple["KernelSpec", "KernelSpec"] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", canonical_family(self.family))
        object.__setattr__(
            self, "lengthscales", tuple(float(l) for l in self.lengthscales)
        )
        if self.family in COMPOSITE_FAMILIES:
            if self.children is None or len(self.children) != 2:
                raise ValueError(f"{self.family} requires exactly two children")
        elif self.children is not None:
            raise ValueError(f"{self.family} does not take children")
        if self.family in (SQUARED_EXPONENTIAL, MATERN):
            if not self.lengthscales:
                raise ValueError("at least one lengthscale is required")
            if any(not (l > 0.0) or not math.isfinite(l) for l in self.lengthscales):
                raise ValueError("lengthscales must be strictly positive and finite")
        if self.family == MATERN:
            if self.nu not in SUPPORTED_NU:
                raise ValueError(f"matern nu must be one of {SUPPORTED_NU}")
        elif self.nu is not None:
            raise ValueError("nu is only meaningful for the matern family")
        if not (self.signal_variance > 0.0):
            raise ValueError("signal_variance must be strictly positive")

    # -- convenience constructors -------------------------------------------------

    @classmethod
    def se(cls, lengthscales=(1.0,), signal_variance: float = 1.0) -> "KernelSpec":
        return cls(SQUARED_EXPONENTIAL, _as_tuple(lengthscales), None, signal_variance)

    @classmethod
    def matern(
        cls, nu: float, lengthscales=(1.0,), signal_variance: float = 1.0
    ) -> "KernelSpec":
        return cls(MATERN, _as_tuple(lengthscales), nu, signal_variance)

    @classmethod
    def linear(cls, signal_variance: float = 1.0) -> "KernelSpec":
        return cls(LINEAR, (1.0,), None, signal_variance)

    @classmethod
    def sum_of(cls, left: "KernelSpec", right: "KernelSpec") -> "KernelSpec":
        return cls(SUM_COMPOSITE, (1.0,), None, 1.0, (left, right))

    @classmethod
    def product_of(cls, left: "KernelSpec", right: "KernelSpec") -> "KernelSpec":
        return cls(PRODUCT_COMPOSITE, (1.0,), None, 1.0, (left, right))

    # -- serialization --------------------------------------------------------------

    def to_config(self, prefix: str = "kernel") -> dict[str, str]:
        """Flatten the spec into harness-config key/value pairs."""
        out = {f"{prefix}.family": self.family}
        if self.family in (SQUARED_EXPONENTIAL, MATERN):
            out[f"{prefix}.lengthscales"] = ",".join(repr(l) for l in self.lengthscales)
        if self.family == MATERN:
            out[f"{prefix}.nu"] = repr(self.nu)
        out[f"{prefix}.signal_variance"] = repr(self.signal_variance)
        if self.children is not None:
            out.update(self.children[0].to_config(f"{prefix}.left"))
            out.update(self.children[1].to_config(f"{prefix}.right"))
        return out

    @classmethod
    def from_config(cls, mapping: Mapping[str, str], prefix: str = "kernel") -> "KernelSpec":
        """Rebuild a spec from flattened key/value pairs."""
        family = canonical_family(mapping[f"{prefix}.family"])
        if family in COMPOSITE_FAMILIES:
            left = cls.from_config(mapping, f"{prefix}.left")
            right = cls.from_config(mapping, f"{prefix}.right")
            sv = float(mapping.get(f"{prefix}.signal_variance", "1.0"))
            return cls(family, (1.0,), None, sv, (left, right))
        lengthscales = tuple(
            float(tok)
            for tok in mapping.get(f"{prefix}.lengthscales", "1.0").split(",")
        )
        nu = float(mapping[f"{prefix}.nu"]) if f"{prefix}.nu" in mapping else None
        sv = float(mapping.get(f"{prefix}.signal_variance", "1.0"))
        return cls(family, lengthscales, nu, sv)


def _as_tuple(lengthscales) -> tuple[float, ...]:
    if np.isscalar(lengthscales):
        return (float(lengthscales),)
    return tuple(float(l) for l in lengthscales)


def _check_dims(spec: KernelSpec, dim: int) -> None:
    if spec.family in (SQUARED_EXPONENTIAL, MATERN):
        n_ls = len(spec.lengthscales)
        if n_ls not in (1, dim):
            raise ValueError(
                f"{n_ls} lengthscales incompatible with {dim}-dimensional inputs"
            )
    if spec.children is not None:
        for child in spec.children:
            _check_dims(child, dim)


def _scaled_sq_dists(X: np.ndarray, Z: np.ndarray, lengthscales) -> np.ndarray:
    ls = np.asarray(lengthscales, dtype=float)
    diffs = (X[:, None, :] - Z[None, :, :]) / ls
    return np.sum(diffs * diffs, axis=-1)


def _matern_profile(r: np.ndarray, nu: float) -> np.ndarray:
    # Closed forms for half-integer smoothness; r is the lengthscale-scaled
    # distance.  These match the Bessel-function definition to roundoff.
    if nu == 0.5:
        return np.exp(-r)
    if nu == 1.5:
        a = math.sqrt(3.0) * r
        return (1.0 + a) * np.exp(-a)
    if nu == 2.5:
        a = math.sqrt(5.0) * r
        return (1.0 + a + (5.0 / 3.0) * r * r) * np.exp(-a)
    raise ValueError(f"unsupported matern nu {nu}")


def cross(spec: KernelSpec, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(X[i], Z[j])`` for two point sets.

    ``X`` is ``(n, p)`` and ``Z`` is ``(m, p)``; returns ``(n, m)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    if X.shape[0] == 0 or Z.shape[0] == 0:
        return np.zeros((X.shape[0], Z.shape[0]))
    _check_dims(spec, X.shape[1])
    return _cross_checked(spec, X, Z)


def _cross_checked(spec: KernelSpec, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    if spec.family == SQUARED_EXPONENTIAL:
        sq = _scaled_sq_dists(X, Z, spec.lengthscales)
        return spec.signal_variance * np.exp(-0.5 * sq)
    if spec.family == MATERN:
        r = np.sqrt(_scaled_sq_dists(X, Z, spec.lengthscales))
        return spec.signal_variance * _matern_profile(r, spec.nu)
    if spec.family == LINEAR:
        return spec.signal_variance * (X @ Z.T)
    left = _cross_checked(spec.children[0], X, Z)
    right = _cross_checked(spec.children[1], X, Z)
    if spec.family == SUM_COMPOSITE:
        return spec.signal_variance * (left + right)
    return spec.signal_variance * (left * right)


def evaluate(spec: KernelSpec, x, z) -> float:
    """Evaluate ``k(x, z)`` for two input vectors of equal dimension."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if x.ndim != 1 or z.ndim != 1 or x.shape[0] != z.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    return float(cross(spec, x[None, :], z[None, :])[0, 0])


def gram(spec: KernelSpec, points) -> np.ndarray:
    """Symmetric kernel matrix over one point set.

    Symmetry is exact (not merely approximate): entries (i, j) and (j, i)
    are computed from squared coordinate differences summed in the same
    order, so they round identically.
    """
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return np.zeros((0, 0))
    points = np.atleast_2d(points)
    return cross(spec, points, points)


def prior_variances(spec: KernelSpec, points: np.ndarray) -> np.ndarray:
    """Diagonal ``k(x, x)`` for each point, without forming the full Gram."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        return np.zeros(0)
    _check_dims(spec, points.shape[1])
    return _prior_var_checked(spec, points)


def _prior_var_checked(spec: KernelSpec, points: np.ndarray) -> np.ndarray:
    if spec.family in (SQUARED_EXPONENTIAL, MATERN):
        return np.full(points.shape[0], spec.signal_variance)
    if spec.family == LINEAR:
        return spec.signal_variance * np.sum(points * points, axis=1)
    left = _prior_var_checked(spec.children[0], points)
    right = _prior_var_checked(spec.children[1], points)
    if spec.family == SUM_COMPOSITE:
        return spec.signal_variance * (left + right)
    return spec.signal_variance * (left * right)
