"""Finite decision domains, distance functions, and perturbation neighborhoods.

A :class:`PerturbationSet` precomputes, for every domain point, the index set
of points reachable by an adversarial perturbation of magnitude at most
``epsilon`` under a chosen distance function.  The max-min reductions at the
bottom of the module recast group selection, unknown-parameter robustness,
and robust estimation as plain perturbation sets, so a single optimizer
implementation covers all of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

L2 = "l2-norm"
L1 = "l1-norm"
LINF = "linf-norm"
WEIGHTED_LINF = "weighted-linf-box"
GROUP_INDICATOR = "group-indicator"
PRODUCT_COMPOSITE = "product-composite"

NORM_KINDS = (L2, L1, LINF, WEIGHTED_LINF)
DISTANCE_KINDS = NORM_KINDS + (GROUP_INDICATOR, PRODUCT_COMPOSITE)

_ROW_CHUNK = 256  # pairwise-distance rows processed per block


@dataclass(frozen=True)
class FiniteDomain:
    """Finite set of candidate inputs with stable integer identifiers.

    ``group_labels``, when present, partitions the points: exactly one
    label per point.
    """

    points: np.ndarray  # (n, p)
    group_labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError("domain needs a non-empty (n, p) point array")
        object.__setattr__(self, "points", points)
        if self.group_labels is not None:
            labels = np.asarray(self.group_labels)
            if labels.shape != (points.shape[0],):
                raise ValueError("need exactly one group label per point")
            object.__setattr__(self, "group_labels", labels)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @classmethod
    def grid(cls, bounds: Sequence[tuple[float, float]], shape: Sequence[int]) -> "FiniteDomain":
        """Uniformly spaced grid over a box, raveled in row-major order."""
        if len(bounds) != len(shape):
            raise ValueError("bounds and shape must have equal length")
        axes = [
            np.linspace(lo, hi, int(n)) for (lo, hi), n in zip(bounds, shape)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))


@dataclass(frozen=True)
class DistanceSpec:
    """Distance function used to define perturbation neighborhoods.

    ``weights`` (weighted-linf-box) are per-dimension half-widths: the
    distance is ``max_d |x_d - z_d| / weights[d]``, so a box constraint
    ``|x_d - z_d| <= eps * weights[d]`` corresponds to distance <= eps.

    ``blocks`` (product-composite) split the coordinates into disjoint
    groups, each with its own optional DistanceSpec; the combined distance
    is the maximum over blocks that carry a spec, and blocks without one
    are free (perturbed arbitrarily).
    """

    kind: str
    weights: tuple[float, ...] | None = None
    blocks: tuple[tuple[tuple[int, ...], "DistanceSpec | None"], ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if self.kind == WEIGHTED_LINF:
            if not self.weights:
                raise ValueError("weighted-linf-box requires weights")
            weights = tuple(float(w) for w in self.weights)
            if any(not (w > 0.0) for w in weights):
                raise ValueError("weighted-linf weights must be strictly positive")
            object.__setattr__(self, "weights", weights)
        if self.kind == PRODUCT_COMPOSITE:
            if not self.blocks:
                raise ValueError("product-composite requires blocks")
            blocks = tuple(
                (tuple(int(d) for d in dims), spec) for dims, spec in self.blocks
            )
            seen: set[int] = set()
            for dims, _ in blocks:
                if seen.intersection(dims):
                    raise ValueError("product-composite blocks must be disjoint")
                seen.update(dims)
            object.__setattr__(self, "blocks", blocks)
            object.__setattr__(self, "_covered", frozenset(seen))

    def to_config(self, prefix: str = "distance") -> dict[str, str]:
        if self.kind == PRODUCT_COMPOSITE:
            raise ValueError("product-composite distances are built by reductions, "
                             "not written in flat configs")
        out = {f"{prefix}.kind": self.kind}
        if self.weights is not None:
            out[f"{prefix}.weights"] = ",".join(repr(w) for w in self.weights)
        return out

    @classmethod
    def from_config(cls, mapping: Mapping[str, str], prefix: str = "distance") -> "DistanceSpec":
        kind = mapping[f"{prefix}.kind"].strip()
        weights = None
        if f"{prefix}.weights" in mapping:
            weights = tuple(
                float(tok) for tok in mapping[f"{prefix}.weights"].split(",")
            )
        return cls(kind, weights)


def _norm_rows(diffs: np.ndarray, spec: DistanceSpec) -> np.ndarray:
    if spec.kind == L2:
        return np.sqrt(np.sum(diffs * diffs, axis=-1))
    if spec.kind == L1:
        return np.sum(np.abs(diffs), axis=-1)
    if spec.kind == LINF:
        return np.max(np.abs(diffs), axis=-1)
    if spec.kind == WEIGHTED_LINF:
        w = np.asarray(spec.weights, dtype=float)
        if diffs.shape[-1] != w.shape[0]:
            raise ValueError(
                f"{w.shape[0]} weights incompatible with "
                f"{diffs.shape[-1]}-dimensional inputs"
            )
        return np.max(np.abs(diffs) / w, axis=-1)
    raise ValueError(f"not a norm kind: {spec.kind}")


def distance_rows(
    spec: DistanceSpec, domain: FiniteDomain, row_indices: np.ndarray
) -> np.ndarray:
    """Distances from each point in ``row_indices`` to every domain point."""
    pts = domain.points
    if spec.kind in NORM_KINDS:
        diffs = pts[row_indices][:, None, :] - pts[None, :, :]
        return _norm_rows(diffs, spec)
    if spec.kind == GROUP_INDICATOR:
        if domain.group_labels is None:
            raise ValueError("group-indicator distance requires group labels")
        labels = domain.group_labels
        return (labels[row_indices][:, None] != labels[None, :]).astype(float)
    # product-composite: max over constrained blocks, zero if none constrained
    if spec._covered != frozenset(range(domain.dimension)):  # type: ignore[attr-defined]
        raise ValueError("product-composite blocks must cover all coordinates")
    out = np.zeros((len(row_indices), len(domain)))
    for dims, block_spec in spec.blocks:
        if block_spec is None:
            continue
        sub = FiniteDomain(pts[:, list(dims)], domain.group_labels)
        np.maximum(out, distance_rows(block_spec, sub, row_indices), out=out)
    return out


@dataclass(frozen=True)
class PerturbationSet:
    """Per-point perturbation neighborhoods, stored in flat CSR layout.

    ``flat[offsets[i]:offsets[i+1]]`` lists, in ascending order, the indices
    of the points within distance ``epsilon`` of point ``i``.  Every
    neighborhood contains its own point for all supplied distance kinds.
    """

    domain: FiniteDomain
    distance: DistanceSpec
    epsilon: float
    flat: np.ndarray  # concatenated neighbor indices
    offsets: np.ndarray  # (n + 1,)

    def __post_init__(self) -> None:
        if len(self.offsets) != len(self.domain) + 1:
            raise ValueError("offsets must have one entry per point plus one")
        if np.any(np.diff(self.offsets) < 1):
            raise ValueError("every neighborhood must be non-empty")

    def neighborhood(self, i: int) -> np.ndarray:
        return self.flat[self.offsets[i] : self.offsets[i + 1]]

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def worst_case(self, values: np.ndarray) -> np.ndarray:
        """Min of ``values`` over each point's neighborhood, vectorized."""
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.domain),):
            raise ValueError("values must cover the domain, one per point")
        return np.minimum.reduceat(values[self.flat], self.offsets[:-1])


def build_neighborhoods(
    domain: FiniteDomain, distance: DistanceSpec, epsilon: float
) -> PerturbationSet:
    """Precompute ``{j : d(points[i], points[j]) <= epsilon}`` for every i.

    Ties at exactly ``d == epsilon`` are included.  Rows are processed in
    chunks to bound memory on large grids; the result is deterministic.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be non-negative")
    n = len(domain)
    rows: list[np.ndarray] = []
    for start in range(0, n, _ROW_CHUNK):
        idx = np.arange(start, min(start + _ROW_CHUNK, n))
        dist = distance_rows(distance, domain, idx)
        within_r, within_c = np.nonzero(dist <= epsilon)
        counts = np.bincount(within_r, minlength=len(idx))
        splits = np.cumsum(counts)[:-1]
        rows.extend(np.split(within_c, splits))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum([len(r) for r in rows], out=offsets[1:])
    flat = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    return PerturbationSet(domain, distance, float(epsilon), flat.astype(np.int64), offsets)


def group_reduction(domain: FiniteDomain) -> PerturbationSet:
    """Perturbation set whose neighborhoods are the domain's group cells.

    Any max-min algorithm run over the result optimizes the worst-case
    value within a group, and reporting a point is equivalent to reporting
    its group.
    """
    if domain.group_labels is None:
        raise ValueError("group reduction requires group labels on the domain")
    return build_neighborhoods(domain, DistanceSpec(GROUP_INDICATOR), 0.0)


def product_domain(domain_x: FiniteDomain, domain_theta: FiniteDomain) -> FiniteDomain:
    """All (x, theta) pairs, x-major: index = i_x * len(theta) + i_theta."""
    nx, nt = len(domain_x), len(domain_theta)
    x_rep = np.repeat(domain_x.points, nt, axis=0)
    t_tile = np.tile(domain_theta.points, (nx, 1))
    return FiniteDomain(np.hstack([x_rep, t_tile]))


def _x_block_distance(dim_x: int, dim_theta: int) -> DistanceSpec:
    blocks = (
        (tuple(range(dim_x)), DistanceSpec(L2)),
        (tuple(range(dim_x, dim_x + dim_theta)), None),
    )
    return DistanceSpec(PRODUCT_COMPOSITE, blocks=blocks)


def parameter_reduction(
    domain_x: FiniteDomain, domain_theta: FiniteDomain
) -> PerturbationSet:
    """Robustness to an uncontrolled parameter as a perturbation set.

    The domain is the (x, theta) product; the distance only sees the x
    block, so with epsilon 0 the neighborhood of (x, theta) is {x} x Theta
    and the max-min over the set is max over x of min over theta.
    """
    if len(domain_x) == 0 or len(domain_theta) == 0:
        raise ValueError("both domains must be non-empty")
    product = product_domain(domain_x, domain_theta)
    distance = _x_block_distance(domain_x.dimension, domain_theta.dimension)
    return build_neighborhoods(product, distance, 0.0)


def estimation_reduction(
    domain_x: FiniteDomain,
    domain_theta: FiniteDomain,
    theta_hat: int,
    distance_theta: DistanceSpec,
    epsilon: float,
) -> PerturbationSet:
    """Robustness to uncertainty in an estimated parameter.

    The parameter grid is restricted to the epsilon-ball around the
    estimate ``theta_hat`` under ``distance_theta``; within the product
    domain each neighborhood holds x fixed and ranges theta over that
    ball.  With epsilon 0 the ball degenerates to the estimate itself.
    """
    if not 0 <= theta_hat < len(domain_theta):
        raise ValueError(f"theta_hat {theta_hat} outside parameter domain")
    if epsilon < 0.0:
        raise ValueError("epsilon must be non-negative")
    row = distance_rows(distance_theta, domain_theta, np.asarray([theta_hat]))[0]
    ball = np.nonzero(row <= epsilon)[0]
    restricted = FiniteDomain(domain_theta.points[ball])
    return parameter_reduction(domain_x, restricted)
