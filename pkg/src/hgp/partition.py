"""Assignment of training points to experts.

Two constructions are provided.  The KD-tree striped method first divides
the input space into balanced axis-aligned regions (median split on the
widest-spread dimension), splits every region into ``p_groups`` random
groups, and gives subset k one group from each region, so every subset
spans the whole input space.  The random method deals a seeded shuffle of
the indices round-robin into the subsets.

Both support a sharing factor s >= 1: every training point is a member of
exactly s distinct subsets, which softens the block-diagonal covariance
approximation made by a committee of independent experts.  Sizes stay
balanced (they differ by at most s across subsets).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "KdRegion",
    "PartitionPlan",
    "METHOD_KDTREE_STRIPED",
    "METHOD_RANDOM",
    "build_kdtree_regions",
    "assign_striped",
    "assign_random",
    "validate_plan",
]

METHOD_KDTREE_STRIPED = "kdtree_striped"
METHOD_RANDOM = "random"


@dataclass(frozen=True)
class KdRegion:
    """One leaf cell of the KD division.

    ``splits`` records the (dimension, threshold) decisions from the root
    to this cell; points with coordinate <= threshold went left.
    """

    indices: np.ndarray
    splits: tuple = ()

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "splits", tuple(self.splits))

    @property
    def size(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class PartitionPlan:
    """The subsets D^(1)..D^(c) assigned to the leaf experts."""

    subsets: tuple
    sharing_factor: int
    method: str
    seed: int
    num_regions: int = 1

    def __post_init__(self):
        subsets = tuple(np.array(s, dtype=np.int64, copy=True) for s in self.subsets)
        for s in subsets:
            s.setflags(write=False)
        object.__setattr__(self, "subsets", subsets)
        if len(subsets) < 1:
            raise ConfigError("a partition plan needs at least one subset")
        if self.sharing_factor < 1:
            raise ConfigError(f"sharing factor must be >= 1, got {self.sharing_factor}")

    @property
    def num_experts(self) -> int:
        return len(self.subsets)

    def subset_sizes(self) -> list:
        return [int(s.shape[0]) for s in self.subsets]


def _split_region(X: np.ndarray, indices: np.ndarray):
    """Median split on the widest-spread dimension; ties go left."""
    values = X[indices]
    spread = values.max(axis=0) - values.min(axis=0)
    dim = int(np.argmax(spread))
    order = np.argsort(values[:, dim], kind="stable")
    mid = (order.shape[0] + 1) // 2
    left = indices[order[:mid]]
    right = indices[order[mid:]]
    threshold = float(values[order[mid - 1], dim])
    return dim, threshold, left, right


def build_kdtree_regions(X: np.ndarray, num_regions: int) -> list:
    """Divide all N row indices into ``num_regions`` balanced KD cells.

    ``num_regions`` must be a power of two and at most N.  Each split
    halves a cell at the median of its widest-spread dimension, so sizes
    differ by at most one per split level.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if num_regions < 1 or (num_regions & (num_regions - 1)) != 0:
        raise ConfigError(f"num_regions must be a power of 2, got {num_regions}")
    if num_regions > n:
        raise ConfigError(f"cannot build {num_regions} regions from {n} points")
    regions = [KdRegion(np.arange(n, dtype=np.int64))]
    while len(regions) < num_regions:
        next_level = []
        for region in regions:
            dim, threshold, left, right = _split_region(X, region.indices)
            split = region.splits + ((dim, threshold),)
            next_level.append(KdRegion(left, split))
            next_level.append(KdRegion(right, split))
        regions = next_level
    return regions


def _region_groups(size: int, p_groups: int, rng: np.random.Generator) -> list:
    """Shuffle 0..size-1 and chunk into p_groups nearly equal groups.

    Leftover points when sizes do not divide evenly go one per group in
    group order.
    """
    perm = rng.permutation(size)
    base, extra = divmod(size, p_groups)
    groups = []
    start = 0
    for g in range(p_groups):
        stop = start + base + (1 if g < extra else 0)
        groups.append(perm[start:stop])
        start = stop
    return groups


def assign_striped(
    regions: list, p_groups: int, seed: int, sharing_factor: int = 1
) -> PartitionPlan:
    """Stripe KD regions across ``p_groups`` subsets.

    Each region is split into ``p_groups`` disjoint random groups; subset k
    collects group k from every region, so every subset touches every
    region.  With sharing s > 1 a point in group g additionally joins the
    next s-1 groups cyclically, keeping the sizes balanced.
    """
    min_size = min(r.size for r in regions)
    if p_groups < 1:
        raise ConfigError(f"p_groups must be >= 1, got {p_groups}")
    if p_groups > min_size:
        raise ConfigError(
            f"p_groups={p_groups} exceeds the smallest region size {min_size}"
        )
    if not 1 <= sharing_factor <= p_groups:
        raise ConfigError(
            f"sharing factor must be in [1, {p_groups}], got {sharing_factor}"
        )
    rng = np.random.default_rng(seed)
    members = [[] for _ in range(p_groups)]
    for region in regions:
        groups = _region_groups(region.size, p_groups, rng)
        for g, local in enumerate(groups):
            points = region.indices[local]
            for shift in range(sharing_factor):
                members[(g + shift) % p_groups].append(points)
    subsets = [np.concatenate(m) for m in members]
    return PartitionPlan(
        subsets=tuple(subsets),
        sharing_factor=sharing_factor,
        method=METHOD_KDTREE_STRIPED,
        seed=seed,
        num_regions=len(regions),
    )


def assign_random(N: int, c: int, sharing_factor: int, seed: int) -> PartitionPlan:
    """Deal a seeded shuffle round-robin into c subsets, s times over.

    Copy t of the shuffled sequence is dealt with its round-robin slot
    rotated by t, so each point lands in exactly ``sharing_factor``
    distinct subsets and sizes differ by at most ``sharing_factor``.
    """
    if c < 1:
        raise ConfigError(f"number of subsets must be >= 1, got {c}")
    if not 1 <= sharing_factor <= c:
        raise ConfigError(
            f"sharing factor must be in [1, {c}], got {sharing_factor}"
        )
    if N < c:
        raise ConfigError(f"cannot fill {c} subsets from {N} points")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(N)
    members = [[] for _ in range(c)]
    for shift in range(sharing_factor):
        for pos, point in enumerate(perm):
            members[(pos + shift) % c].append(point)
    subsets = [np.asarray(m, dtype=np.int64) for m in members]
    return PartitionPlan(
        subsets=tuple(subsets),
        sharing_factor=sharing_factor,
        method=METHOD_RANDOM,
        seed=seed,
    )


def validate_plan(plan: PartitionPlan, N: int):
    """Check exact s-coverage; returns None if valid, else the first violation."""
    counts = np.zeros(N, dtype=np.int64)
    for k, subset in enumerate(plan.subsets):
        if subset.shape[0] == 0:
            return f"subset {k} is empty"
        if subset.min() < 0 or subset.max() >= N:
            bad = subset[(subset < 0) | (subset >= N)][0]
            return f"subset {k} contains out-of-range index {bad} (N={N})"
        if np.unique(subset).shape[0] != subset.shape[0]:
            values, reps = np.unique(subset, return_counts=True)
            dup = values[reps > 1][0]
            return f"subset {k} contains index {dup} more than once"
        counts[subset] += 1
    off = np.nonzero(counts != plan.sharing_factor)[0]
    if off.shape[0] > 0:
        i = int(off[0])
        return (
            f"index {i} covered {counts[i]} times, expected {plan.sharing_factor}"
        )
    return None
