import numpy as np
import pytest

from hgp import (
    ConfigError,
    PartitionPlan,
    assign_random,
    assign_striped,
    build_kdtree_regions,
    validate_plan,
)


class TestKdRegions:
    def test_single_region_is_everything(self):
        X = np.arange(10.0)[:, None]
        regions = build_kdtree_regions(X, 1)
        assert len(regions) == 1
        np.testing.assert_array_equal(np.sort(regions[0].indices), np.arange(10))

    def test_median_split_1d(self):
        X = np.arange(1.0, 9.0)[:, None]  # values 1..8
        left, right = build_kdtree_regions(X, 2)
        np.testing.assert_array_equal(np.sort(left.indices), [0, 1, 2, 3])
        np.testing.assert_array_equal(np.sort(right.indices), [4, 5, 6, 7])
        dim, threshold = left.splits[0]
        assert dim == 0 and threshold == 4.0

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((37, 3))
        regions = build_kdtree_regions(X, 8)
        merged = np.concatenate([r.indices for r in regions])
        np.testing.assert_array_equal(np.sort(merged), np.arange(37))

    def test_balanced_sizes(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((100, 2))
        sizes = sorted(r.size for r in build_kdtree_regions(X, 4))
        assert sizes == [25, 25, 25, 25]

    def test_splits_on_widest_dimension(self):
        X = np.column_stack([np.linspace(0, 100, 16), np.linspace(0, 1, 16)])
        regions = build_kdtree_regions(X, 2)
        assert regions[0].splits[0][0] == 0

    def test_errors(self):
        X = np.zeros((5, 1))
        with pytest.raises(ConfigError, match="power of 2"):
            build_kdtree_regions(X, 3)
        with pytest.raises(ConfigError):
            build_kdtree_regions(X, 8)


class TestStriped:
    def test_two_regions_two_groups(self):
        X = np.arange(8.0)[:, None]
        regions = build_kdtree_regions(X, 2)
        plan = assign_striped(regions, 2, seed=0)
        assert plan.num_experts == 2
        assert plan.subset_sizes() == [4, 4]
        for subset in plan.subsets:
            for region in regions:
                assert len(np.intersect1d(subset, region.indices)) == 2

    def test_single_group_is_all_data(self):
        X = np.arange(6.0)[:, None]
        plan = assign_striped(build_kdtree_regions(X, 2), 1, seed=0)
        assert plan.num_experts == 1
        np.testing.assert_array_equal(np.sort(plan.subsets[0]), np.arange(6))

    def test_every_subset_touches_every_region(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((64, 2))
        regions = build_kdtree_regions(X, 4)
        plan = assign_striped(regions, 4, seed=5)
        for subset in plan.subsets:
            for region in regions:
                assert len(np.intersect1d(subset, region.indices)) > 0

    def test_sharing_balances_and_duplicates(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((48, 2))
        plan = assign_striped(build_kdtree_regions(X, 4), 4, seed=1, sharing_factor=2)
        assert validate_plan(plan, 48) is None
        assert plan.subset_sizes() == [24, 24, 24, 24]

    def test_group_count_errors(self):
        X = np.arange(8.0)[:, None]
        regions = build_kdtree_regions(X, 4)  # regions of size 2
        with pytest.raises(ConfigError, match="smallest region"):
            assign_striped(regions, 3, seed=0)


class TestRandom:
    def test_disjoint_partition(self):
        plan = assign_random(8, 4, 1, seed=0)
        assert plan.subset_sizes() == [2, 2, 2, 2]
        assert validate_plan(plan, 8) is None

    def test_sharing_two(self):
        plan = assign_random(8, 4, 2, seed=0)
        assert plan.subset_sizes() == [4, 4, 4, 4]  # 2N/c each
        counts = np.zeros(8, dtype=int)
        for subset in plan.subsets:
            counts[subset] += 1
        np.testing.assert_array_equal(counts, np.full(8, 2))

    def test_determinism_and_seed_sensitivity(self):
        a = assign_random(40, 5, 2, seed=7)
        b = assign_random(40, 5, 2, seed=7)
        for s1, s2 in zip(a.subsets, b.subsets):
            np.testing.assert_array_equal(s1, s2)
        distinct = sum(
            not all(
                np.array_equal(s1, s2)
                for s1, s2 in zip(a.subsets, assign_random(40, 5, 2, seed=seed).subsets)
            )
            for seed in range(10, 20)
        )
        assert distinct >= 9

    def test_coverage_sums(self):
        for s in (1, 2, 3):
            plan = assign_random(101, 7, s, seed=1)
            assert sum(plan.subset_sizes()) == s * 101
            assert validate_plan(plan, 101) is None
            assert max(plan.subset_sizes()) - min(plan.subset_sizes()) <= s

    def test_errors(self):
        with pytest.raises(ConfigError):
            assign_random(10, 4, 5, seed=0)  # sharing > c
        with pytest.raises(ConfigError):
            assign_random(3, 4, 1, seed=0)  # N < c


class TestValidatePlan:
    def test_valid(self):
        plan = assign_random(12, 3, 1, seed=0)
        assert validate_plan(plan, 12) is None

    def test_missing_index(self):
        plan = PartitionPlan(
            subsets=(np.array([0, 1]), np.array([2, 3])),
            sharing_factor=1,
            method="random",
            seed=0,
        )
        message = validate_plan(plan, 6)
        assert message == "index 4 covered 0 times, expected 1"

    def test_duplicate_inside_subset(self):
        plan = PartitionPlan(
            subsets=(np.array([0, 0]), np.array([1, 2])),
            sharing_factor=1,
            method="random",
            seed=0,
        )
        assert "more than once" in validate_plan(plan, 3)

    def test_out_of_range(self):
        plan = PartitionPlan(
            subsets=(np.array([0, 9]),), sharing_factor=1, method="random", seed=0
        )
        assert "out-of-range" in validate_plan(plan, 3)

    def test_empty_subset(self):
        plan = PartitionPlan(
            subsets=(np.array([0, 1, 2]), np.array([], dtype=np.int64)),
            sharing_factor=1,
            method="random",
            seed=0,
        )
        assert "empty" in validate_plan(plan, 3)
