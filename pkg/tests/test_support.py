"""Combination enumeration, atlas construction, counting, hybrid split."""

import itertools

import pytest

from barylp import generators
from barylp.measures import GridSpec, InvariantError
from barylp.support import (
    CombinationBlowupError,
    GridRegimeError,
    atlas_from_json,
    atlas_to_json,
    build_atlas_exact,
    build_atlas_grid,
    combination_count,
    count_dice,
    enumerate_combinations,
    hybrid_split,
    problem_digest,
    weighted_mean,
)

from conftest import measure, problem


class TestEnumeration:
    def test_two_by_two_lexicographic(self):
        p = problem([measure([[0.0], [1.0]]), measure([[2.0], [3.0]])])
        combos = list(enumerate_combinations(p))
        assert [c.indices for c in combos] == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert [c.ordinal for c in combos] == [0, 1, 2, 3]

    def test_single_point_measures(self):
        p = problem([measure([[0.0]], [1.0])] * 3)
        combos = list(enumerate_combinations(p))
        assert len(combos) == 1
        assert combos[0].indices == (0, 0, 0)

    def test_three_measures_of_four_points(self):
        # oracle: count the full product directly
        pts = [[float(v)] for v in range(4)]
        p = problem([measure(pts)] * 3)
        direct = sum(1 for _ in itertools.product(range(4), repeat=3))
        assert direct == 64
        assert sum(1 for _ in enumerate_combinations(p)) == direct

    def test_blowup_guard_fires_before_iteration(self):
        pts = [[float(v)] for v in range(10)]
        p = problem([measure(pts)] * 3)
        with pytest.raises(CombinationBlowupError, match="combination blowup"):
            enumerate_combinations(p, cap=999)


class TestWeightedMean:
    def test_midpoint(self):
        p = problem([measure([[0.0]], [1.0]), measure([[1.0]], [1.0])])
        combo = next(enumerate_combinations(p))
        assert weighted_mean(combo, p) == (0.5,)

    def test_idempotent_on_shared_point(self):
        q = [0.75, -2.0]
        p = problem([measure([q], [1.0])] * 4)
        combo = next(enumerate_combinations(p))
        assert weighted_mean(combo, p) == pytest.approx(tuple(q))

    def test_hand_arithmetic(self):
        p = problem(
            [measure([[0.0, 0.0]], [1.0]), measure([[4.0, 8.0]], [1.0])],
            weights=[0.25, 0.75],
        )
        combo = next(enumerate_combinations(p))
        assert weighted_mean(combo, p) == (3.0, 6.0)

    def test_affine_scaling(self):
        base = generators.general_position(3, 3, 2, seed=5)
        scaled = problem(
            [
                measure([[4.0 * c for c in pt] for pt in m.points], m.masses)
                for m in base.measures
            ],
            weights=base.weights,
        )
        for c_base, c_scaled in zip(
            enumerate_combinations(base), enumerate_combinations(scaled)
        ):
            mb = weighted_mean(c_base, base)
            ms = weighted_mean(c_scaled, scaled)
            assert ms == pytest.approx(tuple(4.0 * v for v in mb), abs=1e-12)


class TestExactAtlas:
    def test_canonical_collapse(self, twin_grid_problem):
        atlas = build_atlas_exact(twin_grid_problem)
        assert atlas.support_points == ((0.0,), (1.0,), (2.0,))
        assert atlas.multiplicity == (1, 2, 1)
        assert atlas.combination_total == 4

    def test_general_position_random(self):
        p = generators.general_position(3, 3, 2, seed=11)
        atlas = build_atlas_exact(p)
        assert atlas.point_count == atlas.combination_total == 27
        assert all(v == 1 for v in atlas.multiplicity)

    def test_full_grids_collapse_to_refined_grid(self):
        p = generators.grid(4, 4, 2, seed=3)
        atlas = build_atlas_exact(p)
        assert atlas.point_count == 169  # (4*4 - 4 + 1) ** 2

    def test_multiplicity_conserves_combinations(self):
        for seed in range(4):
            p = generators.grid(3, 2, 2, seed=seed)
            atlas = build_atlas_exact(p)
            assert sum(atlas.multiplicity) == atlas.combination_total

    def test_duality_exhaustive(self):
        cases = [
            build_atlas_exact(generators.general_position(3, 3, 2, seed=1)),
            build_atlas_exact(generators.grid(3, 3, 1, seed=2)),
            build_atlas_exact(generators.grid(2, 3, 2, seed=4)),
            build_atlas_exact(generators.grid(3, 3, 2, seed=6)),   # |S*| = 729
            build_atlas_exact(generators.mixed(3, 3, 1, seed=8)),  # |S*| = 1000
            build_atlas_grid(generators.grid(3, 3, 2, seed=6)),
            build_atlas_grid(generators.grid(2, 4, 2, density=0.5, seed=9)),
        ]
        for atlas in cases:
            for i, size in enumerate(atlas.sizes):
                for k in range(size):
                    for j in atlas.reachable(i, k):
                        assert (i, k) in atlas.sources(j)
            for j in range(atlas.point_count):
                for i, k in atlas.sources(j):
                    assert j in atlas.reachable(i, k)

    def test_points_sorted_lexicographically(self):
        p = generators.general_position(2, 4, 2, seed=9)
        atlas = build_atlas_exact(p)
        assert list(atlas.support_points) == sorted(atlas.support_points)

    def test_cap_guard(self):
        pts = [[float(v)] for v in range(10)]
        p = problem([measure(pts)] * 3)
        with pytest.raises(CombinationBlowupError):
            build_atlas_exact(p, cap=10)

    def test_candidate_index_lookup(self, twin_grid_problem):
        atlas = build_atlas_exact(twin_grid_problem)
        for j, pt in enumerate(atlas.support_points):
            assert atlas.candidate_index(pt) == j

    def test_combo_candidate_matches_mean(self):
        p = generators.grid(3, 2, 1, seed=8)
        atlas = build_atlas_exact(p)
        for combo in enumerate_combinations(p):
            j = atlas.combo_candidate(combo, p)
            mean = weighted_mean(combo, p)
            assert atlas.support_points[j] == pytest.approx(mean, abs=1e-9)


class TestGridAtlas:
    def test_refined_grid_size(self):
        p = generators.grid(4, 4, 2, seed=0)
        atlas = build_atlas_grid(p)
        assert atlas.point_count == 169
        assert atlas.regime == "grid"
        assert atlas.fine_grid.side == 13
        assert atlas.fine_grid.step == 0.25

    def test_corner_sources_one_per_measure(self):
        p = generators.grid(4, 4, 2, seed=0)
        atlas = build_atlas_grid(p)
        corner = atlas.candidate_index((0.0, 0.0))
        srcs = atlas.sources(corner)
        assert len(srcs) == 4
        assert sorted(i for i, _ in srcs) == [0, 1, 2, 3]
        for i, k in srcs:
            assert p.measures[i].points[k] == (0.0, 0.0)

    def test_center_keeps_every_pair(self):
        # per-axis sum 10 admits every lattice value on every axis
        p = generators.grid(4, 4, 2, seed=0)
        atlas = build_atlas_grid(p)
        center = atlas.candidate_index((10.0 / 4.0 - 1.0, 10.0 / 4.0 - 1.0))
        assert len(atlas.sources(center)) == 4 * 16

    def test_budget_rule_matches_brute_force(self):
        # reachability oracle: enumerate all combinations of the full grid
        p = generators.grid(3, 3, 1, seed=1)
        exact = build_atlas_exact(p)
        fast = build_atlas_grid(p)
        assert exact.support_points == fast.support_points
        for i, size in enumerate(fast.sizes):
            for k in range(size):
                assert fast.reachable(i, k) == exact.reachable(i, k)

    def test_agrees_with_exact_on_full_grids(self):
        for n, K, d in [(2, 2, 1), (2, 4, 1), (3, 3, 1), (2, 3, 2), (3, 2, 2), (4, 2, 2), (3, 3, 2)]:
            p = generators.grid(n, K, d, seed=n + K + d)
            exact = build_atlas_exact(p)
            fast = build_atlas_grid(p)
            assert fast.support_points == exact.support_points, (n, K, d)
            assert fast.multiplicity == exact.multiplicity, (n, K, d)
            for i in range(n):
                for k in range(len(p.measures[i])):
                    assert fast.reachable(i, k) == exact.reachable(i, k), (n, K, d)

    def test_rejects_nonuniform_weights(self):
        p = generators.grid(2, 2, 1, seed=0)
        skewed = problem(p.measures, weights=[0.3, 0.7], grid=p.grid)
        with pytest.raises(GridRegimeError, match="uniform"):
            build_atlas_grid(skewed)

    def test_nearly_uniform_weights_stay_consistent(self):
        # weights a hair off 1/n either rationalize back to exactly 1/n
        # (atlas keys stay consistent) or are refused outright; they must
        # never silently mis-key the lattice
        from barylp.support import _Quantizer

        p = generators.grid(3, 2, 1, seed=0)
        w = 1.0 / 3.0
        perturbed = problem(
            p.measures, weights=[w + 9e-13, w, w - 9e-13], grid=p.grid
        )
        quant = _Quantizer(perturbed)
        if quant.scale == 3.0 and set(quant.scaled_weights) == {1.0}:
            atlas = build_atlas_grid(perturbed)
            for j, pt in enumerate(atlas.support_points):
                assert atlas.candidate_index(pt) == j
        else:
            with pytest.raises(GridRegimeError, match="uniform"):
                build_atlas_grid(perturbed)

    def test_rejects_off_lattice_points(self):
        g = GridSpec(dim=1, side=2, origin=(0.0,), step=1.0)
        p = problem([measure([[0.0], [0.5]]), measure([[1.0]], [1.0])], grid=g)
        with pytest.raises(InvariantError):
            build_atlas_grid(p)

    def test_sparse_supports_keep_all_candidates(self):
        p = generators.grid(2, 3, 1, density=0.5, seed=12)
        atlas = build_atlas_grid(p)
        assert atlas.point_count == 2 * 3 - 2 + 1  # all refined cells stay


def brute_force_dice(total, sides, dice):
    return sum(
        1
        for tup in itertools.product(range(1, sides + 1), repeat=dice)
        if sum(tup) == total
    )


class TestCountDice:
    def test_two_dice_minimum(self):
        assert count_dice(2, 6, 2) == 1

    def test_two_dice_seven(self):
        assert brute_force_dice(7, 6, 2) == 6
        assert count_dice(7, 6, 2) == 6

    def test_four_tetrahedral_dice(self):
        assert brute_force_dice(10, 4, 4) == 44
        assert count_dice(10, 4, 4) == 44

    def test_all_dice_maximal(self):
        for sides, dice in [(6, 2), (4, 4), (3, 5)]:
            assert count_dice(sides * dice, sides, dice) == 1

    def test_out_of_range_is_zero(self):
        assert count_dice(1, 6, 2) == 0
        assert count_dice(13, 6, 2) == 0
        assert count_dice(-3, 6, 2) == 0

    def test_matches_enumeration_everywhere(self):
        for sides in range(1, 7):
            for dice in range(1, 5):
                for total in range(0, sides * dice + 2):
                    assert count_dice(total, sides, dice) == brute_force_dice(
                        total, sides, dice
                    ), (total, sides, dice)

    def test_symmetry(self):
        # includes out-of-range sums, which mirror onto out-of-range sums
        for sides in range(1, 7):
            for dice in range(1, 5):
                for total in range(dice - 3, sides * dice + 4):
                    mirrored = dice * (sides + 1) - total
                    assert count_dice(total, sides, dice) == count_dice(
                        mirrored, sides, dice
                    )

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            count_dice(1, 0, 2)


class TestCombinationCount:
    def test_corner(self):
        assert combination_count((4, 4), 4, 4) == 1

    def test_center_square(self):
        assert combination_count((10, 10), 4, 4) == 44 * 44 == 1936

    def test_one_dimension_reduces_to_dice(self):
        for s in range(3, 13):
            assert combination_count((s,), 4, 3) == count_dice(s, 4, 3)

    def test_grid_atlas_multiplicities_match_exact(self):
        p = generators.grid(4, 4, 1, seed=2)
        exact = build_atlas_exact(p)
        fast = build_atlas_grid(p)
        assert exact.multiplicity == fast.multiplicity


class TestHybridSplit:
    def test_general_position_all_fixed(self):
        p = generators.general_position(3, 3, 2, seed=21)
        atlas = build_atlas_exact(p)
        split = hybrid_split(atlas)
        assert split.y_points == frozenset()
        assert split.w_combos is not None
        assert len(split.w_combos) == atlas.combination_total

    def test_grid_center_prefers_mass_variables(self):
        p = generators.grid(4, 4, 2, seed=0)
        atlas = build_atlas_grid(p)
        split = hybrid_split(atlas)
        center = atlas.candidate_index((1.5, 1.5))
        assert atlas.multiplicity[center] == 1936
        assert split.budgets[center] == 4 * 16 + 1
        assert split.uses_y(center)

    def test_grid_corner_prefers_fixed(self):
        p = generators.grid(4, 4, 2, seed=0)
        atlas = build_atlas_grid(p)
        split = hybrid_split(atlas)
        corner = atlas.candidate_index((0.0, 0.0))
        assert not split.uses_y(corner)

    def test_partition_covers_each_combination_once(self):
        p = generators.grid(3, 3, 1, seed=7)
        atlas = build_atlas_exact(p)
        split = hybrid_split(atlas)
        w_set = set(int(h) for h in split.w_combos)
        for combo in enumerate_combinations(p):
            j = atlas.combo_candidate(combo, p)
            on_w = combo.ordinal in w_set
            assert on_w != split.uses_y(j) or not split.uses_y(j) and on_w
            assert on_w == (not split.uses_y(j))


class TestSerialization:
    def test_round_trip(self):
        p = generators.grid(3, 2, 2, seed=5)
        atlas = build_atlas_exact(p)
        restored = atlas_from_json(atlas_to_json(atlas, p), p)
        assert restored.support_points == atlas.support_points
        assert restored.multiplicity == atlas.multiplicity
        assert restored.regime == atlas.regime
        for i, size in enumerate(atlas.sizes):
            for k in range(size):
                assert restored.reachable(i, k) == atlas.reachable(i, k)
        for j in range(atlas.point_count):
            assert restored.sources(j) == atlas.sources(j)

    def test_digest_guards_mismatched_problem(self):
        p = generators.grid(3, 2, 2, seed=5)
        other = generators.grid(3, 2, 2, seed=6)
        dump = atlas_to_json(build_atlas_exact(p), p)
        with pytest.raises(InvariantError, match="cache"):
            atlas_from_json(dump, other)

    def test_digest_deterministic_and_sensitive(self):
        p = generators.grid(3, 2, 2, seed=5)
        q = generators.grid(3, 2, 2, seed=6)
        assert problem_digest(p) == problem_digest(p)
        assert problem_digest(p) != problem_digest(q)
