"""Candidate-support construction for barycenter LPs.

Every barycenter is supported on weighted means of one support point per
measure.  This module enumerates those combinations, deduplicates their
means into a candidate point set with full incidence structure (the
"atlas"), counts how many combinations collapse onto each candidate, and
splits candidates between fixed-transport and mass/transport variable
representations for the hybrid model.

Two construction regimes exist: ``exact`` walks every combination and
deduplicates (smallest possible models, exponential effort), ``grid``
generates the refined lattice that contains all means of lattice-supported
measures with uniform weights (polynomial effort, possibly unreachable
candidates).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .measures import GridSpec, InvariantError, Problem

DEFAULT_COMBINATION_CAP = 10**8
DEFAULT_DEDUP_TOL = 1e-9

_RATIONALIZE_DENOM_CAP = 10**6


class CombinationBlowupError(RuntimeError):
    """Raised when the combination count exceeds the configured cap."""


class GridRegimeError(InvariantError):
    """Grid-regime preconditions violated (off-lattice point or weights)."""


class Combination(NamedTuple):
    """One support point chosen per measure, identified by its ordinal in
    the lexicographic enumeration."""

    indices: tuple[int, ...]
    ordinal: int


def enumerate_combinations(
    problem: Problem, cap: int = DEFAULT_COMBINATION_CAP
) -> Iterator[Combination]:
    """Yield all combinations in lexicographic index order.

    Refuses up front when the total count exceeds ``cap``.
    """
    total = problem.combination_total()
    if total > cap:
        raise CombinationBlowupError(
            f"combination blowup: {total} combinations exceed cap {cap}"
        )

    def generate():
        for h, idx in enumerate(
            itertools.product(*(range(s) for s in problem.sizes))
        ):
            yield Combination(idx, h)

    return generate()


def weighted_mean(combo: Combination, problem: Problem) -> tuple[float, ...]:
    """Componentwise weighted mean of the combination's support points."""
    d = problem.dimension
    out = [0.0] * d
    for i, k in enumerate(combo.indices):
        w = problem.weights[i]
        pt = problem.measures[i].points[k]
        for l in range(d):
            out[l] += w * pt[l]
    return tuple(out)


class _Quantizer:
    """Coordinate bucketing under which coincident means collide exactly.

    Weights are rescaled to integers when they rationalize (uniform weights
    scale by n), so lattice-supported data dedups in integer arithmetic.
    Buckets are sized relative to the coordinate span, so points in general
    position never collide.
    """

    def __init__(self, problem: Problem, dedup_tol: float = DEFAULT_DEDUP_TOL):
        self.dedup_tol = float(dedup_tol)
        fracs = [Fraction(w).limit_denominator(_RATIONALIZE_DENOM_CAP) for w in problem.weights]
        exact = all(abs(float(f) - w) <= 1e-12 for f, w in zip(fracs, problem.weights))
        denom = math.lcm(*(f.denominator for f in fracs)) if exact else 0
        if 0 < denom <= _RATIONALIZE_DENOM_CAP:
            self.scale = float(denom)
            self.scaled_weights = tuple(
                float(f.numerator * (denom // f.denominator)) for f in fracs
            )
        else:
            self.scale = 1.0
            self.scaled_weights = tuple(problem.weights)

        d = problem.dimension
        span = 0.0
        for l in range(d):
            lo = sum(
                sw * min(pt[l] for pt in m.points)
                for sw, m in zip(self.scaled_weights, problem.measures)
            )
            hi = sum(
                sw * max(pt[l] for pt in m.points)
                for sw, m in zip(self.scaled_weights, problem.measures)
            )
            span = max(span, hi - lo)
        self.quantum = self.dedup_tol * span if span > 0.0 else 1.0

    def key(self, scaled_point: Sequence[float]) -> tuple[int, ...]:
        q = self.quantum
        return tuple(int(round(c / q)) for c in scaled_point)

    def key_of_point(self, point: Sequence[float]) -> tuple[int, ...]:
        s = self.scale
        return self.key([c * s for c in point])


@dataclass(frozen=True)
class SupportAtlas:
    """Candidate support points with their incidence structure.

    ``support_points`` are sorted lexicographically by coordinate.
    ``reachable(i, k)`` lists candidate indices j whose mean computation can
    use support point k of measure i; ``sources(j)`` is the transpose.
    ``multiplicity[j]`` counts combinations collapsing onto candidate j
    (exactly in the exact regime, by the closed-form dice count on grids).
    """

    support_points: tuple[tuple[float, ...], ...]
    multiplicity: tuple[int, ...]
    regime: str
    sizes: tuple[int, ...]
    combination_total: int
    fine_grid: GridSpec | None = None
    _reach: tuple[tuple[tuple[int, ...], ...], ...] = field(repr=False, default=())
    _sources: tuple[tuple[tuple[int, int], ...], ...] = field(repr=False, default=())
    _key_to_index: dict = field(repr=False, default_factory=dict)
    _quantizer: _Quantizer | None = field(repr=False, default=None)
    _combo_to_index: np.ndarray | None = field(repr=False, default=None)

    @property
    def point_count(self) -> int:
        return len(self.support_points)

    @property
    def n_measures(self) -> int:
        return len(self.sizes)

    def reachable(self, i: int, k: int) -> tuple[int, ...]:
        """Candidate indices reachable using support point k of measure i."""
        return self._reach[i][k]

    def sources(self, j: int) -> tuple[tuple[int, int], ...]:
        """(measure, point) index pairs contributing to candidate j."""
        return self._sources[j]

    def candidate_index(self, point: Sequence[float]) -> int:
        """Index of a generated candidate point (KeyError if not generated)."""
        return self._key_to_index[self._quantizer.key_of_point(point)]

    def combo_candidate(self, combo: Combination, problem: Problem) -> int:
        """Candidate index of a combination's weighted mean."""
        if self._combo_to_index is not None:
            return int(self._combo_to_index[combo.ordinal])
        sw = self._quantizer.scaled_weights
        d = problem.dimension
        scaled = [0.0] * d
        for i, k in enumerate(combo.indices):
            pt = problem.measures[i].points[k]
            w = sw[i]
            for l in range(d):
                scaled[l] += w * pt[l]
        return self._key_to_index[self._quantizer.key(scaled)]


def build_atlas_exact(
    problem: Problem,
    dedup_tol: float = DEFAULT_DEDUP_TOL,
    cap: int = DEFAULT_COMBINATION_CAP,
) -> SupportAtlas:
    """Enumerate every combination and deduplicate the weighted means."""
    total = problem.combination_total()
    if total > cap:
        raise CombinationBlowupError(
            f"combination blowup: {total} combinations exceed cap {cap}"
        )
    quant = _Quantizer(problem, dedup_tol)
    d = problem.dimension
    n = problem.n
    # (k, scaled point) pairs per measure; combination means accumulate the
    # scaled coordinates so rational weights stay in integer arithmetic.
    contrib = [
        [
            (k, tuple(quant.scaled_weights[i] * c for c in pt))
            for k, pt in enumerate(m.points)
        ]
        for i, m in enumerate(problem.measures)
    ]

    key_to_tmp: dict[tuple[int, ...], int] = {}
    scaled_points: list[tuple[float, ...]] = []
    counts: list[int] = []
    reach_sets: list[list[set[int]]] = [
        [set() for _ in range(len(m))] for m in problem.measures
    ]
    combo_to_tmp = np.empty(total, dtype=np.int64)

    for h, picks in enumerate(itertools.product(*contrib)):
        scaled = [0.0] * d
        for _, spt in picks:
            for l in range(d):
                scaled[l] += spt[l]
        key = quant.key(scaled)
        j = key_to_tmp.get(key)
        if j is None:
            j = len(scaled_points)
            key_to_tmp[key] = j
            scaled_points.append(tuple(scaled))
            counts.append(0)
        counts[j] += 1
        combo_to_tmp[h] = j
        for i in range(n):
            reach_sets[i][picks[i][0]].add(j)

    # Canonical indexing: sort candidates lexicographically by coordinate.
    order = sorted(range(len(scaled_points)), key=lambda j: scaled_points[j])
    relabel = np.empty(len(order), dtype=np.int64)
    for new, old in enumerate(order):
        relabel[old] = new

    support_points = tuple(
        tuple(c / quant.scale for c in scaled_points[old]) for old in order
    )
    multiplicity = tuple(counts[old] for old in order)
    key_to_index = {key: int(relabel[tmp]) for key, tmp in key_to_tmp.items()}
    combo_to_index = relabel[combo_to_tmp]

    reach = tuple(
        tuple(
            tuple(sorted(int(relabel[j]) for j in ks)) for ks in measure_sets
        )
        for measure_sets in reach_sets
    )
    sources = _transpose_reach(reach, len(support_points))

    return SupportAtlas(
        support_points=support_points,
        multiplicity=multiplicity,
        regime="exact",
        sizes=problem.sizes,
        combination_total=total,
        fine_grid=None,
        _reach=reach,
        _sources=sources,
        _key_to_index=key_to_index,
        _quantizer=quant,
        _combo_to_index=combo_to_index,
    )


def build_atlas_grid(problem: Problem, grid: GridSpec | None = None) -> SupportAtlas:
    """Generate the refined-lattice candidate set without touching the
    combination stream.

    Requires uniform weights and every support point on ``grid``.  All
    ``(n*K - n + 1)**d`` refined-lattice points become candidates whether or
    not sparse supports can actually reach them; incidence pairs are pruned
    by per-axis sum feasibility: point k of measure i can participate in
    candidate j only if, on every axis, the remaining sum is achievable by
    n-1 lattice values.
    """
    if grid is None:
        grid = problem.grid
    if grid is None:
        raise GridRegimeError("grid regime requires a lattice specification")
    n = problem.n
    if not problem.has_uniform_weights():
        raise GridRegimeError("grid regime requires uniform weights 1/n")
    if grid.dim != problem.dimension:
        raise GridRegimeError(
            f"lattice dimension {grid.dim} != problem dimension {problem.dimension}"
        )
    K = grid.side
    d = grid.dim

    # Lattice cell of every support point (raises off-lattice).
    cells = [
        [grid.cell(pt) for pt in m.points] for m in problem.measures
    ]
    cell_to_k = [
        {cell: k for k, cell in enumerate(measure_cells)}
        for measure_cells in cells
    ]

    quant = _Quantizer(problem)
    if quant.scale != float(n) or any(w != 1.0 for w in quant.scaled_weights):
        # candidate coordinates below rely on the weights rescaling to
        # exactly one; nearly-uniform weights would mis-key the lattice
        raise GridRegimeError("grid regime requires exactly uniform weights 1/n")
    lo_sum, hi_sum = n, n * K
    side = n * K - n + 1
    fine = GridSpec(dim=d, side=side, origin=grid.origin, step=grid.step / n)

    support_points: list[tuple[float, ...]] = []
    multiplicity: list[int] = []
    sources: list[tuple[tuple[int, int], ...]] = []
    reach_lists: list[list[list[int]]] = [
        [[] for _ in range(len(m))] for m in problem.measures
    ]
    key_to_index: dict[tuple[int, ...], int] = {}

    for j, sums in enumerate(itertools.product(range(lo_sum, hi_sum + 1), repeat=d)):
        scaled = tuple(
            n * grid.origin[l] + grid.step * (sums[l] - n) for l in range(d)
        )
        key_to_index[quant.key(scaled)] = j
        support_points.append(tuple(c / quant.scale for c in scaled))
        multiplicity.append(combination_count(sums, K, n))

        # Per-axis feasible original-lattice range for this candidate.
        ranges = [
            (max(1, sums[l] - (n - 1) * K), min(K, sums[l] - (n - 1)))
            for l in range(d)
        ]
        box_volume = math.prod(max(0, hi - lo + 1) for lo, hi in ranges)
        srcs: list[tuple[int, int]] = []
        for i in range(n):
            if box_volume <= len(cells[i]):
                for cell in itertools.product(
                    *(range(lo, hi + 1) for lo, hi in ranges)
                ):
                    k = cell_to_k[i].get(cell)
                    if k is not None:
                        srcs.append((i, k))
                        reach_lists[i][k].append(j)
            else:
                for k, cell in enumerate(cells[i]):
                    if all(lo <= cell[l] <= hi for l, (lo, hi) in enumerate(ranges)):
                        srcs.append((i, k))
                        reach_lists[i][k].append(j)
        sources.append(tuple(sorted(srcs)))

    reach = tuple(
        tuple(tuple(ks) for ks in measure_lists) for measure_lists in reach_lists
    )
    return SupportAtlas(
        support_points=tuple(support_points),
        multiplicity=tuple(multiplicity),
        regime="grid",
        sizes=problem.sizes,
        combination_total=problem.combination_total(),
        fine_grid=fine,
        _reach=reach,
        _sources=tuple(sources),
        _key_to_index=key_to_index,
        _quantizer=quant,
        _combo_to_index=None,
    )


def _transpose_reach(reach, point_count):
    sources: list[list[tuple[int, int]]] = [[] for _ in range(point_count)]
    for i, measure_reach in enumerate(reach):
        for k, js in enumerate(measure_reach):
            for j in js:
                sources[j].append((i, k))
    return tuple(tuple(sorted(s)) for s in sources)


def _comb_or_zero(a: int, b: int) -> int:
    if a < 0 or b < 0 or a < b:
        return 0
    return math.comb(a, b)


def count_dice(total: int, sides: int, dice: int) -> int:
    """Number of ``dice``-tuples in {1..sides} summing to ``total``.

    Inclusion-exclusion in exact integer arithmetic; sums outside
    [dice, dice*sides] count zero.
    """
    if sides < 1 or dice < 1:
        raise ValueError(f"need sides >= 1 and dice >= 1, got {sides}, {dice}")
    return sum(
        (-1) ** m * math.comb(dice, m) * _comb_or_zero(total - m * sides - 1, dice - 1)
        for m in range(dice + 1)
    )


def combination_count(axis_sums: Sequence[int], sides: int, dice: int) -> int:
    """Combinations collapsing onto the lattice candidate whose per-axis
    index sums are ``axis_sums``: the product of per-axis dice counts."""
    out = 1
    for s in axis_sums:
        out *= count_dice(int(s), sides, dice)
    return out


@dataclass(frozen=True)
class HybridSplit:
    """Per-candidate choice between variable representations.

    Candidates in ``y_points`` get one mass variable plus transport
    variables; every combination collapsing onto any other candidate gets
    its own fixed-transport variable.  ``budgets[j]`` is the bound the
    multiplicity was compared against.  ``w_combos`` materializes the
    fixed-transport combination ordinals when the atlas carries the
    combination map (exact regime); in the grid regime the set is implicit.
    """

    y_points: frozenset[int]
    budgets: tuple[int, ...]
    w_combos: np.ndarray | None = field(repr=False, default=None)

    def uses_y(self, j: int) -> bool:
        return j in self.y_points


def hybrid_split(atlas: SupportAtlas) -> HybridSplit:
    """Assign each candidate the cheaper representation.

    A candidate j costs ``multiplicity[j]`` fixed-transport variables or
    ``budget`` mass/transport variables, where the budget is the per-point
    variable count: ``n*K^d + 1`` on full grids, ``len(sources(j)) + 1``
    in the exact regime.  Transport variables win only on a strict excess,
    so general-position data (all multiplicities 1) stays all fixed.
    """
    if atlas.regime == "grid":
        n = len(atlas.sizes)
        # refined side is n*K - n + 1, so K recovers exactly
        K = (atlas.fine_grid.side - 1) // n + 1
        budget = n * K ** atlas.fine_grid.dim + 1
        budgets = tuple(budget for _ in range(atlas.point_count))
    else:
        budgets = tuple(
            len(atlas.sources(j)) + 1 for j in range(atlas.point_count)
        )
    y_points = frozenset(
        j for j in range(atlas.point_count) if atlas.multiplicity[j] > budgets[j]
    )
    w_combos = None
    if atlas._combo_to_index is not None:
        if y_points:
            y_mask = np.zeros(atlas.point_count, dtype=bool)
            y_mask[list(y_points)] = True
            w_combos = np.nonzero(~y_mask[atlas._combo_to_index])[0]
        else:
            w_combos = np.arange(atlas.combination_total, dtype=np.int64)
    return HybridSplit(y_points=y_points, budgets=budgets, w_combos=w_combos)


def problem_digest(problem: Problem) -> str:
    """Stable content hash used to tag cached atlases."""
    doc = {
        "weights": [repr(w) for w in problem.weights],
        "measures": [
            {
                "points": [[repr(c) for c in pt] for pt in m.points],
                "masses": [repr(v) for v in m.masses],
            }
            for m in problem.measures
        ],
    }
    blob = json.dumps(doc, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


ATLAS_DUMP_VERSION = 1


def atlas_to_json(atlas: SupportAtlas, problem: Problem) -> str:
    """Serialize the cacheable part of an atlas (points, incidence,
    multiplicities, regime) tagged with the problem digest."""
    doc = {
        "version": ATLAS_DUMP_VERSION,
        "problem_digest": problem_digest(problem),
        "regime": atlas.regime,
        "sizes": list(atlas.sizes),
        "combination_total": atlas.combination_total,
        "support_points": [list(pt) for pt in atlas.support_points],
        "multiplicity": list(atlas.multiplicity),
        "reach": [
            [list(atlas.reachable(i, k)) for k in range(size)]
            for i, size in enumerate(atlas.sizes)
        ],
        "fine_grid": None
        if atlas.fine_grid is None
        else {
            "dim": atlas.fine_grid.dim,
            "side": atlas.fine_grid.side,
            "origin": list(atlas.fine_grid.origin),
            "step": atlas.fine_grid.step,
        },
    }
    return json.dumps(doc)


def atlas_from_json(text: str, problem: Problem) -> SupportAtlas:
    """Rebuild a cached atlas; refuses stale caches via the problem digest.

    The combination map is not serialized, so hybrid model construction on a
    restored exact atlas falls back to coordinate lookups.
    """
    doc = json.loads(text)
    if doc.get("version") != ATLAS_DUMP_VERSION:
        raise InvariantError(f"unsupported atlas dump version {doc.get('version')}")
    if doc.get("problem_digest") != problem_digest(problem):
        raise InvariantError("atlas cache does not match this problem")
    support_points = tuple(tuple(float(c) for c in pt) for pt in doc["support_points"])
    reach = tuple(
        tuple(tuple(int(j) for j in ks) for ks in measure_reach)
        for measure_reach in doc["reach"]
    )
    quant = _Quantizer(problem)
    key_to_index = {
        quant.key_of_point(pt): j for j, pt in enumerate(support_points)
    }
    fg = doc.get("fine_grid")
    fine = (
        None
        if fg is None
        else GridSpec(dim=fg["dim"], side=fg["side"], origin=tuple(fg["origin"]), step=fg["step"])
    )
    return SupportAtlas(
        support_points=support_points,
        multiplicity=tuple(int(v) for v in doc["multiplicity"]),
        regime=doc["regime"],
        sizes=tuple(int(s) for s in doc["sizes"]),
        combination_total=int(doc["combination_total"]),
        fine_grid=fine,
        _reach=reach,
        _sources=_transpose_reach(reach, len(support_points)),
        _key_to_index=key_to_index,
        _quantizer=quant,
        _combo_to_index=None,
    )
