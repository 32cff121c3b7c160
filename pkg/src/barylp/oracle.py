"""Independent brute-force references for validating the main pipeline.

Everything here is deliberately separate from the production code paths:
linear systems are solved by hand-written Gaussian elimination, mean
deduplication uses its own quantization, and tuple counts come from
exhaustive enumeration.  Hard size caps keep the whole reference suite at
desk scale.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .measures import Problem

BASIS_VAR_CAP = 14
BASIS_CONSTRAINT_CAP = 9
DICE_TUPLE_CAP = 10**7
DUPLICATE_COMBO_CAP = 10**6


class OracleCapError(RuntimeError):
    """Instance exceeds the oracle's hard size caps."""


@dataclass(frozen=True)
class OracleResult:
    value: float | int | None
    witnesses: tuple | None
    instance_hash: str
    status: str = "optimal"


def _hash_model(model) -> str:
    h = hashlib.sha256()
    h.update(repr([round(v, 12) for v in model.objective.tolist()]).encode())
    h.update(repr([round(v, 12) for v in model.rhs.tolist()]).encode())
    dense = model.constraints.toarray()
    h.update(repr([[round(v, 12) for v in row] for row in dense.tolist()]).encode())
    return h.hexdigest()


def _pivot_rows(rows: list[list[float]], tol: float) -> list[int]:
    """Indices of a maximal independent row set, by plain elimination."""
    work = [list(r) for r in rows]
    m = len(work)
    ncols = len(work[0]) if m else 0
    used = [False] * m
    pivots: list[int] = []
    for col in range(ncols):
        best, best_val = -1, tol
        for r in range(m):
            if not used[r] and abs(work[r][col]) > best_val:
                best, best_val = r, abs(work[r][col])
        if best < 0:
            continue
        used[best] = True
        pivots.append(best)
        prow = work[best]
        inv = 1.0 / prow[col]
        for r in range(m):
            if used[r] or abs(work[r][col]) <= 0.0:
                continue
            factor = work[r][col] * inv
            row = work[r]
            for c in range(col, ncols):
                row[c] -= factor * prow[c]
    return pivots


def _solve_square(matrix: list[list[float]], rhs: list[float], tol: float):
    """Gaussian elimination with partial pivoting; None when singular."""
    size = len(matrix)
    aug = [list(matrix[r]) + [rhs[r]] for r in range(size)]
    for col in range(size):
        piv = max(range(col, size), key=lambda r: abs(aug[r][col]))
        if abs(aug[piv][col]) <= tol:
            return None
        if piv != col:
            aug[col], aug[piv] = aug[piv], aug[col]
        prow = aug[col]
        inv = 1.0 / prow[col]
        for r in range(col + 1, size):
            factor = aug[r][col] * inv
            if factor == 0.0:
                continue
            row = aug[r]
            for c in range(col, size + 1):
                row[c] -= factor * prow[c]
    x = [0.0] * size
    for r in range(size - 1, -1, -1):
        acc = aug[r][size]
        row = aug[r]
        for c in range(r + 1, size):
            acc -= row[c] * x[c]
        x[r] = acc / row[r]
    return x


def basis_enumeration_solve(model) -> OracleResult:
    """Optimal value by enumerating every potential basis.

    Tries all column subsets of size rank(A), solves each square system over
    an independent row set, keeps solutions feasible for the full system,
    and returns the best objective.  Exact for LPs whose optimum sits at a
    vertex, which holds for all models built here.
    """
    nvars = model.num_vars
    ncons = model.num_constraints
    if nvars > BASIS_VAR_CAP or ncons > BASIS_CONSTRAINT_CAP:
        raise OracleCapError(
            f"model {nvars}x{ncons} exceeds oracle caps "
            f"{BASIS_VAR_CAP}x{BASIS_CONSTRAINT_CAP}"
        )
    dense = model.constraints.toarray().tolist()
    rhs = model.rhs.tolist()
    cost = model.objective.tolist()
    scale = max(1.0, max((abs(v) for row in dense for v in row), default=1.0))
    tol = 1e-9 * scale

    pivots = _pivot_rows(dense, tol)
    rank = len(pivots)
    instance_hash = _hash_model(model)
    if rank == 0:
        if all(abs(v) <= tol for v in rhs):
            return OracleResult(0.0, ((),), instance_hash)
        return OracleResult(None, None, instance_hash, status="infeasible")

    best_value = None
    witnesses: list[tuple[int, ...]] = []
    for cols in itertools.combinations(range(nvars), rank):
        square = [[dense[r][c] for c in cols] for r in pivots]
        sub_rhs = [rhs[r] for r in pivots]
        solution = _solve_square(square, sub_rhs, tol)
        if solution is None:
            continue
        if any(v < -1e-12 for v in solution):
            continue
        # Dependent rows must agree too, otherwise the system is inconsistent.
        feasible = True
        for r in range(ncons):
            acc = -rhs[r]
            row = dense[r]
            for c, v in zip(cols, solution):
                acc += row[c] * v
            if abs(acc) > 1e-8:
                feasible = False
                break
        if not feasible:
            continue
        value = math.fsum(cost[c] * v for c, v in zip(cols, solution))
        if best_value is None or value < best_value - 1e-12:
            best_value = value
            witnesses = [cols]
        elif abs(value - best_value) <= 1e-12:
            witnesses.append(cols)
    if best_value is None:
        return OracleResult(None, None, instance_hash, status="infeasible")
    return OracleResult(best_value, tuple(witnesses), instance_hash)


def dice_enumeration(total: int, sides: int, dice: int) -> int:
    """Count tuples in {1..sides}^dice with the given sum, exhaustively."""
    if sides**dice > DICE_TUPLE_CAP:
        raise OracleCapError(f"{sides}**{dice} tuples exceed cap {DICE_TUPLE_CAP}")
    return sum(
        1
        for tup in itertools.product(range(1, sides + 1), repeat=dice)
        if sum(tup) == total
    )


def _quant_params(problem: Problem):
    # Own rescaling: integer weights when every weight rationalizes with a
    # small denominator, bucket width 1e-9 of the scaled coordinate span.
    fracs = [Fraction(w).limit_denominator(10**6) for w in problem.weights]
    if all(abs(float(f) - w) <= 1e-12 for f, w in zip(fracs, problem.weights)):
        denom = math.lcm(*(f.denominator for f in fracs))
    else:
        denom = 0
    if 0 < denom <= 10**6:
        sw = [float(f.numerator * (denom // f.denominator)) for f in fracs]
    else:
        sw = list(problem.weights)
    span = 0.0
    for l in range(problem.dimension):
        lows = sum(w * min(pt[l] for pt in m.points) for w, m in zip(sw, problem.measures))
        highs = sum(w * max(pt[l] for pt in m.points) for w, m in zip(sw, problem.measures))
        span = max(span, highs - lows)
    quantum = 1e-9 * span if span > 0.0 else 1.0
    return sw, quantum


def mean_key(problem: Problem, point: Sequence[float]) -> tuple[int, ...]:
    """Quantization key of an (unscaled) mean under the oracle's bucketing."""
    sw, quantum = _quant_params(problem)
    total_w = math.fsum(sw)
    return tuple(int(round(c * total_w / quantum)) for c in point)


def enumerate_duplicates(problem: Problem) -> dict[tuple[int, ...], int]:
    """Multiplicity of every distinct weighted mean, by full enumeration.

    Keys are quantized scaled coordinates (compare via :func:`mean_key`);
    values sum to the total combination count.
    """
    total = problem.combination_total()
    if total > DUPLICATE_COMBO_CAP:
        raise OracleCapError(f"{total} combinations exceed cap {DUPLICATE_COMBO_CAP}")
    sw, quantum = _quant_params(problem)
    d = problem.dimension
    scaled_supports = [
        [tuple(w * c for c in pt) for pt in m.points]
        for w, m in zip(sw, problem.measures)
    ]
    counts: dict[tuple[int, ...], int] = {}
    for picks in itertools.product(*scaled_supports):
        key = tuple(
            int(round(sum(pt[l] for pt in picks) / quantum)) for l in range(d)
        )
        counts[key] = counts.get(key, 0) + 1
    return counts
