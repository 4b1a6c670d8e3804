"""The LP relaxation LP_C and the search for the smallest feasible C.

For a threshold C, let I_C be the items that cost at most C in every scenario.
LP_C asks for x in [0,1]^{I_C} with sum(x) = p and, for every scenario S,
sum_i c_{S,i} x_i <= C. The smallest C for which LP_C is feasible is a lower
bound on the optimum of the selection problem.

The LPs are solved by a dense two-phase tableau simplex with Bland's rule.
It runs on float64 arrays by default, or on object arrays of Fractions when
`exact=True`.
"""
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral
from typing import List, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from selecting_items.instance import Instance
from util import Number, as_rational

TOLERANCE = 1e-9
ITERATION_FACTOR = 50


class IterationLimitError(RuntimeError):
    pass


@dataclass
class LPResult:
    """The outcome of a call to `simplex`.

    Parameters
    ----------
        status : 'optimal', 'infeasible' or 'unbounded'
        x : the optimal point (None unless optimal)
        objective : the optimal objective value (None unless optimal)
        infeasibility : the optimum of phase one, i.e. the total violation of
            the constraints. This is zero (up to tolerance) iff feasible.
        pivots : number of pivots over both phases
    """
    status: str
    x: Optional[np.ndarray]
    objective: Optional[Number]
    infeasibility: Number
    pivots: int


################################################################################
# Dense simplex
################################################################################


def simplex(c: Sequence, A_ub=None, b_ub=None, A_eq=None, b_eq=None,
            exact=False, tol=None, max_pivots=None) -> LPResult:
    """Minimize `c x` subject to `A_ub x <= b_ub`, `A_eq x = b_eq` and `x >= 0`.

    Parameters
    ----------
        exact : pivot on Fractions instead of floats. Tolerances are zero.
        tol : feasibility and pivoting tolerance (float mode)
        max_pivots : pivot budget. Defaults to ITERATION_FACTOR * (rows + cols)

    Raise an IterationLimitError if the budget is exhausted.
    """
    if tol is None:
        tol = TOLERANCE
    if exact:
        tol = 0

    n_vars = len(c)
    rows = _constraint_rows(A_ub, b_ub, '<=', n_vars, exact) + \
        _constraint_rows(A_eq, b_eq, '=', n_vars, exact)

    T, basis, n_slack, n_art = _phase1_tableau(rows, n_vars, exact)
    n_cols = T.shape[1] - 1
    art_start = n_vars + n_slack
    if max_pivots is None:
        max_pivots = ITERATION_FACTOR * (len(rows) + n_cols)

    scale = max([1] + [abs(row[1]) for row in rows])
    status, pivots = _iterate(T, basis, n_cols, tol, max_pivots)
    infeasibility = -T[-1, -1]
    if infeasibility > tol * scale:
        logging.debug(f'phase 1 ended with infeasibility {float(infeasibility):g}')
        return LPResult('infeasible', None, None, infeasibility, pivots)

    # drop the artificial variables
    T, basis = _drive_out_artificials(T, basis, art_start, tol)
    T = np.delete(T, np.s_[art_start:art_start + n_art], axis=1)

    cost = _convert([*c] + [0] * n_slack, exact)
    T[-1] = _reduced_costs(T, basis, cost)

    status, more = _iterate(T, basis, art_start, tol, max_pivots - pivots)
    pivots += more
    if status == 'unbounded':
        return LPResult('unbounded', None, None, max(infeasibility, 0), pivots)

    x = _convert([0] * art_start, exact)
    for r, j in enumerate(basis):
        x[j] = T[r, -1]
    x = x[:n_vars]
    if not exact:
        x = np.clip(x, 0, None)

    logging.debug(f'simplex: {len(rows)} rows, {n_vars} variables, {pivots} pivots')
    return LPResult('optimal', x, -T[-1, -1], max(infeasibility, 0), pivots)


def _convert(values, exact: bool) -> np.ndarray:
    if not exact:
        return np.array(values, dtype=float)

    values = np.array(values, dtype=object)
    flat = [_to_fraction(v) for v in values.flat]
    return np.array(flat, dtype=object).reshape(values.shape)


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Integral):
        return Fraction(int(value))
    return Fraction(float(value))


def _constraint_rows(A, b, sense: str, n_vars: int, exact: bool) -> list:
    if A is None:
        return []

    A = _convert(A, exact).reshape(-1, n_vars)
    b = _convert(b, exact).reshape(-1)
    if A.shape[0] != b.shape[0]:
        raise ValueError(f'constraint matrix has {A.shape[0]} rows, '
                         f'but rhs has {b.shape[0]} entries')

    rows = []
    for coeffs, rhs in zip(A, b):
        row_sense = sense
        if rhs < 0:
            coeffs, rhs = -coeffs, -rhs
            if sense == '<=':
                row_sense = '>='
        rows.append((coeffs, rhs, row_sense))
    return rows


def _phase1_tableau(rows: list, n_vars: int, exact: bool):
    """Build the tableau [x | slack | artificial | rhs] with the phase one
    objective (the sum of the artificial variables) in the last row.
    """
    m = len(rows)
    n_slack = sum(1 for _, _, sense in rows if sense != '=')
    n_art = sum(1 for _, _, sense in rows if sense != '<=')
    n_cols = n_vars + n_slack + n_art

    T = _convert(np.zeros((m + 1, n_cols + 1), dtype=int), exact)
    basis = []
    slack, art = n_vars, n_vars + n_slack
    for r, (coeffs, rhs, sense) in enumerate(rows):
        T[r, :n_vars] = coeffs
        T[r, -1] = rhs
        if sense == '<=':
            T[r, slack] = 1
            basis.append(slack)
            slack += 1
            continue

        if sense == '>=':
            T[r, slack] = -1
            slack += 1
        T[r, art] = 1
        basis.append(art)
        art += 1

    art_start = n_vars + n_slack
    for r, j in enumerate(basis):
        if j >= art_start:
            T[-1] = T[-1] - T[r]
    T[-1, art_start:n_cols] = 0

    return T, basis, n_slack, n_art


def _pivot(T: np.ndarray, row: int, col: int):
    T[row] = T[row] / T[row, col]
    column = T[:, col].copy()
    column[row] = 0
    T -= np.outer(column, T[row])
    T[:, col] = 0
    T[row, col] = 1


def _entering(T: np.ndarray, n_cols: int, tol) -> int:
    # Bland: the lowest index with a negative reduced cost
    candidates = np.nonzero(T[-1, :n_cols] < -tol)[0]
    return int(candidates[0]) if len(candidates) else -1


def _leaving(T: np.ndarray, basis: List[int], col: int, tol) -> int:
    rows = [r for r in range(T.shape[0] - 1) if T[r, col] > tol]
    if not rows:
        return -1

    ratios = {r: T[r, -1] / T[r, col] for r in rows}
    best = min(ratios.values())
    # Bland: break ties by the lowest basic variable
    ties = [r for r in rows if ratios[r] <= best + tol]
    return min(ties, key=lambda r: basis[r])


def _iterate(T: np.ndarray, basis: List[int], n_cols: int, tol, max_pivots: int) -> Tuple[str, int]:
    pivots = 0
    while True:
        col = _entering(T, n_cols, tol)
        if col == -1:
            return 'optimal', pivots

        row = _leaving(T, basis, col, tol)
        if row == -1:
            return 'unbounded', pivots

        if pivots >= max_pivots:
            raise IterationLimitError(f'simplex exceeded {max_pivots} pivots')

        _pivot(T, row, col)
        basis[row] = col
        pivots += 1


def _drive_out_artificials(T: np.ndarray, basis: List[int], art_start: int, tol):
    redundant = []
    for r, j in enumerate(basis):
        if j < art_start:
            continue

        candidates = [k for k in range(art_start) if abs(T[r, k]) > tol]
        if candidates:
            _pivot(T, r, candidates[0])
            basis[r] = candidates[0]
        else:
            redundant.append(r)

    if redundant:
        logging.debug(f'removing {len(redundant)} redundant rows')
        T = np.delete(T, redundant, axis=0)
        basis = [j for r, j in enumerate(basis) if r not in redundant]

    return T, basis


def _reduced_costs(T: np.ndarray, basis: List[int], cost: np.ndarray) -> np.ndarray:
    n_cols = len(cost)
    c_B = cost[basis]
    obj = np.append(cost, 0)
    obj = obj - c_B @ T[:-1, :n_cols + 1]
    return obj


################################################################################
# The LP_C family
################################################################################


@dataclass(frozen=True)
class LPModel:
    """LP_C for a single threshold C.

    Parameters
    ----------
        threshold : C
        items : I_C, the items that cost at most C in every scenario
        matrix : the K x |I_C| cost matrix restricted to I_C
        p : selection size
    """
    threshold: Number
    items: Tuple[int, ...]
    matrix: np.ndarray
    p: int

    @staticmethod
    def build(instance: Instance, C: Number) -> 'LPModel':
        if C < 0:
            raise ValueError(f'C must be nonnegative, got {C}')

        items = tuple(instance.items_below(C))
        return LPModel(C, items, instance.costs[:, list(items)], instance.p)

    def scaled(self) -> np.ndarray:
        """The cost matrix divided by C, as an object array of Fractions.
        """
        C = as_rational(self.threshold)
        if C == 0:
            raise ZeroDivisionError('cannot scale LP_0')

        return np.array([[Fraction(int(c)) / C for c in row] for row in self.matrix],
                        dtype=object).reshape(self.matrix.shape)


@dataclass(frozen=True)
class FractionalSolution:
    """A fractional selection x, indexed by `items` (implicitly zero elsewhere).
    """
    items: Tuple[int, ...]
    x: np.ndarray
    attained_value: Number
    p: int

    @property
    def mass(self) -> Number:
        return sum(self.x)

    def dense(self, n: int) -> np.ndarray:
        x = np.zeros(n, dtype=self.x.dtype)
        if len(self.items):
            x[list(self.items)] = self.x
        return x

    def check(self, instance: Instance, C: Number = None, tol=TOLERANCE):
        """Raise an AssertionError if the solution violates LP_C.
        """
        if C is None:
            C = self.attained_value
        scale = max(1., float(C))
        A = instance.costs[:, list(self.items)]

        assert abs(self.mass - self.p) <= tol * max(1, self.p), \
            f'mass {self.mass} != p = {self.p}'
        assert all(-tol <= v <= 1 + tol for v in self.x), 'x is not in [0,1]'
        if len(self.items):
            assert max(A @ self.x) <= C + tol * scale, \
                f'scenario cost {max(A @ self.x)} exceeds C = {C}'


@dataclass(frozen=True)
class Infeasible:
    """LP_C (or the min-max LP) has no solution.

    Parameters
    ----------
        threshold : C, or None for the min-max LP
        items : the item set of the LP
        reason : a human-readable explanation
        certificate : the phase one optimum, or the number of missing items
            when there are fewer than p candidate items
    """
    threshold: Optional[Number]
    items: Tuple[int, ...]
    reason: str
    certificate: Number


def lp_feasible(instance: Instance, C: Number, exact=False) -> Union[FractionalSolution, Infeasible]:
    """Solve LP_C. Return a feasible x or an Infeasible certificate.
    """
    model = LPModel.build(instance, C)
    k = len(model.items)
    if k < instance.p:
        return Infeasible(C, model.items,
                          f'only {k} items cost at most {C} in every scenario',
                          instance.p - k)

    A = model.matrix
    C_value = as_rational(C) if exact else float(C)
    A_ub = np.vstack([A, np.eye(k, dtype=int)])
    b_ub = [C_value] * instance.K + [1] * k
    result = _solve(instance, C, np.zeros(k, dtype=int), A_ub, b_ub,
                    np.ones((1, k), dtype=int), [instance.p], exact)

    if result.status != 'optimal':
        return Infeasible(C, model.items, 'LP_C has no solution',
                          result.infeasibility)

    x = _box(result.x, exact)
    return FractionalSolution(model.items, x, max(A @ x), instance.p)


def minmax_value(instance: Instance, item_set: Sequence[int], exact=False) -> Union[FractionalSolution, Infeasible]:
    """Minimize the largest scenario cost over fractional selections on `item_set`:
    ```
    min z  s.t.  sum_i c_{S,i} x_i <= z  for all S,  sum_i x_i = p,  x in [0,1]
    ```
    The optimum is returned as `attained_value`.
    """
    items = tuple(int(i) for i in item_set)
    if not items:
        raise ValueError('item_set must be nonempty')

    k = len(items)
    if k < instance.p:
        return Infeasible(None, items, f'{k} items cannot hold a selection of '
                          f'size p={instance.p}', instance.p - k)

    A = instance.costs[:, list(items)]
    c = [0] * k + [1]
    A_ub = np.vstack([np.hstack([A, -np.ones((instance.K, 1), dtype=int)]),
                      np.hstack([np.eye(k, dtype=int), np.zeros((k, 1), dtype=int)])])
    b_ub = [0] * instance.K + [1] * k
    A_eq = [[1] * k + [0]]
    result = _solve(instance, None, c, A_ub, b_ub, A_eq, [instance.p], exact)

    if result.status != 'optimal':
        return Infeasible(None, items, 'the min-max LP has no solution',
                          result.infeasibility)

    x = _box(result.x[:k], exact)
    return FractionalSolution(items, x, max(A @ x), instance.p)


def _solve(instance: Instance, C, c, A_ub, b_ub, A_eq, b_eq, exact: bool) -> LPResult:
    try:
        return simplex(c, A_ub, b_ub, A_eq, b_eq, exact=exact)
    except IterationLimitError as e:
        threshold = 'min-max LP' if C is None else f'C={C}'
        raise IterationLimitError(f'{e} on instance {instance.name or instance} '
                                  f'({threshold})') from e


def _box(x: np.ndarray, exact: bool) -> np.ndarray:
    # float pivots can leave entries slightly outside [0,1]
    if exact:
        return x
    return np.clip(x, 0., 1.)


def minimal_C(instance: Instance, exact=False) -> Tuple[Fraction, FractionalSolution]:
    """Return the smallest C for which LP_C is feasible, with a witness x.

    The set I_C only changes at the distinct item maxima t_1 < .. < t_q.
    On [t_j, t_{j+1}) the smallest feasible C is max(t_j, V_j), where V_j is
    the min-max value over I_{t_j}. Since V_j <= t_j is monotone in j, the
    first such j is found by binary search, and
    ```
    C* = min(t_j, V_{j-1})
    ```
    """
    tol = 0 if exact else TOLERANCE
    maxima = instance.item_max_costs
    zero_items = [i for i, c in enumerate(maxima) if c == 0]
    if len(zero_items) >= instance.p:
        items = tuple(zero_items[:instance.p])
        x = _convert([1] * instance.p, exact)
        return Fraction(0), FractionalSolution(items, x, 0, instance.p)

    if instance.n == instance.p:
        # x is all ones, so C* is the largest scenario total
        C = Fraction(max(sum(int(c) for c in row) for row in instance.costs))
        x = _convert([1] * instance.n, exact)
        return C, FractionalSolution(tuple(range(instance.n)), x, C, instance.p)

    breakpoints = sorted(set(int(c) for c in maxima))
    sizes = [int(np.sum(maxima <= t)) for t in breakpoints]
    first = next(j for j, size in enumerate(sizes) if size >= instance.p)

    values = {}

    def value(j: int):
        if j not in values:
            solution = minmax_value(instance, instance.items_below(breakpoints[j]), exact)
            values[j] = solution.attained_value
            logging.debug(f'breakpoint t={breakpoints[j]}: '
                          f'{sizes[j]} items, min-max value {float(values[j]):g}')
        return values[j]

    def feasible(j: int) -> bool:
        t = breakpoints[j]
        return value(j) <= t + tol * max(1, t)

    lo, hi = first, len(breakpoints)
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid + 1

    candidates = []
    if lo < len(breakpoints):
        candidates.append(Fraction(breakpoints[lo]))
    if lo - 1 >= first:
        # snap float values onto a nearby fraction with a small denominator
        candidates.append(as_rational(value(lo - 1), tol=max(tol, 1e-12)))
    C = min(candidates)

    witness = lp_feasible(instance, C, exact)
    if isinstance(witness, Infeasible):
        # numerical edge case at a tight threshold; use the min-max solution
        logging.warning(f'LP_C re-solve failed at C={C}, using min-max witness')
        witness = minmax_value(instance, instance.items_below(C), exact)

    logging.info(f'minimal C = {C} ({len(values) + 1} LP solves)')
    return C, witness
