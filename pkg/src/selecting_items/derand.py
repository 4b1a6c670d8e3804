"""Deterministic rounding under a cardinality constraint.

`derand_round` walks the same pairs as dependent randomized rounding, but
picks the move that does not increase a pessimistic estimator
```
U(x) = sum_r prod_i (1 + x_i ((1 + delta_r)^{a_ri} - 1)) / (1 + delta_r)^{t_r}
```
with the row thresholds t_r = (Ax)_r + mu_r delta_r, where mu_r = max(1, (Ax)_r)
and delta_r solves the Chernoff equation for mu_r at failure probability q.
Each term starts at most at q, since (Ax)_r <= mu_r, so initially U <= m q.
At the end, U < 1 implies (Ay)_r < (Ax)_r + Delta(mu_r, q) for every row.

Rational powers are computed with floats. `ram_round` avoids them in the
sense that the estimator only ever sees binary matrices: A is split into
binary layers (`bit_decompose`) which are rounded together. When there are
only a few rows, the fractional entries are first reduced to at most m+1
(`reduce_fractionals`) and the remaining roundings are enumerated
(`exhaustive_round`).
"""
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from numbers import Integral
from typing import List, Sequence
import logging
import math

import numpy as np
from scipy.linalg import null_space

from selecting_items.rounding import RoundingError, RoundingOutcome, TOLERANCE, \
    _outcome, _snap_value, apply_move, delta_bound, pair_moves, snap_mass
from util import as_rational, fractional_indices, is_exact_array

RECOMPUTE_EVERY = 64
DRIFT_TOLERANCE = 1e-8


class DerandomizationError(RuntimeError):
    pass


################################################################################
# Pessimistic estimator
################################################################################


@dataclass
class EstimatorState:
    """Incremental state of the pessimistic estimator for one rounding run.

    The estimator is kept as one log-term per row, so that a pairing step
    costs O(m).
    """
    delta: np.ndarray
    thresholds: np.ndarray
    growth: np.ndarray
    log_terms: np.ndarray

    @staticmethod
    def start(A: np.ndarray, x: np.ndarray, failure_prob: float) -> 'EstimatorState':
        values = A @ x
        bounds = [delta_bound(max(1., v), failure_prob) for v in values]
        delta = np.array([b.delta for b in bounds])
        thresholds = values + np.array([b.Delta for b in bounds])
        growth = np.power(1 + delta[:, None], A) - 1
        state = EstimatorState(delta, thresholds, growth, np.zeros(len(values)))
        state.log_terms = state.recompute(x)
        return state

    @property
    def value(self) -> float:
        return float(np.exp(self.log_terms).sum())

    def recompute(self, x: Sequence[float]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        products = np.log1p(self.growth * x[None, :]).sum(axis=1)
        return products - self.thresholds * np.log1p(self.delta)

    def moved(self, x: List[float], i: int, j: int, d: float) -> np.ndarray:
        """The log-terms after adding d to x_i and subtracting it from x_j.
        """
        xi, xj = _snap_value(x[i] + d, TOLERANCE), _snap_value(x[j] - d, TOLERANCE)
        gi, gj = self.growth[:, i], self.growth[:, j]
        return self.log_terms \
            - np.log1p(x[i] * gi) - np.log1p(x[j] * gj) \
            + np.log1p(xi * gi) + np.log1p(xj * gj)

    def check_drift(self, x: Sequence[float]):
        """Replace the incremental log-terms by recomputed ones.
        Raise a DerandomizationError if the two estimators disagree.
        """
        incremental = self.value
        self.log_terms = self.recompute(x)
        exact = self.value
        if abs(incremental - exact) > DRIFT_TOLERANCE * max(abs(exact), 1e-300):
            raise DerandomizationError(
                f'estimator drift: incremental {incremental}, recomputed {exact}')


def derand_round(A, x: Sequence, failure_prob: float = None) -> RoundingOutcome:
    """Round x deterministically, keeping sum(y) = sum(x).

    At each pairing step both moves are evaluated and the one with the smaller
    estimator is taken (the first move on ties). The returned outcome carries
    the estimator trace and the row bounds (Ax)_r + Delta(max(1, (Ax)_r), q),
    which are asserted.

    Parameters
    ----------
        A : matrix with entries in [0,1]
        x : vector in [0,1]^n with an integral sum
        failure_prob : q per row. Defaults to 1/(2m)
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError('A must be a matrix')
    m, n = A.shape
    if A.size and (A.min() < 0 or A.max() > 1 + TOLERANCE):
        raise ValueError('entries of A must be in [0,1]')

    start = snap_mass(x)
    if len(start) != n:
        raise ValueError(f'x has {len(start)} entries, A has {n} columns')
    if m == 0:
        return _outcome(randomless_round(start), None, trace=[0.], steps=0)

    if failure_prob is None:
        failure_prob = 1 / (2 * m)

    state = EstimatorState.start(A, start, failure_prob)
    U = state.value
    if U >= 1:
        raise DerandomizationError(f'initial estimator {U} is not below 1')

    trace = [U]
    values = list(start)
    fractional = fractional_indices(values)
    steps = 0
    while len(fractional) >= 2:
        i, j = fractional[0], fractional[1]
        d1, d2 = pair_moves(values[i], values[j])
        first, second = state.moved(values, i, j, d1), state.moved(values, i, j, -d2)
        U1, U2 = np.exp(first).sum(), np.exp(second).sum()
        if U1 <= U2:
            apply_move(values, i, j, d1)
            state.log_terms, U_next = first, float(U1)
        else:
            apply_move(values, i, j, -d2)
            state.log_terms, U_next = second, float(U2)

        if U_next > U + DRIFT_TOLERANCE:
            raise DerandomizationError(
                f'estimator increased from {U} to {U_next} at step {steps}')

        steps += 1
        if steps % RECOMPUTE_EVERY == 0:
            state.check_drift(values)
            U_next = state.value

        U = U_next
        trace.append(U)
        fractional = [k for k in fractional if 0 < values[k] < 1]

    state.check_drift(values)
    outcome = _outcome(values, A, start, trace=trace, steps=steps)
    outcome.row_bounds = state.thresholds
    _check_bounds(outcome)
    logging.debug(f'derandomized rounding: {steps} steps, final estimator {state.value:g}')
    return outcome


def randomless_round(values: Sequence[float]) -> List[float]:
    """Round a vector without constraints, keeping its integral mass.
    Fractional entries are filled from the lowest index.
    """
    values = list(values)
    fractional = fractional_indices(values)
    budget = round(sum(values[i] for i in fractional))
    for k, i in enumerate(fractional):
        values[i] = 1. if k < budget else 0.
    return values


def _check_bounds(outcome: RoundingOutcome, tol=TOLERANCE):
    excess = outcome.row_values - outcome.row_bounds
    if len(excess) and excess.max() > tol * max(1., outcome.row_bounds.max()):
        r = int(np.argmax(excess))
        raise DerandomizationError(
            f'row {r} has value {outcome.row_values[r]}, above its bound '
            f'{outcome.row_bounds[r]}')


################################################################################
# Binary matrices
################################################################################


@dataclass(frozen=True)
class BitDecomposition:
    """Binary layers A^(1), .., A^(ell) with sum_j 2^-j A^(j) approximating A.
    """
    ell: int
    layers: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return 2. ** -np.arange(1, self.ell + 1)

    @property
    def approximation(self) -> np.ndarray:
        return np.tensordot(self.weights, self.layers, axes=1)

    @property
    def stacked(self) -> np.ndarray:
        """All layers as a single (ell m) x n binary matrix, layer by layer.
        """
        _, m, n = self.layers.shape
        return self.layers.reshape(self.ell * m, n)


def n_digits(n: int) -> int:
    """ceil(log2 n), but at least 1.
    """
    return max(1, (n - 1).bit_length())


def bit_decompose(A) -> BitDecomposition:
    """Truncate every entry of A to ell = ceil(log2 n) binary digits.
    Entries equal to 1 map to 1 - 2^-ell, so every layer is binary.
    Rational entries (Fractions) are truncated exactly.
    """
    A = np.asarray(A)
    m, n = A.shape
    ell = n_digits(n)
    scale = 2 ** ell

    if is_exact_array(A):
        floors = np.array([[math.floor(as_rational(v) * scale) for v in row] for row in A],
                          dtype=np.int64).reshape(m, n)
    else:
        floors = np.floor(A.astype(float) * scale).astype(np.int64)

    if floors.size and (floors.min() < 0 or floors.max() > scale):
        raise ValueError('entries of A must be in [0,1]')

    floors = np.minimum(floors, scale - 1)
    layers = np.array([(floors >> (ell - j)) & 1 for j in range(1, ell + 1)],
                      dtype=np.int8)
    return BitDecomposition(ell, layers.reshape(ell, m, n))


def ram_bound(bits: BitDecomposition, x: Sequence, failure_prob: float) -> np.ndarray:
    """Upper bounds on (Ay)_r for the rounding of the stacked binary layers:
    ```
    1 + sum_j 2^-j ((A^(j) x)_r + Delta(mu_jr, q)),   mu_jr = max(1, (A^(j) x)_r)
    ```
    The leading 1 covers the truncation error, which is at most n 2^-ell <= 1.
    """
    x = np.asarray(x, dtype=float)
    values = bits.layers.astype(float) @ x
    Delta = np.vectorize(lambda v: delta_bound(max(1., v), failure_prob).Delta)(values)
    return 1 + np.tensordot(bits.weights, values + Delta, axes=1)


################################################################################
# Few rows
################################################################################


def reduce_fractionals(A, x: Sequence) -> Sequence:
    """Move x within {x' | Ax' = Ax, sum(x') = sum(x)} until at most m+1
    entries are fractional.

    Each step takes the first m+2 fractional entries J, finds a nonzero eps
    on J in the null space of [A_J; 1], and moves x along +eps or -eps,
    whichever hits the box boundary first (+eps on ties).
    If A and x are exact (ints or Fractions) the result is exact.
    """
    exact = is_exact_array(A) and is_exact_array(x)
    if exact:
        A = np.array([[as_rational(v) for v in row] for row in np.asarray(A)],
                     dtype=object)
        x = [as_rational(v) for v in x]
        if sum(x).denominator != 1:
            raise RoundingError(f'non-integral total mass {sum(x)}')
    else:
        A = np.asarray(A, dtype=float)
        x = list(snap_mass(x))

    m = A.shape[0]
    fractional = fractional_indices(x)
    steps = 0
    while len(fractional) > m + 1:
        J = fractional[:m + 2]
        M = np.vstack([A[:, J], np.ones((1, len(J)), dtype=int)])
        eps = _null_vector(M, exact)
        _move_to_boundary(x, J, eps, exact)

        remaining = fractional_indices(x)
        if len(remaining) >= len(fractional):
            raise DerandomizationError('reduction step did not make an entry integral')

        fractional = remaining
        steps += 1

    logging.debug(f'reduced to {len(fractional)} fractional entries in {steps} steps')
    if exact:
        return x
    return np.array(x)


def _null_vector(M: np.ndarray, exact: bool) -> list:
    if exact:
        return _rational_null_vector(M)

    M = M.astype(float)
    basis = null_space(M)
    if basis.shape[1]:
        eps = basis[:, 0] / np.abs(basis[:, 0]).max()
        eps[np.abs(eps) < 1e-12] = 0.
        if np.abs(M @ eps).max() <= TOLERANCE * max(1., np.abs(M).max()):
            return list(eps)

    logging.info('falling back to rational elimination for the null space')
    rational = _rational_null_vector(M)
    return [float(v) for v in rational]


def _rational_null_vector(M: np.ndarray) -> List[Fraction]:
    """A nonzero solution of M v = 0, by Gauss-Jordan elimination over Fractions.
    Floats are converted exactly.
    """
    R = [[v if isinstance(v, Fraction) else
          Fraction(int(v)) if isinstance(v, Integral) else Fraction(float(v))
          for v in row] for row in M]
    n_rows, n_cols = len(R), len(R[0])

    pivots = []
    r = 0
    for c in range(n_cols):
        pivot = next((k for k in range(r, n_rows) if R[k][c] != 0), None)
        if pivot is None:
            continue

        R[r], R[pivot] = R[pivot], R[r]
        R[r] = [v / R[r][c] for v in R[r]]
        for k in range(n_rows):
            if k != r and R[k][c] != 0:
                factor = R[k][c]
                R[k] = [a - factor * b for a, b in zip(R[k], R[r])]

        pivots.append(c)
        r += 1
        if r == n_rows:
            break

    free = next(c for c in range(n_cols) if c not in pivots)
    v = [Fraction(0)] * n_cols
    v[free] = Fraction(1)
    for row, c in enumerate(pivots):
        v[c] = -R[row][free]
    return v


def _move_to_boundary(x: list, J: List[int], eps: Sequence, exact: bool):
    def limit(sign):
        steps = []
        for k, e in zip(J, eps):
            e = sign * e
            if e > 0:
                steps.append(((1 - x[k]) / e, k))
            elif e < 0:
                steps.append((x[k] / -e, k))
        return min(steps)

    (t_plus, k_plus), (t_minus, k_minus) = limit(1), limit(-1)
    sign, t, hit = (1, t_plus, k_plus) if t_plus <= t_minus else (-1, t_minus, k_minus)

    for k, e in zip(J, eps):
        x[k] = x[k] + sign * t * e
        if not exact:
            x[k] = _snap_value(x[k], TOLERANCE)

    # the entry that limits the step lands exactly on the boundary
    x[hit] = Fraction(round(x[hit])) if exact else float(round(x[hit]))


def exhaustive_round(A, x: Sequence) -> RoundingOutcome:
    """Try every rounding of the fractional entries of x with the right mass,
    and return the one minimizing max_r (Ay)_r / max(1, (Ax)_r).
    Ties are broken by enumeration order (lexicographic in the positions).
    """
    A_float = np.asarray(A, dtype=float)
    m = A_float.shape[0]
    exact = is_exact_array(x)
    fractional = fractional_indices(x)
    if len(fractional) > m + 1:
        raise ValueError(f'{len(fractional)} fractional entries, expected at most m+1 = {m + 1}')

    mass = sum(x[i] for i in fractional)
    integral = mass.denominator == 1 if exact else abs(mass - round(mass)) <= TOLERANCE
    if not integral:
        raise RoundingError(f'no rounding matches the cardinality: fractional mass {mass}')

    base = np.array([1 if (not exact and v >= 1 - TOLERANCE) or v == 1 else 0 for v in x],
                    dtype=int)
    denominators = np.maximum(1., A_float @ np.asarray(x, dtype=float))

    best, best_score = None, math.inf
    for chosen in combinations(fractional, int(round(mass))):
        y = base.copy()
        y[list(chosen)] = 1
        score = (A_float @ y / denominators).max() if m else 0.
        if score < best_score:
            best, best_score = y, score

    return _outcome(best, A_float, np.asarray(x, dtype=float))


################################################################################
# RAM model
################################################################################


def uses_few_rows(m: int, n: int) -> bool:
    """True if all 2^(m+1) roundings of m+1 fractional entries fit in O(n).
    """
    return 2 ** (m + 1) <= 2 * n


def ram_round(A, x: Sequence) -> RoundingOutcome:
    """Round x using binary matrices only in the estimator.

    With few rows (2^(m+1) <= 2n), reduce the fractional entries and enumerate
    the roundings. Otherwise round all binary layers of A at once with
    failure probability 1/(2 m ell) per layer row. In both cases the outcome
    carries explicit row bounds, which are asserted.
    """
    A_float = np.asarray(A, dtype=float)
    m, n = A_float.shape

    if uses_few_rows(m, n):
        reduced = reduce_fractionals(A, x)
        outcome = exhaustive_round(A, reduced)
        mu = np.maximum(1., A_float @ np.asarray(x, dtype=float))
        delta = max(delta_bound(mu_r, 1 / (2 * m)).delta for mu_r in mu)
        outcome.row_bounds = mu * (1 + delta)
    else:
        bits = bit_decompose(A)
        failure_prob = 1 / (2 * m * bits.ell)
        layered = derand_round(bits.stacked, x, failure_prob)
        outcome = _outcome(layered.y, A_float, np.asarray(x, dtype=float),
                           trace=layered.trace, steps=layered.steps)
        outcome.row_bounds = ram_bound(bits, x, failure_prob)

    _check_bounds(outcome)
    return outcome
