"""Randomized rounding of fractional selections.

Dependent rounding moves mass between pairs of fractional entries, so the
total mass (the cardinality) is preserved exactly, while each entry is still
rounded up with probability equal to its value. Independent rounding is kept
as a baseline; it does not preserve the cardinality.

`delta_bound` inverts the Chernoff bound
```
Pr(X >= (1 + delta) mu) <= [e^delta / (1 + delta)^(1 + delta)]^mu
```
for a sum X of independent [0,1] variables with mean mu.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence
import logging
import math

import numpy as np
from scipy.optimize import bisect

from util import Number, fractional_indices, is_integral, snap

TOLERANCE = 1e-9
BISECTION_RTOL = 1e-12
MIN_MU = 1e-12

RNG_NAME = 'numpy.random.PCG64'


class RoundingError(ValueError):
    pass


@dataclass(frozen=True)
class TailBound:
    """The deviation that a Chernoff bound certifies at a given failure probability.

    Parameters
    ----------
        mu : row mass
        failure_prob : q
        delta : relative deviation, the root of [e^d/(1+d)^(1+d)]^mu = q
        Delta : additive deviation mu * delta
    """
    mu: float
    failure_prob: float
    delta: float
    Delta: float


@dataclass
class RoundingOutcome:
    """A binary vector y that rounds a fractional vector x.

    Parameters
    ----------
        y : binary vector
        selected : the positions where y is 1
        row_values : Ay, if a matrix A was given
        seed : the seed of the generator (randomized backends)
        rng : the name of the generator algorithm
        trace : estimator values after each step (derandomized backends)
        steps : number of pairing or reduction steps
        row_bounds : upper bounds on Ay guaranteed by the backend
        row_errors : the rounding errors Ay - Ax, if A and x were given
    """
    y: np.ndarray
    selected: tuple
    row_values: Optional[np.ndarray] = None
    seed: Optional[int] = None
    rng: Optional[str] = None
    trace: Optional[List[float]] = None
    steps: int = 0
    row_bounds: Optional[np.ndarray] = field(default=None, repr=False)
    row_errors: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def mass(self) -> int:
        return int(self.y.sum())


################################################################################
# Chernoff bounds
################################################################################


def chernoff_exponent(delta: float) -> float:
    """Return -ln(e^delta / (1 + delta)^(1 + delta)), which is increasing in delta.
    """
    return (1 + delta) * math.log1p(delta) - delta


def delta_bound(mu: Number, failure_prob: Number) -> TailBound:
    """Solve [e^delta / (1 + delta)^(1 + delta)]^mu = failure_prob for delta.

    The root is found by bisection, after doubling an upper bracket.
    Masses below MIN_MU are raised to MIN_MU.
    """
    if not 0 < failure_prob < 1:
        raise ValueError(f'failure_prob must be in (0, 1), got {failure_prob}')
    if mu < 0:
        raise ValueError(f'mu must be nonnegative, got {mu}')

    mu = max(float(mu), MIN_MU)
    target = -math.log(float(failure_prob)) / mu

    def f(delta):
        return chernoff_exponent(delta) - target

    hi = 1.
    while f(hi) < 0:
        hi *= 2

    delta = bisect(f, 0., hi, xtol=1e-300, rtol=BISECTION_RTOL, maxiter=2000)
    return TailBound(mu, float(failure_prob), delta, mu * delta)


def closed_form_bound(K: int) -> float:
    """An upper bound on Delta(1, 1/(2K)):
    ```
    e ln(2K) / ln(e ln(2K))
    ```
    """
    log = math.log(2 * K)
    return math.e * log / math.log(math.e * log)


def row_bounds(A: np.ndarray, x: np.ndarray, failure_prob: float) -> np.ndarray:
    """Return (Ax)_r + Delta(max(1, (Ax)_r), q) for every row.
    """
    values = np.asarray(A, dtype=float) @ np.asarray(x, dtype=float)
    return np.array([v + delta_bound(max(1., v), failure_prob).Delta for v in values])


def rounding_errors(A, x, y) -> np.ndarray:
    """The signed rounding errors (Ay)_r - (Ax)_r.
    """
    A = np.asarray(A, dtype=float)
    return A @ np.asarray(y, dtype=float) - A @ np.asarray(x, dtype=float)


################################################################################
# Rounding
################################################################################


def snap_mass(x: Sequence[Number], tol=TOLERANCE) -> np.ndarray:
    """Snap x onto [0,1] and restore an exactly integral total.

    Entries within `tol` of 0 or 1 are rounded. The remaining difference to the
    nearest integer is moved onto the largest fractional entry.
    Raise a RoundingError if the mass is not integral up to `tol`.
    """
    x = snap(np.asarray(x, dtype=float), tol)
    if np.any(x < -tol) or np.any(x > 1 + tol):
        raise RoundingError('x is not in [0,1]')

    x = np.clip(x, 0., 1.)
    total = x.sum()
    target = round(total)
    if not is_integral(total, tol * max(1, len(x))):
        raise RoundingError(f'non-integral total mass {total}')

    fractional = fractional_indices(x, tol)
    if fractional:
        i = max(fractional, key=lambda i: x[i])
        x[i] = min(1., max(0., x[i] + target - x.sum()))

    return x


def new_seed() -> int:
    return int(np.random.SeedSequence().entropy) & (2**64 - 1)


def pair_moves(xi: float, xj: float):
    """The two moves of a pairing step, as (d1, d2).
    Either add d1 to x_i and subtract it from x_j, or subtract d2 from x_i and
    add it to x_j. Each move makes at least one of the entries integral.
    """
    return min(1 - xi, xj), min(xi, 1 - xj)


def apply_move(x: List[float], i: int, j: int, d: float, tol=TOLERANCE):
    """Add d to x_i and subtract it from x_j, snapping the results.
    """
    x[i] = _snap_value(x[i] + d, tol)
    x[j] = _snap_value(x[j] - d, tol)


def _snap_value(v: float, tol: float) -> float:
    if v <= tol:
        return 0.
    if v >= 1 - tol:
        return 1.
    return v


def randomized_round(x: Sequence[Number], seed: int = None, A=None,
                     rng: np.random.Generator = None) -> RoundingOutcome:
    """Dependent randomized rounding with an exact cardinality.

    While at least two entries are fractional, take the two lowest-index
    fractional entries i < j. With d1, d2 = pair_moves(x_i, x_j), move
    (+d1, -d1) with probability d2 / (d1 + d2), else (-d2, +d2).
    Then Pr(y_i = 1) = x_i for all i, and sum(y) = sum(x).

    Parameters
    ----------
        x : fractional vector with an integral sum
        seed : seed for numpy.random.default_rng. A fresh one is drawn if None.
        A : optional matrix; its row values Ay are reported
        rng : optional generator to draw from instead of seeding a new one,
            e.g. to run many trials from a single stream
    """
    if rng is None:
        if seed is None:
            seed = new_seed()
        rng = np.random.default_rng(seed)

    start = snap_mass(x)
    values = list(start)
    fractional = fractional_indices(values)

    steps = 0
    while len(fractional) >= 2:
        i, j = fractional[0], fractional[1]
        d1, d2 = pair_moves(values[i], values[j])
        if rng.random() < d2 / (d1 + d2):
            apply_move(values, i, j, d1)
        else:
            apply_move(values, i, j, -d2)

        steps += 1
        fractional = [k for k in fractional if 0 < values[k] < 1]

    return _outcome(values, A, start, seed=seed, rng=RNG_NAME, steps=steps)


def independent_round(x: Sequence[Number], seed: int = None, A=None,
                      rng: np.random.Generator = None) -> RoundingOutcome:
    """Round each entry independently: y_i = 1 with probability x_i.
    The cardinality of y is not controlled.
    """
    if rng is None:
        if seed is None:
            seed = new_seed()
        rng = np.random.default_rng(seed)

    x = np.asarray(x, dtype=float)
    y = (rng.random(len(x)) < x).astype(int)
    return _outcome(y, A, x, seed=seed, rng=RNG_NAME)


def _outcome(values, A=None, x=None, **kwds) -> RoundingOutcome:
    if any(0 < v < 1 for v in values):
        # a lone fractional entry can only come from float drift in the mass
        logging.debug('rounding the last fractional entry to the nearest integer')

    y = np.array([int(round(v)) for v in values], dtype=int)
    selected = tuple(int(i) for i in np.flatnonzero(y))
    row_values = row_errors = None
    if A is not None:
        row_values = np.asarray(A, dtype=float) @ y
        if x is not None:
            row_errors = rounding_errors(A, x, y)

    return RoundingOutcome(y, selected, row_values, row_errors=row_errors, **kwds)
