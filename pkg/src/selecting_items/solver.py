"""End-to-end solvers.

`solve_approx` finds the smallest feasible threshold C* of the LP relaxation,
scales the costs of the candidate items by 1/C* and rounds the fractional
solution with one of the backends
- `random`: dependent randomized rounding
- `derand`: derandomized rounding with pessimistic estimators
- `ram`: derandomized rounding on binary matrices

`solve_exact` enumerates all selections and serves as an oracle.
`verify_gap` checks the integrality gap of the generated gap instances.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, islice
from typing import Dict, Optional
import json
import logging
import math
import time

import numpy as np
from scipy.special import comb

from selecting_items.derand import derand_round, ram_round
from selecting_items.instance import Instance, Selection, gap_witness, gen_gap
from selecting_items.lp import LPModel, minimal_C
from selecting_items.rounding import RoundingOutcome, TOLERANCE, closed_form_bound, \
    delta_bound, new_seed, randomized_round, row_bounds
from util import format_number, round_number

EXACT_BUDGET = 10**7
CHUNK_SIZE = 4096

METHODS = ('random', 'derand', 'ram')


class BudgetError(ValueError):
    pass


class GapVerificationError(AssertionError):
    pass


@dataclass
class SolveReport:
    """The result of a single solve.

    Parameters
    ----------
        method : random, derand, ram or exact
        lower_bound : C*, the smallest feasible LP threshold (the optimum for `exact`)
        selection : the selected items and their costs
        approx_ratio : max_cost / C*, or 1 if both are zero
        certified_bound : 1 + Delta(1, 1/(2K)), the a-priori guarantee of `derand`
        closed_form : 1 + e ln(2K) / ln(e ln(2K)), an upper bound on certified_bound
        seed : the seed of the random backend
        timings_us : duration of each stage in microseconds
        rounding : the raw output of the rounding backend
    """
    method: str
    name: str
    n: int
    K: int
    p: int
    lower_bound: Fraction
    selection: Selection
    approx_ratio: Fraction
    certified_bound: float
    closed_form: float
    seed: Optional[int] = None
    rng: Optional[str] = None
    timings_us: Dict[str, int] = field(default_factory=dict)
    rounding: Optional[RoundingOutcome] = field(default=None, repr=False)

    @property
    def max_cost(self) -> int:
        return self.selection.max_cost


def certified_bound(K: int) -> float:
    return 1 + delta_bound(1, 1 / (2 * K)).Delta


def ratio(max_cost: int, lower_bound: Fraction) -> Fraction:
    if lower_bound == 0:
        # C* = 0 implies a zero-cost selection
        return Fraction(1)
    return Fraction(max_cost) / lower_bound


class Stopwatch:
    def __init__(self):
        self.timings = {}
        self._start = self._last = time.perf_counter_ns()

    def lap(self, stage: str):
        now = time.perf_counter_ns()
        self.timings[stage] = (now - self._last) // 1000
        self._last = now

    def total(self) -> Dict[str, int]:
        self.timings['total'] = (time.perf_counter_ns() - self._start) // 1000
        return self.timings


################################################################################
# Approximation
################################################################################


def solve_approx(instance: Instance, method: str, seed: int = None,
                 exact=False) -> SolveReport:
    """Approximate the min-max selection by LP rounding.

    Parameters
    ----------
        instance : a validated instance
        method : one of random, derand or ram
        seed : seed for the random backend; a fresh seed is drawn and
            recorded if None
        exact : solve the LPs in rational arithmetic
    """
    if method not in METHODS:
        raise ValueError(f'unknown method {method!r}, expected one of {METHODS}')

    clock = Stopwatch()
    C, solution = minimal_C(instance, exact)
    clock.lap('lp')
    logging.info(f'{instance.name or instance}: C* = {C}')

    if method == 'random' and seed is None:
        seed = new_seed()

    rng_name = None
    outcome = None
    if C == 0:
        items = solution.items
    else:
        model = LPModel.build(instance, C)
        scaled = model.scaled()
        x = solution.x
        if method == 'random':
            A = scaled.astype(float)
            outcome = randomized_round(x, seed, A=A)
            outcome.row_bounds = row_bounds(A, x, 1 / (2 * instance.K))
            rng_name = outcome.rng
        elif method == 'derand':
            outcome = derand_round(scaled.astype(float), x)
        else:
            outcome = ram_round(scaled, x)

        items = [model.items[i] for i in outcome.selected]

    clock.lap('rounding')
    selection = instance.select(items)
    report = SolveReport(method, instance.name, instance.n, instance.K, instance.p,
                         C, selection, ratio(selection.max_cost, C),
                         certified_bound(instance.K),
                         1 + closed_form_bound(instance.K),
                         seed, rng_name, rounding=outcome)

    if method == 'derand':
        check_guarantee(report, report.certified_bound)
    elif method == 'ram' and outcome is not None:
        check_guarantee(report, float(outcome.row_bounds.max()))

    report.timings_us = clock.total()
    return report


def check_guarantee(report: SolveReport, bound: float, tol=TOLERANCE):
    """Assert that max_cost <= C* * bound.
    """
    limit = float(report.lower_bound) * bound
    assert report.max_cost <= limit * (1 + tol) + tol, \
        f'{report.method}: max cost {report.max_cost} exceeds C* x {bound:g} = {limit:g}'


def check_sandwich(approx: SolveReport, optimum: int, tol=TOLERANCE):
    """Assert that C* <= optimum <= approx.max_cost, and for `derand`, that
    approx.max_cost <= C* (1 + Delta(1, 1/(2K))).
    """
    assert float(approx.lower_bound) <= optimum * (1 + tol) + tol, \
        f'lower bound {approx.lower_bound} exceeds the optimum {optimum}'
    assert optimum <= approx.max_cost, \
        f'optimum {optimum} exceeds the approximate cost {approx.max_cost}'
    if approx.method == 'derand':
        check_guarantee(approx, approx.certified_bound, tol)


################################################################################
# Exact
################################################################################


def solve_exact(instance: Instance, budget: int = EXACT_BUDGET) -> SolveReport:
    """Find an optimal selection by enumerating all p-subsets.
    Among optimal selections, the lexicographically first is returned.
    """
    n_subsets = comb(instance.n, instance.p, exact=True)
    if n_subsets > budget:
        raise BudgetError(f'C({instance.n},{instance.p}) = {n_subsets} subsets '
                          f'exceed the budget of {budget}')

    clock = Stopwatch()
    best, best_value = None, math.inf
    subsets = combinations(range(instance.n), instance.p)
    while True:
        chunk = np.array(list(islice(subsets, CHUNK_SIZE)), dtype=np.intp)
        if not len(chunk):
            break

        values = instance.costs[:, chunk].sum(axis=2).max(axis=0)
        i = int(np.argmin(values))
        if values[i] < best_value:
            best, best_value = chunk[i], values[i]

    clock.lap('enumeration')
    logging.debug(f'enumerated {n_subsets} subsets, optimum {best_value}')

    selection = instance.select(best)
    optimum = Fraction(selection.max_cost)
    return SolveReport('exact', instance.name, instance.n, instance.K, instance.p,
                       optimum, selection, Fraction(1),
                       certified_bound(instance.K),
                       1 + closed_form_bound(instance.K),
                       timings_us=clock.total())


################################################################################
# Integrality gap
################################################################################


@dataclass(frozen=True)
class GapReport:
    """
    Parameters
    ----------
        lp_value : C*, the smallest feasible LP threshold
        witness_value : the largest scenario cost of the gap witness
        ip_value : the integral optimum
        gap : ip_value / lp_value
        theta : ln K / ln ln K
    """
    k: int
    p: int
    n: int
    K: int
    lp_value: Fraction
    witness_value: Fraction
    ip_value: int
    gap: Fraction
    theta: float


def theta(K: int) -> float:
    """ln K / ln ln K, or nan if K <= e.
    """
    if K <= math.e:
        return math.nan
    return math.log(K) / math.log(math.log(K))


def verify_gap(k: int, p: int = None, n: int = None, budget: int = EXACT_BUDGET,
               exact=False) -> GapReport:
    """Check that the gap instance for k has an LP value of at most 1 and an
    integral optimum of at least k.
    Raise a GapVerificationError otherwise.
    """
    instance = gen_gap(k, p, n)
    p, n = instance.p, instance.n

    x = gap_witness(k, p, n)
    witness_value = max(sum(Fraction(int(c)) * v for c, v in zip(row, x))
                        for row in instance.costs)
    if witness_value > 1:
        raise GapVerificationError(f'the gap witness has cost {witness_value} > 1')

    C, _ = minimal_C(instance, exact)
    if C > witness_value + TOLERANCE:
        raise GapVerificationError(f'C* = {C} exceeds the witness cost {witness_value}')

    ip_value = solve_exact(instance, budget).max_cost
    if ip_value < k:
        raise GapVerificationError(f'integral optimum {ip_value} is below k = {k}')

    gap = Fraction(ip_value) / C
    if gap < k:
        raise GapVerificationError(f'gap {gap} is below k = {k}')

    return GapReport(k, p, n, instance.K, C, witness_value, ip_value, gap,
                     theta(instance.K))


################################################################################
# Formatting
################################################################################


def report_to_dict(report: SolveReport, timings=False) -> dict:
    """A flat, json-compatible representation of a SolveReport.
    Numbers are rounded to 12 significant digits.
    """
    result = {
        'method': report.method,
        'instance': report.name,
        'n': report.n,
        'K': report.K,
        'p': report.p,
        'lower_bound': round_number(report.lower_bound),
        'lower_bound_fraction': str(report.lower_bound),
        'items': list(report.selection.items),
        'cost_per_scenario': list(report.selection.cost_per_scenario),
        'rounding_errors': _rounding_errors(report.rounding),
        'max_cost': report.max_cost,
        'approx_ratio': round_number(report.approx_ratio),
        'certified_bound': round_number(report.certified_bound),
        'closed_form_bound': round_number(report.closed_form),
        'seed': report.seed,
        'rng': report.rng,
    }
    if timings:
        for stage, us in report.timings_us.items():
            result[f'time_{stage}_us'] = us
    return result


def _rounding_errors(outcome: Optional[RoundingOutcome]):
    # (Ay)_r - (Ax)_r on the scaled costs
    if outcome is None or outcome.row_errors is None:
        return None
    return [round_number(float(e)) for e in outcome.row_errors]


def format_json(report: SolveReport, timings=False) -> str:
    return json.dumps(report_to_dict(report, timings), indent=2) + '\n'


def format_text(report: SolveReport, timings=False) -> str:
    """One `key: value` line per field, in the order of the JSON report.
    """
    return ''.join(f'{key}: {_text_value(value)}\n'
                   for key, value in report_to_dict(report, timings).items())


def format_gap(report: GapReport) -> str:
    lines = [('k', report.k), ('p', report.p), ('n', report.n), ('K', report.K),
             ('lp_value', report.lp_value), ('witness_value', report.witness_value),
             ('ip_value', report.ip_value), ('gap', report.gap),
             ('theta', report.theta)]
    text = ''.join(f'{key}: {_text_value(value)}\n' for key, value in lines)
    return text + f'gap >= k: {report.gap} >= {report.k}\n'


def _text_value(value) -> str:
    if value is None:
        return ''
    if isinstance(value, (list, tuple)):
        return ','.join(str(v) for v in value)
    if isinstance(value, (int, float, Fraction)) and not isinstance(value, bool):
        return format_number(value)
    return str(value)