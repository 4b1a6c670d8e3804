"""Instances of the Min-Max Selecting Items problem.

An instance has `n` items, `K` scenarios and a selection size `p`. Each
scenario assigns a nonnegative integral cost to every item; the cost matrix
has one row per scenario. A solution is a set of exactly `p` items and its
value is the largest total cost over all scenarios.

Items and scenarios are indexed from 0.

Instances are stored as JSON documents
```
{
  "n": 4,
  "p": 2,
  "K": 1,
  "name": "example",
  "costs": [
    [1, 2, 3, 4]
  ]
}
```
A CSV alternative is accepted as input: a header line `n,p,K` (values),
optionally preceded by the literal line `n,p,K`, followed by K cost rows.
"""
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb
from numbers import Integral
from typing import Iterable, List, Tuple
import json
import logging

import numpy as np

from util import crop

MAX_SCENARIOS = 10**6
INT64_MAX = np.iinfo(np.int64).max

FIELDS = ('n', 'p', 'K', 'name', 'costs')


class InstanceError(ValueError):
    pass


class ParseError(InstanceError):
    pass


@dataclass(frozen=True, eq=False)
class Instance:
    """An immutable, validated problem instance.
    Use `validate` or one of the generators to construct instances.
    """
    n: int
    p: int
    K: int
    costs: np.ndarray
    name: str = ''

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented

        return (self.n, self.p, self.K, self.name) == \
            (other.n, other.p, other.K, other.name) and \
            np.array_equal(self.costs, other.costs)

    def __repr__(self) -> str:
        return f'Instance(name={self.name!r}, n={self.n}, p={self.p}, K={self.K})'

    @property
    def item_max_costs(self) -> np.ndarray:
        """The largest cost of each item over all scenarios.
        """
        return self.costs.max(axis=0)

    def items_below(self, C) -> List[int]:
        """Return the items whose cost is at most C in every scenario.
        Comparisons are exact.
        """
        return [i for i, c in enumerate(self.item_max_costs) if int(c) <= C]

    def select(self, items: Iterable[int]) -> 'Selection':
        items = tuple(sorted(int(i) for i in items))
        if len(set(items)) != len(items):
            raise InstanceError(f'duplicate items in selection {items}')
        if len(items) != self.p:
            raise InstanceError(
                f'selection has {len(items)} items, expected p={self.p}')
        if items and not (0 <= items[0] and items[-1] < self.n):
            raise InstanceError(f'selection {items} is not a subset of [0, {self.n})')

        cost_per_scenario = tuple(int(c)
                                  for c in self.costs[:, list(items)].sum(axis=1))
        return Selection(items, cost_per_scenario, max(cost_per_scenario))


@dataclass(frozen=True)
class Selection:
    items: Tuple[int, ...]
    cost_per_scenario: Tuple[int, ...]
    max_cost: int


################################################################################
# Validation
################################################################################


def validate(raw: dict) -> Instance:
    """Convert decoded instance data to an Instance.
    Raise an InstanceError that names the offending field or index.

    Parameters
    ----------
        raw : mapping with keys `n`, `p`, `K`, `costs` and optionally `name`
            The costs can be any nested sequence (e.g. a list of lists or
            an integer ndarray).
    """
    for key in ('n', 'p', 'K', 'costs'):
        if key not in raw:
            raise InstanceError(f'missing field: {key}')

    n, p, K = (_integer_field(raw, key) for key in ('n', 'p', 'K'))

    if n < 1:
        raise InstanceError('n must be positive')
    if K < 1:
        raise InstanceError('K must be positive')
    if not 1 <= p <= n:
        raise InstanceError(f'p out of range: p={p}, expected 1 <= p <= n={n}')

    name = raw.get('name') or ''
    if not isinstance(name, str):
        raise InstanceError('name must be a string')

    costs = _cost_matrix(raw['costs'], n, K)
    return Instance(n, p, K, costs, name)


def _integer_field(raw: dict, key: str) -> int:
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise InstanceError(f'{key} must be an integer, got {value!r}')
    return int(value)


def _cost_matrix(raw_costs, n: int, K: int) -> np.ndarray:
    try:
        rows = list(raw_costs)
    except TypeError:
        raise InstanceError('costs must be a list of rows')

    if len(rows) != K:
        raise InstanceError(
            f'dimension mismatch: costs has {len(rows)} rows, expected K={K}')

    for S, row in enumerate(rows):
        try:
            row = list(row)
        except TypeError:
            raise InstanceError(f'costs row {S} is not a list')

        if len(row) != n:
            raise InstanceError(f'dimension mismatch: costs row {S} has '
                                f'{len(row)} entries, expected n={n}')

        for i, c in enumerate(row):
            if isinstance(c, bool) or not isinstance(c, Integral):
                raise InstanceError(f'non-integral cost at ({S},{i}): {c!r}')
            if c < 0:
                raise InstanceError(f'negative cost at ({S},{i}): {c}')
            if c > INT64_MAX:
                raise InstanceError(f'cost at ({S},{i}) exceeds 64 bits')

        # selection costs are summed in int64
        if sum(int(c) for c in row) > INT64_MAX:
            raise InstanceError(f'total cost of scenario {S} exceeds 64 bits')

    costs = np.array([[int(c) for c in row] for row in rows], dtype=np.int64)
    costs = costs.reshape(K, n)
    costs.setflags(write=False)
    return costs


################################################################################
# Generators
################################################################################


def gen_gap(k: int, p: int = None, n: int = None,
            max_scenarios: int = None) -> Instance:
    """Generate the integrality-gap instance for parameter k.

    There is one scenario S_T for every k-subset T of the first k² items, in
    lexicographic order. Scenario S_T costs 1 on T, 0 on the other items among
    the first k² + (p-k) items and 2 on all remaining items.

    Parameters
    ----------
        k : positive integer
        p : selection size, at least k. Defaults to k.
        n : item count, at least k² + (p-k). Defaults to that bound.
        max_scenarios : fail instead of generating more scenarios than this
    """
    if p is None:
        p = k
    if n is None:
        n = k * k + (p - k)
    if max_scenarios is None:
        max_scenarios = MAX_SCENARIOS

    if k < 1:
        raise InstanceError(f'k must be positive, got k={k}')
    if p < k:
        raise InstanceError(f'p out of range: p={p} must be at least k={k}')
    base = k * k + (p - k)
    if n < base:
        raise InstanceError(f'n out of range: n={n} must be at least '
                            f'k²+(p-k)={base}')

    K = comb(k * k, k)
    if K > max_scenarios:
        raise InstanceError(f'too many scenarios: C({k * k},{k}) = {K} '
                            f'exceeds the cap of {max_scenarios}')

    costs = np.full((K, n), 2, dtype=np.int64)
    costs[:, :base] = 0
    for S, T in enumerate(combinations(range(k * k), k)):
        costs[S, list(T)] = 1

    logging.debug(f'generated gap instance k={k}, p={p}, n={n}, K={K}')
    return validate({'n': n, 'p': p, 'K': K, 'costs': costs,
                     'name': f'gap-k{k}-p{p}-n{n}'})


def gap_witness(k: int, p: int = None, n: int = None) -> List[Fraction]:
    """The fractional point that makes LP_1 feasible on the gap instance:
    1/k on the first k² items, 1 on the next p-k items and 0 elsewhere.
    """
    if p is None:
        p = k
    if n is None:
        n = k * k + (p - k)

    x = [Fraction(1, k)] * (k * k) + [Fraction(1)] * (p - k)
    return x + [Fraction(0)] * (n - len(x))


def gen_random(n: int, K: int, p: int, max_cost: int, seed: int) -> Instance:
    """Generate an instance with costs drawn uniformly from {0, .., max_cost}.
    The result is a pure function of the arguments.
    """
    if max_cost < 1:
        raise InstanceError(f'max_cost must be positive, got {max_cost}')
    if n < 1 or K < 1:
        raise InstanceError(f'n and K must be positive, got n={n}, K={K}')

    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    costs = rng.integers(0, max_cost, size=(K, n), endpoint=True, dtype=np.int64)
    return validate({'n': n, 'p': p, 'K': K, 'costs': costs,
                     'name': f'random-n{n}-K{K}-p{p}-c{max_cost}-s{seed}'})


################################################################################
# Serialization
################################################################################


def serialize(instance: Instance) -> str:
    """Encode an instance as canonical JSON, with one cost row per line.
    The keys are emitted in a fixed order.
    """
    header = [f'  {json.dumps(key)}: {json.dumps(getattr(instance, key))}'
              for key in FIELDS[:-1]]
    rows = [f'    {json.dumps([int(c) for c in row])}' for row in instance.costs]
    costs = '  "costs": [\n' + ',\n'.join(rows) + '\n  ]'
    return '{\n' + ',\n'.join(header + [costs]) + '\n}\n'


def parse(text: str) -> Instance:
    """Decode a JSON or CSV instance document.
    """
    if text.lstrip().startswith('{'):
        return parse_json(text)
    return parse_csv(text)


def parse_json(text: str) -> Instance:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f'line {e.lineno}, column {e.colno}: {e.msg}')

    if not isinstance(raw, dict):
        raise ParseError('line 1: expected a JSON object')

    unknown = set(raw) - set(FIELDS)
    if unknown:
        raise ParseError(f'unknown field: {sorted(unknown)[0]}')

    return validate(raw)


def parse_csv(text: str) -> Instance:
    lines = [(i + 1, line.strip()) for i, line in enumerate(text.splitlines())]
    lines = [(i, line) for i, line in lines if line and not line.startswith('#')]
    if not lines:
        raise ParseError('line 1: empty document')

    if lines[0][1].replace(' ', '').lower() == 'n,p,k':
        lines = lines[1:]
        if not lines:
            raise ParseError('line 2: missing header values n,p,K')

    lineno, header = lines[0]
    values = _parse_integers(lineno, header)
    if len(values) != 3:
        raise ParseError(f'line {lineno}: expected 3 header values n,p,K, '
                         f'got {len(values)}')
    n, p, K = values

    rows = [_parse_integers(i, line) for i, line in lines[1:]]
    if len(rows) != K and n > 0 and K > 0:
        raise ParseError(f'line {lines[-1][0]}: expected {K} cost rows, '
                         f'found {len(rows)}')

    return validate({'n': n, 'p': p, 'K': K, 'costs': rows})


def _parse_integers(lineno: int, line: str) -> List[int]:
    values = []
    for column, token in enumerate(line.split(','), start=1):
        token = token.strip()
        try:
            values.append(int(token))
        except ValueError:
            raise ParseError(f'line {lineno}, field {column}: malformed token '
                             f'{crop(token, 20)!r}')
    return values
