from fractions import Fraction
from hypothesis import given, settings
from hypothesis.strategies import integers
from pytest import raises
import numpy as np

from selecting_items.instance import gen_gap, gen_random, validate
from selecting_items.lp import FractionalSolution, Infeasible, IterationLimitError, LPModel, lp_feasible, minimal_C, minmax_value, simplex

assert_func = np.testing.assert_allclose
relative_tolerance = 0
absolute_tolerance = 1e-8


def single_scenario():
    return validate({'n': 4, 'p': 2, 'K': 1, 'costs': [[1, 2, 3, 4]]})


def triangle():
    # every pair of the first three items costs at least 1 in some scenario
    costs = [[1, 1, 0, 3],
             [1, 0, 1, 3],
             [0, 1, 1, 3]]
    return validate({'n': 4, 'p': 2, 'K': 3, 'costs': costs})


################################################################################
# Simplex
################################################################################


def test_simplex():
    result = simplex([-1, -1], [[1, 2], [3, 1]], [4, 6])
    assert result.status == 'optimal'
    assert_func(result.x, [1.6, 1.2], rtol=relative_tolerance,
                atol=absolute_tolerance)
    assert_func(result.objective, -2.8, atol=absolute_tolerance)


def test_simplex_exact():
    result = simplex([-1, -1], [[1, 2], [3, 1]], [4, 6], exact=True)
    assert result.status == 'optimal'
    assert list(result.x) == [Fraction(8, 5), Fraction(6, 5)]
    assert result.objective == Fraction(-14, 5)
    assert result.infeasibility == 0


def test_simplex_equality():
    # minimize x0 + 2 x1 + 3 x2 with x0 + x1 + x2 = 2 and x <= 1
    result = simplex([1, 2, 3], np.eye(3), [1, 1, 1], [[1, 1, 1]], [2])
    assert result.status == 'optimal'
    assert_func(result.x, [1, 1, 0], atol=absolute_tolerance)
    assert_func(result.objective, 3, atol=absolute_tolerance)


def test_simplex_negative_rhs():
    # x0 >= 1, written as -x0 <= -1
    result = simplex([1, 1], [[-1, 0]], [-1], exact=True)
    assert result.status == 'optimal'
    assert list(result.x) == [1, 0]


def test_simplex_infeasible():
    result = simplex([0, 0], [[1, 1]], [1], [[1, 1]], [2])
    assert result.status == 'infeasible'
    assert result.x is None
    assert result.infeasibility > 0.5


def test_simplex_unbounded():
    result = simplex([-1, 0], [[1, -1]], [1])
    assert result.status == 'unbounded'


def test_simplex_redundant_equalities():
    result = simplex([1, 1], A_eq=[[1, 1], [2, 2]], b_eq=[1, 2], exact=True)
    assert result.status == 'optimal'
    assert sum(result.x) == 1


def test_simplex_iteration_limit():
    with raises(IterationLimitError):
        simplex([-1, -1], [[1, 2], [3, 1]], [4, 6], max_pivots=0)


def test_simplex_dimension_mismatch():
    with raises(ValueError):
        simplex([1, 1], [[1, 1]], [1, 2])


################################################################################
# LP_C
################################################################################


def test_lp_model():
    model = LPModel.build(single_scenario(), 3)
    assert model.items == (0, 1, 2)
    assert model.matrix.tolist() == [[1, 2, 3]]
    assert list(model.scaled()[0]) == [Fraction(1, 3), Fraction(2, 3), 1]

    with raises(ValueError):
        LPModel.build(single_scenario(), -1)

    with raises(ZeroDivisionError):
        LPModel.build(single_scenario(), 0).scaled()


def test_lp_feasible():
    solution = lp_feasible(single_scenario(), 3)
    assert isinstance(solution, FractionalSolution)
    assert solution.items == (0, 1, 2)
    assert_func(solution.x, [1, 1, 0], atol=absolute_tolerance)
    solution.check(single_scenario(), 3)


def test_lp_feasible_too_few_items():
    result = lp_feasible(single_scenario(), 1)
    assert isinstance(result, Infeasible)
    assert result.certificate == 1


def test_lp_feasible_infeasible():
    result = lp_feasible(single_scenario(), Fraction(5, 2), exact=True)
    assert isinstance(result, Infeasible)
    assert result.certificate > 0


def test_lp_feasible_gap_witness():
    solution = lp_feasible(gen_gap(2), 1, exact=True)
    assert list(solution.x) == [Fraction(1, 2)] * 4
    assert solution.attained_value == 1


def test_minmax_value():
    solution = minmax_value(triangle(), [0, 1, 2], exact=True)
    assert solution.attained_value == Fraction(4, 3)
    assert list(solution.x) == [Fraction(2, 3)] * 3

    assert isinstance(minmax_value(triangle(), [0]), Infeasible)

    with raises(ValueError):
        minmax_value(triangle(), [])


################################################################################
# Minimal C
################################################################################


def test_minimal_C_single_scenario():
    C, solution = minimal_C(single_scenario())
    assert C == 3
    assert solution.items == (0, 1, 2)
    assert_func(solution.x, [1, 1, 0], atol=absolute_tolerance)


def test_minimal_C_between_breakpoints():
    C, solution = minimal_C(triangle(), exact=True)
    assert C == Fraction(4, 3)
    assert list(solution.x) == [Fraction(2, 3)] * 3

    C, solution = minimal_C(triangle())
    assert C == Fraction(4, 3)
    solution.check(triangle(), C)


def test_minimal_C_gap():
    for k in (1, 2, 3):
        C, solution = minimal_C(gen_gap(k))
        assert C == 1
        solution.check(gen_gap(k), C)


def test_minimal_C_zero_costs():
    instance = validate({'n': 3, 'p': 2, 'K': 2, 'costs': [[0, 5, 0], [0, 5, 0]]})
    C, solution = minimal_C(instance)
    assert C == 0
    assert solution.items == (0, 2)
    assert solution.attained_value == 0


def test_minimal_C_n_equals_p():
    instance = validate({'n': 2, 'p': 2, 'K': 2, 'costs': [[1, 2], [3, 1]]})
    C, _ = minimal_C(instance, exact=True)
    assert C == 4


@settings(max_examples=20, deadline=None)
@given(integers(2, 7), integers(1, 4), integers(0, 2**32))
def test_minimal_C_is_minimal(n, K, seed):
    instance = gen_random(n, K, max(1, n // 2), 10, seed)
    C, solution = minimal_C(instance, exact=True)
    solution.check(instance, C, tol=0)

    if C > 0:
        below = C - Fraction(1, 10**6)
        assert isinstance(lp_feasible(instance, below, exact=True), Infeasible)


@settings(max_examples=20, deadline=None)
@given(integers(2, 10), integers(1, 6), integers(0, 2**32))
def test_minimal_C_float_matches_exact(n, K, seed):
    instance = gen_random(n, K, max(1, n // 3), 20, seed)
    exact, _ = minimal_C(instance, exact=True)
    approx, solution = minimal_C(instance)
    assert_func(float(approx), float(exact), rtol=1e-8)
    solution.check(instance, approx)


@settings(max_examples=20, deadline=None)
@given(integers(2, 7), integers(1, 4), integers(0, 2**32))
def test_minimal_C_infeasible_down_to_previous_breakpoint(n, K, seed):
    instance = gen_random(n, K, max(1, n // 2), 10, seed)
    C, _ = minimal_C(instance, exact=True)
    if C == 0:
        return

    previous = max([int(t) for t in instance.item_max_costs if t < C], default=0)
    for below in (C - Fraction(1, 10**6), (previous + C) / 2, Fraction(previous)):
        if below < C:
            assert isinstance(lp_feasible(instance, below, exact=True), Infeasible)


@settings(max_examples=20, deadline=None)
@given(integers(2, 7), integers(1, 4), integers(0, 2**32), integers(0, 30))
def test_lp_feasible_is_monotone(n, K, seed, extra):
    instance = gen_random(n, K, max(1, n // 2), 10, seed)
    C, _ = minimal_C(instance, exact=True)
    for above in (C, C + Fraction(extra, 7), C + extra, 2 * C + extra):
        solution = lp_feasible(instance, above, exact=True)
        assert isinstance(solution, FractionalSolution)
        solution.check(instance, above, tol=0)


def test_minimal_C_all_items_is_the_largest_row_sum():
    instance = gen_random(57, 46, 57, 22, 19)
    largest = max(int(s) for s in instance.costs.sum(axis=1))
    for exact in (False, True):
        C, solution = minimal_C(instance, exact)
        assert C == largest
        assert list(solution.x) == [1] * 57
        solution.check(instance, C)


def test_minimal_C_large_instances():
    for seed in range(3):
        instance = gen_random(100, 50, 30, 100, seed)
        C, solution = minimal_C(instance)
        solution.check(instance, C)
        assert np.all((0 <= solution.x) & (solution.x <= 1))
        # C* is a lower bound on any selection
        assert C <= instance.select(range(30)).max_cost
