from fractions import Fraction
from hypothesis import given, settings
from hypothesis.strategies import integers
from itertools import product
from pytest import raises
import numpy as np

from selecting_items.derand import DerandomizationError, EstimatorState, bit_decompose, derand_round, exhaustive_round, n_digits, ram_bound, ram_round, reduce_fractionals, uses_few_rows
from selecting_items.instance import gen_gap, gen_random
from selecting_items.lp import LPModel, minimal_C
from selecting_items.rounding import RoundingError, closed_form_bound, delta_bound, randomized_round

assert_func = np.testing.assert_allclose
absolute_tolerance = 1e-9


def random_system(m, n, seed, mass=None):
    """A random matrix in [0,1] and a fractional vector with an integral sum.
    """
    rng = np.random.default_rng(seed)
    A = rng.random((m, n))
    if mass is None:
        mass = max(1, n // 2)
    x = np.full(n, mass / n)
    return A, x


def scaled_instance(instance):
    """The cost matrix on the candidate items divided by C*, and the LP solution.
    """
    C, solution = minimal_C(instance)
    if C == 0:
        return None, None

    model = LPModel.build(instance, C)
    return model.scaled().astype(float), np.asarray(solution.x, dtype=float)


################################################################################
# Pessimistic estimator
################################################################################


def test_estimator_initial_value():
    A, x = random_system(5, 12, seed=1)
    state = EstimatorState.start(A, x, 1 / 10)
    assert state.value <= 0.5 + 1e-12
    assert_func(state.recompute(x), state.log_terms)


def test_estimator_moved():
    A, x = random_system(3, 6, seed=2)
    x = list(x)
    state = EstimatorState.start(A, np.array(x), 1 / 6)
    moved = state.moved(x, 0, 1, 0.25)

    y = list(x)
    y[0] += 0.25
    y[1] -= 0.25
    assert_func(moved, state.recompute(y), rtol=1e-12)


def test_derand_round_integral():
    A, _ = random_system(3, 4, seed=3)
    outcome = derand_round(A, [1, 0, 1, 0])
    assert list(outcome.y) == [1, 0, 1, 0]
    assert outcome.steps == 0
    assert_func(outcome.row_values, A @ [1, 0, 1, 0])


def test_derand_round_single_row():
    outcome = derand_round([[1, 1]], [0.5, 0.5])
    assert sorted(outcome.y) == [0, 1]
    assert list(outcome.row_values) == [1]


def test_derand_round_gap_k2():
    A = gen_gap(2).costs.astype(float)
    outcome = derand_round(A, [0.5] * 4)
    assert outcome.mass == 2
    bound = 1 + delta_bound(1, 1 / 12).Delta
    assert outcome.row_values.max() <= bound <= 1 + closed_form_bound(6)


def test_derand_round_estimator_trace():
    A, x = random_system(8, 30, seed=4)
    outcome = derand_round(A, x)
    trace = outcome.trace
    assert trace[0] <= 0.5 + 1e-12
    assert trace[-1] < 1
    assert all(b <= a + 1e-8 for a, b in zip(trace, trace[1:]))
    assert len(trace) == outcome.steps + 1


def test_derand_round_is_deterministic():
    A, x = random_system(6, 25, seed=5)
    first, second = derand_round(A, x), derand_round(A, x)
    assert list(first.y) == list(second.y)
    assert first.trace == second.trace


def test_derand_round_invalid():
    with raises(ValueError):
        derand_round([[2, 0]], [0.5, 0.5])

    with raises(RoundingError):
        derand_round([[1, 1]], [0.5, 0.25])

    with raises(ValueError):
        derand_round([[1, 1]], [0.5, 0.25, 0.25])


def test_derand_round_estimator_must_start_below_one():
    A, x = random_system(4, 10, seed=6)
    with raises(DerandomizationError):
        derand_round(A, x, failure_prob=0.9)


@settings(max_examples=40, deadline=None)
@given(integers(1, 12), integers(2, 40), integers(0, 2**32))
def test_derand_round_row_bounds(m, n, seed):
    A, x = random_system(m, n, seed)
    outcome = derand_round(A, x)

    assert outcome.mass == round(x.sum())
    assert outcome.steps <= n - 1
    Ax = A @ x
    Delta = np.array([delta_bound(max(1, v), 1 / (2 * m)).Delta for v in Ax])
    assert np.all(outcome.row_values <= Ax + Delta + absolute_tolerance)
    assert_func(outcome.row_bounds, Ax + Delta, rtol=1e-12)
    assert_func(outcome.row_errors, outcome.row_values - Ax, atol=absolute_tolerance)


def check_derand_round(n_instances, max_n, max_K, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        n = int(rng.integers(2, max_n + 1))
        K = int(rng.integers(1, max_K + 1))
        p = int(rng.integers(1, n + 1))
        instance = gen_random(n, K, p, int(rng.integers(1, 101)), int(rng.integers(2**32)))
        A, x = scaled_instance(instance)
        if A is None:
            continue

        outcome = derand_round(A, x)

        assert outcome.mass == p
        assert outcome.trace[0] <= 0.5 + 1e-12
        assert all(b <= a + 1e-8 for a, b in zip(outcome.trace, outcome.trace[1:]))
        Ax = A @ x
        Delta = np.array([delta_bound(max(1, v), 1 / (2 * K)).Delta for v in Ax])
        assert np.all(outcome.row_values <= Ax + Delta + absolute_tolerance)


def test_derand_round_random_instances():
    check_derand_round(200, 25, 10, seed=7)


def test_derand_round_large_instances():
    check_derand_round(10, 100, 50, seed=16)


def test_derand_round_against_randomized_round():
    A, x = random_system(4, 12, seed=8)
    outcome = derand_round(A, x)
    rng = np.random.default_rng(8)
    best = min((randomized_round(x, A=A, rng=rng).row_values - A @ x).max()
               for _ in range(1000))
    gap = (outcome.row_bounds - A @ x).max()
    assert (outcome.row_values - A @ x).max() <= best + gap


################################################################################
# Binary matrices
################################################################################


def test_n_digits():
    assert n_digits(1) == 1
    assert n_digits(2) == 1
    assert n_digits(8) == 3
    assert n_digits(9) == 4


def test_bit_decompose_dyadic():
    A = np.full((1, 8), 0.625)
    bits = bit_decompose(A)
    assert bits.ell == 3
    assert list(bits.layers[:, 0, 0]) == [1, 0, 1]
    assert_func(bits.approximation, A, atol=0)


def test_bit_decompose_one():
    bits = bit_decompose(np.ones((2, 8)))
    assert list(bits.layers[:, 0, 0]) == [1, 1, 1]
    assert_func(bits.approximation, np.full((2, 8), 1 - 2**-3))


def test_bit_decompose_tenth():
    bits = bit_decompose(np.full((1, 16), 0.1))
    assert bits.ell == 4
    assert_func(bits.approximation, np.full((1, 16), 0.0625))


def test_bit_decompose_exact():
    A = np.array([[Fraction(1, 3), Fraction(1), 0]], dtype=object)
    bits = bit_decompose(A)
    assert bits.ell == 2
    assert bits.approximation.tolist() == [[0.25, 0.75, 0]]


def test_bit_decompose_binary():
    # ones are truncated to 1 - 2^-ell, so every layer equals A
    A = np.array([[1, 0, 1], [0, 1, 1]])
    bits = bit_decompose(A)
    assert bits.ell == 2
    for layer in bits.layers:
        assert (layer == A).all()


def test_bit_decompose_stacked():
    bits = bit_decompose(np.array([[0.75, 0.25, 0.5, 0.], [0.5, 0.5, 0.5, 0.5]]))
    assert bits.stacked.shape == (4, 4)
    assert bits.stacked.tolist() == [[1, 0, 1, 0], [1, 1, 1, 1],
                                     [1, 1, 0, 0], [0, 0, 0, 0]]


def test_bit_decompose_error():
    rng = np.random.default_rng(9)
    for _ in range(100):
        m, n = rng.integers(1, 10, size=2)
        A = rng.random((m, n))
        bits = bit_decompose(A)
        error = A - bits.approximation
        assert error.min() >= 0
        assert error.max() <= 2.**-bits.ell <= 1 / n

        x = rng.random(n)
        assert np.abs(A @ x - bits.approximation @ x).max() <= 1


def test_bit_decompose_invalid():
    with raises(ValueError):
        bit_decompose(np.array([[1.5]]))


def test_ram_bound():
    bits = bit_decompose(np.array([[0.5, 0.5, 0.5, 0.5]]))
    x = np.full(4, 0.5)
    Delta = delta_bound(1, 0.1).Delta
    # only the first layer is nonzero; its mass is 2
    expected = 1 + 0.5 * (2 + delta_bound(2, 0.1).Delta) + 0.25 * (1 + Delta)
    assert_func(ram_bound(bits, x, 0.1), [expected])


################################################################################
# Few rows
################################################################################


def test_reduce_fractionals_unchanged():
    A = np.array([[1., 0.5, 0.25]])
    x = np.array([0.5, 0.5, 1.])
    assert list(reduce_fractionals(A, x)) == list(x)


def test_reduce_fractionals_exact():
    A = [[1, 1, 1]]
    x = [Fraction(1, 3)] * 3
    reduced = reduce_fractionals(A, x)
    assert sum(reduced) == 1
    assert sum(a * v for a, v in zip(A[0], reduced)) == 1
    assert sum(1 for v in reduced if 0 < v < 1) <= 2


def test_reduce_fractionals_rational_mode():
    rng = np.random.default_rng(10)
    for _ in range(20):
        m, n = int(rng.integers(1, 4)), int(rng.integers(4, 11))
        A = np.array([[Fraction(int(v), 7) for v in row]
                      for row in rng.integers(0, 8, size=(m, n))], dtype=object)
        x = [Fraction(1, 2)] * (n - n % 2) + [Fraction(0)] * (n % 2)
        reduced = reduce_fractionals(A, x)

        assert all(isinstance(v, Fraction) for v in reduced)
        assert sum(reduced) == sum(x)
        assert list(A @ np.array(reduced, dtype=object)) == list(A @ np.array(x, dtype=object))
        assert sum(1 for v in reduced if 0 < v < 1) <= m + 1


@settings(max_examples=30, deadline=None)
@given(integers(1, 4), integers(2, 30), integers(0, 2**32))
def test_reduce_fractionals_float_mode(m, n, seed):
    A, x = random_system(m, n, seed)
    reduced = reduce_fractionals(A, x)
    assert len([v for v in reduced if 1e-9 < v < 1 - 1e-9]) <= m + 1
    assert_func(A @ reduced, A @ x, atol=1e-9 * max(1, np.abs(A).max()) * n)
    assert_func(reduced.sum(), x.sum(), atol=1e-9)


def brute_force_round(A, x):
    """The best rounding of x over all binary vectors with the same mass.
    """
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    denominators = np.maximum(1, A @ x)
    n, mass = len(x), round(x.sum())
    best = min((A @ np.array(y) / denominators).max()
               for y in product((0, 1), repeat=n)
               if sum(y) == mass and all(y[i] == x[i] for i in range(n) if x[i] in (0, 1)))
    return best


def test_exhaustive_round_integral():
    outcome = exhaustive_round([[1, 2, 3]], [1, 0, 1])
    assert list(outcome.y) == [1, 0, 1]


def test_exhaustive_round_two_candidates():
    outcome = exhaustive_round([[0.9, 0.1, 0.5]], [0.5, 0.5, 1])
    assert list(outcome.y) == [0, 1, 1]


def test_exhaustive_round_too_many_fractionals():
    with raises(ValueError):
        exhaustive_round([[1, 1, 1]], [0.5, 0.5, 0.5, 0.5])


def test_exhaustive_round_cardinality():
    with raises(RoundingError):
        exhaustive_round([[1, 1]], [0.5, 0.25])


def test_exhaustive_round_matches_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(50):
        m, n = int(rng.integers(1, 4)), int(rng.integers(2, 11))
        A, x = random_system(m, n, int(rng.integers(2**32)))
        reduced = reduce_fractionals(A, x)
        outcome = exhaustive_round(A, reduced)
        score = (outcome.row_values / np.maximum(1, A @ reduced)).max()
        assert_func(score, brute_force_round(A, reduced), rtol=1e-12)


################################################################################
# RAM model
################################################################################


def test_uses_few_rows():
    assert uses_few_rows(1, 8)
    assert uses_few_rows(3, 8)
    assert not uses_few_rows(4, 8)


def test_ram_round_small_m():
    A = np.full((1, 8), 0.5)
    x = np.full(8, 0.5)
    outcome = ram_round(A, x)
    assert outcome.mass == 4
    assert outcome.row_values[0] == 2
    assert outcome.row_values[0] <= outcome.row_bounds[0]


def test_ram_round_integral():
    A, _ = random_system(5, 6, seed=13)
    y = [0, 1, 1, 0, 1, 0]
    assert list(ram_round(A, y).y) == y
    A, _ = random_system(1, 6, seed=13)
    assert list(ram_round(A, y).y) == y


def test_ram_round_binary_matches_derand():
    A = (np.random.default_rng(14).random((6, 10)) < 0.5).astype(int)
    x = np.full(10, 0.3)
    assert not uses_few_rows(6, 10)

    outcome = ram_round(A, x)
    bits = bit_decompose(A)
    layered = derand_round(bits.stacked, x, 1 / (2 * 6 * bits.ell))
    assert list(outcome.y) == list(layered.y)


def test_ram_round_exact_input():
    A = np.array([[Fraction(1, 3), Fraction(2, 3), 1, 0]], dtype=object)
    x = [Fraction(1, 2)] * 4
    outcome = ram_round(A, x)
    assert outcome.mass == 2


@settings(max_examples=30, deadline=None)
@given(integers(1, 10), integers(2, 30), integers(0, 2**32))
def test_ram_round_bound(m, n, seed):
    A, x = random_system(m, n, seed)
    outcome = ram_round(A, x)
    assert outcome.mass == round(x.sum())
    assert np.all(outcome.row_values <= outcome.row_bounds + absolute_tolerance)

    # Delta(mu, q) <= mu Delta(1, q) for mu >= 1, and the layers sum to at most A,
    # so the chain is at most (1 + Ax)(1 + Delta(1, 1/(2 m ell)))
    constant = 1 + closed_form_bound(m * n_digits(n))
    assert np.all(outcome.row_bounds <= (1 + A @ x) * constant + absolute_tolerance)


def test_ram_round_is_deterministic():
    A, x = random_system(7, 20, seed=15)
    assert list(ram_round(A, x).y) == list(ram_round(A, x).y)


def test_brute_force_sanity():
    assert brute_force_round([[1, 1]], [0.5, 0.5]) == 1
    assert brute_force_round([[1, 0, 0]], [0.5, 0.5, 1]) == 1
