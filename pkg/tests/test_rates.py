from __future__ import annotations

import unittest
from fractions import Fraction

import numpy as np

from lowerchain.gambles import DimensionMismatchError, StateSpace, identity_operator
from lowerchain.rates import (
    InadmissibleStepError,
    IntervalModel,
    InvalidRateModelError,
    PreciseModel,
    RowSetModel,
    induced_transition_step,
    lower_apply,
    lower_apply_exact,
    norm_bound,
    rate_from_transition,
    upper_apply,
    upper_apply_exact,
    zero_model,
)
from lowerchain.semigroup import DiscreteLTO

TWO = StateSpace.of_size(2)


def symmetric() -> PreciseModel:
    return PreciseModel.from_matrix(TWO, [[-1, 1], [1, -1]])


def interval() -> IntervalModel:
    return IntervalModel.from_bounds(TWO, [[0, 1], [1, 0]], [[0, 2], [3, 0]])


class LowerApplyTests(unittest.TestCase):
    def test_precise_is_a_matrix_vector_product(self) -> None:
        result = lower_apply(symmetric(), TWO.gamble([0, 1]))
        self.assertEqual(result.as_tuple(), (1.0, -1.0))

    def test_constants_map_to_zero(self) -> None:
        rows = RowSetModel.from_rows(TWO, [[[-1, 1], [-2, 2]], [[3, -3]]])
        for model in (symmetric(), interval(), rows, zero_model(TWO)):
            with self.subTest(kind=model.kind):
                self.assertEqual(lower_apply(model, TWO.constant(4.2)).as_tuple(), (0.0, 0.0))
                self.assertEqual(upper_apply(model, TWO.constant(-1.5)).as_tuple(), (0.0, 0.0))

    def test_interval_uses_the_extreme_selection(self) -> None:
        f = TWO.gamble([0, 1])
        self.assertEqual(lower_apply(interval(), f).as_tuple(), (1.0, -3.0))
        self.assertEqual(upper_apply(interval(), f).as_tuple(), (2.0, -1.0))

    def test_precise_upper_equals_lower(self) -> None:
        f = TWO.gamble([0.3, -2.0])
        self.assertEqual(lower_apply(symmetric(), f), upper_apply(symmetric(), f))

    def test_exact_evaluation(self) -> None:
        self.assertEqual(lower_apply_exact(interval(), [0, 1]), (Fraction(1), Fraction(-3)))
        self.assertEqual(upper_apply_exact(interval(), ["0", "1"]), (Fraction(2), Fraction(-1)))

    def test_dimension_mismatch(self) -> None:
        with self.assertRaises(DimensionMismatchError):
            _ = lower_apply(symmetric(), StateSpace.of_size(3).gamble([0, 1, 2]))
        with self.assertRaises(DimensionMismatchError):
            _ = lower_apply_exact(symmetric(), [0, 1, 2])

    def test_rowsets_match_brute_force_over_selections(self) -> None:
        rng = np.random.default_rng(5)
        space = StateSpace.of_size(4)
        for _ in range(10):
            rows = []
            for x in range(4):
                candidates = []
                for _ in range(int(rng.integers(1, 4))):
                    row = [float(rng.uniform(0, 2)) if y != x else 0.0 for y in range(4)]
                    row[x] = -sum(row)
                    candidates.append(row)
                rows.append(candidates)
            model = RowSetModel.from_rows(space, rows)
            f = space.gamble(rng.normal(size=4))
            brute = np.min([matrix @ f.values for matrix in model.extreme_matrices()], axis=0)
            np.testing.assert_allclose(lower_apply(model, f).values, brute, atol=1e-12)

    def test_interval_rule_matches_brute_force_over_corners(self) -> None:
        rng = np.random.default_rng(9)
        space = StateSpace.of_size(4)
        for _ in range(10):
            lower = rng.uniform(0, 1, size=(4, 4))
            upper = lower + rng.uniform(0, 1, size=(4, 4))
            model = IntervalModel.from_bounds(space, lower.tolist(), upper.tolist())
            self.assertEqual(model.extreme_count(), 8**4)
            f = space.gamble(rng.normal(size=4))
            for x in range(4):
                corners = np.array([[float(rate) for rate in row] for row in model.row_candidates(x)])
                self.assertEqual(len(corners), 8)
                self.assertAlmostEqual(lower_apply(model, f).values[x], float((corners @ f.values).min()), places=12)

    def test_single_state_model_is_zero(self) -> None:
        one = StateSpace(("only",))
        model = PreciseModel.from_matrix(one, [[0]])
        self.assertEqual(lower_apply(model, one.gamble([3.0])).as_tuple(), (0.0,))
        self.assertEqual(norm_bound(model).value, 0.0)


class ValidationTests(unittest.TestCase):
    def test_negative_off_diagonal_names_the_entry(self) -> None:
        with self.assertRaises(InvalidRateModelError) as ctx:
            _ = PreciseModel.from_matrix(TWO, [[1, -1], [1, -1]])
        self.assertEqual(ctx.exception.entry, ("s0", "s1"))

    def test_rational_row_must_sum_to_zero_exactly(self) -> None:
        with self.assertRaises(InvalidRateModelError):
            _ = PreciseModel.from_matrix(TWO, [["-1", "1.1"], ["1", "-1"]])

    def test_float_rows_get_a_small_tolerance(self) -> None:
        model = PreciseModel.from_matrix(TWO, [[-0.3, 0.1 + 0.2], [1.0, -1.0]])
        self.assertEqual(model.matrix.entries[0][0], -model.matrix.entries[0][1])
        with self.assertRaises(InvalidRateModelError):
            _ = PreciseModel.from_matrix(TWO, [[-0.3, 0.3 + 1e-9], [1.0, -1.0]])

    def test_interval_bounds_are_checked(self) -> None:
        with self.assertRaises(InvalidRateModelError) as ctx:
            _ = IntervalModel.from_bounds(TWO, [[0, 2], [1, 0]], [[0, 1], [1, 0]])
        self.assertEqual(ctx.exception.entry, ("s0", "s1"))
        with self.assertRaises(InvalidRateModelError):
            _ = IntervalModel.from_bounds(TWO, [[0, -1], [1, 0]], [[0, 1], [1, 0]])

    def test_interval_errors_name_the_failing_bound(self) -> None:
        with self.assertRaises(InvalidRateModelError) as ctx:
            _ = IntervalModel.from_bounds(TWO, [[0, 1], [1, 0]], [[0, "x"], [1, 0]])
        self.assertEqual(ctx.exception.bound, "upper")
        self.assertEqual(ctx.exception.entry, ("s0", "s1"))
        with self.assertRaises(InvalidRateModelError) as ctx:
            _ = IntervalModel.from_bounds(TWO, [[0, 2], [1, 0]], [[0, 1], [1, 0]])
        self.assertEqual(ctx.exception.bound, "lower")

    def test_rowsets_need_candidates(self) -> None:
        with self.assertRaises(InvalidRateModelError):
            _ = RowSetModel.from_rows(TWO, [[[-1, 1]], []])


class NormBoundTests(unittest.TestCase):
    def test_examples(self) -> None:
        self.assertEqual(norm_bound(symmetric()).value, 2.0)
        self.assertEqual(norm_bound(zero_model(TWO)).value, 0.0)
        self.assertEqual(norm_bound(interval()).exact, Fraction(6))

    def test_bound_dominates_sampled_images(self) -> None:
        rng = np.random.default_rng(2)
        model = interval()
        bound = norm_bound(model).value
        for _ in range(100):
            f = TWO.gamble(rng.uniform(-1, 1, size=2))
            self.assertLessEqual(np.abs(lower_apply(model, f).values).max(), bound * np.abs(f.values).max() + 1e-12)


class TransitionStepTests(unittest.TestCase):
    def test_zero_step_is_identity(self) -> None:
        step = induced_transition_step(interval(), 0.0)
        self.assertEqual(step(TWO.gamble([0.2, 0.7])).as_tuple(), (0.2, 0.7))

    def test_single_euler_steps(self) -> None:
        f = TWO.gamble([0, 1])
        self.assertEqual(induced_transition_step(symmetric(), 0.5)(f).as_tuple(), (0.5, 0.5))
        result = induced_transition_step(interval(), 1 / 6)(f).values
        np.testing.assert_allclose(result, [1 / 6, 1 / 2], atol=1e-15)

    def test_inadmissible_step_is_rejected(self) -> None:
        with self.assertRaises(InadmissibleStepError):
            _ = induced_transition_step(symmetric(), 1.0)
        with self.assertRaises(InadmissibleStepError):
            _ = induced_transition_step(symmetric(), -0.1)

    def test_rate_from_identity_is_zero(self) -> None:
        rate = rate_from_transition(identity_operator(TWO), 0.25)
        self.assertEqual(rate(TWO.gamble([3, -1])).as_tuple(), (0.0, 0.0))

    def test_rate_from_stochastic_matrix(self) -> None:
        operator = DiscreteLTO.from_matrix(TWO, [[1.0, 0.0], [0.5, 0.5]])
        rate = rate_from_transition(operator.lower, 1.0)
        self.assertEqual(rate(TWO.gamble([0, 1])).as_tuple(), (0.0, -0.5))

    def test_rate_from_transition_rejects_nonpositive_delta(self) -> None:
        with self.assertRaises(ValueError):
            _ = rate_from_transition(identity_operator(TWO), 0.0)

    def test_round_trip_reproduces_q_on_indicators(self) -> None:
        delta = 0.125
        model = interval()
        recovered = rate_from_transition(induced_transition_step(model, delta), delta)
        for states in ({0}, {1}, {0, 1}):
            indicator = TWO.indicator(states)
            self.assertEqual(recovered(indicator), lower_apply(model, indicator))


if __name__ == "__main__":
    _ = unittest.main()
