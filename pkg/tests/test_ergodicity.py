from __future__ import annotations

import logging
import math
import unittest

import numpy as np

from lowerchain.ergodicity import (
    Verdict,
    build_graph,
    decide_ergodic,
    limit_lower_expectation,
    lower_reach,
    one_step_absorbing,
    regularly_absorbing,
    top_class,
    upper_reachable,
)
from lowerchain.gambles import StateSpace
from lowerchain.properties import random_model
from lowerchain.rates import IntervalModel, PreciseModel, RowSetModel, norm_bound, zero_model
from lowerchain.semigroup import DiscreteLTO, TransitionSolver

logger = logging.getLogger(__name__)

TWO = StateSpace.of_size(2)


def symmetric() -> PreciseModel:
    return PreciseModel.from_matrix(TWO, [[-1, 1], [1, -1]])


def absorbing() -> PreciseModel:
    return PreciseModel.from_matrix(TWO, [[0, 0], [1, -1]])


def interval() -> IntervalModel:
    return IntervalModel.from_bounds(TWO, [[0, 1], [1, 0]], [[0, 2], [3, 0]])


def lazy() -> RowSetModel:
    # a may stay put, so it upper-reaches b without lower-reaching it
    return RowSetModel.from_rows(StateSpace(("a", "b")), [[[0, 0], [-1, 1]], [[0, 0]]])


class GraphTests(unittest.TestCase):
    def test_absorbing_edges_and_top_class(self) -> None:
        graph = build_graph(absorbing())
        self.assertEqual(graph.edges(), [(1, 0)])
        self.assertEqual(top_class(graph), frozenset({0}))
        self.assertTrue(upper_reachable(graph, 1, 0))
        self.assertFalse(upper_reachable(graph, 0, 1))
        self.assertTrue(upper_reachable(graph, 1, 1))

    def test_zero_model_has_no_top_class(self) -> None:
        graph = build_graph(zero_model(TWO))
        self.assertEqual(graph.edges(), [])
        self.assertEqual(top_class(graph), frozenset())

    def test_complete_model_has_every_edge(self) -> None:
        space = StateSpace.of_size(3)
        model = PreciseModel.from_matrix(space, [[-2, 1, 1], [1, -2, 1], [1, 1, -2]])
        graph = build_graph(model)
        self.assertEqual(len(graph.edges()), 6)
        self.assertEqual(top_class(graph), frozenset({0, 1, 2}))

    def test_interval_edges_use_upper_rates(self) -> None:
        model = IntervalModel.from_bounds(TWO, [[0, 0], [0, 0]], [[0, 1], [0, 0]])
        self.assertEqual(build_graph(model).edges(), [(0, 1)])


class LowerReachTests(unittest.TestCase):
    def test_requires_nonempty_target(self) -> None:
        with self.assertRaises(ValueError):
            _ = lower_reach(absorbing(), set(), 0)

    def test_trace_reaches_fixed_point(self) -> None:
        reached, trace = lower_reach(absorbing(), {0}, 1)
        self.assertTrue(reached)
        self.assertEqual(trace.sets, (frozenset({0}), frozenset({0, 1})))
        self.assertEqual(trace.terminal, 1)

    def test_lazy_state_is_not_forced(self) -> None:
        reached, trace = lower_reach(lazy(), {1}, 0)
        self.assertFalse(reached)
        self.assertEqual(trace.final, frozenset({1}))


class DecideErgodicTests(unittest.TestCase):
    def test_symmetric_model_is_ergodic(self) -> None:
        report = decide_ergodic(symmetric())
        self.assertTrue(report.verdict)
        self.assertEqual(report.top_class, frozenset({0, 1}))
        self.assertEqual(report.paths[1], (1, 0))
        self.assertIn("verdict: ergodic", report.summary(TWO))

    def test_zero_model_has_empty_top_class(self) -> None:
        report = decide_ergodic(zero_model(TWO))
        self.assertFalse(report.verdict)
        self.assertEqual(report.reason, "top class empty")
        self.assertEqual(report.missing_path, (0, 1))

    def test_lazy_rows_fail_lower_reachability(self) -> None:
        model = lazy()
        report = decide_ergodic(model)
        self.assertFalse(report.verdict)
        self.assertEqual(report.top_class, frozenset({1}))
        self.assertEqual(report.failing_state, 0)
        self.assertIn("failing_state: a", report.summary(model.space))

    def test_interval_with_zero_lower_rates_is_ergodic(self) -> None:
        # every state is in the top class, so lower reachability holds trivially
        model = IntervalModel.from_bounds(TWO, [[0, 0], [0, 0]], [[0, 1], [1, 0]])
        report = decide_ergodic(model)
        self.assertTrue(report.verdict)
        self.assertEqual(report.top_class, frozenset({0, 1}))
        self.assertEqual(report.reason, "top class nonempty and lower reachable")
        solver = TransitionSolver(model)
        for values in ([0.0, 1.0], [0.3, -2.0]):
            self.assertLess(solver.evolve(TWO.gamble(values), 50.0).value.span(), 1e-6)
            self.assertLess(solver.evolve_upper(TWO.gamble(values), 50.0).value.span(), 1e-6)

    def test_single_state_is_ergodic(self) -> None:
        one = StateSpace(("only",))
        self.assertTrue(decide_ergodic(PreciseModel.from_matrix(one, [[0]])).verdict)

    def test_verdict_agrees_with_long_run_behaviour(self) -> None:
        f = TWO.gamble([0, 1])
        self.assertLess(TransitionSolver(symmetric()).evolve(f, 20.0).value.span(), 1e-6)
        lazy_space = lazy().space
        stuck = TransitionSolver(lazy()).evolve(lazy_space.gamble([0, 1]), 20.0).value
        self.assertAlmostEqual(stuck.span(), 1.0, places=6)

    def test_verdict_agrees_with_spans_on_random_models(self) -> None:
        rng = np.random.default_rng(2024)
        conclusive = 0
        models = 12
        for index in range(models):
            n = 3 + index % 3
            model = random_model(rng, n, ("precise", "interval", "rowsets")[index % 3])
            verdict = decide_ergodic(model).verdict
            bound = norm_bound(model).value
            horizon = 100.0 / bound if bound > 0 else 1.0
            solver = TransitionSolver(model, tolerance=1e-8)
            # indicators of every nonempty proper subset, their negations and a few random gambles
            subsets = [
                [1.0 if (mask >> x) & 1 else 0.0 for x in range(n)] for mask in range(1, (1 << n) - 1)
            ]
            columns = np.array(subsets + [[-value for value in row] for row in subsets]).T
            columns = np.hstack([columns, rng.uniform(-1, 1, size=(n, 4))])
            early = solver.evolve_batch(columns, horizon).values
            late = solver.evolve_batch(early, horizon).values
            early_span = early.max(axis=0) - early.min(axis=0)
            late_span = late.max(axis=0) - late.min(axis=0)
            stuck = (late_span > 1e-2) & (late_span > 0.9 * early_span)
            if float(late_span.max()) < 1e-5:
                conclusive += 1
                self.assertTrue(verdict, f"model {index} mixes but was judged non-ergodic")
            elif bool(stuck.any()):
                conclusive += 1
                self.assertFalse(verdict, f"model {index} keeps a span but was judged ergodic")
            else:
                logger.info("model %d inconclusive: span %.3g after t=%g", index, late_span.max(), 2 * horizon)
        self.assertGreaterEqual(conclusive, models // 2)

    def test_verdict_matches_one_step_absorption(self) -> None:
        rng = np.random.default_rng(99)
        for index in range(6):
            model = random_model(rng, 3, ("precise", "interval", "rowsets")[index % 3])
            solver = TransitionSolver(model)
            verdict = decide_ergodic(model).verdict
            for t in (0.5, 1.0, 2.0):
                absorbing_now, _ = one_step_absorbing(solver.evolve_operator(t))
                self.assertEqual(absorbing_now, verdict)


class DiscreteAbsorptionTests(unittest.TestCase):
    def test_one_step_examples(self) -> None:
        self.assertEqual(
            one_step_absorbing(DiscreteLTO.from_matrix(TWO, [[0.5, 0.5], [0.5, 0.5]])), (True, frozenset({0, 1}))
        )
        self.assertEqual(one_step_absorbing(DiscreteLTO.from_matrix(TWO, np.eye(2))), (False, frozenset()))
        self.assertEqual(
            one_step_absorbing(DiscreteLTO.from_matrix(TWO, [[1.0, 0.0], [0.5, 0.5]])), (True, frozenset({0}))
        )

    def test_regular_absorption_needs_two_steps(self) -> None:
        space = StateSpace.of_size(3)
        operator = DiscreteLTO.from_matrix(space, [[0.5, 0.5, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        verdict, top = regularly_absorbing(operator, 5)
        self.assertEqual(verdict, Verdict.TRUE)
        self.assertIn(0, top)
        self.assertEqual(regularly_absorbing(operator, 1), (Verdict.UNKNOWN, frozenset()))
        self.assertFalse(one_step_absorbing(operator)[0])

    def test_identity_and_permutation_are_not_absorbing(self) -> None:
        self.assertEqual(regularly_absorbing(DiscreteLTO.from_matrix(TWO, np.eye(2)), 4), (Verdict.FALSE, frozenset()))
        swap = DiscreteLTO.from_matrix(TWO, [[0.0, 1.0], [1.0, 0.0]])
        self.assertEqual(regularly_absorbing(swap, 4), (Verdict.FALSE, frozenset()))

    def test_semigroup_operators_use_the_one_step_test(self) -> None:
        operator = TransitionSolver(symmetric()).evolve_operator(1.0)
        self.assertEqual(regularly_absorbing(operator, 1), (Verdict.TRUE, frozenset({0, 1})))

    def test_rejects_zero_cap(self) -> None:
        with self.assertRaises(ValueError):
            _ = regularly_absorbing(DiscreteLTO.from_matrix(TWO, np.eye(2)), 0)


class LimitTests(unittest.TestCase):
    def test_symmetric_limit_is_one_half(self) -> None:
        result = limit_lower_expectation(TransitionSolver(symmetric()), TWO.gamble([0, 1]), 1e-6, 100.0)
        self.assertTrue(result.converged)
        assert result.value is not None
        self.assertAlmostEqual(result.value, 0.5, delta=1e-6)

    def test_interval_limit_is_one_quarter(self) -> None:
        solver = TransitionSolver(interval(), tolerance=1e-8)
        result = limit_lower_expectation(solver, TWO.gamble([0, 1]), 1e-5, 100.0)
        self.assertTrue(result.converged)
        assert result.value is not None
        self.assertAlmostEqual(result.value, 0.25, delta=1e-4)

    def test_zero_model_does_not_converge(self) -> None:
        with self.assertLogs("lowerchain.ergodicity", level="WARNING"):
            result = limit_lower_expectation(TransitionSolver(zero_model(TWO)), TWO.gamble([0, 1]), 1e-6, 16.0)
        self.assertFalse(result.converged)
        self.assertIsNone(result.value)
        self.assertEqual(result.gamble.as_tuple(), (0.0, 1.0))

    def test_rejects_nonpositive_span_tolerance(self) -> None:
        with self.assertRaises(ValueError):
            _ = limit_lower_expectation(TransitionSolver(symmetric()), TWO.gamble([0, 1]), 0.0, 10.0)

    def test_rejects_unbounded_time_cap(self) -> None:
        for cap in (math.inf, math.nan, 0.0):
            with self.assertRaises(ValueError):
                _ = limit_lower_expectation(TransitionSolver(zero_model(TWO)), TWO.gamble([0, 1]), 1e-6, cap)


if __name__ == "__main__":
    _ = unittest.main()
