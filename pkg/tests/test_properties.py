from __future__ import annotations

import json
import unittest

import numpy as np

from lowerchain.gambles import StateSpace
from lowerchain.modelio import model_document, parse_model
from lowerchain.properties import ABSORPTION_TIMES, ShiftedModel, battery_plan, random_model, run_battery
from lowerchain.rates import lower_apply, zero_model


class RandomModelTests(unittest.TestCase):
    def test_every_kind_builds_a_valid_model(self) -> None:
        rng = np.random.default_rng(4)
        for kind in ("precise", "interval", "rowsets"):
            for n in (2, 3, 4):
                with self.subTest(kind=kind, n=n):
                    model = random_model(rng, n, kind)
                    self.assertEqual(model.kind, kind)
                    self.assertEqual(model.space.labels, tuple(f"s{idx}" for idx in range(n)))
                    # every generated model survives the file format validation
                    document = json.dumps(model_document(model))
                    self.assertEqual(model_document(parse_model(document)), model_document(model))

    def test_same_seed_same_models(self) -> None:
        first = random_model(np.random.default_rng(8), 3, "interval")
        second = random_model(np.random.default_rng(8), 3, "interval")
        self.assertEqual(model_document(first), model_document(second))

    def test_unknown_kind(self) -> None:
        with self.assertRaises(ValueError):
            _ = random_model(np.random.default_rng(0), 2, "banded")

    def test_shifted_model_breaks_constants(self) -> None:
        space = StateSpace.of_size(2)
        shifted = ShiftedModel(zero_model(space), 0.5)
        self.assertEqual(lower_apply(shifted, space.constant(1.0)).as_tuple(), (0.5, 0.5))


class BatteryTests(unittest.TestCase):
    def test_plan_pairs_every_kind_with_every_size(self) -> None:
        plan = battery_plan(12)
        self.assertEqual(len(set(plan)), 12)
        self.assertEqual({n for _, n in plan}, {2, 3, 4, 5})
        self.assertIn(("precise", 4), plan)
        self.assertIn(("interval", 2), plan)
        self.assertIn(2.0, ABSORPTION_TIMES)

    def test_small_battery_passes(self) -> None:
        report = run_battery(1, 3)
        self.assertTrue(report.passed, report.failed_checks())
        self.assertGreater(report.checks, 0)
        self.assertEqual(report.as_dict()["failures"], [])

    def test_injected_fault_is_caught(self) -> None:
        with self.assertLogs("lowerchain.properties", level="WARNING"):
            report = run_battery(0, 1, inject_fault=True)
        self.assertFalse(report.passed)
        self.assertIn("R1", report.failed_checks())
        failure = report.failures[0]
        self.assertEqual(failure.trial, 0)
        self.assertEqual(failure.as_dict()["model"], failure.model)

    def test_rejects_zero_trials(self) -> None:
        with self.assertRaises(ValueError):
            _ = run_battery(0, 0)


if __name__ == "__main__":
    _ = unittest.main()
