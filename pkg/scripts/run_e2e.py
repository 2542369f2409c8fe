#!/usr/bin/env python3
"""Run the golden report suite for the lowerchain command line."""

from __future__ import annotations

import importlib
import sys
import unittest

REQUIRED = ("typer.testing", "numpy", "networkx")


def main() -> int:
    for module in REQUIRED:
        try:
            _ = importlib.import_module(module)
        except ModuleNotFoundError as exc:
            print(
                f"Missing dependency '{exc.name or module}'. Install the project first (`python -m pip install -e .`).",
                file=sys.stderr,
            )
            return 1

    suite = unittest.defaultTestLoader.loadTestsFromNames(["tests.test_e2e", "tests.test_cli"])
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    return 0 if result.wasSuccessful() else 1


if __name__ == "__main__":
    sys.exit(main())
