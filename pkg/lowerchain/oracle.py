"""Brute-force references for testing the solver.

The oracle uses a different discretisation family from the Euler products of
:mod:`lowerchain.semigroup`: exact per-slice matrix exponentials of extreme
rate matrices, composed over all piecewise-constant schedules.
"""

from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

from .gambles import FloatArray, Gamble
from .rates import LowerRateModel

EXPM_ENVELOPE = 200.0
MAX_EXTREMES = 8
MAX_GRID = 6

_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


class BudgetExceededError(ValueError):
    """Raised when an oracle request is outside its accuracy or combinatorial budget."""


def expm(matrix: FloatArray | list[list[float]], t: float) -> FloatArray:
    """Return e^{Qt} by scaling and squaring with a degree-13 Padé approximant."""
    if t < 0:
        raise ValueError(f"Time must be non-negative, got {t}.")
    a = np.asarray(matrix, dtype=np.float64) * t
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {a.shape}.")
    if not np.all(np.isfinite(a)):
        raise ValueError("expm needs finite entries.")
    n = a.shape[0]
    norm = float(np.abs(a).sum(axis=0).max()) if n else 0.0
    if norm > EXPM_ENVELOPE:
        raise BudgetExceededError(f"‖Qt‖₁ = {norm:.3g} exceeds the accuracy envelope {EXPM_ENVELOPE:g}.")
    squarings = 0
    if norm > _THETA13:
        squarings = max(0, math.ceil(math.log2(norm / _THETA13)))
        a = a / (2.0**squarings)
    b = _PADE13
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    result = np.linalg.solve(v - u, v + u)
    for _ in range(squarings):
        result = result @ result
    return result


def envelope_bruteforce(model: LowerRateModel, f: Gamble, t: float, grid: int) -> Gamble:
    """Minimum of e^{Q_1 s}···e^{Q_grid s} f over all extreme-matrix schedules, s = t/grid.

    This is an upper bound on T_t f that approaches it as the grid is refined.
    """
    if f.space != model.space:
        raise ValueError("Gamble and model have different state spaces.")
    if t < 0:
        raise ValueError(f"Time must be non-negative, got {t}.")
    if grid < 1 or grid > MAX_GRID:
        raise BudgetExceededError(f"grid must be between 1 and {MAX_GRID}, got {grid}.")
    count = model.extreme_count()
    if count > MAX_EXTREMES:
        raise BudgetExceededError(f"{count} extreme matrices exceed the budget of {MAX_EXTREMES}.")
    if t == 0:
        return f
    slice_length = t / grid
    propagators = [expm(matrix, slice_length) for matrix in model.extreme_matrices()]
    columns = f.values.reshape(-1, 1)
    for _ in range(grid):
        columns = np.hstack([propagator @ columns for propagator in propagators])
    return Gamble(f.space, columns.min(axis=1))


def discrete_power_positivity(matrix: FloatArray | list[list[float]], k: int) -> npt.NDArray[np.bool_]:
    """Sign pattern of T^k from boolean matrix powers."""
    if k < 1:
        raise ValueError("k must be at least 1.")
    pattern = np.asarray(matrix, dtype=np.float64) > 0
    step = pattern.astype(np.int64)
    power = pattern.copy()
    for _ in range(k - 1):
        power = (power.astype(np.int64) @ step) > 0
    return power
