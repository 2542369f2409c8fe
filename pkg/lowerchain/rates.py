"""Representations of lower transition rate operators and their evaluation.

Every model stores its rates exactly as :class:`fractions.Fraction` values and
keeps a float copy for batched numerical evaluation. Evaluation always uses the
difference form ``sum_y r(x, y) * (f(y) - f(x))`` so that constants map to an
exact zero and sign decisions about indicator gambles are not disturbed by
rounding.
"""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import ClassVar

import numpy as np

from .gambles import DimensionMismatchError, FloatArray, Gamble, Operator, StateSpace

RateInput = Fraction | int | float | str
ExactRow = tuple[Fraction, ...]

ROW_SUM_ATOL = 1e-12
STEP_SLACK = 1e-12


class InvalidRateModelError(ValueError):
    """Raised when rates violate the intensity-row constraints."""

    entry: tuple[str, str] | None
    bound: str | None

    def __init__(
        self, message: str, entry: tuple[str, str] | None = None, *, bound: str | None = None
    ) -> None:
        super().__init__(message)
        self.entry = entry
        self.bound = bound


class InadmissibleStepError(ValueError):
    """Raised when delta * norm_bound exceeds one."""


def to_fraction(value: RateInput) -> Fraction:
    """Convert a rate literal ("p/q", decimal string, int or float) to an exact rational."""
    if isinstance(value, bool):
        raise TypeError("Booleans are not valid rates.")
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"Rates must be finite, got {value!r}.")
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"Invalid rate literal {value!r}.") from exc
    return Fraction(value)


def _coerce_row(space: StateSpace, x: int, values: Sequence[RateInput]) -> ExactRow:
    """Validate one intensity row for state x and return it with an exact diagonal."""
    n = space.size
    if len(values) != n:
        raise InvalidRateModelError(
            f"Row for state '{space.label(x)}' has {len(values)} entries, expected {n}.",
            entry=(space.label(x), space.label(x)),
        )
    exact_input = not any(isinstance(value, float) for value in values)
    row = [to_fraction(value) for value in values]
    for y, rate in enumerate(row):
        if y != x and rate < 0:
            raise InvalidRateModelError(
                f"Negative off-diagonal rate {rate} from '{space.label(x)}' to '{space.label(y)}'.",
                entry=(space.label(x), space.label(y)),
            )
    total = sum(row, Fraction(0))
    if exact_input and total != 0:
        raise InvalidRateModelError(
            f"Row for state '{space.label(x)}' sums to {total}, expected 0.",
            entry=(space.label(x), space.label(x)),
        )
    if not exact_input and abs(float(total)) > ROW_SUM_ATOL:
        raise InvalidRateModelError(
            f"Row for state '{space.label(x)}' sums to {float(total):.3g}, expected 0.",
            entry=(space.label(x), space.label(x)),
        )
    off_diagonal = sum((rate for y, rate in enumerate(row) if y != x), Fraction(0))
    row[x] = -off_diagonal
    return tuple(row)


def _off_diagonal_array(rows: Sequence[ExactRow]) -> FloatArray:
    arr = np.array([[float(rate) for rate in row] for row in rows], dtype=np.float64)
    np.fill_diagonal(arr, 0.0)
    return arr


def _differences(columns: FloatArray) -> FloatArray:
    """diff[x, y, m] = F[y, m] - F[x, m]."""
    return columns[None, :, :] - columns[:, None, :]


@dataclass(frozen=True)
class IntensityMatrix:
    space: StateSpace
    entries: tuple[ExactRow, ...]

    def __post_init__(self) -> None:
        n = self.space.size
        if len(self.entries) != n:
            raise InvalidRateModelError(f"Intensity matrix has {len(self.entries)} rows, expected {n}.")
        rows = tuple(_coerce_row(self.space, x, row) for x, row in enumerate(self.entries))
        object.__setattr__(self, "entries", rows)

    @classmethod
    def from_rows(cls, space: StateSpace, rows: Sequence[Sequence[RateInput]]) -> IntensityMatrix:
        return cls(space, tuple(tuple(row) for row in rows))  # pyright: ignore[reportArgumentType]

    def as_array(self) -> FloatArray:
        return np.array([[float(rate) for rate in row] for row in self.entries], dtype=np.float64)


class LowerRateModel(ABC):
    """A lower transition rate operator given by separately specified rows."""

    kind: ClassVar[str]

    @property
    @abstractmethod
    def space(self) -> StateSpace: ...

    @abstractmethod
    def lower_columns(self, columns: FloatArray) -> FloatArray:
        """Evaluate Q on each column of an (n, m) array."""

    @abstractmethod
    def lower_exact(self, values: Sequence[Fraction]) -> tuple[Fraction, ...]:
        """Evaluate Q exactly on a rational gamble."""

    @abstractmethod
    def row_candidates(self, x: int) -> list[ExactRow]:
        """Rows whose lower envelope is Q(.)(x); for intervals, the corner selections."""

    @abstractmethod
    def row_candidate_count(self, x: int) -> int: ...

    @property
    def size(self) -> int:
        return self.space.size

    def extreme_count(self) -> int:
        return math.prod(self.row_candidate_count(x) for x in range(self.size))

    def extreme_matrices(self) -> Iterator[FloatArray]:
        """Yield every matrix built from one candidate row per state."""
        per_row = [self.row_candidates(x) for x in range(self.size)]
        for selection in itertools.product(*per_row):
            yield np.array([[float(rate) for rate in row] for row in selection], dtype=np.float64)


@dataclass(frozen=True)
class PreciseModel(LowerRateModel):
    matrix: IntensityMatrix
    _offdiag: FloatArray = field(init=False, repr=False, compare=False)

    kind: ClassVar[str] = "precise"

    def __post_init__(self) -> None:
        object.__setattr__(self, "_offdiag", _off_diagonal_array(self.matrix.entries))

    @classmethod
    def from_matrix(cls, space: StateSpace, rows: Sequence[Sequence[RateInput]]) -> PreciseModel:
        return cls(IntensityMatrix.from_rows(space, rows))

    @property
    def space(self) -> StateSpace:
        return self.matrix.space

    def lower_columns(self, columns: FloatArray) -> FloatArray:
        return np.einsum("xy,xym->xm", self._offdiag, _differences(columns))

    def lower_exact(self, values: Sequence[Fraction]) -> tuple[Fraction, ...]:
        return tuple(_row_exact(row, x, values) for x, row in enumerate(self.matrix.entries))

    def row_candidates(self, x: int) -> list[ExactRow]:
        return [self.matrix.entries[x]]

    def row_candidate_count(self, x: int) -> int:
        return 1


@dataclass(frozen=True)
class IntervalModel(LowerRateModel):
    """Off-diagonal rates known to lie in [lower(x, y), upper(x, y)]; diagonals are implied."""

    states: StateSpace
    lower: tuple[ExactRow, ...]
    upper: tuple[ExactRow, ...]
    _lo: FloatArray = field(init=False, repr=False, compare=False)
    _hi: FloatArray = field(init=False, repr=False, compare=False)

    kind: ClassVar[str] = "interval"

    def __post_init__(self) -> None:
        n = self.states.size
        lower = _square_fractions(self.states, self.lower, "lower")
        upper = _square_fractions(self.states, self.upper, "upper")
        for x in range(n):
            for y in range(n):
                if x == y:
                    continue
                lo, hi = lower[x][y], upper[x][y]
                entry = (self.states.label(x), self.states.label(y))
                if lo < 0:
                    raise InvalidRateModelError(
                        f"Lower rate {lo} from '{entry[0]}' to '{entry[1]}' is negative.",
                        entry=entry,
                        bound="lower",
                    )
                if lo > hi:
                    raise InvalidRateModelError(
                        f"Lower rate {lo} exceeds upper rate {hi} from '{entry[0]}' to '{entry[1]}'.",
                        entry=entry,
                        bound="lower",
                    )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "_lo", _off_diagonal_array(lower))
        object.__setattr__(self, "_hi", _off_diagonal_array(upper))

    @classmethod
    def from_bounds(
        cls,
        space: StateSpace,
        lower: Sequence[Sequence[RateInput]],
        upper: Sequence[Sequence[RateInput]],
    ) -> IntervalModel:
        return cls(space, tuple(tuple(row) for row in lower), tuple(tuple(row) for row in upper))  # pyright: ignore[reportArgumentType]

    @property
    def space(self) -> StateSpace:
        return self.states

    def lower_columns(self, columns: FloatArray) -> FloatArray:
        diff = _differences(columns)
        rates = np.where(diff >= 0.0, self._lo[:, :, None], self._hi[:, :, None])
        return (rates * diff).sum(axis=1)

    def lower_exact(self, values: Sequence[Fraction]) -> tuple[Fraction, ...]:
        n = self.size
        result: list[Fraction] = []
        for x in range(n):
            total = Fraction(0)
            for y in range(n):
                if y == x:
                    continue
                delta = values[y] - values[x]
                rate = self.lower[x][y] if delta >= 0 else self.upper[x][y]
                total += rate * delta
            result.append(total)
        return tuple(result)

    def row_candidates(self, x: int) -> list[ExactRow]:
        n = self.size
        choices: list[list[Fraction]] = []
        for y in range(n):
            if y == x:
                choices.append([Fraction(0)])
            elif self.lower[x][y] == self.upper[x][y]:
                choices.append([self.lower[x][y]])
            else:
                choices.append([self.lower[x][y], self.upper[x][y]])
        rows: list[ExactRow] = []
        for corner in itertools.product(*choices):
            row = list(corner)
            row[x] = -sum(corner, Fraction(0))
            rows.append(tuple(row))
        return rows

    def row_candidate_count(self, x: int) -> int:
        return 2 ** sum(1 for y in range(self.size) if y != x and self.lower[x][y] != self.upper[x][y])


@dataclass(frozen=True)
class RowSetModel(LowerRateModel):
    """For each state, a finite nonempty list of candidate intensity rows."""

    states: StateSpace
    rows: tuple[tuple[ExactRow, ...], ...]
    _stacked: FloatArray = field(init=False, repr=False, compare=False)
    _owners: np.ndarray = field(init=False, repr=False, compare=False)
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)

    kind: ClassVar[str] = "rowsets"

    def __post_init__(self) -> None:
        n = self.states.size
        if len(self.rows) != n:
            raise InvalidRateModelError(f"Row sets given for {len(self.rows)} states, expected {n}.")
        validated: list[tuple[ExactRow, ...]] = []
        for x, candidates in enumerate(self.rows):
            if not candidates:
                raise InvalidRateModelError(
                    f"State '{self.states.label(x)}' has no candidate rows.",
                    entry=(self.states.label(x), self.states.label(x)),
                )
            validated.append(tuple(_coerce_row(self.states, x, row) for row in candidates))
        object.__setattr__(self, "rows", tuple(validated))
        stacked: list[list[float]] = []
        owners: list[int] = []
        offsets: list[int] = []
        for x, candidates in enumerate(validated):
            offsets.append(len(stacked))
            for row in candidates:
                stacked.append([0.0 if y == x else float(rate) for y, rate in enumerate(row)])
                owners.append(x)
        object.__setattr__(self, "_stacked", np.array(stacked, dtype=np.float64))
        object.__setattr__(self, "_owners", np.array(owners, dtype=np.intp))
        object.__setattr__(self, "_offsets", np.array(offsets, dtype=np.intp))

    @classmethod
    def from_rows(cls, space: StateSpace, rows: Sequence[Sequence[Sequence[RateInput]]]) -> RowSetModel:
        return cls(space, tuple(tuple(tuple(row) for row in candidates) for candidates in rows))  # pyright: ignore[reportArgumentType]

    @property
    def space(self) -> StateSpace:
        return self.states

    def lower_columns(self, columns: FloatArray) -> FloatArray:
        diff = columns[None, :, :] - columns[self._owners][:, None, :]
        values = np.einsum("ky,kym->km", self._stacked, diff)
        return np.minimum.reduceat(values, self._offsets, axis=0)

    def lower_exact(self, values: Sequence[Fraction]) -> tuple[Fraction, ...]:
        return tuple(
            min(_row_exact(row, x, values) for row in candidates) for x, candidates in enumerate(self.rows)
        )

    def row_candidates(self, x: int) -> list[ExactRow]:
        return list(self.rows[x])

    def row_candidate_count(self, x: int) -> int:
        return len(self.rows[x])


def _row_exact(row: ExactRow, x: int, values: Sequence[Fraction]) -> Fraction:
    return sum((rate * (values[y] - values[x]) for y, rate in enumerate(row) if y != x), Fraction(0))


def _square_fractions(space: StateSpace, rows: Sequence[Sequence[RateInput]], name: str) -> tuple[ExactRow, ...]:
    n = space.size
    if len(rows) != n or any(len(row) != n for row in rows):
        raise InvalidRateModelError(f"The {name} bound matrix must be {n}x{n}.", bound=name)
    result: list[ExactRow] = []
    for x, row in enumerate(rows):
        converted: list[Fraction] = []
        for y, value in enumerate(row):
            if x == y:
                converted.append(Fraction(0))
                continue
            try:
                converted.append(to_fraction(value))
            except (TypeError, ValueError) as exc:
                raise InvalidRateModelError(
                    f"Invalid {name} rate from '{space.label(x)}' to '{space.label(y)}': {exc}",
                    entry=(space.label(x), space.label(y)),
                    bound=name,
                ) from None
        result.append(tuple(converted))
    return tuple(result)


def zero_model(space: StateSpace) -> PreciseModel:
    n = space.size
    return PreciseModel.from_matrix(space, [[0] * n for _ in range(n)])


@dataclass(frozen=True)
class RateNormBound:
    """Certified upper bound 2·max_x |Q(1_x)(x)| on the operator norm of Q."""

    exact: Fraction

    @property
    def value(self) -> float:
        return float(self.exact)


def _require_space(model: LowerRateModel, f: Gamble) -> None:
    if f.space != model.space:
        raise DimensionMismatchError(
            f"Gamble over {f.space.labels} does not match model over {model.space.labels}."
        )


def lower_apply(model: LowerRateModel, f: Gamble) -> Gamble:
    """Return Q f, the row-wise minimum over candidate rows."""
    _require_space(model, f)
    return Gamble(model.space, model.lower_columns(f.values.reshape(-1, 1))[:, 0])


def upper_apply(model: LowerRateModel, f: Gamble) -> Gamble:
    """Return the conjugate Q̄ f = −Q(−f)."""
    _require_space(model, f)
    return Gamble(model.space, -model.lower_columns(-f.values.reshape(-1, 1))[:, 0])


def lower_apply_exact(model: LowerRateModel, values: Sequence[RateInput]) -> tuple[Fraction, ...]:
    if len(values) != model.size:
        raise DimensionMismatchError(f"Expected {model.size} values, got {len(values)}.")
    return model.lower_exact([to_fraction(value) for value in values])


def upper_apply_exact(model: LowerRateModel, values: Sequence[RateInput]) -> tuple[Fraction, ...]:
    negated = [-to_fraction(value) for value in values]
    return tuple(-value for value in lower_apply_exact(model, negated))


def indicator_exact(n: int, states: frozenset[int] | set[int]) -> list[Fraction]:
    return [Fraction(1) if idx in states else Fraction(0) for idx in range(n)]


def norm_bound(model: LowerRateModel) -> RateNormBound:
    diagonal = (
        abs(model.lower_exact(indicator_exact(model.size, {x}))[x]) for x in range(model.size)
    )
    return RateNormBound(2 * max(diagonal, default=Fraction(0)))


def rate_operator(model: LowerRateModel) -> Operator:
    """Q as an :class:`Operator` on column stacks."""
    return Operator(model.space, model.lower_columns, name=f"Q[{model.kind}]")


def induced_transition_step(model: LowerRateModel, delta: float) -> Operator:
    """Return I + delta·Q, a lower transition operator when delta·‖Q‖ ≤ 1."""
    if delta < 0:
        raise InadmissibleStepError(f"Step size must be non-negative, got {delta}.")
    bound = norm_bound(model).value
    if delta * bound > 1.0 + STEP_SLACK:
        raise InadmissibleStepError(
            f"Step size {delta} is inadmissible: delta * norm bound = {delta * bound:.6g} > 1."
        )
    return Operator(
        model.space,
        lambda columns: columns + delta * model.lower_columns(columns),
        name=f"I+{delta:g}Q",
    )


def rate_from_transition(transition: Operator, delta: float) -> Operator:
    """Return (T − I)/delta, a lower transition rate operator when T is a lower transition operator."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}.")
    return Operator(
        transition.space,
        lambda columns: (transition.apply_batch(columns) - columns) / delta,
        nonneg_homogeneous=transition.nonneg_homogeneous,
        name=f"({transition.name}-I)/{delta:g}",
    )
