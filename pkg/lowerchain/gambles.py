"""Finite state spaces, gambles, the maximum norm and operator contracts."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
BatchMap = Callable[[FloatArray], FloatArray]

StateRef = int | str


class DimensionMismatchError(ValueError):
    """Raised when a gamble or operator does not match the expected state space."""


class InvalidGambleError(ValueError):
    """Raised for gambles with the wrong length or non-finite entries."""


@dataclass(frozen=True)
class StateSpace:
    labels: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise ValueError("A state space needs at least one state.")
        if len(set(labels)) != len(labels):
            raise ValueError(f"State labels must be unique: {list(labels)}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {label: idx for idx, label in enumerate(labels)})

    @classmethod
    def of_size(cls, n: int, prefix: str = "s") -> StateSpace:
        return cls(tuple(f"{prefix}{idx}" for idx in range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, state: StateRef) -> int:
        if isinstance(state, str):
            try:
                return self._index[state]
            except KeyError:
                raise ValueError(f"Unknown state '{state}'.") from None
        if not 0 <= state < self.size:
            raise ValueError(f"State index {state} out of range for {self.size} state(s).")
        return int(state)

    def indices(self, states: Iterable[StateRef]) -> frozenset[int]:
        return frozenset(self.index(state) for state in states)

    def label(self, index: int) -> str:
        return self.labels[index]

    def gamble(self, values: Sequence[float] | FloatArray) -> Gamble:
        return Gamble(self, np.asarray(values, dtype=np.float64))

    def constant(self, mu: float) -> Gamble:
        return Gamble(self, np.full(self.size, float(mu)))

    def indicator(self, states: Iterable[StateRef]) -> Gamble:
        values = np.zeros(self.size)
        for idx in self.indices(states):
            values[idx] = 1.0
        return Gamble(self, values)


@dataclass(frozen=True, eq=False)
class Gamble:
    """A real-valued function on a finite state space."""

    space: StateSpace
    values: FloatArray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.shape != (self.space.size,):
            raise InvalidGambleError(
                f"Gamble has shape {arr.shape}, expected ({self.space.size},) for the state space."
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidGambleError("Gamble entries must be finite.")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Gamble):
            return NotImplemented
        return self.space == other.space and bool(np.array_equal(self.values, other.values))

    def __hash__(self) -> int:
        return hash((self.space.labels, self.values.tobytes()))

    def __len__(self) -> int:
        return self.space.size

    def __getitem__(self, state: StateRef) -> float:
        return float(self.values[self.space.index(state)])

    def __neg__(self) -> Gamble:
        return Gamble(self.space, -self.values)

    def __add__(self, other: Gamble | float) -> Gamble:
        if isinstance(other, Gamble):
            _require_same_space(self.space, other.space)
            return Gamble(self.space, self.values + other.values)
        return Gamble(self.space, self.values + float(other))

    def __radd__(self, other: float) -> Gamble:
        return self + other

    def __sub__(self, other: Gamble | float) -> Gamble:
        if isinstance(other, Gamble):
            _require_same_space(self.space, other.space)
            return Gamble(self.space, self.values - other.values)
        return Gamble(self.space, self.values - float(other))

    def __mul__(self, scalar: float) -> Gamble:
        return Gamble(self.space, self.values * float(scalar))

    def __rmul__(self, scalar: float) -> Gamble:
        return self * scalar

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def span(self) -> float:
        return self.max() - self.min()

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(value) for value in self.values)

    def cache_key(self) -> bytes:
        return self.values.tobytes()


def _require_same_space(left: StateSpace, right: StateSpace) -> None:
    if left != right:
        raise DimensionMismatchError(f"State spaces differ: {left.labels} vs {right.labels}.")


def max_norm(f: Gamble) -> float:
    """Return max_x |f(x)|."""
    return float(np.abs(f.values).max())


@dataclass(frozen=True)
class Operator:
    """A map from gambles to gambles, evaluated on column stacks of shape (n, m)."""

    space: StateSpace
    batch: BatchMap
    nonneg_homogeneous: bool = True
    name: str = "operator"

    def __call__(self, f: Gamble) -> Gamble:
        _require_same_space(self.space, f.space)
        column = np.asarray(f.values, dtype=np.float64).reshape(-1, 1)
        return Gamble(self.space, self.apply_batch(column)[:, 0])

    def apply_batch(self, columns: FloatArray) -> FloatArray:
        columns = np.asarray(columns, dtype=np.float64)
        if columns.ndim != 2 or columns.shape[0] != self.space.size:
            raise DimensionMismatchError(
                f"{self.name}: expected columns of length {self.space.size}, got shape {columns.shape}."
            )
        result = np.asarray(self.batch(columns), dtype=np.float64)
        if result.shape != columns.shape:
            raise DimensionMismatchError(f"{self.name}: output shape {result.shape} differs from input.")
        return result

    def compose(self, inner: Operator) -> Operator:
        """Return f ↦ self(inner(f))."""
        _require_same_space(self.space, inner.space)
        return Operator(
            self.space,
            lambda columns: self.apply_batch(inner.apply_batch(columns)),
            nonneg_homogeneous=self.nonneg_homogeneous and inner.nonneg_homogeneous,
            name=f"{self.name}∘{inner.name}",
        )

    def conjugate(self) -> Operator:
        """Return f ↦ −self(−f)."""
        return Operator(
            self.space,
            lambda columns: -self.apply_batch(-columns),
            nonneg_homogeneous=self.nonneg_homogeneous,
            name=f"conj({self.name})",
        )


def identity_operator(space: StateSpace) -> Operator:
    return Operator(space, lambda columns: columns.copy(), name="identity")


def sample_columns(space: StateSpace, samples: int, seed: int) -> FloatArray:
    """Seeded unit-norm gambles plus ±indicators and ±1 constants, as columns."""
    rng = np.random.default_rng(seed)
    n = space.size
    random = rng.uniform(-1.0, 1.0, size=(n, samples))
    scale = np.abs(random).max(axis=0)
    scale[scale == 0.0] = 1.0
    random = random / scale
    eye = np.eye(n)
    ones = np.ones((n, 1))
    return np.hstack([random, eye, -eye, ones, -ones])


def operator_norm_estimate(operator: Operator, samples: int, seed: int) -> float:
    """Sampled lower bound on sup{‖Af‖ : ‖f‖ = 1}; deterministic given the seed."""
    if not operator.nonneg_homogeneous:
        raise ValueError("operator_norm_estimate requires a non-negatively homogeneous operator.")
    if samples < 1:
        raise ValueError("samples must be positive.")
    images = operator.apply_batch(sample_columns(operator.space, samples, seed))
    return float(np.abs(images).max())


def norm_difference_estimate(left: Operator, right: Operator, samples: int, seed: int) -> float:
    """Sampled lower bound on ‖A − B‖ over unit-norm gambles."""
    _require_same_space(left.space, right.space)
    if samples < 1:
        raise ValueError("samples must be positive.")
    columns = sample_columns(left.space, samples, seed)
    return float(np.abs(left.apply_batch(columns) - right.apply_batch(columns)).max())
