"""Lower transition operators T_t computed from a lower rate model.

T_t f is obtained from the limit expression lim (I + (t/n)Q)^n f. The solver
doubles n from max(|𝒳|, floor(t·‖Q‖-bound) + 1), extrapolates the
sequence of Euler products in powers of t/n and stops once two consecutive
extrapolated estimates agree within the tolerance. Every Euler product is a
composition of lower transition operators, and one with at least |𝒳| steps of
strictly positive diagonal decides strict positivity exactly.
"""

from __future__ import annotations

import logging
import math
import threading
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .config import SolverSettings, load_solver_settings
from .gambles import (
    DimensionMismatchError,
    FloatArray,
    Gamble,
    Operator,
    StateSpace,
    identity_operator,
    max_norm,
)
from .rates import LowerRateModel, lower_apply, norm_bound

logger = logging.getLogger(__name__)

NUMERICAL_THRESHOLD = 1e-9
NOISE_FLOOR = 1e-12
CHECK_RANDOM_GAMBLES = 16
CHECK_SEED = 20170707


@dataclass(frozen=True)
class SolverResult:
    """T_t f with its step count.

    `est_error` adds up the per-segment differences of the last two extrapolated
    estimates, so it can exceed the tolerance on long horizons even when
    `converged` reports that every segment met it.
    """

    value: Gamble
    steps_used: int
    est_error: float
    converged: bool = True


@dataclass(frozen=True)
class BatchResult:
    values: FloatArray
    steps_used: int
    est_error: float
    converged: bool


class TransitionSolver:
    """Computes T_t f for a lower rate model with a tolerance-driven step count."""

    model: LowerRateModel
    settings: SolverSettings
    bound: float

    def __init__(
        self,
        model: LowerRateModel,
        tolerance: float | None = None,
        max_doublings: int | None = None,
        *,
        settings: SolverSettings | None = None,
    ) -> None:
        if settings is None:
            settings = load_solver_settings(tolerance=tolerance, max_doublings=max_doublings)
        self.model = model
        self.settings = settings
        self.bound = norm_bound(model).value
        self._lock = threading.Lock()
        self._budgets: dict[tuple[float, bool], int] = {}
        self._results: dict[tuple[float, bool, bytes], SolverResult] = {}

    @property
    def space(self) -> StateSpace:
        return self.model.space

    @property
    def tolerance(self) -> float:
        return self.settings.tolerance

    @property
    def max_doublings(self) -> int:
        return self.settings.max_doublings

    def admissible_steps(self, t: float) -> int:
        """Smallest step count n with (t/n)·bound ≤ 1."""
        return max(1, math.ceil(t * self.bound - 1e-12))

    def sign_steps(self, t: float) -> int:
        """Smallest step count whose Euler product has the exact sign pattern of T_t.

        Each step keeps a strictly positive diagonal in I + (t/n)Q, and at least |𝒳|
        steps let positivity travel along any chain of states.
        """
        return max(self.space.size, math.floor(t * self.bound + 1e-9) + 1)

    def evolve(self, f: Gamble, t: float) -> SolverResult:
        """Return T_t f."""
        return self._evolve_gamble(f, t, upper=False)

    def evolve_upper(self, f: Gamble, t: float) -> SolverResult:
        """Return T̄_t f = −T_t(−f), integrated with the conjugate rate operator."""
        return self._evolve_gamble(f, t, upper=True)

    def _evolve_gamble(self, f: Gamble, t: float, *, upper: bool) -> SolverResult:
        if f.space != self.space:
            raise DimensionMismatchError(f"Gamble over {f.space.labels} does not match {self.space.labels}.")
        key = (float(t), upper, f.cache_key())
        cached = self._results.get(key)
        if cached is not None:
            return cached
        batch = self.evolve_batch(f.values.reshape(-1, 1), t, upper=upper)
        result = SolverResult(
            value=Gamble(self.space, batch.values[:, 0]),
            steps_used=batch.steps_used,
            est_error=batch.est_error,
            converged=batch.converged,
        )
        with self._lock:
            _ = self._results.setdefault(key, result)
        return result

    def evolve_batch(self, columns: FloatArray, t: float, *, upper: bool = False) -> BatchResult:
        """Evolve every column of an (n, m) array to time t."""
        if t < 0 or not math.isfinite(t):
            raise ValueError(f"Time must be a finite non-negative number, got {t}.")
        columns = np.asarray(columns, dtype=np.float64)
        if columns.ndim != 2 or columns.shape[0] != self.space.size:
            raise DimensionMismatchError(f"Expected columns of length {self.space.size}, got {columns.shape}.")
        if t == 0 or self.bound == 0:
            return BatchResult(columns.copy(), 1, 0.0, True)
        current = columns
        steps_used = 0
        est_error = 0.0
        converged = True
        for length in _segments(t, max(1.0, 1.0 / self.bound)):
            current, steps, error, ok = self._solve_segment(current, length, upper)
            steps_used += steps
            est_error += error
            converged = converged and ok
        if not converged:
            logger.warning(
                "Solver did not reach tolerance %.3g at t=%g (estimated error %.3g after %d steps).",
                self.tolerance,
                t,
                est_error,
                steps_used,
            )
        return BatchResult(current, steps_used, est_error, converged)

    def _solve_segment(
        self, columns: FloatArray, length: float, upper: bool
    ) -> tuple[FloatArray, int, float, bool]:
        shift = columns.min(axis=0)
        base = columns - shift
        top = base.max(axis=0)
        floor = self.sign_steps(length)
        depth = self.settings.richardson_depth
        budget_key = (round(length, 12), upper)
        steps = floor
        cached = self._budgets.get(budget_key)
        if cached is not None:
            steps = max(floor, cached >> (depth + 1))
        previous: list[FloatArray] | None = None
        estimate = base
        raw = base
        difference = math.inf
        converged = False
        doublings = 0
        while True:
            raw = self.euler_product(base, length, steps, upper=upper)
            row = [raw]
            if previous is not None:
                for order in range(1, min(len(previous), depth) + 1):
                    refined = row[order - 1] + (row[order - 1] - previous[order - 1]) / (2**order - 1)
                    row.append(refined)
                difference = float(np.abs(row[-1] - previous[-1]).max())
                logger.debug("segment %.3g steps=%d difference=%.3g", length, steps, difference)
                if difference <= self.tolerance:
                    estimate = row[-1]
                    converged = True
                    break
            if doublings >= self.max_doublings or steps * 2 > self.settings.max_steps:
                estimate = row[-1]
                break
            previous = row
            steps *= 2
            doublings += 1
        if converged:
            with self._lock:
                self._budgets[budget_key] = max(self._budgets.get(budget_key, 0), steps)
        value = _reconcile(estimate, raw, top)
        return value + shift, steps, difference, converged

    def euler_product(self, columns: FloatArray, t: float, steps: int, *, upper: bool = False) -> FloatArray:
        """Return (I + (t/steps)Q)^steps applied to every column (Q̄ when upper)."""
        delta = t / steps
        if delta * self.bound > 1.0 + 1e-12:
            raise ValueError(f"{steps} steps over t={t} violate the admissibility bound.")
        rate = self._rate_map(upper)
        current = np.array(columns, dtype=np.float64, copy=True)
        for _ in range(steps):
            current = current + delta * rate(current)
        return current

    def _rate_map(self, upper: bool) -> Callable[[FloatArray], FloatArray]:
        lower = self.model.lower_columns
        if upper:
            return lambda columns: -lower(-columns)
        return lower

    def positive_support(self, f: Gamble, t: float, *, upper: bool = False) -> frozenset[int]:
        """Return {x : T_t f(x) > min f} (T̄ when upper), decided from the sign pattern."""
        if f.space != self.space:
            raise DimensionMismatchError(f"Gamble over {f.space.labels} does not match {self.space.labels}.")
        base = (f.values - f.min()).reshape(-1, 1)
        if t == 0 or self.bound == 0:
            return frozenset(int(idx) for idx in np.flatnonzero(base[:, 0] > 0))
        steps = self.sign_steps(t)
        raw = self.euler_product(base, t, steps, upper=upper)
        return frozenset(int(idx) for idx in np.flatnonzero(raw[:, 0] > 0))

    def evolve_operator(self, t: float) -> DiscreteLTO:
        """Return T_t as a certified lower transition operator."""
        if t < 0:
            raise ValueError(f"Time must be non-negative, got {t}.")
        if t == 0:
            return DiscreteLTO.from_operator(identity_operator(self.space), matrix=np.eye(self.space.size))
        lower = Operator(self.space, lambda columns: self.evolve_batch(columns, t).values, name=f"T_{t:g}")
        upper = Operator(
            self.space, lambda columns: self.evolve_batch(columns, t, upper=True).values, name=f"T̄_{t:g}"
        )
        return DiscreteLTO.from_operator(
            lower,
            upper=upper,
            slack=max(NUMERICAL_THRESHOLD, 10 * self.tolerance),
            generator=self,
        )

    def derivative_check(self, f: Gamble, t: float, h: float) -> float:
        """Return ‖difference quotient of T_t f − Q(T_t f)‖; central, or forward at t = 0."""
        if not h > 0:
            raise ValueError(f"h must be positive, got {h}.")
        if t < 0:
            raise ValueError(f"Time must be non-negative, got {t}.")
        at_t = self.evolve(f, t).value
        ahead = self.evolve(f, t + h).value
        if t == 0:
            quotient = (ahead - at_t) * (1.0 / h)
        else:
            behind = self.evolve(f, max(t - h, 0.0)).value
            quotient = (ahead - behind) * (1.0 / (t + h - max(t - h, 0.0)))
        return max_norm(quotient - lower_apply(self.model, at_t))


def _segments(t: float, span: float) -> list[float]:
    """Split t into pieces of length span plus a remainder; T_{s+u} = T_s T_u makes this exact."""
    whole = int(math.floor(t / span))
    segments = [span] * whole
    remainder = t - whole * span
    if remainder > 1e-15 or not segments:
        segments.append(remainder if remainder > 1e-15 else t)
    return segments


def _reconcile(estimate: FloatArray, raw: FloatArray, top: FloatArray) -> FloatArray:
    """Clip an extrapolated estimate into [0, top] and restore the raw sign pattern at the bounds."""
    value = np.clip(estimate, 0.0, top)
    value = np.where(raw <= 0.0, 0.0, value)
    value = np.where((raw > 0.0) & (value <= 0.0), raw, value)
    value = np.where(raw >= top, top, value)
    value = np.where((raw < top) & (value >= top), raw, value)
    return value


@dataclass(frozen=True)
class DiscreteLTO:
    """A lower transition operator with its conjugate, certified on a fixed gamble set."""

    lower: Operator
    upper: Operator
    matrix: FloatArray | None = field(default=None, compare=False)
    slack: float = NUMERICAL_THRESHOLD
    generator: TransitionSolver | None = field(default=None, compare=False)

    @classmethod
    def from_operator(
        cls,
        lower: Operator,
        *,
        upper: Operator | None = None,
        matrix: FloatArray | None = None,
        slack: float = NUMERICAL_THRESHOLD,
        generator: TransitionSolver | None = None,
        certify: bool = True,
    ) -> DiscreteLTO:
        operator = cls(lower, upper or lower.conjugate(), matrix, slack, generator)
        if certify:
            operator.certify()
        return operator

    @classmethod
    def from_matrix(cls, space: StateSpace, matrix: FloatArray | list[list[float]]) -> DiscreteLTO:
        arr = np.array(matrix, dtype=np.float64)
        n = space.size
        if arr.shape != (n, n):
            raise DimensionMismatchError(f"Stochastic matrix must be {n}x{n}, got {arr.shape}.")
        if np.any(arr < 0) or not np.allclose(arr.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("Rows of a stochastic matrix must be non-negative and sum to one.")
        arr.setflags(write=False)
        operator = Operator(space, lambda columns: arr @ columns, name="P")
        return cls.from_operator(operator, upper=operator, matrix=arr)

    @property
    def space(self) -> StateSpace:
        return self.lower.space

    def __call__(self, f: Gamble) -> Gamble:
        return self.lower(f)

    def apply_upper(self, f: Gamble) -> Gamble:
        return self.upper(f)

    def certify(self) -> None:
        """Check L1–L3 on indicators, indicator sums, ±1 and seeded random gambles."""
        n = self.space.size
        eye = np.eye(n)
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        sums = np.array([eye[i] + eye[j] for i, j in pairs]).T.reshape(n, len(pairs))
        rng = np.random.default_rng(CHECK_SEED)
        random = rng.uniform(-1.0, 1.0, size=(n, CHECK_RANDOM_GAMBLES))
        half = CHECK_RANDOM_GAMBLES // 2
        first, second = random[:, :half], random[:, half:]
        ones = np.ones((n, 1))
        basis = np.hstack([eye, ones, -ones, random])
        batch = np.hstack([basis, sums, first + second, 2.0 * random])
        images = self.lower.apply_batch(batch)
        p = basis.shape[1]
        basis_images = images[:, :p]
        sum_images = images[:, p : p + len(pairs)]
        mixed_images = images[:, p + len(pairs) : p + len(pairs) + half]
        scaled_images = images[:, p + len(pairs) + half :]
        threshold = max(NUMERICAL_THRESHOLD, self.slack)
        l1 = float((basis.min(axis=0) - basis_images).max())
        if l1 > threshold:
            raise ValueError(f"{self.lower.name} violates L1 (T f >= min f) by {l1:.3g}.")
        pair_bound = np.array([basis_images[:, i] + basis_images[:, j] for i, j in pairs]).T.reshape(
            n, len(pairs)
        )
        random_images = basis_images[:, n + 2 :]
        l2 = max(
            float((pair_bound - sum_images).max(initial=-math.inf)),
            float((random_images[:, :half] + random_images[:, half:] - mixed_images).max()),
        )
        if l2 > threshold:
            raise ValueError(f"{self.lower.name} violates L2 (superadditivity) by {l2:.3g}.")
        l3 = float(np.abs(scaled_images - 2.0 * random_images).max())
        if l3 > threshold:
            raise ValueError(f"{self.lower.name} violates L3 (homogeneity) by {l3:.3g}.")


def compose(outer: DiscreteLTO, inner: DiscreteLTO) -> DiscreteLTO:
    """Return f ↦ outer(inner(f)); lower transition operators are closed under composition."""
    if outer.space != inner.space:
        raise DimensionMismatchError(f"Cannot compose operators over {outer.space.labels} and {inner.space.labels}.")
    matrix = None
    if outer.matrix is not None and inner.matrix is not None:
        matrix = outer.matrix @ inner.matrix
    generator = outer.generator if outer.generator is not None and outer.generator is inner.generator else None
    return DiscreteLTO.from_operator(
        outer.lower.compose(inner.lower),
        upper=outer.upper.compose(inner.upper),
        matrix=matrix,
        slack=outer.slack + inner.slack,
        generator=generator,
        certify=False,
    )


@dataclass(frozen=True)
class AxiomViolation:
    axiom: str
    magnitude: float
    structural: bool
    witness: dict[str, tuple[float, ...] | float]


@dataclass
class AxiomReport:
    trials: int
    threshold: float
    violations: list[AxiomViolation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(violation.structural for violation in self.violations)

    def failed_axioms(self) -> list[str]:
        return sorted({violation.axiom for violation in self.violations if violation.structural})


def check_lto_axioms(
    operator: DiscreteLTO,
    trials: int,
    seed: int,
    *,
    numerical_threshold: float | None = None,
) -> AxiomReport:
    """Randomized verification of L1–L8 and L10 on `trials` gamble pairs."""
    if trials < 1:
        raise ValueError("trials must be at least 1.")
    threshold = numerical_threshold if numerical_threshold is not None else max(NUMERICAL_THRESHOLD, operator.slack)
    report = AxiomReport(trials=trials, threshold=threshold)
    n = operator.space.size
    rng = np.random.default_rng(seed)
    f = rng.uniform(-2.0, 2.0, size=(n, trials))
    g = rng.uniform(-2.0, 2.0, size=(n, trials))
    h = rng.uniform(-1.0, 1.0, size=(n, trials))
    lam = 2.0
    mu = rng.uniform(-3.0, 3.0, size=trials)
    eps = 1e-6
    below = f - np.abs(h)
    gap = np.abs(f - g)
    lower_batch = np.hstack([f, g, f + g, lam * f, f + mu, below, f + eps * h])
    upper_batch = np.hstack([f, below, gap])
    lower_images = operator.lower.apply_batch(lower_batch)
    upper_images = operator.upper.apply_batch(upper_batch)
    tf, tg, tfg, tlf, tfm, tbelow, tnear = np.split(lower_images, 7, axis=1)
    uf, ubelow, ugap = np.split(upper_images, 3, axis=1)

    def record(axiom: str, excess: FloatArray, witnesses: dict[str, FloatArray], extra: dict[str, float]) -> None:
        # witnesses hold (n, trials) gambles or (trials,) scalars
        per_trial = excess.max(axis=0)
        worst = int(np.argmax(per_trial))
        magnitude = float(per_trial[worst])
        if magnitude <= NOISE_FLOOR:
            return
        witness: dict[str, tuple[float, ...] | float] = {
            name: (float(values[worst]) if values.ndim == 1 else tuple(float(v) for v in values[:, worst]))
            for name, values in witnesses.items()
        }
        witness.update(extra)
        report.violations.append(AxiomViolation(axiom, magnitude, magnitude > threshold, witness))

    record("L1", f.min(axis=0) - tf, {"f": f}, {})
    record("L2", tf + tg - tfg, {"f": f, "g": g}, {})
    record("L3", np.abs(tlf - lam * tf), {"f": f}, {"lambda": lam})
    l4 = np.maximum.reduce([f.min(axis=0) - tf, tf - uf, uf - f.max(axis=0)])
    record("L4", l4, {"f": f}, {})
    record("L5", np.abs(tfm - (tf + mu)), {"f": f, "mu": mu}, {})
    record("L6", np.maximum(tbelow - tf, ubelow - uf), {"f": f, "g": below}, {})
    record("L7", np.abs(tf - tg) - ugap, {"f": f, "g": g}, {})
    record("L8", np.abs(tnear - tf) - eps * np.abs(h).max(axis=0), {"f": f, "h": h}, {"epsilon": eps})
    l10 = np.abs(tf - tg).max(axis=0, keepdims=True) - np.abs(f - g).max(axis=0, keepdims=True)
    record("L10", l10, {"f": f, "g": g}, {})
    if not report.passed:
        logger.info("Axiom check failed for %s: %s", operator.lower.name, ", ".join(report.failed_axioms()))
    return report


@dataclass(frozen=True)
class DiscreteLimit:
    value: float | None
    gamble: Gamble
    converged: bool
    iterations: int


def discrete_limit(operator: DiscreteLTO, f: Gamble, span_tol: float, n_cap: int) -> DiscreteLimit:
    """Iterate T^k f until its span is at most span_tol or k reaches n_cap."""
    if not span_tol > 0:
        raise ValueError("span_tol must be positive.")
    current = f
    for iteration in range(n_cap + 1):
        if current.span() <= span_tol:
            return DiscreteLimit((current.max() + current.min()) / 2.0, current, True, iteration)
        if iteration == n_cap:
            break
        current = operator(current)
    return DiscreteLimit(None, current, False, n_cap)
