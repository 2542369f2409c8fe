"""Seeded property battery behind ``lowerchain selftest``.

Every trial draws a random model with small rational rates, then checks the
rate operator axioms, the lower transition operator axioms of T_1, the
backward equation, the semigroup law, agreement between the ergodicity
decision and one-step absorption of T_t, and agreement between the
reachability graph and strict positivity of T_1 and T̄_1 on indicators.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
import sys
from typing import ClassVar

if sys.version_info >= (3, 12):
    from typing import override
else:
    from typing_extensions import override

import numpy as np

from .config import SolverSettings
from .ergodicity import build_graph, decide_ergodic, lower_reach, one_step_absorbing, upper_reachable
from .gambles import FloatArray, StateSpace, operator_norm_estimate
from .modelio import JSONDict, JSONValue, model_document
from .rates import (
    ExactRow,
    IntervalModel,
    LowerRateModel,
    PreciseModel,
    RowSetModel,
    indicator_exact,
    lower_apply_exact,
    norm_bound,
    rate_operator,
    upper_apply_exact,
)
from .semigroup import TransitionSolver, check_lto_axioms

logger = logging.getLogger(__name__)

MODEL_KINDS = ("precise", "interval", "rowsets")
RATE_THRESHOLD = 1e-9
DERIVATIVE_THRESHOLD = 1e-4
DERIVATIVE_STEP = 1e-4
SEMIGROUP_THRESHOLD = 1e-6
ABSORPTION_TIMES = (0.5, 1.0, 2.0)
MODEL_SIZES = (2, 3, 4, 5)
SAMPLE_GAMBLES = 8
AXIOM_TRIALS = 4
MAX_ENVELOPE_ROWS = 64
FAULT_OFFSET = 0.5


def _rate(rng: np.random.Generator, sparsity: float) -> Fraction:
    if rng.random() < sparsity:
        return Fraction(0)
    return Fraction(int(rng.integers(1, 5)), 4)


def _intensity_row(rng: np.random.Generator, n: int, x: int, sparsity: float) -> list[Fraction]:
    row = [Fraction(0) if y == x else _rate(rng, sparsity) for y in range(n)]
    row[x] = -sum(row, Fraction(0))
    return row


def random_model(rng: np.random.Generator, n: int, kind: str, *, sparsity: float = 0.35) -> LowerRateModel:
    """A model over s0..s{n-1} with rates in {0, 1/4, ..., 1}; zeros appear with probability `sparsity`."""
    space = StateSpace.of_size(n)
    if kind == "precise":
        return PreciseModel.from_matrix(space, [_intensity_row(rng, n, x, sparsity) for x in range(n)])
    if kind == "interval":
        lower: list[list[Fraction]] = []
        upper: list[list[Fraction]] = []
        for x in range(n):
            lo_row: list[Fraction] = []
            hi_row: list[Fraction] = []
            for y in range(n):
                lo = Fraction(0) if y == x else _rate(rng, sparsity)
                hi = lo if y == x else lo + _rate(rng, 0.5)
                lo_row.append(lo)
                hi_row.append(hi)
            lower.append(lo_row)
            upper.append(hi_row)
        return IntervalModel.from_bounds(space, lower, upper)
    if kind == "rowsets":
        rows = [
            [_intensity_row(rng, n, x, sparsity) for _ in range(int(rng.integers(1, 4)))] for x in range(n)
        ]
        return RowSetModel.from_rows(space, rows)
    raise ValueError(f"Unknown model kind '{kind}'.")


class ShiftedModel(LowerRateModel):
    """Adds a constant to every numerical evaluation of the wrapped model; breaks Q(μ) = 0."""

    kind: ClassVar[str] = "shifted"

    def __init__(self, inner: LowerRateModel, offset: float) -> None:
        self.inner = inner
        self.offset = offset

    @property
    @override
    def space(self) -> StateSpace:
        return self.inner.space

    @override
    def lower_columns(self, columns: FloatArray) -> FloatArray:
        return self.inner.lower_columns(columns) + self.offset

    @override
    def lower_exact(self, values: Sequence[Fraction]) -> tuple[Fraction, ...]:
        return self.inner.lower_exact(values)

    @override
    def row_candidates(self, x: int) -> list[ExactRow]:
        return self.inner.row_candidates(x)

    @override
    def row_candidate_count(self, x: int) -> int:
        return self.inner.row_candidate_count(x)


@dataclass(frozen=True)
class PropertyFailure:
    check: str
    trial: int
    magnitude: float
    model: JSONDict
    witness: dict[str, JSONValue] = field(default_factory=dict)

    def as_dict(self) -> JSONDict:
        return {
            "check": self.check,
            "trial": self.trial,
            "magnitude": self.magnitude,
            "model": self.model,
            "witness": dict(self.witness),
        }


@dataclass
class BatteryReport:
    seed: int
    trials: int
    checks: int = 0
    failures: list[PropertyFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def failed_checks(self) -> list[str]:
        return sorted({failure.check for failure in self.failures})

    def as_dict(self) -> JSONDict:
        return {
            "seed": self.seed,
            "trials": self.trials,
            "checks": self.checks,
            "passed": self.passed,
            "failures": [failure.as_dict() for failure in self.failures],
        }


class _Trial:
    """Collects failures for one model."""

    def __init__(self, report: BatteryReport, index: int, model: LowerRateModel) -> None:
        self.report = report
        self.index = index
        self.model = model
        if isinstance(model, ShiftedModel):
            self.document = model_document(model.inner)
        else:
            self.document = model_document(model)

    def expect(self, check: str, magnitude: float, threshold: float, **witness: JSONValue) -> None:
        self.report.checks += 1
        if magnitude > threshold:
            logger.info("Trial %d: %s violated by %.3g", self.index, check, magnitude)
            self.report.failures.append(PropertyFailure(check, self.index, magnitude, self.document, witness))

    def expect_true(self, check: str, ok: bool, **witness: JSONValue) -> None:
        self.expect(check, 0.0 if ok else 1.0, 0.5, **witness)


def _column(values: FloatArray) -> list[JSONValue]:
    return [float(value) for value in values]


def check_rate_axioms(trial: _Trial, rng: np.random.Generator) -> None:
    """Randomized Q axioms, the derived properties and the envelope rule."""
    model = trial.model
    n = model.size
    q = model.lower_columns
    f = rng.uniform(-1.0, 1.0, size=(n, SAMPLE_GAMBLES))
    g = rng.uniform(-1.0, 1.0, size=(n, SAMPLE_GAMBLES))
    mu = rng.uniform(-2.0, 2.0, size=SAMPLE_GAMBLES)
    lam = 3.0
    qf, qg = q(f), q(g)
    upper_f = -q(-f)
    constants = np.abs(q(np.tile(mu, (n, 1)))).max(axis=0)
    worst = int(np.argmax(constants))
    trial.expect("R1", float(constants[worst]), RATE_THRESHOLD, mu=float(mu[worst]))
    trial.expect("R2", float((qf + qg - q(f + g)).max()), RATE_THRESHOLD)
    trial.expect("R3", float(np.abs(q(lam * f) - lam * qf).max()), RATE_THRESHOLD, **{"lambda": lam})
    for x in range(n):
        for y in range(n):
            if x != y:
                value = lower_apply_exact(model, indicator_exact(n, {y}))[x]
                trial.expect_true("R4", value >= 0, x=x, y=y)
    trial.expect("R5", float((qf - upper_f).max()), RATE_THRESHOLD)
    trial.expect("R6", float(np.abs(q(f + mu) - qf).max()), RATE_THRESHOLD)
    bound = norm_bound(model).value
    for x in range(n):
        own = lower_apply_exact(model, indicator_exact(n, {x}))[x]
        trial.expect_true("R7", upper_apply_exact(model, indicator_exact(n, {x}))[x] <= 0, x=x)
        diag = float(own)
        norms = np.abs(f).max(axis=0)
        middle = (f[x] - f.min(axis=0)) * diag
        r8 = np.maximum(2.0 * norms * diag - middle, middle - qf[x])
        trial.expect("R8", float(r8.max()), RATE_THRESHOLD, x=x)
    estimate = operator_norm_estimate(rate_operator(model), SAMPLE_GAMBLES, int(rng.integers(1 << 31)))
    trial.expect("R9", estimate - bound, RATE_THRESHOLD)
    gap = np.abs(f - g).max(axis=0)
    trial.expect("R10", float((np.abs(qf - qg).max(axis=0) - 2.0 * bound * gap).max()), RATE_THRESHOLD)
    for x in range(n):
        if model.row_candidate_count(x) > MAX_ENVELOPE_ROWS:
            continue
        rows = np.array([[float(rate) for rate in row] for row in model.row_candidates(x)])
        envelope = (rows @ f).min(axis=0)
        trial.expect("envelope", float(np.abs(envelope - qf[x]).max()), RATE_THRESHOLD, x=x)


def check_semigroup(trial: _Trial, solver: TransitionSolver, rng: np.random.Generator, seed: int) -> None:
    model = trial.model
    n = model.size
    try:
        operator = solver.evolve_operator(1.0)
    except ValueError as exc:
        logger.info("Trial %d: T_1 failed certification: %s", trial.index, exc)
        trial.expect_true("lto_certificate", False, error=str(exc))
        return
    axioms = check_lto_axioms(operator, AXIOM_TRIALS, seed)
    for violation in axioms.violations:
        if violation.structural:
            trial.expect(violation.axiom, violation.magnitude, axioms.threshold)
    trial.report.checks += 1
    f = model.space.gamble(rng.uniform(-1.0, 1.0, size=n))
    error = solver.derivative_check(f, 1.0, DERIVATIVE_STEP)
    trial.expect("backward_equation", error, DERIVATIVE_THRESHOLD, f=_column(f.values))
    direct = solver.evolve(f, 3.0).value
    split = solver.evolve(solver.evolve(f, 2.0).value, 1.0).value
    trial.expect(
        "semigroup",
        float(np.abs(direct.values - split.values).max()),
        SEMIGROUP_THRESHOLD,
        f=_column(f.values),
    )


def check_decisions(trial: _Trial, solver: TransitionSolver) -> None:
    """Ergodicity verdict against one-step absorption, and reachability against positivity."""
    model = trial.model
    n = model.size
    verdict = decide_ergodic(model).verdict
    for t in ABSORPTION_TIMES:
        try:
            absorbing, _ = one_step_absorbing(solver.evolve_operator(t))
        except ValueError as exc:
            trial.expect_true("absorption", False, t=t, error=str(exc))
            continue
        trial.expect_true("absorption", absorbing == verdict, t=t, ergodic=verdict)
    graph = build_graph(model)
    space = model.space
    for x in range(n):
        support = solver.positive_support(space.indicator({x}), 1.0, upper=True)
        for y in range(n):
            trial.expect_true("upper_reachability", (y in support) == upper_reachable(graph, y, x), x=x, y=y)
    targets = [frozenset({x}) for x in range(n)]
    targets += [frozenset({x, y}) for x in range(n) for y in range(x + 1, n) if n > 2]
    for target in targets:
        support = solver.positive_support(space.indicator(target), 1.0)
        for x in range(n):
            if x in target:
                continue
            reached, _ = lower_reach(model, target, x)
            trial.expect_true(
                "lower_reachability", (x in support) == reached, x=x, target=[int(idx) for idx in sorted(target)]
            )


def battery_plan(trials: int) -> list[tuple[str, int]]:
    """Kind and size of each trial; the first 12 trials cover every pairing."""
    return [
        (MODEL_KINDS[index % len(MODEL_KINDS)], MODEL_SIZES[(index // len(MODEL_KINDS)) % len(MODEL_SIZES)])
        for index in range(trials)
    ]


def run_battery(
    seed: int,
    trials: int,
    *,
    inject_fault: bool = False,
    settings: SolverSettings | None = None,
) -> BatteryReport:
    """Run every property on `trials` seeded models laid out by `battery_plan`."""
    if trials < 1:
        raise ValueError("trials must be at least 1.")
    settings = settings or SolverSettings()
    rng = np.random.default_rng(seed)
    report = BatteryReport(seed=seed, trials=trials)
    for index, (kind, n) in enumerate(battery_plan(trials)):
        model: LowerRateModel = random_model(rng, n, kind)
        if inject_fault:
            model = ShiftedModel(model, FAULT_OFFSET)
        logger.debug("Trial %d: %s model with %d states", index, kind, n)
        trial = _Trial(report, index, model)
        solver = TransitionSolver(model, settings=settings)
        check_rate_axioms(trial, rng)
        check_semigroup(trial, solver, rng, seed + index)
        check_decisions(trial, solver)
    if report.passed:
        logger.info("Property battery passed: %d checks over %d models", report.checks, trials)
    else:
        logger.warning("Property battery failed: %s", ", ".join(report.failed_checks()))
    return report
