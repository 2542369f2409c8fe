"""Command-line interface for lowerchain.

Exit codes: 0 success or ergodic, 1 negative verdict or property violation,
2 input error, 3 no convergence.
"""

from __future__ import annotations

import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Annotated, NoReturn

import typer

from .config import SolverSettings, get_data_root, load_solver_settings
from .ergodicity import build_graph, decide_ergodic, limit_lower_expectation, top_class
from .gambles import Gamble, StateSpace
from .modelio import JSONValue, model_digest, parse_model
from .properties import run_battery
from .rates import LowerRateModel
from .reports import RunReport, format_number, to_dot
from .semigroup import TransitionSolver

app = typer.Typer(add_completion=False, no_args_is_help=True, help="Lower transition operators of imprecise Markov chains")

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3

ModelArgument = Annotated[Path, typer.Argument(help="Model file (JSON)", show_default=False)]
GambleOption = Annotated[str, typer.Option("--f", help="Gamble values, one per state, separated by spaces or commas")]
TolOption = Annotated[float | None, typer.Option("--tol", help="Solver tolerance (default 1e-9 or LOWERCHAIN_TOLERANCE)")]
DoublingsOption = Annotated[int | None, typer.Option("--max-doublings", help="Cap on step doublings per segment")]


def _fail(message: str) -> NoReturn:
    logger.debug("Input error: %s", message)
    typer.echo(f"error: {message}", err=True)
    raise typer.Exit(code=EXIT_INPUT)


def _load(model_path: Path) -> LowerRateModel:
    try:
        return parse_model(model_path)
    except ValueError as exc:
        _fail(str(exc))


def _settings(tol: float | None, max_doublings: int | None) -> SolverSettings:
    try:
        return load_solver_settings(tolerance=tol, max_doublings=max_doublings)
    except ValueError as exc:
        _fail(str(exc))


def parse_gamble(space: StateSpace, text: str) -> Gamble:
    tokens = [token for token in text.replace(",", " ").split() if token]
    try:
        values = [float(token) for token in tokens]
    except ValueError:
        _fail(f"gamble values must be numbers, got {text!r}")
    if len(values) != space.size:
        _fail(f"gamble has {len(values)} value(s) but the model has {space.size} state(s)")
    try:
        return space.gamble(values)
    except ValueError as exc:
        _fail(str(exc))


def _labels(space: StateSpace, states: frozenset[int] | tuple[int, ...]) -> list[JSONValue]:
    ordered = sorted(states) if isinstance(states, frozenset) else list(states)
    return [space.label(idx) for idx in ordered]


def _emit(report: RunReport, started: float) -> NoReturn:
    report.wall_time = time.perf_counter() - started
    typer.echo(report.render(), nl=False)
    raise typer.Exit(code=report.exit_code)


@app.callback()
def main(
    verbose: Annotated[int, typer.Option("--verbose", "-v", count=True, help="Log progress to stderr (-vv for debug)")] = 0,
) -> None:
    """Compute lower expectations of imprecise continuous-time Markov chains and decide ergodicity."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


@app.command()
def check(model_path: ModelArgument) -> None:
    """Decide whether the model is ergodic."""
    started = time.perf_counter()
    model = _load(model_path)
    space = model.space
    result = decide_ergodic(model)
    report = RunReport(f"check {model_path.name}", model_digest(model))
    report.add("kind", model.kind, model.kind)
    report.add("states", str(space.size), _labels(space, frozenset(range(space.size))))
    report.add_lines(result.summary(space))
    report.data["verdict"] = "ergodic" if result.verdict else "not ergodic"
    report.data["top_class"] = _labels(space, result.top_class)
    report.data["reason"] = result.reason
    if result.trace is not None:
        report.data["lower_reach"] = [_labels(space, states) for states in result.trace.sets]
    if result.missing_path is not None:
        report.data["no_path"] = _labels(space, result.missing_path)
    if result.failing_state is not None:
        report.data["failing_state"] = space.label(result.failing_state)
    if result.paths:
        report.data["paths"] = {space.label(state): _labels(space, path) for state, path in result.paths.items()}
    report.exit_code = EXIT_OK if result.verdict else EXIT_NEGATIVE
    _emit(report, started)


@app.command()
def evaluate(
    model_path: ModelArgument,
    f: GambleOption,
    t: Annotated[float, typer.Option("--t", help="Time horizon")],
    tol: TolOption = None,
    max_doublings: DoublingsOption = None,
) -> None:
    """Print T_t f and its conjugate T̄_t f for every state."""
    started = time.perf_counter()
    model = _load(model_path)
    space = model.space
    gamble = parse_gamble(space, f)
    if not math.isfinite(t) or t < 0:
        _fail(f"--t must be a finite non-negative number, got {t}")
    solver = TransitionSolver(model, settings=_settings(tol, max_doublings))
    lower = solver.evolve(gamble, t)
    upper = solver.evolve_upper(gamble, t)
    report = RunReport(f"evaluate {model_path.name}", model_digest(model))
    report.add("kind", model.kind, model.kind)
    report.add("states", str(space.size), _labels(space, frozenset(range(space.size))))
    report.add("t", format_number(t), t)
    report.add("f", " ".join(format_number(value) for value in gamble.as_tuple()), list(gamble.as_tuple()))
    for idx in range(space.size):
        report.add(f"lower {space.label(idx)}", format_number(lower.value.values[idx]))
    for idx in range(space.size):
        report.add(f"upper {space.label(idx)}", format_number(upper.value.values[idx]))
    report.data["lower"] = list(lower.value.as_tuple())
    report.data["upper"] = list(upper.value.as_tuple())
    converged = lower.converged and upper.converged
    report.add("steps_used", str(lower.steps_used + upper.steps_used), lower.steps_used + upper.steps_used)
    est_error = max(lower.est_error, upper.est_error)
    report.add("est_error", format_number(est_error), est_error)
    report.add("converged", "true" if converged else "false")
    report.data["converged"] = converged
    report.exit_code = EXIT_OK if converged else EXIT_NOT_CONVERGED
    _emit(report, started)


@app.command()
def limit(
    model_path: ModelArgument,
    f: GambleOption,
    span_tol: Annotated[float, typer.Option("--span-tol", help="Stop once max T_t f - min T_t f is this small")] = 1e-6,
    t_cap: Annotated[float, typer.Option("--t-cap", help="Largest time to try")] = 1000.0,
    tol: TolOption = None,
    max_doublings: DoublingsOption = None,
) -> None:
    """Follow T_t f as t doubles until it is constant up to --span-tol."""
    started = time.perf_counter()
    model = _load(model_path)
    space = model.space
    gamble = parse_gamble(space, f)
    if not (math.isfinite(span_tol) and span_tol > 0):
        _fail(f"--span-tol must be a finite positive number, got {span_tol}")
    if not (math.isfinite(t_cap) and t_cap > 0):
        _fail(f"--t-cap must be a finite positive number, got {t_cap}")
    solver = TransitionSolver(model, settings=_settings(tol, max_doublings))
    result = limit_lower_expectation(solver, gamble, span_tol, t_cap)
    report = RunReport(f"limit {model_path.name}", model_digest(model))
    report.add("kind", model.kind, model.kind)
    report.add("f", " ".join(format_number(value) for value in gamble.as_tuple()), list(gamble.as_tuple()))
    report.add("converged", "true" if result.converged else "false")
    report.data["converged"] = result.converged
    report.add("value", "none" if result.value is None else format_number(result.value))
    report.data["value"] = result.value
    report.add("t_reached", format_number(result.t), result.t)
    report.add("span", format_number(result.span), result.span)
    report.add("est_error", format_number(result.est_error), result.est_error)
    for idx in range(space.size):
        report.add(f"final {space.label(idx)}", format_number(result.gamble.values[idx]))
    report.data["final"] = list(result.gamble.as_tuple())
    report.exit_code = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    _emit(report, started)


@app.command()
def graph(
    model_path: ModelArgument,
    output_format: Annotated[str, typer.Option("--format", help="Output format (only dot)")] = "dot",
) -> None:
    """Print the upper reachability graph; top class states get a double border."""
    if output_format != "dot":
        _fail(f"unsupported graph format {output_format!r} (expected 'dot')")
    model = _load(model_path)
    reachability = build_graph(model)
    typer.echo(to_dot(reachability, top_class(reachability)), nl=False)


@app.command()
def selftest(
    seed: Annotated[int, typer.Option(help="Seed for the random models and gambles")] = 0,
    trials: Annotated[int, typer.Option(help="Number of random models")] = 12,
    dump_dir: Annotated[Path | None, typer.Option("--dump-dir", help="Where witness dumps are written on failure")] = None,
    inject_fault: Annotated[bool, typer.Option("--inject-fault", hidden=True)] = False,
    tol: TolOption = None,
) -> None:
    """Run the seeded property battery."""
    started = time.perf_counter()
    if trials < 1:
        _fail(f"--trials must be at least 1, got {trials}")
    battery = run_battery(seed, trials, inject_fault=inject_fault, settings=_settings(tol, None))
    report = RunReport(f"selftest --seed {seed} --trials {trials}")
    report.add("seed", str(seed), seed)
    report.add("trials", str(trials), trials)
    report.add("checks", str(battery.checks), battery.checks)
    report.add("passed", "true" if battery.passed else "false")
    report.data["passed"] = battery.passed
    if not battery.passed:
        failed: list[JSONValue] = [name for name in battery.failed_checks()]
        report.add("failed_checks", ", ".join(battery.failed_checks()), failed)
        target = (dump_dir or get_data_root()) / f"selftest-{seed}-{trials}.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        _ = target.write_text(json.dumps(battery.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        report.add("witness_dump", str(target), str(target))
    report.exit_code = EXIT_OK if battery.passed else EXIT_NEGATIVE
    _emit(report, started)


def run() -> None:
    app(prog_name="lowerchain")
