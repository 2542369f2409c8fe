"""Ergodicity of lower rate models, decided from upper and lower reachability.

A model is ergodic exactly when the top class (states upper reachable from
every state) is nonempty and every other state lower-reaches it. Both notions
only evaluate Q on indicators, exactly, so no integration is involved.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import networkx as nx
import numpy as np

from .gambles import Gamble, StateSpace
from .rates import LowerRateModel, indicator_exact, upper_apply_exact
from .semigroup import DiscreteLTO, TransitionSolver

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReachabilityGraph:
    """Digraph with an edge y → x whenever x ≠ y and Q̄(1_x)(y) > 0."""

    space: StateSpace
    graph: nx.DiGraph = field(compare=False, repr=False)

    @property
    def n(self) -> int:
        return self.space.size

    def edges(self) -> list[tuple[int, int]]:
        return sorted((int(y), int(x)) for y, x in self.graph.edges())


def build_graph(model: LowerRateModel) -> ReachabilityGraph:
    n = model.size
    graph = nx.DiGraph()
    graph.add_nodes_from(range(n))
    for x in range(n):
        upper = upper_apply_exact(model, indicator_exact(n, {x}))
        for y in range(n):
            if y != x and upper[y] > 0:
                graph.add_edge(y, x)
    return ReachabilityGraph(model.space, graph)


def upper_reachable(graph: ReachabilityGraph, source: int, target: int) -> bool:
    """True iff a possibly empty directed path leads from source to target."""
    return bool(nx.has_path(graph.graph, source, target))


def _sink_components(graph: ReachabilityGraph) -> list[frozenset[int]]:
    condensed = nx.condensation(graph.graph)
    sinks = [
        frozenset(int(member) for member in condensed.nodes[node]["members"])
        for node in condensed.nodes
        if condensed.out_degree(node) == 0
    ]
    return sorted(sinks, key=min)


def top_class(graph: ReachabilityGraph) -> frozenset[int]:
    """States upper reachable from every state: the unique sink component, if there is one."""
    sinks = _sink_components(graph)
    return sinks[0] if len(sinks) == 1 else frozenset()


@dataclass(frozen=True)
class LowerReachTrace:
    sets: tuple[frozenset[int], ...]

    @property
    def terminal(self) -> int:
        """First index n with A_n = A_{n+1}."""
        return len(self.sets) - 1

    @property
    def final(self) -> frozenset[int]:
        return self.sets[-1]


def lower_reach(model: LowerRateModel, target: frozenset[int] | set[int], x: int) -> tuple[bool, LowerReachTrace]:
    """Run A_{k+1} = A_k ∪ {y ∉ A_k : Q(1_{A_k})(y) > 0} to its fixed point."""
    if not target:
        raise ValueError("Lower reachability needs a nonempty target set.")
    n = model.size
    current = frozenset(target)
    sets = [current]
    while True:
        values = model.lower_exact(indicator_exact(n, current))
        added = {y for y in range(n) if y not in current and values[y] > 0}
        if not added:
            break
        current = current | added
        sets.append(current)
    trace = LowerReachTrace(tuple(sets))
    return x in trace.final, trace


@dataclass(frozen=True)
class ErgodicityReport:
    verdict: bool
    top_class: frozenset[int]
    reason: str
    trace: LowerReachTrace | None = None
    missing_path: tuple[int, int] | None = None
    failing_state: int | None = None
    paths: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def summary(self, space: StateSpace) -> list[str]:
        def names(states: frozenset[int]) -> str:
            return "{" + ", ".join(space.label(idx) for idx in sorted(states)) + "}"

        lines = [
            f"verdict: {'ergodic' if self.verdict else 'not ergodic'}",
            f"top_class: {names(self.top_class)}",
            f"reason: {self.reason}",
        ]
        if self.missing_path is not None:
            source, target = self.missing_path
            lines.append(f"no_path: {space.label(source)} -> {space.label(target)}")
        if self.failing_state is not None:
            lines.append(f"failing_state: {space.label(self.failing_state)}")
        if self.trace is not None:
            for index, states in enumerate(self.trace.sets):
                lines.append(f"A_{index}: {names(states)}")
        for state, path in sorted(self.paths.items()):
            lines.append(f"path {space.label(state)}: {' -> '.join(space.label(idx) for idx in path)}")
        return lines


def decide_ergodic(model: LowerRateModel) -> ErgodicityReport:
    """Decide ergodicity from the top class and lower reachability of it."""
    graph = build_graph(model)
    top = top_class(graph)
    if not top:
        sinks = _sink_components(graph)
        source, target = min(sinks[0]), min(sinks[1])
        logger.info("Top class empty: %s cannot reach %s", model.space.label(source), model.space.label(target))
        return ErgodicityReport(False, top, "top class empty", missing_path=(source, target))
    _, trace = lower_reach(model, top, min(top))
    outside = sorted(set(range(model.size)) - trace.final)
    if outside:
        failing = outside[0]
        logger.info("State %s does not lower-reach the top class", model.space.label(failing))
        return ErgodicityReport(
            False,
            top,
            "top class not lower reachable",
            trace=trace,
            failing_state=failing,
        )
    anchor = min(top)
    paths = {
        state: tuple(int(node) for node in nx.shortest_path(graph.graph, state, anchor))
        for state in range(model.size)
    }
    logger.info("Model is ergodic with top class of size %d", len(top))
    return ErgodicityReport(True, top, "top class nonempty and lower reachable", trace=trace, paths=paths)


def _support(values: np.ndarray) -> frozenset[int]:
    return frozenset(int(idx) for idx in np.flatnonzero(values > 0))


def _indicator_columns(n: int, sets: list[frozenset[int]]) -> np.ndarray:
    columns = np.zeros((n, len(sets)))
    for column, states in enumerate(sets):
        for idx in states:
            columns[idx, column] = 1.0
    return columns


def one_step_absorbing(operator: DiscreteLTO) -> tuple[bool, frozenset[int]]:
    """Return whether min T̄1_x > 0 for some x and T1_{𝒳_1A} > 0 outside 𝒳_1A, with 𝒳_1A."""
    n = operator.space.size
    images = operator.upper.apply_batch(np.eye(n))
    top = frozenset(x for x in range(n) if images[:, x].min() > 0)
    if not top:
        return False, top
    absorbed = operator.lower.apply_batch(_indicator_columns(n, [top]))[:, 0]
    return all(absorbed[x] > 0 for x in range(n) if x not in top), top


class Verdict(Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


def regularly_absorbing(operator: DiscreteLTO, n_cap: int) -> tuple[Verdict, frozenset[int]]:
    """Three-valued check of top class regularity and absorption within n_cap powers.

    Positivity of T̄^k 1_x and T^k 1_A only depends on the supports of the previous
    power, so a repeated support pattern proves that nothing new can appear.
    """
    if n_cap < 1:
        raise ValueError("n_cap must be at least 1.")
    if operator.generator is not None:
        verdict, top = one_step_absorbing(operator)
        return (Verdict.TRUE if verdict else Verdict.FALSE), top
    n = operator.space.size
    everything = frozenset(range(n))
    supports = [frozenset({x}) for x in range(n)]
    seen = {tuple(supports)}
    regular: set[int] = set()
    settled = False
    for _ in range(n_cap):
        images = operator.upper.apply_batch(_indicator_columns(n, supports))
        supports = [_support(images[:, x]) for x in range(n)]
        regular.update(x for x in range(n) if supports[x] == everything)
        key = tuple(supports)
        if key in seen:
            settled = True
            break
        seen.add(key)
    top = frozenset(regular)
    if not top:
        return (Verdict.FALSE if settled else Verdict.UNKNOWN), top
    covered = set(top)
    current = top
    visited = {current}
    absorbed_settled = False
    for _ in range(n_cap):
        if covered == everything:
            break
        current = _support(operator.lower.apply_batch(_indicator_columns(n, [current]))[:, 0])
        covered |= current
        if current in visited:
            absorbed_settled = True
            break
        visited.add(current)
    if covered == everything:
        return Verdict.TRUE, top
    if settled and absorbed_settled:
        return Verdict.FALSE, top
    return Verdict.UNKNOWN, top


@dataclass(frozen=True)
class LimitResult:
    value: float | None
    gamble: Gamble
    converged: bool
    t: float
    span: float
    est_error: float


def limit_lower_expectation(
    solver: TransitionSolver,
    f: Gamble,
    span_tol: float,
    t_cap: float,
) -> LimitResult:
    """Double time through the semigroup until the span of T_t f is at most span_tol."""
    if not span_tol > 0:
        raise ValueError("span_tol must be positive.")
    if not (math.isfinite(t_cap) and t_cap > 0):
        raise ValueError(f"t_cap must be a finite positive number, got {t_cap}.")
    step = 1.0 / solver.bound if solver.bound > 0 else 1.0
    result = solver.evolve(f, step)
    current = result.value
    elapsed = step
    est_error = result.est_error
    while True:
        span = current.span()
        if span <= span_tol:
            value = (current.max() + current.min()) / 2.0
            logger.info("Limit converged at t=%g to %.10g (span %.3g)", elapsed, value, span)
            return LimitResult(value, current, True, elapsed, span, est_error)
        if elapsed * 2 > t_cap:
            logger.warning("Limit did not converge by t=%g (span %.3g)", elapsed, span)
            return LimitResult(None, current, False, elapsed, span, est_error)
        result = solver.evolve(current, elapsed)
        current = result.value
        est_error += result.est_error
        elapsed *= 2
