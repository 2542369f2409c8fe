"""Report and graph emitters used by the command-line interface."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .ergodicity import ReachabilityGraph
from .modelio import JSONDict, JSONValue

MACHINE_MARKER = "--- machine ---"


def format_number(value: float) -> str:
    return f"{value:.10g}"


@dataclass
class RunReport:
    """Stable `key: value` lines for people followed by a sorted JSON block for tools."""

    command: str
    model_digest: str | None = None
    lines: list[tuple[str, str]] = field(default_factory=list)
    data: JSONDict = field(default_factory=dict)
    wall_time: float = 0.0
    exit_code: int = 0

    def add(self, key: str, value: str, machine: JSONValue = None) -> None:
        self.lines.append((key, value))
        if machine is not None:
            self.data[key] = machine

    def add_lines(self, lines: list[str]) -> None:
        for line in lines:
            key, _, value = line.partition(": ")
            self.lines.append((key, value))

    def machine(self) -> JSONDict:
        block: JSONDict = dict(self.data)
        block["command"] = self.command.split(" ", 1)[0]
        block["exit_code"] = self.exit_code
        block["wall_time"] = round(self.wall_time, 6)
        if self.model_digest is not None:
            block["model_digest"] = self.model_digest
        return block

    def render(self) -> str:
        out = [f"command: {self.command}"]
        if self.model_digest is not None:
            out.append(f"model_digest: {self.model_digest}")
        out.extend(f"{key}: {value}" for key, value in self.lines)
        out.append(f"wall_time: {self.wall_time:.6f}s")
        out.append(f"exit_code: {self.exit_code}")
        out.append(MACHINE_MARKER)
        out.append(json.dumps(self.machine(), sort_keys=True))
        return "\n".join(out) + "\n"


def _quote(label: str) -> str:
    escaped = label.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def to_dot(graph: ReachabilityGraph, top: frozenset[int]) -> str:
    """Graphviz digraph with top-class states drawn with a double border."""
    space = graph.space
    nodes: list[str] = []
    for idx in range(space.size):
        name = _quote(space.label(idx))
        nodes.append(f"{name} [peripheries=2];" if idx in top else f"{name};")
    edges = [f"{_quote(space.label(y))} -> {_quote(space.label(x))};" for y, x in graph.edges()]
    out = ['digraph "reachability" {']
    out.extend(f"\t{line}" for line in nodes)
    out.extend(f"\t{line}" for line in edges)
    out.append("}")
    return "\n".join(out) + "\n"
