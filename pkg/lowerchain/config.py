"""Configuration helpers for solver defaults and file locations."""

from __future__ import annotations

import os
import platform
from dataclasses import dataclass
from pathlib import Path

APP_NAME = "lowerchain"

ENV_TOLERANCE = "LOWERCHAIN_TOLERANCE"
ENV_MAX_DOUBLINGS = "LOWERCHAIN_MAX_DOUBLINGS"
ENV_RICHARDSON_DEPTH = "LOWERCHAIN_RICHARDSON_DEPTH"
ENV_MAX_STEPS = "LOWERCHAIN_MAX_STEPS"


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-9
    max_doublings: int = 30
    richardson_depth: int = 4
    max_steps: int = 1 << 20  # per unit segment

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive.")
        if self.max_doublings < 1:
            raise ValueError("max_doublings must be at least 1.")
        if self.richardson_depth < 0:
            raise ValueError("richardson_depth must be non-negative.")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1.")


def get_data_root() -> Path:
    """Return the base directory for storing selftest dumps and reports."""
    system = platform.system()
    if system == "Windows":
        base = Path(os.environ.get("LOCALAPPDATA", Path.home() / "AppData" / "Local"))
    else:
        base = Path(os.environ.get("XDG_DATA_HOME", Path.home() / ".local" / "share"))
    root = base / APP_NAME
    root.mkdir(parents=True, exist_ok=True)
    return root


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ValueError(f"Environment variable {name} must be a number, got {raw!r}.") from exc


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"Environment variable {name} must be an integer, got {raw!r}.") from exc


def load_solver_settings(
    *,
    tolerance: float | None = None,
    max_doublings: int | None = None,
) -> SolverSettings:
    """Resolve solver settings: explicit arguments, then environment, then defaults."""
    defaults = SolverSettings()
    return SolverSettings(
        tolerance=tolerance if tolerance is not None else _env_float(ENV_TOLERANCE, defaults.tolerance),
        max_doublings=(
            max_doublings if max_doublings is not None else _env_int(ENV_MAX_DOUBLINGS, defaults.max_doublings)
        ),
        richardson_depth=_env_int(ENV_RICHARDSON_DEPTH, defaults.richardson_depth),
        max_steps=_env_int(ENV_MAX_STEPS, defaults.max_steps),
    )
