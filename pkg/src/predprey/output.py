"""Deterministic CSV emission.

Numbers are rendered with 12 significant digits, `.` decimal separator, LF
line endings and no trailing whitespace, so identical inputs always produce
byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

from .integrate import Trajectory

__all__ = ["format_number", "write_csv", "write_trajectory_csv"]


def format_number(value: float) -> str:
    """Render a float with 12 significant digits (trailing zeros trimmed)."""
    if isinstance(value, bool):
        raise TypeError("booleans are not table numbers")
    if not math.isfinite(value):
        raise ValueError(f"cannot render non-finite number {value!r}")
    return format(float(value), ".12g")


def _cell(value) -> str:
    if isinstance(value, str):
        if any(c in value for c in ",\n\r"):
            raise ValueError(f"cell text may not contain separators: {value!r}")
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return format_number(value)


def write_csv(path, header, rows) -> None:
    """Write a simple comma-separated table (no quoting, LF endings)."""
    lines = [",".join(_cell(c) for c in header)]
    lines.extend(",".join(_cell(c) for c in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_trajectory_csv(trajectory: Trajectory, species_names, path) -> None:
    """Emit `t,<name1>,<name2>,...` with one row per stored sample."""
    if trajectory.times.size == 0:
        raise ValueError("refusing to write an empty trajectory")
    names = list(species_names)
    if len(names) != trajectory.states.shape[1]:
        raise ValueError(
            f"{len(names)} species names for {trajectory.states.shape[1]} state columns"
        )
    rows = (
        [t] + list(state)
        for t, state in zip(trajectory.times.tolist(), trajectory.states.tolist())
    )
    write_csv(path, ["t"] + names, rows)
