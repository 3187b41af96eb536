"""Statistics tables and frame dumps."""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from .grid import E, O, P, PS, S, SF, W, Grid

FRAME_CHARS = {W: "W", E: "E", P: "P", O: "O", S: "S", SF: "F", PS: "X"}

# Fixed gray levels for graymap frames (0 black .. 255 white).
GRAY_LEVELS = {W: 0, O: 64, E: 255, S: 190, P: 128, PS: 96, SF: 32}


def _fmt(x) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


def _columns(stats):
    exits = sorted(stats.exit_means)
    cols = ["case", "n", "TET_lo", "TET_mean", "TET_hi", "METxI_lo", "METxI_mean", "METxI_hi",
            "MDxI_lo", "MDxI_mean", "MDxI_hi"]
    cols += [f"E{j}" for j in exits]
    mixed = len(stats.behaviors) > 1
    if mixed:
        cols += [f"E{j}_{b}" for j in exits for b in stats.behaviors]
    cols.append("trapped")
    return cols, exits, mixed


def stats_rows(stats) -> tuple:
    cols, exits, mixed = _columns(stats)
    row = [stats.name, stats.n]
    for iv in (stats.tet, stats.met, stats.md):
        row += [iv.lower, iv.mean, iv.upper]
    row += [stats.exit_means[j] for j in exits]
    if mixed:
        row += [stats.behavior_exit_means.get((b, j), 0.0) for j in exits for b in stats.behaviors]
    row.append(stats.trapped_mean)
    return cols, row


def emit_stats(stats, format: str = "table") -> str:
    """Render ReplicationStats (or a list of them) as a text table or CSV."""
    many = stats if isinstance(stats, (list, tuple)) else [stats]
    if not many:
        raise ValueError("no replication statistics to emit")
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = None
        for st in many:
            cols, row = stats_rows(st)
            if cols != header:
                writer.writerow(cols)
                header = cols
            writer.writerow([v if isinstance(v, str) else str(v) if isinstance(v, int) else _fmt(v)
                             for v in row])
        return buf.getvalue()
    if format != "table":
        raise ValueError(f"unknown format {format!r}")
    lines, last_head = [], None
    for st in many:
        exits = sorted(st.exit_means)
        mixed = len(st.behaviors) > 1
        head = f"{'Case':<8} {'TET (s)':>17} {'METxI (s)':>17} {'MDxI (m)':>17}"
        head += "".join(f" {'#E' + str(j):>8}" for j in exits)
        if mixed:
            head += "".join(f" {'#E' + str(j) + ' ' + b:>10}" for j in exits for b in st.behaviors)
        body = f"{st.name:<8}"
        for iv in (st.tet, st.met, st.md):
            body += f" {iv.lower:8.2f}-{iv.upper:<8.2f}"
        body += "".join(f" {st.exit_means[j]:8.2f}" for j in exits)
        if mixed:
            body += "".join(f" {st.behavior_exit_means.get((b, j), 0.0):10.2f}"
                            for j in exits for b in st.behaviors)
        if head != last_head:
            lines.append(head)
            last_head = head
        lines.append(body)
    return "\n".join(lines) + "\n"


def render_frame(grid: Grid, tick: int, format: str = "text") -> bytes:
    """One snapshot of the grid: a character per cell, or a binary PGM image."""
    labels = grid.state_labels()
    if format == "text":
        rows = ("".join(FRAME_CHARS[x] for x in row) for row in labels)
        return ("\n".join(rows) + "\n").encode("ascii")
    if format == "graymap":
        pixels = np.vectorize(GRAY_LEVELS.__getitem__, otypes=[np.uint8])(labels)
        header = f"P5\n# tick {tick}\n{grid.width} {grid.height}\n255\n".encode("ascii")
        return header + pixels.tobytes()
    raise ValueError(f"unknown frame format {format!r}")
