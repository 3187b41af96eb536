import numpy as np
import pytest

from evacsim.grid import ExitSpec, Grid


def open_room(height=10, width=10, exit_cells=((9, 4),), exit_id=1):
    """Walled room with a single exit in the bottom wall by default."""
    grid = Grid.room(height, width)
    ex = ExitSpec(exit_id, exit_cells)
    grid.add_exit(ex)
    return grid, ex


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scenario(width_m=4, height_m=4, exits=("1: 9,4",), groups=(), extra="", name="t"):
    """Build scenario text. ``groups`` holds (behavior, [cells]) pairs placed explicitly."""
    from evacsim.scenario import parse_scenario
    lines = ["evacsim-scenario v1", f"name = {name}", f"width_m = {width_m}",
             f"height_m = {height_m}", f"population = {sum(len(c) for _, c in groups)}", ""]
    for ex in exits:
        eid, cells = ex.split(":")
        lines += ["[exit]", f"id = {eid.strip()}", f"cells = {cells.strip()}", ""]
    for beh, cells in groups:
        lines += ["[group]", f"count = {len(cells)}", f"behavior = {beh}", "placement = cells",
                  "cells = " + " ".join(f"{r},{c}" for r, c in cells), ""]
    return parse_scenario("\n".join(lines) + "\n" + extra)


# One verdict line per acceptance criterion, printed after the test session.
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
