import csv
import io
import math

import numpy as np
import pytest

from evacsim.grid import Grid, Structure
from evacsim.report import FRAME_CHARS, GRAY_LEVELS, emit_stats, render_frame
from evacsim.scenario import SimConfig, load_preset
from evacsim.simulation import Interval, ReplicationStats, RunResult, Simulation, replicate


def test_empty_room_frame():
    frame = render_frame(Grid.room(5, 5), 0).decode()
    assert frame.splitlines() == ["WWWWW", "WEEEW", "WEEEW", "WEEEW", "WWWWW"]


def test_alphabet():
    grid = Grid.room(5, 6)
    grid.occupant[1, 1] = 0
    grid.smoke[1, 1] = 2          # person in smoke
    grid.occupant[1, 2] = 1       # person
    grid.smoke[2, 1] = 1          # smoke
    grid.fire[2, 2] = grid.smoke[2, 2] = 1
    grid.structure[3, 3] = Structure.OBSTACLE
    rows = render_frame(grid, 3).decode().splitlines()
    assert rows[1][1:3] == "XP" and rows[2][1:3] == "SF" and rows[3][3] == "O"
    assert set("".join(rows)) <= set(FRAME_CHARS.values()) == set("WEPOSFX")
    assert len(rows) == 5 and all(len(r) == 6 for r in rows)


def test_graymap():
    grid = Grid.room(4, 6)
    grid.fire[1, 1] = 1
    data = render_frame(grid, 42, "graymap")
    header = b"P5\n# tick 42\n6 4\n255\n"
    assert data.startswith(header)
    pixels = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(4, 6)
    assert pixels[0, 0] == GRAY_LEVELS["W"] and pixels[1, 1] == GRAY_LEVELS["SF"]
    assert pixels[2, 2] == GRAY_LEVELS["E"]
    assert len(set(GRAY_LEVELS.values())) == len(GRAY_LEVELS)


def test_unknown_frame_format():
    with pytest.raises(ValueError):
        render_frame(Grid.room(3, 3), 0, "png")


def test_frame_reproducible():
    def frame_at(tick):
        sim = Simulation(load_preset("caseB"), seed=8)
        while sim.tick < tick:
            sim.step()
        return render_frame(sim.world.grid, tick), render_frame(sim.world.grid, tick, "graymap")
    assert frame_at(100) == frame_at(100)


def _stats(name, behaviors=False):
    r1 = RunResult(10.0, [], {1: 3, 2: 5}, 0, 40,
                   behavior_exit_counts={("NE", 1): 2, ("BPE", 1): 1, ("NE", 2): 1, ("BPE", 2): 4} if behaviors else {("NE", 1): 3, ("NE", 2): 5})
    r2 = RunResult(12.0, [], {1: 4, 2: 4}, 0, 44,
                   behavior_exit_counts={("NE", 1): 3, ("BPE", 1): 1, ("NE", 2): 1, ("BPE", 2): 3} if behaviors else {("NE", 1): 4, ("NE", 2): 4})
    return ReplicationStats.from_runs(name, [r1, r2])


def test_csv_columns_plain():
    text = emit_stats(_stats("caseA"), "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["case", "n", "TET_lo", "TET_mean", "TET_hi", "METxI_lo", "METxI_mean",
                       "METxI_hi", "MDxI_lo", "MDxI_mean", "MDxI_hi", "E1", "E2", "trapped"]
    assert rows[1][0] == "caseA" and rows[1][1] == "2"
    assert float(rows[1][3]) == 11.0 and float(rows[1][11]) == 3.5


def test_csv_columns_mixed():
    rows = list(csv.reader(io.StringIO(emit_stats(_stats("caseE", True), "csv"))))
    assert rows[0][11:] == ["E1", "E2", "E1_BPE", "E1_NE", "E2_BPE", "E2_NE", "trapped"]
    assert [float(x) for x in rows[1][13:17]] == [1.0, 2.5, 3.5, 1.0]


def test_csv_round_trips_numbers():
    st = _stats("caseA")
    rows = list(csv.reader(io.StringIO(emit_stats(st, "csv"))))
    vals = [float(x) for x in rows[1][2:11]]
    expect = [st.tet.lower, st.tet.mean, st.tet.upper, st.met.lower, st.met.mean, st.met.upper,
              st.md.lower, st.md.mean, st.md.upper]
    for got, want in zip(vals, expect):
        assert got == want or (math.isnan(got) and math.isnan(want))


def test_table_and_many():
    text = emit_stats([_stats("caseA"), _stats("caseB")], "table")
    lines = text.splitlines()
    assert lines[0].startswith("Case") and "#E1" in lines[0] and "#E2" in lines[0]
    assert lines[1].startswith("caseA") and lines[2].startswith("caseB")
    mixed = emit_stats(_stats("caseE", True), "table")
    assert "#E1 NE" in mixed and "#E2 BPE" in mixed


def test_empty_stats_rejected():
    with pytest.raises(ValueError):
        emit_stats([], "csv")
    with pytest.raises(ValueError):
        emit_stats(_stats("x"), "xml")
