import json

import pytest

from conftest import random_configuration
from geometry import Boundary, Configuration, MarkedPoint, Window
from point_io import read_points, sidecar_path, write_points


def test_round_trip_is_bit_exact(tmp_path, unit_square, rng):
    config = random_configuration(unit_square, 25, rng)
    config.insert(MarkedPoint((0.1 + 0.2, 1 / 3)))
    path = write_points(tmp_path / "sample.csv", config)
    loaded = read_points(path)
    assert loaded == config
    original = sorted(p.pos for p in config)
    assert sorted(p.pos for p in loaded) == original


def test_marks_survive(tmp_path, rng):
    window = Window(side=3.0, dim=1, boundary=Boundary.FREE)
    config = random_configuration(window, 8, rng, marks=lambda g: float(g.uniform(0.1, 0.4)))
    path = write_points(tmp_path / "marked.csv", config)
    assert path.read_text().splitlines()[0] == "x0,mark"
    loaded = read_points(path)
    assert loaded == config
    assert loaded.window == window


def test_sidecar_describes_window(tmp_path, unit_square):
    path = write_points(tmp_path / "empty.csv", Configuration(unit_square))
    meta = json.loads(sidecar_path(path).read_text())
    assert meta == {"boundary": "periodic", "dim": 2, "marked": False, "side": 1.0}
    assert len(read_points(path)) == 0


def test_missing_sidecar_raises(tmp_path, unit_square):
    path = write_points(tmp_path / "a.csv", Configuration(unit_square, points=[MarkedPoint((0.5, 0.5))]))
    sidecar_path(path).unlink()
    with pytest.raises(FileNotFoundError):
        read_points(path)


def test_bad_header_raises(tmp_path, unit_square):
    path = write_points(tmp_path / "b.csv", Configuration(unit_square, points=[MarkedPoint((0.5, 0.5))]))
    path.write_text("a,b\n0.5,0.5\n")
    with pytest.raises(ValueError, match="header"):
        read_points(path)
