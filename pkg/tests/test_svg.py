import xml.etree.ElementTree as ET

import pytest

from homcomp import simulator as sim
from homcomp.config import load
from homcomp.svg import emit_svg

NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def cfg():
    return load().cluster


def test_curve_has_two_series(cfg, tmp_path):
    path = emit_svg(sim.sweep_workers(cfg, "vanilla", None, range(1, 26)), tmp_path / "c.svg")
    root = ET.parse(path).getroot()
    assert len(root.findall(f"{NS}polyline")) == 2


def test_comparison_has_four_series(cfg, tmp_path):
    curves = sim.compare_curves(cfg, range(1, 26), (0.2, 0.5))
    root = ET.parse(emit_svg(curves, tmp_path / "s.svg")).getroot()
    assert len(root.findall(f"{NS}polyline")) == 4
    labels = [t.text for t in root.findall(f"{NS}text")]
    for name in curves:
        assert name in labels


def test_grid_bars(cfg, tmp_path):
    grid = sim.sweep_h_rho(cfg, [1.0, 2.0], [0.2, 0.5])
    root = ET.parse(emit_svg(grid, tmp_path / "g.svg")).getroot()
    # background + 4 cells x 2 stacks + 2 legend swatches
    assert len(root.findall(f"{NS}rect")) == 1 + 8 + 2


def test_empty_input_writes_nothing(tmp_path):
    target = tmp_path / "e.svg"
    with pytest.raises(ValueError):
        emit_svg({}, target)
    assert not target.exists()


def test_svg_is_deterministic(cfg, tmp_path):
    curve = sim.sweep_workers(cfg, "vanilla", None, range(1, 26))
    a = emit_svg(curve, tmp_path / "a.svg").read_bytes()
    b = emit_svg(curve, tmp_path / "b.svg").read_bytes()
    assert a == b
