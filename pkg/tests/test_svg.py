import numpy as np
import pytest

from wvnspec.errors import ConfigError
from wvnspec.spectral import DensitySample, ExponentFit
from wvnspec.svg import emit_svg, exponent_svg, trajectory_svg


def fake_fit(n=5):
    d = np.geomspace(1e-3, 1e-1, n)
    samples = [DensitySample(1.0 + x, 1.0, 0.3 * x ** 0.5, 0.0, 0.0) for x in d]
    return ExponentFit(1.0, "right", 0.5, 0.3, 0.5, 1.0, (1.0 + d).tolist(), samples, 0.001)


def test_exponent_svg_annotation():
    text = exponent_svg(fake_fit(), timestamp=False)
    assert text.startswith("<?xml")
    assert "slope 0.500" in text
    assert text.count("<circle") == 5


def test_timestamp_is_the_only_difference():
    a = exponent_svg(fake_fit(), timestamp=True)
    b = exponent_svg(fake_fit(), timestamp=False)
    diff = set(a.splitlines()) ^ set(b.splitlines())
    assert len(diff) == 1 and next(iter(diff)).startswith("<!-- generated")


def test_empty_grid_writes_nothing(tmp_path):
    p = tmp_path / "x.svg"
    with pytest.raises(ConfigError):
        emit_svg(fake_fit(0), p)
    assert not p.exists()


def test_flat_trajectory():
    y = np.linspace(0, 10, 11)
    h = np.tile([1.0, 0.5], (11, 1))
    text = trajectory_svg(y, h, timestamp=False)
    lines = [l for l in text.splitlines() if l.startswith("<polyline")]
    assert len(lines) == 2
    for l in lines:
        ys = {p.split(",")[1] for p in l.split('points="')[1].split('"')[0].split()}
        assert len(ys) == 1


def test_emit_trajectory_file(tmp_path):
    p = emit_svg((np.arange(3.0), np.ones((3, 2))), tmp_path / "t.svg", timestamp=False)
    assert p.read_text().endswith("</svg>\n")
