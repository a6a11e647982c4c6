import csv

import numpy as np
import pytest

from dpre2d import export
from dpre2d.lattice import LatticeField, LatticeWindow, uniform_ball


def _field():
    win = LatticeWindow(3, 0)
    X, Y = win.coords()
    v = np.exp(-(X**2 + Y**2) / 4.0) * win.parity_mask()
    return LatticeField(win, v)


def test_field_csv(tmp_path):
    f = _field()
    p = export.write_field_csv(f, tmp_path / "sub" / "f.csv")
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["z1", "z2", "value"]
    assert len(rows) - 1 == int(f.window.parity_mask().sum())
    for z1, z2, v in rows[1:]:
        assert float(v) == f.at((int(z1), int(z2)))


def test_table_csv(tmp_path):
    p = export.write_table_csv(tmp_path / "t.csv", ["a", "b"], [[1, 0.1], [2, np.float64(1 / 3)]])
    rows = list(csv.reader(open(p)))
    assert rows[2] == ["2", repr(1 / 3)]


def test_pgm_p2_round_trip(tmp_path):
    f = _field()
    g = export.read_pgm(export.write_pgm_p2(f, tmp_path / "a.pgm"))
    assert g.shape == f.values.shape
    assert g.max() == 65535
    ref = np.floor(65535 * f.values / f.values.max())
    mask = f.window.parity_mask()
    assert np.array_equal(g[mask], ref[mask])


def test_pgm_p5_round_trip(tmp_path):
    f = _field()
    path, q = export.write_pgm_p5(f, tmp_path / "b.pgm")
    g = export.read_pgm(path)
    mask = f.window.parity_mask()
    L = np.log(f.values[mask])
    assert q == pytest.approx(tuple(np.quantile(L, [0.01, 0.99])))
    ref = np.clip(np.floor(65535 * (L - q[0]) / (q[1] - q[0])), 0, 65535)
    assert np.array_equal(g[mask], ref)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n7 7\n65535\n")
    assert len(raw) == len(b"P5\n7 7\n65535\n") + 2 * 49


def test_pgm_fixed_quantiles_and_constant(tmp_path):
    f = uniform_ball(2)
    _, q = export.write_pgm_p5(f, tmp_path / "c.pgm", quantiles=(0.0, 1.0))
    assert q == (0.0, 1.0)
    g = export.read_pgm(export.write_pgm_p5(f, tmp_path / "d.pgm")[0])
    assert set(np.unique(g)) <= {0, 65535 // 2}
    with pytest.raises(ValueError):
        export.log_quantiles(np.zeros(4))


def test_read_pgm_rejects_other_files(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P6\n1 1\n255\n\0\0\0")
    with pytest.raises(ValueError):
        export.read_pgm(p)
