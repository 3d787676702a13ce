import numpy as np
import pytest

from conftest import random_density
from rdpca import io
from rdpca.bayes import ClrCurve, Grid, clr_transform
from rdpca.errors import ShapeError
from rdpca.mahalanobis import DistanceReport


def test_curve_csv_round_trip_is_bit_exact(tmp_path, rng):
    grid = Grid(-2.3, 4.1, 37)
    curves = [random_density(grid, rng) for _ in range(5)]
    io.write_curves(tmp_path / "c.csv", curves)
    kind, g, rows = io.parse_matrix((tmp_path / "c.csv").read_text())
    assert kind == "density" and g.same_as(grid)
    assert rows.tobytes() == np.stack([f.values for f in curves]).tobytes()
    back = io.read_curves(tmp_path / "c.csv")
    np.testing.assert_allclose(back[0].values, curves[0].values, rtol=1e-15)


def test_clr_payload(tmp_path, rng):
    grid = Grid(0, 1, 20)
    curves = [random_density(grid, rng) for _ in range(3)]
    clr = [clr_transform(f) for f in curves]
    io.write_curves(tmp_path / "c.csv", clr)
    assert (tmp_path / "c.csv").read_text().startswith("clr,")
    g, rows = io.read_clr(tmp_path / "c.csv")
    np.testing.assert_allclose(rows, np.stack([c.values for c in clr]), atol=1e-14)
    dens = io.read_curves(tmp_path / "c.csv")
    np.testing.assert_allclose(dens[1].values, curves[1].values, rtol=1e-12)


def test_matrix_and_bad_files(tmp_path):
    grid = Grid(0, 1, 3)
    io.write_matrix(tmp_path / "m.csv", grid, np.eye(3))
    g, m = io.read_matrix(tmp_path / "m.csv")
    np.testing.assert_array_equal(m, np.eye(3))
    with pytest.raises(ShapeError):
        io.read_curves(tmp_path / "m.csv")
    (tmp_path / "bad.csv").write_text("weird,0.1,0.2\n0,1,2\n")
    with pytest.raises(ShapeError):
        io.read_curves(tmp_path / "bad.csv")
    (tmp_path / "ragged.csv").write_text("density,0.25,0.75\n0,1\n")
    with pytest.raises(ShapeError):
        io.read_curves(tmp_path / "ragged.csv")
    (tmp_path / "nonnum.csv").write_text("density,0.25,0.75\n0,1,x\n")
    with pytest.raises(ShapeError):
        io.read_curves(tmp_path / "nonnum.csv")


def test_labels_and_distances(tmp_path):
    io.write_labels(tmp_path / "l.csv", [True, False, True])
    np.testing.assert_array_equal(io.read_labels(tmp_path / "l.csv"), [True, False, True])
    rep = DistanceReport(np.array([1 / 3, 2.5]), 1.0)
    io.write_distances(tmp_path / "d.csv", rep)
    back = io.read_distances(tmp_path / "d.csv")
    assert back.squared_distances.tobytes() == rep.squared_distances.tobytes()


def test_json_is_deterministic_and_strict():
    doc = {"b": np.float64(1.5), "a": [np.int64(2), float("nan")], "c": np.arange(2)}
    text = io.dumps(doc)
    assert text == io.dumps(dict(reversed(list(doc.items()))))
    assert '"a": [\n    2,\n    null\n  ]' in text
