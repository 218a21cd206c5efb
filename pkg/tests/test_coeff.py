import numpy as np
import pytest

from dglod.coeff import (
    CoefficientField,
    RasterFormatError,
    eval_A,
    load_raster,
    make_highcontrast,
    make_layered,
)
from dglod.mesh import MeshLevel


def _write(tmp_path, text):
    p = tmp_path / "field.txt"
    p.write_text(text)
    return str(p)


def test_load_constant_field(tmp_path):
    grid = load_raster(_write(tmp_path, "1 1\n1.0\n"))
    field = CoefficientField(grid)
    assert field.alpha == field.beta == 1.0
    lvl = MeshLevel(8)
    assert eval_A(field, lvl, 17) == 1.0


def test_load_layered_field(tmp_path):
    rows = []
    for j in range(64):
        val = "1.0" if j % 2 == 0 else "0.01"
        rows.append(" ".join([val] * 64))
    grid = load_raster(_write(tmp_path, "64 64\n" + "\n".join(rows) + "\n"))
    field = CoefficientField(grid)
    assert field.beta / field.alpha == pytest.approx(100.0)
    assert np.array_equal(grid, make_layered(64, 1.0, 0.01))


def test_load_rejects_zero_entry(tmp_path):
    with pytest.raises(RasterFormatError):
        load_raster(_write(tmp_path, "2 1\n1.0 0.0\n"))


def test_load_rejects_malformed_header(tmp_path):
    with pytest.raises(RasterFormatError):
        load_raster(_write(tmp_path, "2\n1.0 1.0\n"))
    with pytest.raises(RasterFormatError):
        load_raster(_write(tmp_path, "a b\n1.0\n"))


def test_load_rejects_dimension_mismatch(tmp_path):
    with pytest.raises(RasterFormatError):
        load_raster(_write(tmp_path, "2 2\n1.0 2.0\n3.0\n"))
    with pytest.raises(RasterFormatError):
        load_raster(_write(tmp_path, "2 2\n1.0 2.0\n"))


def test_make_layered_rows():
    grid = make_layered(4, 2.0, 0.5)
    assert np.array_equal(grid[:, 0], [2.0, 0.5, 2.0, 0.5])
    field = CoefficientField(grid)
    assert field.alpha == 0.5 and field.beta == 2.0


def test_make_layered_constant_and_errors():
    assert np.array_equal(make_layered(1, 1.0, 1.0), [[1.0]])
    with pytest.raises(ValueError):
        make_layered(4, 1.0, -0.5)


def test_make_highcontrast_bounds():
    grid = make_highcontrast(64, 0, 0.05, 4e5)
    field = CoefficientField(grid)
    assert field.alpha >= 0.05
    assert field.beta / field.alpha <= 4e5


def test_make_highcontrast_trivial_contrast():
    grid = make_highcontrast(8, 3, 0.7, 1.0)
    assert np.all(grid == 0.7)


def test_make_highcontrast_deterministic():
    a = make_highcontrast(8, 7, 1.0, 10.0)
    b = make_highcontrast(8, 7, 1.0, 10.0)
    assert np.array_equal(a, b)
    c = make_highcontrast(8, 8, 1.0, 10.0)
    assert not np.array_equal(a, c)


def test_eval_layered_rows():
    field = CoefficientField(make_layered(4, 1.0, 0.01))
    lvl = MeshLevel(8)
    # fine rows 2,3 sit inside raster row 1 (a lo row)
    t_lo = lvl.element_index(5, 2)
    t_hi = lvl.element_index(5, 0)
    assert eval_A(field, lvl, t_lo) == 0.01
    assert eval_A(field, lvl, t_hi) == 1.0


def test_eval_constant_on_each_element():
    field = CoefficientField(make_layered(4, 3.0, 0.25))
    lvl = MeshLevel(16)
    vals = field.values_on(lvl)
    for t in (0, 37, 200, 255):
        assert vals[t] == eval_A(field, lvl, t)


def test_resolution_mismatch_rejected():
    field = CoefficientField(make_layered(64, 1.0, 0.01))
    with pytest.raises(RasterFormatError):
        field.check_resolved_by(32)
    field.check_resolved_by(64)
    field.check_resolved_by(128)


def test_alpha_beta_invariants():
    rng = np.random.default_rng(5)
    grid = rng.uniform(0.3, 7.0, size=(16, 16))
    field = CoefficientField(grid)
    assert 0.0 < field.alpha <= field.beta
    assert field.alpha == grid.min() and field.beta == grid.max()


def test_constant_b_divergence_free():
    # constant fields have exact zero divergence: finite differences of the
    # component grids vanish identically
    field = CoefficientField([[1.0]], (32.0, 0.0))
    bx = np.full((4, 4), field.b[0])
    by = np.full((4, 4), field.b[1])
    div = np.diff(bx, axis=1).sum() + np.diff(by, axis=0).sum()
    assert div == 0.0
