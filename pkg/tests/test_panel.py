import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vcpanel.panel import PanelData, PanelError, load_panel_csv, write_panel_csv

SMALL_CSV = """\
# toy panel
unit,period,y,z,x1
u1,t1,1.0,0.1,2.0
u1,t2,1.5,0.2,2.5
u1,t3,1.7,0.3,2.7
u2,t1,0.4,-0.1,1.0
u2,t2,0.6,-0.2,1.1
u2,t3,0.9,-0.3,1.3
"""


def test_load_small(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text(SMALL_CSV)
    d = load_panel_csv(path)
    assert (d.n_units, d.n_periods, d.n_regressors) == (2, 3, 1)
    assert d.unit_ids == ("u1", "u2")
    assert d.period_ids == ("t1", "t2", "t3")
    assert d.x[1, 2, 0] == 1.3
    assert d.z[0, 1] == 0.2


def test_missing_cell_named(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("\n".join(SMALL_CSV.splitlines()[:-1]) + "\n")
    with pytest.raises(PanelError, match=r"missing \(u2, t3\)"):
        load_panel_csv(path)


def test_duplicate_cell(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text(SMALL_CSV + "u2,t3,0.9,-0.3,1.3\n")
    with pytest.raises(PanelError, match="duplicate"):
        load_panel_csv(path)


@pytest.mark.parametrize("bad", ["abc", "nan", "inf", ""])
def test_non_numeric_names_row(tmp_path, bad):
    path = tmp_path / "p.csv"
    lines = SMALL_CSV.splitlines()
    lines[4] = f"u1,t3,{bad},0.3,2.7"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(PanelError, match="row 5"):
        load_panel_csv(path)


def test_bad_header(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("id,period,y,z,x1\n")
    with pytest.raises(PanelError, match="header"):
        load_panel_csv(path)


def test_numeric_periods_sorted(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("unit,period,y,z,a\n"
                    "A,10,1,0,1\nA,9,2,0,1\nB,9,3,0,1\nB,10,4,0,1\n")
    d = load_panel_csv(path)
    assert d.period_ids == ("9", "10")
    np.testing.assert_array_equal(d.y, [[2, 1], [3, 4]])


def test_regressor_subset(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("unit,period,y,z,a,b\n"
                    "A,1,1,0,1,5\nA,2,2,0,1,6\nB,1,3,0,1,7\nB,2,4,0,1,8\n")
    d = load_panel_csv(path, regressors=["b"])
    assert d.regressor_names == ("b",)
    np.testing.assert_array_equal(d.x[:, :, 0], [[5, 6], [7, 8]])


def test_roundtrip_random(tmp_path):
    rng = np.random.default_rng(3)
    d = PanelData(rng.standard_normal((4, 5)) * 1e3, rng.standard_normal((4, 5, 3)),
                  rng.standard_normal((4, 5)), regressor_names=["gdp", "inv", "pop"])
    path = tmp_path / "rt.csv"
    write_panel_csv(d, path)
    back = load_panel_csv(path)
    np.testing.assert_allclose(back.y, d.y, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(back.x, d.x)
    np.testing.assert_array_equal(back.z, d.z)
    assert back.unit_ids == d.unit_ids
    assert back.period_ids == d.period_ids
    assert back.regressor_names == d.regressor_names


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(float, (3, 2, 2), elements=finite))
def test_roundtrip_property(tmp_path_factory, x):
    d = PanelData(x[:, :, 0], x[:, :, 1:], x[:, :, 0] * 0.5)
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    write_panel_csv(d, path)
    back = load_panel_csv(path)
    np.testing.assert_array_equal(back.y, d.y)
    np.testing.assert_array_equal(back.x, d.x)


def test_writer_rejects_empty_path():
    d = PanelData(np.zeros((2, 2)), np.zeros((2, 2, 1)), np.zeros((2, 2)))
    with pytest.raises(PanelError):
        write_panel_csv(d, "")


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_constructor_rejects_non_finite(bad):
    y = np.zeros((2, 2))
    y[1, 1] = bad
    with pytest.raises(PanelError, match="non-finite"):
        PanelData(y, np.zeros((2, 2, 1)), np.zeros((2, 2)))


def test_constructor_rejects_single_unit():
    with pytest.raises(PanelError):
        PanelData(np.zeros((1, 3)), np.zeros((1, 3, 1)), np.zeros((1, 3)))


def test_immutable():
    d = PanelData(np.zeros((2, 2)), np.zeros((2, 2, 1)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        d.y[0, 0] = 1.0


def test_standardized():
    rng = np.random.default_rng(0)
    d = PanelData(rng.standard_normal((3, 4)), rng.normal(5, 2, (3, 4, 2)), np.zeros((3, 4)))
    s, mean, sd = d.standardized()
    flat = s.x.reshape(-1, 2)
    np.testing.assert_allclose(flat.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(flat.std(axis=0), 1, atol=1e-12)
