import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import sieve_panel
from vcpanel.cli import main
from vcpanel.panel import load_panel_csv, write_panel_csv


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def _artifact_bytes(d, names):
    return {n: (d / n).read_bytes() for n in names}


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--n", "40", "--t", "40", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert main(["fit", "--panel", str(sim_dir / "panel.csv"), "--out", str(out)]) == 0
    return out


def test_simulate_files(sim_dir):
    rows = _rows(sim_dir / "panel.csv")
    assert len(rows) == 1 + 1600
    assert rows[0] == ["unit", "period", "y", "z", "x1", "x2", "x3", "x4", "x5"]
    truth = json.loads((sim_dir / "truth.json").read_text())
    assert truth["true_support"] == ["x1", "x2"]
    manifest = json.loads((sim_dir / "run-manifest.json").read_text())
    assert manifest["seed"] == 0
    assert set(manifest["artifacts"]) == {"panel.csv", "truth.json"}


def test_simulate_hd(tmp_path):
    assert main(["simulate", "--case", "hd", "--n", "10", "--t", "10", "--out", str(tmp_path)]) == 0
    assert load_panel_csv(tmp_path / "panel.csv").n_regressors == 30


def test_fit_outputs(fit_dir):
    for name in ("bic_table.csv", "coef.csv", "factors.csv", "loadings.csv", "curves.csv",
                 "variance_decomposition.csv", "fit.json", "run-manifest.json"):
        assert (fit_dir / name).exists(), name
    summary = json.loads((fit_dir / "fit.json").read_text())
    assert summary["selected"] == ["x1", "x2"]
    assert _rows(fit_dir / "bic_table.csv")[0] == ["nu", "rss", "df", "bic", "converged"]
    assert len(_rows(fit_dir / "bic_table.csv")) == 41
    assert len(_rows(fit_dir / "factors.csv")) == 41
    assert len(_rows(fit_dir / "curves.csv")) == 1 + 2 * 63


def test_fit_rerun_bit_exact(sim_dir, fit_dir, tmp_path):
    assert main(["fit", "--panel", str(sim_dir / "panel.csv"), "--out", str(tmp_path)]) == 0
    names = ["bic_table.csv", "coef.csv", "factors.csv", "curves.csv", "fit.json"]
    assert _artifact_bytes(tmp_path, names) == _artifact_bytes(fit_dir, names)
    a = json.loads((tmp_path / "run-manifest.json").read_text())
    b = json.loads((fit_dir / "run-manifest.json").read_text())
    assert a["artifacts"] == b["artifacts"]


def test_fit_pic_table(sim_dir, tmp_path):
    code = main(["fit", "--panel", str(sim_dir / "panel.csv"), "--r", "auto", "--r-max", "4",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "pic_table.csv")
    assert rows[0][:3] == ["r", "sigma2", "pic"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4"]
    assert json.loads((tmp_path / "fit.json").read_text())["r"] in (1, 2, 3, 4)


def test_fit_fixed_nu(sim_dir, tmp_path):
    assert main(["fit", "--panel", str(sim_dir / "panel.csv"), "--nu", "0",
                 "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "bic_table.csv")
    assert len(rows) == 2 and rows[1][2] == "5"


def test_fit_standardize_recorded(sim_dir, tmp_path):
    assert main(["fit", "--panel", str(sim_dir / "panel.csv"), "--standardize",
                 "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "fit.json").read_text())
    assert summary["standardize"] is True and len(summary["x_sd"]) == 5
    manifest = json.loads((tmp_path / "run-manifest.json").read_text())
    assert manifest["config"]["standardize"] is True


def test_bands_csv(fit_dir, tmp_path):
    assert main(["bands", "--fit-dir", str(fit_dir), "-B", "20", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "bands.csv")
    assert rows[0] == ["regressor", "z", "point", "lower", "upper"]
    assert len(rows) == 1 + 2 * 63
    vals = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
    assert np.all(vals[:, 1] <= vals[:, 0]) and np.all(vals[:, 0] <= vals[:, 2])


@pytest.mark.parametrize("level", ["0", "1", "1.5"])
def test_bands_level_rejected(fit_dir, level, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bands", "--fit-dir", str(fit_dir), "--level", level])
    assert exc.value.code == 2


def test_bands_zero_noise_degenerate(tmp_path):
    c = np.array([[1.0, -0.5], [0.3, 0.8]])
    data, _, _ = sieve_panel(10, 12, c, r=1, seed=1)
    panel = tmp_path / "p.csv"
    write_panel_csv(data, panel)
    out = tmp_path / "fit"
    assert main(["fit", "--panel", str(panel), "--m", "2", "--r", "1", "--tol", "1e-12",
                 "--nu", "0", "--out", str(out)]) == 0
    assert main(["bands", "--fit-dir", str(out), "-B", "5"]) == 0
    rows = _rows(out / "bands" / "bands.csv")[1:]
    vals = np.array([[float(v) for v in r[2:]] for r in rows])
    np.testing.assert_allclose(vals[:, 1], vals[:, 0], atol=1e-6)
    np.testing.assert_allclose(vals[:, 2], vals[:, 0], atol=1e-6)


def test_bands_detects_changed_panel(sim_dir, tmp_path):
    panel = tmp_path / "p.csv"
    panel.write_bytes((sim_dir / "panel.csv").read_bytes())
    fit_out = tmp_path / "fit"
    assert main(["fit", "--panel", str(panel), "--out", str(fit_out), "--n-grid", "5"]) == 0
    with open(panel, "a") as fh:
        fh.write("# edited\n")
    assert main(["bands", "--fit-dir", str(fit_out), "-B", "2"]) == 1


def test_mc_table(tmp_path):
    code = main(["mc", "--grid-sizes", "20,30", "--reps", "2", "--emit-panel", "1",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "fnr_fpr.csv")
    assert rows[0] == ["N=T", "FNR", "FPR"]
    assert [r[0] for r in rows[1:]] == ["20", "30"]
    assert (tmp_path / "panel_ld_30_rep1.csv").exists()
    assert (tmp_path / "curves_ld_20.csv").exists()


def test_mc_reps_zero_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["mc", "--reps", "0", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_config_file_and_precedence(sim_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# defaults\npanel = {sim_dir / 'panel.csv'}\nn-grid = 5\nseed = 3\n")
    assert main(["fit", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "a")]) == 0
    m = json.loads((tmp_path / "a" / "run-manifest.json").read_text())
    assert m["seed"] == 4 and m["config"]["n_grid"] == 5


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("VCPANEL_OUT", str(tmp_path / "envout"))
    assert main(["simulate", "--n", "5", "--t", "5"]) == 0
    assert (tmp_path / "envout" / "panel.csv").exists()


def test_nonconverged_exit_code(sim_dir, tmp_path):
    base = ["fit", "--panel", str(sim_dir / "panel.csv"), "--max-iter", "1", "--n-grid", "3"]
    assert main(base + ["--out", str(tmp_path / "a")]) == 3
    assert main(base + ["--allow-nonconverged", "--out", str(tmp_path / "b")]) == 0


def test_bad_panel_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("unit,period,y,z,x1\nA,1,1,0,1\n")
    assert main(["fit", "--panel", str(bad), "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "vcpanel", "simulate", "--n", "4", "--t", "4",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "panel.csv").exists()
