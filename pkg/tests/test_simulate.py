import json

import numpy as np
import pytest

from vcpanel.basis import SieveConfig
from vcpanel.simulate import DgpConfig, _ar1, generate, monte_carlo, true_beta


def test_true_beta_values():
    assert true_beta(1, 0.0) == pytest.approx(1.4)
    assert true_beta(2, 0.0) == pytest.approx(0.7)
    assert true_beta(5, 1.3) == 0.0
    assert true_beta(2, 1.0) == pytest.approx(np.exp(-0.5) + 0.7)
    np.testing.assert_array_equal(true_beta(4, np.zeros(3)), np.zeros(3))


def test_true_beta_hd_parity():
    assert true_beta(7, 0.0, "HD", p_star=8) == pytest.approx(1.4)
    assert true_beta(8, 0.0, "HD", p_star=8) == pytest.approx(0.7)
    assert true_beta(9, 0.0, "HD", p_star=8) == 0.0


@pytest.mark.parametrize("j", [0, 6])
def test_true_beta_range(j):
    with pytest.raises(IndexError):
        true_beta(j, 0.0)


def test_ld_dimensions():
    data, truth = generate(DgpConfig(40, 40))
    assert data.x.shape == (40, 40, 5)
    assert truth.true_support == {0, 1}
    assert truth.f0.shape == (40, 3) and truth.gamma0.shape == (40, 3)
    assert data.regressor_names[:2] == ("x1", "x2")


def test_hd_dimensions():
    cfg = DgpConfig(40, 40, case="HD")
    data, truth = generate(cfg)
    assert cfg.p == 30 and cfg.p_star == 8
    assert truth.true_support == set(range(8))
    assert SieveConfig().resolve(40, 40) == 4


def test_ar_stationary_variance():
    rng = np.random.default_rng(0)
    v = _ar1(rng.standard_normal((100_200, 1)), 0.5, 200)
    assert v.shape == (100_000, 1)
    assert abs(v.var() / (4 / 3) - 1) < 0.02


def test_y_assembly_matches_truth():
    cfg = DgpConfig(6, 7, seed=3)
    data, truth = generate(cfg)
    beta = np.stack([true_beta(j + 1, data.z) for j in range(5)], axis=-1)
    y = np.sum(data.x * beta, axis=2) + truth.gamma0 @ truth.f0.T + truth.eps
    np.testing.assert_allclose(data.y, y, atol=1e-12)


def test_generate_deterministic():
    a, _ = generate(DgpConfig(10, 10, seed=7))
    b, _ = generate(DgpConfig(10, 10, seed=7))
    np.testing.assert_array_equal(a.y, b.y)


@pytest.mark.parametrize("kw", [{"case": "MD"}, {"ar_coef": 1.0}, {"burn_in": -1},
                                {"n_units": 1}])
def test_config_validation(kw):
    base = {"n_units": 10, "n_periods": 10}
    base.update(kw)
    with pytest.raises(ValueError):
        DgpConfig(**base)


def test_reps_zero_rejected():
    with pytest.raises(ValueError):
        monte_carlo(DgpConfig(10, 10), 0)


def test_single_rep_degenerate_bands():
    rep = monte_carlo(DgpConfig(20, 20, seed=1), 1)
    assert set(rep.curves) == set(rep.selected[0])
    for c in rep.curves.values():
        np.testing.assert_allclose(c["lower"], c["mean"])
        np.testing.assert_allclose(c["upper"], c["mean"])
    assert 0 <= rep.fnr <= 100 and 0 <= rep.fpr <= 100


def test_noise_free_selection_is_exact():
    for n in (20, 30):
        rep = monte_carlo(DgpConfig(n, n, noise_scale=0.0, seed=2), 3)
        assert rep.fnr == 0.0 and rep.fpr == 0.0


def test_mc_thread_independent():
    cfg = DgpConfig(20, 20, seed=11)
    a = monte_carlo(cfg, 3, threads=1)
    b = monte_carlo(cfg, 3, threads=2)
    assert a.selected == b.selected
    assert a.to_json() == b.to_json()
    for j in a.curves:
        np.testing.assert_array_equal(a.draws[j], b.draws[j])


def test_report_json_roundtrip():
    rep = monte_carlo(DgpConfig(20, 20, seed=0), 2)
    blob = json.loads(json.dumps(rep.to_json()))
    assert blob["reps"] == 2 and blob["p"] == 5 and blob["p_star"] == 2
    assert all(min(s) >= 1 for s in blob["selected"] if s)
    assert blob["fnr_pct"] == 100.0 * rep.n_missed / (2 * 2)
