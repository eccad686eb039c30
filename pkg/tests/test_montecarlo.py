import numpy as np
import pytest

from oracles import bisection_norm_ppf
from qarspec.errors import ParameterError
from qarspec.montecarlo import (
    DgpSpec,
    RejectionTable,
    lemma1_convergence_check,
    run_experiment,
    simulate_dgp,
)
from qarspec.rng import stream
from qarspec.spectest import WeightConfig


@pytest.fixture(scope="module")
def long_case1():
    return simulate_dgp(DgpSpec("case1", 100_000, panel_N=2), stream(1, "montecarlo", 99))


def test_stationary_mean(long_case1):
    assert abs(long_case1.y.mean() - 20.0) < 0.1


@pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
def test_conditional_quantile(long_case1, tau):
    y = long_case1.y
    innov = y[1:] - 0.5 * y[:-1]
    assert abs(np.quantile(innov, tau) - (10 + bisection_norm_ppf(tau))) < 0.05


def test_zero_factor_slope_reproduces_case1():
    a = simulate_dgp(DgpSpec("case1", 150), stream(5, "montecarlo", 1))
    b = simulate_dgp(DgpSpec("case2", 150, beta1=0.0), stream(5, "montecarlo", 1))
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.panel.values, b.panel.values)


def test_factor_enters_case2_with_lag():
    data = simulate_dgp(DgpSpec("case2", 40_000, panel_N=2), stream(2, "montecarlo", 3))
    y, F = data.y, data.factors[:, 0]
    X = np.column_stack([np.ones(y.size - 1), y[:-1], F[:-1]])
    coef, *_ = np.linalg.lstsq(X, y[1:], rcond=None)
    assert abs(coef[1] - 0.5) < 0.02 and abs(coef[2] - 0.8) < 0.03


def test_panel_shape_and_noiseless_rank():
    data = simulate_dgp(DgpSpec("case2", 50, panel_N=30, panel_noise=0.0), stream(0, "montecarlo", 0))
    assert data.panel.values.shape == (30, 50)
    s = np.linalg.svd(data.panel.values, compute_uv=False)
    assert s[1] < 1e-10 * s[0]


@pytest.mark.parametrize("kw", [dict(case="case3"), dict(rho1=1.0), dict(burn_in=50), dict(T=5),
                                dict(nulls=("H03",))])
def test_spec_validation(kw):
    base = dict(case="case1", T=100)
    base.update(kw)
    with pytest.raises(ParameterError):
        DgpSpec(**base)


def test_small_experiment_reproducible_and_thread_free(tmp_path):
    specs = [DgpSpec("case1", 60), DgpSpec("case2", 60, nulls=("H01", "H02"))]
    cfg = WeightConfig(n_gamma=5, tie_blocks=True)
    a = run_experiment(specs, 4, 9, 0.1, 3, weight_cfg=cfg, taus=[0.25, 0.5, 0.75])
    b = run_experiment(specs, 4, 9, 0.1, 3, weight_cfg=cfg, taus=[0.25, 0.5, 0.75], threads=2)
    assert a == b
    assert len(a.rows) == 2 + 4
    assert all(0.0 <= r["rejection_frequency"] <= 1.0 for r in a.rows)
    assert all(r["rejections"] == round(r["rejection_frequency"] * 4) for r in a.rows)
    # a design's rows do not depend on which other designs run alongside it
    solo = run_experiment(specs[1:], 4, 9, 0.1, 3, weight_cfg=cfg, taus=[0.25, 0.5, 0.75])
    assert solo.rows == a.rows[2:]

    a.to_csv(tmp_path / "t.csv", ["seed = 3"])
    text = (tmp_path / "t.csv").read_text().splitlines()
    assert text[0] == "# seed = 3" and text[1].startswith("case,T,null,functional")
    layout = a.to_text()
    assert "H01" in layout and "H02" in layout and "case2 CvM" in layout
    assert a.frequency("case2", 60, "CvM", "H02") == a.rows[-1]["rejection_frequency"]


def test_table_lookup_missing():
    t = RejectionTable((), 1, 1, 0.05)
    with pytest.raises(KeyError):
        t.frequency("case1", 100, "CvM")


def test_lemma1_noiseless_gap_is_zero():
    spec = DgpSpec("case2", 100, panel_noise=0.0)
    out = lemma1_convergence_check(spec, [(120, 100)], 4, reps=5)
    assert out[0]["gaps"].max() < 1e-6


def test_lemma1_runs_with_too_many_factors():
    spec = DgpSpec("case2", 80)
    out = lemma1_convergence_check(spec, [(80, 80)], 4, reps=3, k=2)
    assert out[0]["gaps"].shape == (3,) and np.all(np.isfinite(out[0]["gaps"]))


def test_lemma1_requires_wide_panel():
    with pytest.raises(ParameterError):
        lemma1_convergence_check(DgpSpec("case2", 100), [(50, 100)], 0, reps=1)
