import json
import math

import numpy as np
import pytest

from oracles import naive_surface
from qarspec.bootstrap import (
    BootstrapConfig,
    bootstrap_statistic,
    critical_value,
    draw_indices,
    p_value,
    resample_rows,
    run_test,
)
from qarspec.errors import ParameterError
from qarspec.qar import build_frame, fit_path
from qarspec.rng import derive_seed, stream
from qarspec.spectest import WeightConfig, cvm_functional, ks_functional, marks, weight_matrix


def ar_series(T, seed):
    rng = np.random.default_rng(seed)
    y = np.empty(T)
    y[0] = 0.0
    for t in range(1, T):
        y[t] = 0.5 * y[t - 1] + rng.standard_normal()
    return y


def test_forced_identity_draw():
    frame = build_frame(ar_series(12, 0), 1)
    W = np.arange(frame.n_obs, dtype=float)[:, None]
    res = resample_rows(frame, W, indices=np.arange(frame.n_obs - 1))
    assert np.array_equal(res.response, frame.response[:-1])
    assert np.array_equal(res.design, frame.design[:-1])
    assert np.array_equal(res.weights, W[:-1])


def test_identical_rows_are_invariant():
    frame = build_frame(np.ones(8), 1)
    W = np.full((frame.n_obs, 3), 2.0)
    a = resample_rows(frame, W, stream(1, "bootstrap", 0))
    b = resample_rows(frame, W, stream(2, "bootstrap", 5))
    assert a.indices.size == frame.n_obs - 1
    assert np.array_equal(a.response, b.response) and np.array_equal(a.weights, b.weights)


def test_draws_match_golden_file(fixtures_dir):
    golden = json.loads((fixtures_dir / "rng_golden.json").read_text())
    seed, n = golden["seed"], golden["n_obs"]
    for b, want in golden["draws"].items():
        assert draw_indices(n, stream(seed, "bootstrap", int(b), 0)).tolist() == want
    got = stream(seed, "montecarlo", 1, 300, 0, 0).uniform(size=4).tolist()
    assert got == golden["uniform_montecarlo_1_300_0_0"]
    assert derive_seed(seed, "cli", 17, 0) == golden["derive_seed_cli_17_0"]


def test_resample_alignment_checked():
    frame = build_frame(ar_series(10, 1), 1)
    with pytest.raises(ParameterError):
        resample_rows(frame, np.ones((5, 1)), stream(0, "bootstrap", 0))
    with pytest.raises(ParameterError):
        resample_rows(frame, np.ones((frame.n_obs, 1)), indices=[0, 99])


def test_self_resample_gives_zero_process():
    y = ar_series(60, 2)
    F = np.random.default_rng(2).standard_normal((60, 1))
    frame = build_frame(y, 1, F)
    cfg = WeightConfig(n_gamma=3)
    path = fit_path(frame, [0.25, 0.5, 0.75])
    cvm, ks, S = bootstrap_statistic(frame, path, F, cfg, "H02", indices=np.arange(frame.n_obs))
    assert np.abs(S).max() < 1e-9
    assert cvm < 1e-18 and ks < 1e-18


@pytest.mark.parametrize("seed", range(4))
def test_bootstrap_process_matches_naive(seed):
    T = 7  # six rows after one lag
    rng = np.random.default_rng(seed + 10)
    y = rng.standard_normal(T)
    F = rng.standard_normal((T, 1))
    frame = build_frame(y, 1, F)
    cfg = WeightConfig(n_gamma=2, gamma_max=1.0, max_lag=2)
    taus = [0.3, 0.7]
    path = fit_path(frame, taus)
    idx = np.array([0, 2, 2, 5, 4])
    _, _, S = bootstrap_statistic(frame, path, F, cfg, "H02", indices=idx)

    # naive route: refit on the drawn rows, then loop over the original positions they came from
    sub = frame.__class__(frame.response[idx], frame.design[idx], 1, 1, (), frame.series, F)
    star = fit_path(sub, taus)
    W, gammas = weight_matrix(frame, F, cfg)
    center = (marks(frame.response, frame.design, path).T @ W) / frame.n_obs
    n = idx.size
    want = naive_surface(y, 1, F, frame.design, star.coefficients, taus, gammas, cfg.kappa, cfg.max_lag,
                         math.atan, False, rows=list(idx), center=center)
    assert np.abs(S - want).max() <= 1e-12 * max(1.0, np.abs(want).max())
    assert n == frame.n_obs - 1


def test_p_value_and_critical_value():
    boot = np.array([3.0, 1.0, 2.0, 5.0, 4.0])
    assert p_value(2.0, boot) == 0.8
    assert p_value(6.0, boot) == 0.0
    assert p_value(0.0, np.zeros(7)) == 1.0
    assert critical_value(boot, 0.2) == np.quantile(boot, 0.8)


def test_config_validation():
    with pytest.raises(ParameterError):
        BootstrapConfig(replications=0)
    with pytest.raises(ParameterError):
        BootstrapConfig(alpha=1.0)
    with pytest.raises(ParameterError):
        BootstrapConfig(seed=-1)


def _small_test(threads, seed=3):
    y = ar_series(80, 4)
    F = np.random.default_rng(4).standard_normal((80, 1))
    frame = build_frame(y, 1)
    return run_test(frame, F, WeightConfig(n_gamma=4), BootstrapConfig(25, seed, 0.1), "H01",
                    taus=[0.2, 0.5, 0.8], threads=threads)


def test_result_independent_of_threads():
    a, sa = _small_test(1)
    b, sb = _small_test(3)
    assert np.array_equal(a.boot_cvm, b.boot_cvm) and np.array_equal(a.boot_ks, b.boot_ks)
    assert (a.p_cvm, a.p_ks, a.critical_cvm) == (b.p_cvm, b.p_ks, b.critical_cvm)
    assert np.array_equal(sa.values, sb.values)
    c, _ = _small_test(1, seed=4)
    assert not np.array_equal(a.boot_cvm, c.boot_cvm)


def test_result_fields_consistent():
    res, surf = _small_test(1)
    assert res.boot_cvm.shape == (25,)
    assert res.p_cvm == np.count_nonzero(res.boot_cvm >= res.original_cvm) / 25
    assert 0.0 <= res.p_ks <= 1.0
    assert res.original_cvm == cvm_functional(surf) and res.original_ks == ks_functional(surf)
    assert res.reject_cvm == (res.original_cvm > res.critical_cvm)


def _draw_surfaces(refit, B=2000):
    y = ar_series(120, 5)
    frame = build_frame(y, 1)
    cfg = WeightConfig(n_gamma=2, gamma_max=1.0)
    path = fit_path(frame, [0.3, 0.7])
    draws = np.array([
        bootstrap_statistic(frame, path, None, cfg, "H01", stream(9, "bootstrap", b, 0), refit=refit)[2]
        for b in range(B)
    ])
    W, _ = weight_matrix(frame, None, cfg)
    return draws, frame, W


def test_recentring_is_exact_for_fixed_path():
    draws, _, _ = _draw_surfaces(refit=False)
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    assert np.all(np.abs(mean) <= 3 * se)


def test_refit_bias_is_bounded_by_tied_fits():
    # After refitting, duplicated rows lying on the fitted hyperplane add extra
    # zero residuals, which count as "<= 0".  That shifts the mean of S* by at
    # most a few d * max(w) / sqrt(n) and vanishes as n grows.
    draws, frame, W = _draw_surfaces(refit=True)
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    n = frame.n_obs - 1
    bound = 2 * frame.n_params * W.max(axis=0)[None, :] / np.sqrt(n)
    assert np.all(np.abs(mean) <= 3 * se + bound)
    assert np.all(mean > -3 * se)  # the shift is towards extra "<= 0" marks
