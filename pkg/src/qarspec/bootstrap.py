"""iid pairwise bootstrap of the specification statistics.

Each replication draws n_obs - 1 rows with replacement, keeping every
row's (response, regressors, weights) tuple intact, refits the whole
quantile path on the drawn rows and forms the recentred process

    S*(Gamma, tau) = n*^{-1/2} sum_i ( psi*_i(tau) w*_i(Gamma) - mean_t psi_t(tau) w_t(Gamma) ),

where the subtracted term is the original-sample average summand.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _rqkernel
from .errors import NumericError, ParameterError
from .qar import DUALITY_TOL, MAX_IP_ITER, QuantileFitPath, RegressionFrame, fit_path, tau_grid
from .rng import stream
from .spectest import (
    WeightConfig,
    check_null,
    cvm_functional,
    empirical_process,
    ks_functional,
    marks,
    weight_matrix,
)

MAX_REDRAWS = 100


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 99
    seed: int = 0
    alpha: float = 0.05

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 1:
            raise ParameterError("replications must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class BootstrapResult:
    original_cvm: float
    original_ks: float
    boot_cvm: np.ndarray
    boot_ks: np.ndarray
    p_cvm: float
    p_ks: float
    critical_cvm: float
    critical_ks: float
    alpha: float
    redraws: int = 0

    @property
    def reject_cvm(self) -> bool:
        return self.original_cvm > self.critical_cvm

    @property
    def reject_ks(self) -> bool:
        return self.original_ks > self.critical_ks


@dataclass(frozen=True)
class Resample:
    indices: np.ndarray
    response: np.ndarray
    design: np.ndarray
    weights: np.ndarray


def draw_indices(n_obs: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n_obs, size=n_obs - 1)


def resample_rows(frame: RegressionFrame, weights, rng=None, *, indices=None) -> Resample:
    """Draw ``n_obs - 1`` rows jointly with their weight rows.

    ``indices`` overrides the random draw (used to force a given resample).
    """
    W = np.asarray(weights, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape[0] != frame.n_obs:
        raise ParameterError(f"weights have {W.shape[0]} rows, frame has {frame.n_obs}")
    if indices is None:
        if rng is None:
            raise ParameterError("need either rng or explicit indices")
        indices = draw_indices(frame.n_obs, rng)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= frame.n_obs):
        raise ParameterError("resample index out of range")
    return Resample(idx, frame.response[idx], np.ascontiguousarray(frame.design[idx]), W[idx])


def _full_rank(X: np.ndarray) -> bool:
    if X.shape[0] < X.shape[1]:
        return False
    s = np.linalg.svd(X, compute_uv=False)
    return bool(s[-1] > s[0] * max(X.shape) * np.finfo(float).eps * 10)


class _Replicator:
    """Shared state for the replications of one test."""

    def __init__(self, frame, path, W, seed, ks_form, cvm_form):
        self.frame = frame
        self.taus = path.tau_grid
        self.W = W
        psi = marks(frame.response, frame.design, path)
        self.center = psi.T @ W / frame.n_obs
        self.seed = seed
        self.ks_form = ks_form
        self.cvm_form = cvm_form

    def surface(self, res: Resample, path=None):
        if path is None:
            coefs, objs, status, _ = _rqkernel.fit_grid(
                res.design, res.response, self.taus, DUALITY_TOL, MAX_IP_ITER
            )
            if np.any(status != _rqkernel.OK):
                return None
            path = QuantileFitPath(self.taus, coefs, objs)
        psi = marks(res.response, res.design, path)
        n = res.indices.size
        return (psi.T @ res.weights - n * self.center) / np.sqrt(n)

    def replicate(self, b: int):
        for attempt in range(MAX_REDRAWS):
            rng = stream(self.seed, "bootstrap", b, attempt)
            res = resample_rows(self.frame, self.W, rng)
            if not _full_rank(res.design):
                continue
            S = self.surface(res)
            if S is None:
                continue
            return cvm_functional(S, self.cvm_form), ks_functional(S, self.ks_form), attempt
        raise NumericError(f"bootstrap replication {b} failed {MAX_REDRAWS} times", trace={"replication": b})


def bootstrap_statistic(
    frame: RegressionFrame,
    path: QuantileFitPath,
    factors,
    weight_cfg: WeightConfig,
    which_null: str,
    rng=None,
    *,
    indices=None,
    ks_form: str = "squared",
    cvm_form: str = "squared",
    refit: bool = True,
):
    """One bootstrap draw; returns ``(cvm*, ks*, S*)``.

    Pass ``indices`` to force the resample instead of drawing from ``rng``.
    ``refit=False`` keeps the original path instead of re-estimating it,
    which isolates the recentring (its draws average to zero exactly).
    """
    check_null(frame, which_null)
    W, _ = weight_matrix(frame, factors, weight_cfg)
    rep = _Replicator(frame, path, W, 0, ks_form, cvm_form)
    res = resample_rows(frame, W, rng, indices=indices)
    if not _full_rank(res.design):
        raise NumericError("resampled design is rank deficient")
    S = rep.surface(res, None if refit else path)
    if S is None:
        raise NumericError("quantile refit failed on the resampled rows")
    return cvm_functional(S, cvm_form), ks_functional(S, ks_form), S


def p_value(original: float, boot: np.ndarray) -> float:
    return float(np.count_nonzero(boot >= original)) / boot.size


def critical_value(boot: np.ndarray, alpha: float) -> float:
    return float(np.quantile(np.sort(boot), 1.0 - alpha))


def run_test(
    frame: RegressionFrame,
    factors,
    weight_cfg: WeightConfig,
    boot_cfg: BootstrapConfig,
    which_null: str,
    *,
    taus=None,
    threads: int = 1,
    ks_form: str = "squared",
    cvm_form: str = "squared",
    path: Optional[QuantileFitPath] = None,
):
    """Fit, evaluate the original statistics and bootstrap their null distribution.

    Returns ``(BootstrapResult, TestSurface)``.  Replication ``b`` always
    uses the stream ``(seed, "bootstrap", b, attempt)``, so results do not
    depend on ``threads``.
    """
    check_null(frame, which_null)
    if path is None:
        path = fit_path(frame, tau_grid(17) if taus is None else taus)
    surface = empirical_process(
        frame, path, factors, weight_cfg, which_null, ks_form=ks_form, cvm_form=cvm_form
    )
    W, _ = weight_matrix(frame, factors, weight_cfg)
    rep = _Replicator(frame, path, W, boot_cfg.seed, ks_form, cvm_form)
    B = int(boot_cfg.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(rep.replicate, range(B)))
    else:
        out = [rep.replicate(b) for b in range(B)]
    boot_cvm = np.array([o[0] for o in out])
    boot_ks = np.array([o[1] for o in out])
    redraws = int(sum(o[2] for o in out))
    result = BootstrapResult(
        original_cvm=surface.functional_cvm,
        original_ks=surface.functional_ks,
        boot_cvm=boot_cvm,
        boot_ks=boot_ks,
        p_cvm=p_value(surface.functional_cvm, boot_cvm),
        p_ks=p_value(surface.functional_ks, boot_ks),
        critical_cvm=critical_value(boot_cvm, boot_cfg.alpha),
        critical_ks=critical_value(boot_ks, boot_cfg.alpha),
        alpha=boot_cfg.alpha,
        redraws=redraws,
    )
    return result, surface


def coefficient_bands(frame: RegressionFrame, taus, replications: int, seed: int, level: float = 0.9):
    """Pairs-bootstrap percentile bands for the coefficient path.

    Returns ``(lower, upper)``, each of shape (m, d).
    """
    taus = np.asarray(taus, dtype=float)
    draws = []
    for b in range(int(replications)):
        for attempt in range(MAX_REDRAWS):
            rng = stream(seed, "bands", b, attempt)
            idx = rng.integers(0, frame.n_obs, size=frame.n_obs)
            X = np.ascontiguousarray(frame.design[idx])
            if not _full_rank(X):
                continue
            coefs, _, status, _ = _rqkernel.fit_grid(X, frame.response[idx], taus, DUALITY_TOL, MAX_IP_ITER)
            if np.all(status == _rqkernel.OK):
                draws.append(coefs)
                break
        else:
            raise NumericError(f"band replication {b} failed {MAX_REDRAWS} times")
    draws = np.array(draws)
    lo = (1.0 - level) / 2.0
    return np.quantile(draws, lo, axis=0), np.quantile(draws, 1.0 - lo, axis=0)
