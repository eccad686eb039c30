"""QAR(p) and factor-augmented QAR(p, k) estimation over a quantile grid."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from . import _rqkernel
from .errors import AlignmentError, NumericError, ParameterError, SingularDesignError

DUALITY_TOL = 1e-8
MAX_IP_ITER = 200

_STATUS_TEXT = {
    _rqkernel.OK: "ok",
    _rqkernel.IP_MAXITER: "interior-point iteration cap",
    _rqkernel.SIMPLEX_MAXITER: "vertex descent iteration cap",
    _rqkernel.SINGULAR: "singular",
    _rqkernel.IP_STALLED: "interior point stalled",
}


def norm_ppf(u):
    """Standard normal quantile function."""
    return ndtri(u)


@dataclass(frozen=True)
class RegressionFrame:
    """Aligned response/design pair for a QAR(p) or FA-QAR(p, k) regression.

    Row ``r`` holds the response ``y[p + r]`` and the regressors
    ``(1, y[p+r-1], ..., y[r], F[p+r-1, :])``.  ``series`` and ``factors``
    keep the full source data because the test weights need the history.
    """

    response: np.ndarray
    design: np.ndarray
    p: int
    k: int
    period_index: tuple
    series: np.ndarray
    factors: Optional[np.ndarray] = None

    @property
    def n_obs(self) -> int:
        return self.response.shape[0]

    @property
    def n_params(self) -> int:
        return self.design.shape[1]


def build_frame(
    y,
    p: int,
    factors=None,
    *,
    period_index: Optional[Sequence] = None,
    factor_index: Optional[Sequence] = None,
) -> RegressionFrame:
    """Stack lags of ``y`` (and one lag of each factor) into a design matrix.

    Factors enter lagged one period: the row explaining ``y_t`` carries
    ``F_{t-1}``.  When both ``period_index`` and ``factor_index`` are given
    they must match label for label.
    """
    y = np.asarray(y, dtype=float).ravel()
    T = y.shape[0]
    if int(p) != p or p < 1:
        raise ParameterError(f"lag order must be a positive integer, got {p}")
    p = int(p)
    if T <= p:
        raise ParameterError(f"series length {T} must exceed lag order {p}")
    if not np.all(np.isfinite(y)):
        raise ParameterError("series contains non-finite values")
    if period_index is None:
        period_index = tuple(range(T))
    period_index = tuple(period_index)
    if len(period_index) != T:
        raise AlignmentError(f"period index has {len(period_index)} labels for {T} observations")

    cols = [np.ones(T - p)]
    for lag in range(1, p + 1):
        cols.append(y[p - lag:T - lag])

    F = None
    k = 0
    if factors is not None:
        F = np.asarray(factors, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if F.shape[0] != T:
            raise AlignmentError(f"factors have {F.shape[0]} periods, series has {T}")
        if factor_index is not None:
            factor_index = tuple(factor_index)
            if factor_index != period_index:
                first = next(
                    (i for i, (a, b) in enumerate(zip(period_index, factor_index)) if a != b),
                    min(len(period_index), len(factor_index)),
                )
                raise AlignmentError(
                    f"factor period index differs from series index at position {first}"
                )
        k = F.shape[1]
        for j in range(k):
            cols.append(F[p - 1:T - 1, j])

    design = np.column_stack(cols)
    return RegressionFrame(
        response=y[p:].copy(),
        design=np.ascontiguousarray(design),
        p=p,
        k=k,
        period_index=period_index[p:],
        series=y,
        factors=F,
    )


def check_rank(design: np.ndarray) -> None:
    """Raise SingularDesignError unless ``design`` has full column rank."""
    from scipy.linalg import qr

    n, d = design.shape
    if n < d:
        raise SingularDesignError(f"{n} observations cannot identify {d} coefficients")
    _, R, _ = qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > diag[0] * max(n, d) * np.finfo(float).eps * 10)) if diag[0] else 0
    if rank < d:
        raise SingularDesignError(f"design has rank {rank} < {d}")


def _validate_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"quantile level must lie in (0, 1), got {tau}")
    return tau


def fit_quantile(frame: RegressionFrame, tau: float):
    """Minimize the tick loss at one quantile level.

    Returns ``(theta, objective)``.  When the optimum is not unique the
    vertex reached by the descent step is returned.
    """
    tau = _validate_tau(tau)
    check_rank(frame.design)
    theta, obj, status, iters = _rqkernel.fit_one(
        frame.design, frame.response, tau, DUALITY_TOL, MAX_IP_ITER
    )
    if status != _rqkernel.OK:
        raise NumericError(
            f"quantile fit at tau={tau} failed: {_STATUS_TEXT[status]} after {iters} iterations",
            trace={"tau": tau, "status": int(status), "iterations": int(iters)},
        )
    return theta, float(obj)


@dataclass(frozen=True)
class QuantileFitPath:
    tau_grid: np.ndarray
    coefficients: np.ndarray
    objective: np.ndarray
    diagnostics: tuple = field(default_factory=tuple)

    def fitted(self, design: np.ndarray) -> np.ndarray:
        """Conditional quantiles, one column per grid point."""
        return design @ self.coefficients.T

    def crossings(self, design: np.ndarray) -> np.ndarray:
        """Row indices whose fitted quantiles are not nondecreasing in tau."""
        q = self.fitted(design)
        return np.flatnonzero(np.any(np.diff(q, axis=1) < 0.0, axis=1))


def validate_grid(tau_grid) -> np.ndarray:
    taus = np.asarray(tau_grid, dtype=float).ravel()
    if taus.size == 0:
        raise ParameterError("quantile grid is empty")
    if np.any(taus <= 0.0) or np.any(taus >= 1.0):
        raise ParameterError("quantile grid must lie strictly inside (0, 1)")
    if np.any(np.diff(taus) <= 0.0):
        raise ParameterError("quantile grid must be strictly increasing")
    return taus


def tau_grid(m: int, lower: float = 0.1, upper: float = 0.9) -> np.ndarray:
    """``m`` equidistributed levels from ``lower`` to ``upper``."""
    if m < 1:
        raise ParameterError("grid needs at least one point")
    if m == 1:
        return np.array([0.5 * (lower + upper)])
    return np.linspace(lower, upper, m)


def fit_path(frame: RegressionFrame, tau_grid, *, threads: int = 1) -> QuantileFitPath:
    """Fit every level of ``tau_grid``; each level is solved independently."""
    taus = validate_grid(tau_grid)
    check_rank(frame.design)
    X, y = frame.design, frame.response
    if threads > 1 and taus.size > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(
                pool.map(lambda t: _rqkernel.fit_one(X, y, t, DUALITY_TOL, MAX_IP_ITER), taus)
            )
        coefs = np.array([o[0] for o in out])
        objs = np.array([o[1] for o in out])
        status = np.array([o[2] for o in out])
    else:
        coefs, objs, status, _ = _rqkernel.fit_grid(X, y, taus, DUALITY_TOL, MAX_IP_ITER)
    bad = np.flatnonzero(status != _rqkernel.OK)
    if bad.size:
        q = bad[0]
        raise NumericError(
            f"quantile fit at tau={taus[q]} failed: {_STATUS_TEXT[int(status[q])]}",
            trace={"tau": float(taus[q]), "status": int(status[q])},
        )
    diagnostics = tuple(_STATUS_TEXT[int(s)] for s in status)
    return QuantileFitPath(taus, coefs, objs, diagnostics)
