"""Panel ingestion, principal-components factor extraction and factor-count selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import LoadError, NumericError, ParameterError, VarianceError

NORMALIZATION = "F'F/T = I; loadings = X F / T; sign: loading column sums >= 0"


@dataclass(frozen=True)
class Panel:
    """Standardized N x T panel (rows are series, columns are periods)."""

    values: np.ndarray
    series_ids: tuple
    period_index: tuple
    means: np.ndarray
    scales: np.ndarray

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FactorModel:
    factors: np.ndarray  # T x k
    loadings: np.ndarray  # N x k
    eigenvalues: np.ndarray
    k: int
    normalization: str = NORMALIZATION
    period_index: tuple = ()

    def common_component(self) -> np.ndarray:
        """N x T matrix of loadings times factors."""
        return self.loadings @ self.factors.T


def from_array(values, series_ids=None, period_index=None) -> Panel:
    """Build a standardized panel from an N x T array."""
    X = np.asarray(values, dtype=float)
    if X.ndim != 2:
        raise LoadError("panel must be two dimensional")
    N, T = X.shape
    if N < 1 or T < 2:
        raise LoadError(f"panel needs N >= 1 and T >= 2, got N={N}, T={T}")
    series_ids = tuple(series_ids) if series_ids is not None else tuple(f"x{i}" for i in range(N))
    period_index = tuple(period_index) if period_index is not None else tuple(range(T))
    if len(series_ids) != N or len(period_index) != T:
        raise LoadError("labels do not match panel dimensions")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        i, t = bad[0]
        raise LoadError(f"missing value for series {series_ids[i]!r} at period {period_index[t]!r}")
    means = X.mean(axis=1)
    scales = X.std(axis=1)
    flat = np.flatnonzero(scales <= 1e-12 * np.maximum(1.0, np.abs(means)))
    if flat.size:
        raise VarianceError(f"series {series_ids[flat[0]]!r} has zero variance")
    Z = (X - means[:, None]) / scales[:, None]
    return Panel(Z, series_ids, period_index, means, scales)


def load_panel(rows: Iterable[Sequence[str]], period_column: int = 0) -> Panel:
    """Parse tabular records (header first) into a standardized panel.

    Rows are periods and columns are series.  Cells are parsed with
    ``float`` so only decimal-point numbers are accepted; a blank or
    unparseable cell is reported with its series and period.
    """
    rows = [list(r) for r in rows]
    if not rows:
        raise LoadError("empty table")
    header, body = rows[0], [r for r in rows[1:] if any(c.strip() for c in r)]
    ncol = len(header)
    if ncol < 2:
        raise LoadError("table needs a period column and at least one series")
    if not 0 <= period_column < ncol:
        raise LoadError(f"period column {period_column} outside table with {ncol} columns")
    series_cols = [j for j in range(ncol) if j != period_column]
    series_ids = tuple(header[j].strip() for j in series_cols)
    periods = []
    data = np.empty((len(series_cols), len(body)))
    for t, row in enumerate(body):
        if len(row) != ncol:
            raise LoadError(f"row {t + 2} has {len(row)} cells, header has {ncol}")
        period = row[period_column].strip()
        periods.append(period)
        for i, j in enumerate(series_cols):
            cell = row[j].strip()
            try:
                data[i, t] = float(cell)
            except ValueError:
                raise LoadError(
                    f"missing or invalid value {cell!r} for series {series_ids[i]!r} "
                    f"at period {period!r}"
                ) from None
    return from_array(data, series_ids, periods)


def read_panel_csv(path) -> Panel:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return load_panel(rows)


def _top_eigen(G: np.ndarray, k: int):
    try:
        vals, vecs = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}", trace={"shape": G.shape}) from exc
    order = np.argsort(vals)[::-1][:k]
    return vals[order], vecs[:, order]


def extract_factors(panel: Panel, k: int, *, gram: str = "auto") -> FactorModel:
    """Principal-components factors and loadings.

    ``gram`` picks the eigenproblem: ``"time"`` uses the T x T matrix
    X'X, ``"cross"`` the N x N matrix XX', ``"auto"`` the smaller one.
    Factors are scaled so that F'F/T = I_k and loadings are X F / T, so
    the common component is the best rank-k approximation of X.  The
    returned eigenvalues are those of X'X (equivalently XX').
    """
    X = panel.values
    N, T = X.shape
    if int(k) != k or not 1 <= k <= min(N, T):
        raise ParameterError(f"k must be an integer in [1, {min(N, T)}], got {k}")
    k = int(k)
    if gram == "auto":
        gram = "time" if T <= N else "cross"
    if gram == "time":
        vals, vecs = _top_eigen(X.T @ X, k)
        F = np.sqrt(T) * vecs
    elif gram == "cross":
        vals, vecs = _top_eigen(X @ X.T, k)
        F = X.T @ vecs
        norms = np.sqrt(np.sum(F**2, axis=0))
        # zero eigenvalue: any unit vector orthogonal to the others spans the same fit
        if np.any(norms <= 1e-12 * max(1.0, norms.max())):
            vals, vecs = _top_eigen(X.T @ X, k)
            F = np.sqrt(T) * vecs
        else:
            F = np.sqrt(T) * F / norms
    else:
        raise ParameterError(f"unknown gram option {gram!r}")
    L = X @ F / T
    signs = np.where(L.sum(axis=0) < 0.0, -1.0, 1.0)
    F = F * signs
    L = L * signs
    vals = np.clip(vals, 0.0, None)
    return FactorModel(F, L, vals, k, NORMALIZATION, panel.period_index)


def residual_variance(panel: Panel, k: int) -> float:
    """Mean squared idiosyncratic residual V(k) after removing k factors."""
    fm = extract_factors(panel, k)
    resid = panel.values - fm.common_component()
    return float(np.mean(resid**2))


def penalty_icp2(N: int, T: int) -> float:
    return (N + T) / (N * T) * np.log(min(N, T))


def penalty_icp1(N: int, T: int) -> float:
    return (N + T) / (N * T) * np.log(N * T / (N + T))


def penalty_icp3(N: int, T: int) -> float:
    return np.log(min(N, T)) / min(N, T)


PENALTIES: dict[str, Callable[[int, int], float]] = {
    "icp1": penalty_icp1,
    "icp2": penalty_icp2,
    "icp3": penalty_icp3,
}


def ic_profile(panel: Panel, k_max: int, penalty: str | Callable = "icp2") -> np.ndarray:
    """IC(k) = ln V(k) + k * g(N, T) for k = 1..k_max."""
    N, T = panel.N, panel.T
    if int(k_max) != k_max or not 1 <= k_max <= min(N, T):
        raise ParameterError(f"k_max must be an integer in [1, {min(N, T)}], got {k_max}")
    g = PENALTIES[penalty](N, T) if isinstance(penalty, str) else penalty(N, T)
    # one decomposition serves every k
    fm = extract_factors(panel, int(k_max))
    X = panel.values
    out = np.empty(int(k_max))
    # roundoff-sized residuals count as an exact fit, so ln V cannot rank noise
    floor = 1e-20 * float(np.mean(X**2))
    for k in range(1, int(k_max) + 1):
        resid = X - fm.loadings[:, :k] @ fm.factors[:, :k].T
        V = max(float(np.mean(resid**2)), floor)
        out[k - 1] = np.log(V) + k * g
    return out


def select_num_factors(panel: Panel, k_max: int, penalty: str | Callable = "icp2") -> int:
    """Number of factors minimizing the information criterion (never below 1)."""
    return int(np.argmin(ic_profile(panel, k_max, penalty))) + 1
