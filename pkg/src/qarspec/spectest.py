"""Exponentially weighted quantile-marked empirical processes and their functionals.

For a fitted path theta(tau) the process is

    S(Gamma, tau) = n^{-1/2} sum_t [1(y_t - x_t' theta(tau) <= 0) - tau] w_t(Gamma),

with history weights

    w_t(Gamma) = exp( sum_b Gamma_b * sum_{j=0}^{d(t)} (j+1)^{-kappa} phi(Z^b_{t-1-j}) ),

where ``Z^b`` runs over the variables of conditioning block ``b`` (lagged
response, estimated factors), ``phi`` is a bounded one-to-one map and
``d(t) = min(available history - 1, max_lag)``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericError, ParameterError
from .qar import QuantileFitPath, RegressionFrame

PHI = {
    "arctan": np.arctan,
    "tanh": np.tanh,
}
PHI_BOUND = {"arctan": np.pi / 2, "tanh": 1.0}

NULLS = ("H01", "H02")

# residuals within this relative distance of zero count as "<= 0"; the
# fitted vertex puts d residuals at zero up to rounding
ZERO_TOL = 1e-10


@dataclass(frozen=True)
class WeightConfig:
    phi: str = "arctan"
    kappa: float = 2.0
    gamma_max: float = 3.0
    n_gamma: int = 30
    max_lag: int = 4
    tie_blocks: bool = False

    def __post_init__(self):
        if self.phi not in PHI:
            raise ParameterError(f"unknown phi {self.phi!r}; choose from {sorted(PHI)}")
        if self.kappa < 2:
            raise ParameterError("kappa must be at least 2")
        if not self.gamma_max >= 0:
            raise ParameterError("gamma_max must be nonnegative")
        if self.n_gamma < 1:
            raise ParameterError("n_gamma must be at least 1")
        if self.max_lag < 1:
            raise ParameterError("max_lag must be at least 1")


@dataclass(frozen=True)
class TestSurface:
    values: np.ndarray  # m x G
    tau_grid: np.ndarray
    gamma_grid: np.ndarray  # G x n_blocks
    functional_ks: float
    functional_cvm: float
    which_null: str
    n_obs: int

    __test__ = False  # not a pytest class


def history_blocks(frame: RegressionFrame, factors, cfg: WeightConfig) -> np.ndarray:
    """Per-row weight building blocks, shape (n_obs, n_blocks).

    Column 0 sums the transformed lagged response, column 1 (when factors
    are given and blocks are not tied) the transformed lagged factors.
    """
    phi = PHI[cfg.phi]
    y = frame.series
    T = y.shape[0]
    Z = [phi(y)[:, None]]
    if factors is not None:
        F = np.asarray(factors, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if F.shape[0] != T:
            raise ParameterError(f"factors have {F.shape[0]} periods, series has {T}")
        Z.append(phi(F))
    # block totals per period: phi summed over the block's variables
    per_period = np.column_stack([z.sum(axis=1) for z in Z])
    if cfg.tie_blocks:
        per_period = per_period.sum(axis=1, keepdims=True)

    decay = (np.arange(cfg.max_lag + 1) + 1.0) ** (-cfg.kappa)
    rows = np.arange(frame.p, T)  # series position of each response
    out = np.zeros((rows.size, per_period.shape[1]))
    for j, c in enumerate(decay):
        src = rows - 1 - j
        ok = src >= 0
        out[ok] += c * per_period[src[ok]]
    return out


def gamma_points(cfg: WeightConfig, n_blocks: int) -> np.ndarray:
    """Grid of Gamma vectors, shape (G, n_blocks); Cartesian product over blocks."""
    axis = np.linspace(0.0, cfg.gamma_max, cfg.n_gamma) if cfg.n_gamma > 1 else np.array([cfg.gamma_max])
    return np.array(list(itertools.product(axis, repeat=n_blocks)))


def _weights_from_blocks(blocks: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    expo = blocks @ gammas.T
    if not np.all(np.isfinite(expo)) or expo.max() > 700.0:
        raise NumericError("weight exponent overflow", trace={"max_exponent": float(np.nanmax(expo))})
    return np.exp(expo)


def weight_matrix(frame: RegressionFrame, factors, cfg: WeightConfig):
    """Weights for every row and grid point: returns (W, gamma_grid)."""
    blocks = history_blocks(frame, factors, cfg)
    gammas = gamma_points(cfg, blocks.shape[1])
    return _weights_from_blocks(blocks, gammas), gammas


def weight_series(frame: RegressionFrame, factors, cfg: WeightConfig, gamma) -> np.ndarray:
    """Weights w_t for a single Gamma (scalar applies to every block)."""
    blocks = history_blocks(frame, factors, cfg)
    g = np.broadcast_to(np.asarray(gamma, dtype=float), (blocks.shape[1],))
    if np.any(g < 0.0) or np.any(g > cfg.gamma_max):
        raise ParameterError(f"gamma {gamma} outside [0, {cfg.gamma_max}]")
    return _weights_from_blocks(blocks, g[None, :])[:, 0]


def marks(response: np.ndarray, design: np.ndarray, path: QuantileFitPath) -> np.ndarray:
    """Indicator marks 1(residual <= 0) - tau, shape (n_obs, m)."""
    resid = response[:, None] - design @ path.coefficients.T
    tol = ZERO_TOL * (1.0 + np.max(np.abs(response)))
    return (resid <= tol).astype(float) - path.tau_grid[None, :]


def cvm_functional(surface, form: str = "squared") -> float:
    """Average of |S|^2 over all (tau, Gamma) cells.

    ``form="literal"`` gives the plain cell average of S instead.
    """
    S = _values(surface)
    if form == "squared":
        return float(np.mean(S**2))
    if form == "literal":
        return float(np.mean(S))
    raise ParameterError(f"unknown CvM form {form!r}")


def ks_functional(surface, form: str = "squared") -> float:
    """Largest (over tau) Gamma-average of |S|^2.

    ``form="sup_abs"`` gives the double supremum of |S| instead.
    """
    S = _values(surface)
    if form == "squared":
        return float(np.max(np.mean(S**2, axis=1)))
    if form == "sup_abs":
        return float(np.max(np.abs(S)))
    raise ParameterError(f"unknown KS form {form!r}")


def _values(surface) -> np.ndarray:
    S = surface.values if isinstance(surface, TestSurface) else np.asarray(surface, dtype=float)
    if S.size == 0:
        raise ParameterError("empty surface")
    return np.atleast_2d(S)


def check_null(frame: RegressionFrame, which_null: str) -> None:
    if which_null not in NULLS:
        raise ParameterError(f"which_null must be one of {NULLS}, got {which_null!r}")
    if which_null == "H01" and frame.k != 0:
        raise ParameterError("H01 tests the plain QAR; build the frame without factor regressors")
    if which_null == "H02" and frame.k == 0:
        raise ParameterError("H02 tests the factor-augmented QAR; the frame needs factor regressors")


def surface_from_marks(psi: np.ndarray, W: np.ndarray) -> np.ndarray:
    return psi.T @ W / np.sqrt(psi.shape[0])


def empirical_process(
    frame: RegressionFrame,
    path: QuantileFitPath,
    factors,
    cfg: WeightConfig,
    which_null: str,
    *,
    ks_form: str = "squared",
    cvm_form: str = "squared",
) -> TestSurface:
    """Evaluate S on the full (tau, Gamma) grid and both functionals."""
    check_null(frame, which_null)
    if path.coefficients.shape[1] != frame.n_params:
        raise ParameterError(
            f"path has {path.coefficients.shape[1]} coefficients, frame has {frame.n_params} regressors"
        )
    W, gammas = weight_matrix(frame, factors, cfg)
    psi = marks(frame.response, frame.design, path)
    S = surface_from_marks(psi, W)
    return TestSurface(
        values=S,
        tau_grid=path.tau_grid,
        gamma_grid=gammas,
        functional_ks=ks_functional(S, ks_form),
        functional_cvm=cvm_functional(S, cvm_form),
        which_null=which_null,
        n_obs=frame.n_obs,
    )


def write_surface_csv(surface: TestSurface, path, header_lines=()) -> None:
    path = Path(path)
    nb = surface.gamma_grid.shape[1]
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["tau"] + [f"gamma_{b + 1}" for b in range(nb)] + ["S"])
        for q, tau in enumerate(surface.tau_grid):
            for g, gam in enumerate(surface.gamma_grid):
                w.writerow([repr(float(tau))] + [repr(float(x)) for x in gam] + [repr(float(surface.values[q, g]))])
