"""Simulation designs, rejection-frequency experiments and the factor-error check."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bootstrap import BootstrapConfig, run_test
from .errors import NumericError, ParameterError
from .panel import Panel, extract_factors, from_array
from .qar import build_frame, fit_path, norm_ppf, tau_grid
from .rng import derive_seed, stream
from .spectest import NULLS, WeightConfig, empirical_process

log = logging.getLogger(__name__)

CASES = {"case1": 1, "case2": 2}
MAX_FAILURES = 50

# scalar Gamma shared by the response and factor blocks
MC_WEIGHTS = WeightConfig(tie_blocks=True)


@dataclass(frozen=True)
class DgpSpec:
    case: str
    T: int
    rho1: float = 0.5
    beta1: float = 0.8
    panel_N: Optional[int] = None
    burn_in: int = 200
    panel_noise: float = 1.0
    nulls: tuple = ("H01",)

    def __post_init__(self):
        if self.case not in CASES:
            raise ParameterError(f"case must be one of {sorted(CASES)}, got {self.case!r}")
        if self.T < 10:
            raise ParameterError("T must be at least 10")
        if not abs(self.rho1) < 1:
            raise ParameterError("|rho1| must be below 1")
        if self.burn_in < 100:
            raise ParameterError("burn_in must be at least 100")
        if self.panel_N is not None and self.panel_N < 1:
            raise ParameterError("panel_N must be positive")
        for h in self.nulls:
            if h not in NULLS:
                raise ParameterError(f"unknown null {h!r}")

    @property
    def N(self) -> int:
        return self.T if self.panel_N is None else int(self.panel_N)


@dataclass(frozen=True)
class SimData:
    y: np.ndarray
    factors: np.ndarray  # T x 1, the true factor
    panel: Panel


def simulate_dgp(spec: DgpSpec, rng: np.random.Generator) -> SimData:
    """Draw one sample.

    y_t = 10 + Phi^{-1}(u_t) + rho1 y_{t-1} [+ beta1 F_{t-1}], u_t iid U(0,1),
    F_t iid N(0,1), started at y_0 = 20 and run through ``burn_in``
    discarded periods.  The companion panel is X_it = lambda_i F_t + e_it
    with lambda_i ~ N(1,1) and e_it ~ N(0, panel_noise^2).  Draw order does
    not depend on the case, so case2 with beta1 = 0 reproduces case1.
    """
    T, N, burn = spec.T, spec.N, spec.burn_in
    total = burn + T
    u = rng.uniform(size=total)
    F = rng.standard_normal(total + 1)
    lam = rng.normal(1.0, 1.0, size=N)
    e = rng.standard_normal((N, T))

    beta = spec.beta1 if spec.case == "case2" else 0.0
    shock = 10.0 + norm_ppf(u)
    y = np.empty(total + 1)
    y[0] = 20.0
    for t in range(1, total + 1):
        y[t] = shock[t - 1] + spec.rho1 * y[t - 1] + beta * F[t - 1]
    keep = slice(burn + 1, total + 1)
    y_s = y[keep]
    F_s = F[keep]
    X = lam[:, None] * F_s[None, :] + spec.panel_noise * e
    return SimData(y_s, F_s[:, None], from_array(X))


@dataclass(frozen=True)
class RejectionTable:
    rows: tuple
    mc_reps: int
    boot_reps: int
    nominal_alpha: float

    def frequency(self, case: str, T: int, functional: str, null: str = "H01") -> float:
        for r in self.rows:
            if (r["case"], r["T"], r["functional"], r["null"]) == (case, T, functional, null):
                return r["rejection_frequency"]
        raise KeyError((case, T, functional, null))

    def to_csv(self, path, header_lines=()) -> None:
        cols = ["case", "T", "null", "functional", "rejection_frequency", "rejections",
                "mc_reps", "boot_reps", "alpha", "failures"]
        with Path(path).open("w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow(r)

    def to_text(self) -> str:
        """Plain-text layout: one block per null, rows T, columns case x (KS, CvM)."""
        out = []
        cases = sorted({r["case"] for r in self.rows})
        for null in NULLS:
            sub = [r for r in self.rows if r["null"] == null]
            if not sub:
                continue
            Ts = sorted({r["T"] for r in sub})
            out.append(f"Rejection frequencies under {null} (alpha = {self.nominal_alpha}, "
                       f"{self.mc_reps} MC x {self.boot_reps} bootstrap)")
            head = f"{'T':>6}"
            for c in cases:
                head += f" | {c + ' KS':>10} {c + ' CvM':>10}"
            out.append(head)
            out.append("-" * len(head))
            for T in Ts:
                line = f"{T:>6}"
                for c in cases:
                    vals = {r["functional"]: r["rejection_frequency"] for r in sub
                            if r["case"] == c and r["T"] == T}
                    ks = f"{vals['KS']:.3f}" if "KS" in vals else "-"
                    cvm = f"{vals['CvM']:.3f}" if "CvM" in vals else "-"
                    line += f" | {ks:>10} {cvm:>10}"
                out.append(line)
            out.append("")
        return "\n".join(out)


def _replication(args):
    spec, r, boot_reps, alpha, seed, k, weight_cfg, taus = args
    case_id = CASES[spec.case]
    failures = 0
    for attempt in range(MAX_FAILURES):
        rng = stream(seed, "montecarlo", case_id, spec.T, r, attempt)
        try:
            data = simulate_dgp(spec, rng)
            Fhat = extract_factors(data.panel, k).factors
            out = {}
            for null in spec.nulls:
                frame = build_frame(data.y, 1, Fhat if null == "H02" else None)
                cfg = BootstrapConfig(
                    replications=boot_reps,
                    seed=derive_seed(seed, "montecarlo", case_id, spec.T, r, attempt, NULLS.index(null)),
                    alpha=alpha,
                )
                res, _ = run_test(frame, Fhat, weight_cfg, cfg, null, taus=taus)
                out[null] = (res.reject_cvm, res.reject_ks)
            return out, failures
        except NumericError as exc:
            failures += 1
            log.warning("replication %d of %s T=%d failed (%s); redrawing", r, spec.case, spec.T, exc)
    raise NumericError(f"replication {r} failed {MAX_FAILURES} times")


def run_experiment(
    specs: Sequence[DgpSpec],
    mc_reps: int,
    boot_reps: int,
    alpha: float,
    seed: int,
    *,
    k: int = 1,
    weight_cfg: WeightConfig = MC_WEIGHTS,
    taus=None,
    threads: int = 1,
) -> RejectionTable:
    """Rejection frequencies of the CvM and KS tests for every design in ``specs``.

    Replication ``r`` of a design draws from its own stream keyed by
    (case, T, r), so the table is reproducible for a fixed seed and does
    not depend on ``threads`` or on which other designs are run.
    """
    if mc_reps < 1 or boot_reps < 1:
        raise ParameterError("replication counts must be positive")
    taus = tau_grid(17) if taus is None else np.asarray(taus, dtype=float)
    jobs = [(s, r, boot_reps, alpha, seed, k, weight_cfg, taus) for s in specs for r in range(mc_reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replication, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_replication(j) for j in jobs]

    rows = []
    for si, spec in enumerate(specs):
        block = results[si * mc_reps:(si + 1) * mc_reps]
        failures = sum(b[1] for b in block)
        for null in spec.nulls:
            for fi, name in enumerate(("KS", "CvM")):
                hits = sum(bool(b[0][null][1 - fi]) for b in block)
                rows.append({
                    "case": spec.case, "T": spec.T, "null": null, "functional": name,
                    "rejection_frequency": hits / mc_reps, "rejections": hits,
                    "mc_reps": mc_reps, "boot_reps": boot_reps, "alpha": alpha, "failures": failures,
                })
    return RejectionTable(tuple(rows), mc_reps, boot_reps, alpha)


def _rotate_true(F_true: np.ndarray, F_hat: np.ndarray) -> np.ndarray:
    """Least-squares image of the true factors in the estimated factor space.

    When more factors were extracted than exist, the surplus estimated
    columns are kept as they are so the design stays full rank.
    """
    r = F_true.shape[1]
    Z = np.column_stack([np.ones(F_true.shape[0]), F_true])
    coef, *_ = np.linalg.lstsq(Z, F_hat[:, :r], rcond=None)
    return np.column_stack([Z @ coef, F_hat[:, r:]])


def statistic_gap(data: SimData, k: int, which_null: str, weight_cfg: WeightConfig, taus,
                  functional: str = "cvm") -> float:
    """|functional with estimated factors - functional with rotated true factors|."""
    F_hat = extract_factors(data.panel, k).factors
    F_rot = _rotate_true(data.factors, F_hat)
    vals = []
    for F in (F_hat, F_rot):
        frame = build_frame(data.y, 1, F if which_null == "H02" else None)
        path = fit_path(frame, taus)
        surf = empirical_process(frame, path, F, weight_cfg, which_null)
        vals.append(surf.functional_cvm if functional == "cvm" else surf.functional_ks)
    return abs(vals[0] - vals[1])


def lemma1_convergence_check(
    spec: DgpSpec,
    sizes: Sequence[tuple],
    seed: int,
    *,
    reps: int = 100,
    k: int = 1,
    which_null: str = "H02",
    weight_cfg: WeightConfig = MC_WEIGHTS,
    taus=None,
    require_n_ge_t: bool = True,
):
    """Gap between statistics computed with estimated and with true factors.

    The true factors are mapped into the estimated factor space by least
    squares (intercept included, since panels are demeaned), which removes
    the rotation/scale indeterminacy of principal components.  Returns one
    dict per (N, T) with the median and mean gap and the raw gaps.
    """
    taus = tau_grid(17) if taus is None else np.asarray(taus, dtype=float)
    table = []
    for N, T in sizes:
        if require_n_ge_t and N < T:
            raise ParameterError(f"need N >= T, got N={N}, T={T}")
        s = replace(spec, T=int(T), panel_N=int(N))
        gaps = np.empty(reps)
        for r in range(reps):
            rng = stream(seed, "lemma1", int(N), int(T), r)
            gaps[r] = statistic_gap(simulate_dgp(s, rng), k, which_null, weight_cfg, taus)
        table.append({"N": int(N), "T": int(T), "median_gap": float(np.median(gaps)),
                      "mean_gap": float(np.mean(gaps)), "gaps": gaps})
    return table
