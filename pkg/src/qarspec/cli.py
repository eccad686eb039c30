"""Command-line entry point: ``qarspec {factors,fit,test,montecarlo,smooth}``.

Every output file starts with ``# key = value`` lines holding the resolved
configuration.  Passing such a file back through ``--config`` reruns the
command with the same settings; explicit flags override config values.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import BootstrapConfig, coefficient_bands, run_test
from .errors import (
    AlignmentError,
    LoadError,
    NumericError,
    ParameterError,
    QarSpecError,
    SingularDesignError,
)
from .montecarlo import CASES, DgpSpec, run_experiment
from .panel import PENALTIES, extract_factors, ic_profile, read_panel_csv
from .qar import build_frame, fit_path, tau_grid, validate_grid
from .rng import derive_seed
from .skewt import DEFAULT_PROBS, QuantileTargets, fit_skewt, skewt_pdf
from .spectest import NULLS, PHI, WeightConfig, write_surface_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

# settings that change where or how fast things run, never what is computed
_NOT_EMBEDDED = {"config", "threads", "out", "report", "quantiles_out", "density_out", "surface_dir",
                 "text_out", "func", "verbose"}

log = logging.getLogger("qarspec")


class ConfigError(QarSpecError, ValueError):
    """Bad configuration file or option value."""


# ------------------------------------------------------------ value parsing


def _none_or(conv):
    def parse(text):
        if text is None or str(text).strip().lower() in ("", "none"):
            return None
        return conv(text)
    parse.__name__ = conv.__name__
    return parse


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _k_option(text):
    text = str(text).strip().lower()
    return "auto" if text == "auto" else int(text)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def read_config(path) -> dict:
    """Flat ``key = value`` settings.

    A file written by this tool (first line ``# command = ...``) contributes
    only its leading block of ``# key = value`` lines; in a hand-written
    file ``#`` starts a comment.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    lines = path.read_text().splitlines()
    if lines and lines[0].replace(" ", "").startswith("#command="):
        header = []
        for raw in lines:
            if not raw.startswith("#"):
                break
            header.append(raw.lstrip("#").strip())
        lines = header
    out = {}
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key:
            out[key.replace("-", "_")] = value
    return out


def config_lines(args) -> list[str]:
    lines = [f"command = {args.command}", f"version = {__version__}"]
    for key in sorted(vars(args)):
        if key in _NOT_EMBEDDED or key == "command":
            continue
        lines.append(f"{key} = {_fmt(getattr(args, key))}")
    return lines


# ---------------------------------------------------------------- file I/O


def _require_file(path, what):
    if path is None:
        raise ConfigError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {p}")
    return p


def _data_rows(path):
    with Path(path).open(newline="") as fh:
        return [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]


def read_series_csv(path, column=None):
    """Period labels and one numeric column from a table with a header row."""
    rows = _data_rows(path)
    if len(rows) < 2:
        raise LoadError(f"{path}: need a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    if column is None:
        if len(header) < 2:
            raise LoadError(f"{path}: need a period column and a value column")
        j = 1
    elif column in header:
        j = header.index(column)
    else:
        raise LoadError(f"{path}: no column named {column!r}")
    periods, values = [], []
    for row in rows[1:]:
        try:
            values.append(float(row[j]))
        except (ValueError, IndexError):
            raise LoadError(f"{path}: missing or invalid value for {header[j]!r} at period {row[0]!r}") from None
        periods.append(row[0].strip())
    return tuple(periods), np.array(values)


def read_matrix_csv(path):
    """Header, period labels and the numeric block of a period-first table."""
    rows = _data_rows(path)
    if len(rows) < 2:
        raise LoadError(f"{path}: need a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    periods = tuple(r[0].strip() for r in rows[1:])
    data = np.full((len(rows) - 1, len(header) - 1), np.nan)
    for t, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise LoadError(f"{path}: row for period {row[0]!r} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row[1:]):
            try:
                data[t, j] = float(cell)
            except ValueError:
                raise LoadError(f"{path}: invalid value {cell!r} in column {header[j + 1]!r} "
                                f"at period {row[0]!r}") from None
    return header, periods, data


def _write_csv(path, header_lines, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _write_text(path, header_lines, body: str):
    text = "".join(f"# {line}\n" for line in header_lines) + body
    if path is None:
        sys.stdout.write(text)
    else:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _taus(args):
    if getattr(args, "taus", None):
        return validate_grid(args.taus)
    return tau_grid(args.m, args.tau_lower, args.tau_upper)


# -------------------------------------------------------------- commands


def _factor_model(args, panel):
    if args.k == "auto":
        k_max = min(args.k_max, panel.N, panel.T)
        k = int(np.argmin(ic_profile(panel, k_max, args.penalty))) + 1
    else:
        k = args.k
    return extract_factors(panel, k)


def cmd_factors(args) -> int:
    panel = read_panel_csv(_require_file(args.panel, "panel"))
    header = config_lines(args)
    k_max = min(args.k_max, panel.N, panel.T)
    profile = ic_profile(panel, k_max, args.penalty)
    k = int(np.argmin(profile)) + 1 if args.k == "auto" else args.k
    fm = extract_factors(panel, k)
    cols = ["period"] + [f"f{j + 1}" for j in range(fm.k)]
    _write_csv(args.out, header, cols, [[p, *row] for p, row in zip(panel.period_index, fm.factors)])
    report = [f"selected_k = {fm.k}", f"selection = {'ic_' + args.penalty if args.k == 'auto' else 'fixed'}",
              f"normalization = {fm.normalization}",
              "eigenvalues = " + ",".join(repr(float(v)) for v in fm.eigenvalues)]
    report += [f"ic[{j + 1}] = {float(v)!r}" for j, v in enumerate(profile)]
    _write_text(args.report, header, "\n".join(report) + "\n")
    return EXIT_OK


def cmd_fit(args) -> int:
    periods, y = read_series_csv(_require_file(args.series, "series"), args.column)
    F = None
    if args.factors is not None:
        _, fperiods, F = read_matrix_csv(_require_file(args.factors, "factors"))
        frame = build_frame(y, args.p, F, period_index=periods, factor_index=fperiods)
    else:
        frame = build_frame(y, args.p, period_index=periods)
    taus = _taus(args)
    path = fit_path(frame, taus, threads=args.threads)
    header = config_lines(args)
    d = frame.n_params
    cols = ["tau", "objective", "status"] + [f"theta_{j}" for j in range(d)]
    rows = [[t, o, s, *c] for t, o, s, c in zip(taus, path.objective, path.diagnostics, path.coefficients)]
    if args.bands > 0:
        lo, hi = coefficient_bands(frame, taus, args.bands, args.seed, args.band_level)
        cols += [f"lower_{j}" for j in range(d)] + [f"upper_{j}" for j in range(d)]
        rows = [r + list(lo[q]) + list(hi[q]) for q, r in enumerate(rows)]
    _write_csv(args.out, header, cols, rows)
    if args.quantiles_out is not None:
        q = path.fitted(frame.design)
        crossing = set(path.crossings(frame.design).tolist())
        qcols = ["period"] + [f"q_{_fmt(float(t))}" for t in taus] + ["crossing"]
        qrows = [[p, *q[i], int(i in crossing)] for i, p in enumerate(frame.period_index)]
        _write_csv(args.quantiles_out, header, qcols, qrows)
    return EXIT_OK


def _test_inputs(args):
    periods, y = read_series_csv(_require_file(args.series, "series"), args.column)
    F = None
    if args.panel is not None:
        panel = read_panel_csv(_require_file(args.panel, "panel"))
        if tuple(panel.period_index) != tuple(periods):
            raise AlignmentError("panel and series period labels differ")
        F = _factor_model(args, panel).factors
    elif args.factors is not None:
        _, fperiods, F = read_matrix_csv(_require_file(args.factors, "factors"))
        if tuple(fperiods) != tuple(periods):
            raise AlignmentError("factor and series period labels differ")
    return periods, y, F


def cmd_test(args) -> int:
    periods, y, F = _test_inputs(args)
    wcfg = WeightConfig(phi=args.phi, kappa=args.kappa, gamma_max=args.gamma_max, n_gamma=args.n_gamma,
                        max_lag=args.max_lag, tie_blocks=args.tie_blocks)
    header = config_lines(args)
    lines, table = [], []
    for m in args.m:
        taus = tau_grid(m, args.tau_lower, args.tau_upper)
        row = {"m": m}
        for null in NULLS:
            tag = f"m{m}.{null}"
            if null == "H02":
                if F is None:
                    lines.append(f"{tag}.status = skipped (no factors supplied)")
                    break
                if not row["H01_reject"]:
                    lines.append(f"{tag}.status = skipped (H01 not rejected at alpha = {args.alpha})")
                    break
            frame = build_frame(y, args.p, F if null == "H02" else None, period_index=periods)
            cfg = BootstrapConfig(args.replications, derive_seed(args.seed, "cli", m, NULLS.index(null)), args.alpha)
            res, surface = run_test(frame, F, wcfg, cfg, null, taus=taus, threads=args.threads,
                                    ks_form=args.ks_form, cvm_form=args.cvm_form)
            reject = res.reject_cvm
            row[f"{null}_p"] = res.p_cvm
            row[f"{null}_reject"] = reject
            lines += [
                f"{tag}.status = run",
                f"{tag}.cvm = {res.original_cvm!r}",
                f"{tag}.ks = {res.original_ks!r}",
                f"{tag}.p_cvm = {res.p_cvm!r}",
                f"{tag}.p_ks = {res.p_ks!r}",
                f"{tag}.critical_cvm = {res.critical_cvm!r}",
                f"{tag}.critical_ks = {res.critical_ks!r}",
                f"{tag}.redraws = {res.redraws}",
                f"{tag}.reject = {_fmt(bool(reject))}",
            ]
            if args.surface_dir is not None:
                Path(args.surface_dir).mkdir(parents=True, exist_ok=True)
                write_surface_csv(surface, Path(args.surface_dir) / f"surface_m{m}_{null}.csv", header)
        if row.get("H01_reject") is False:
            verdict = "QAR specification not rejected"
        elif "H02_p" in row:
            verdict = ("QAR rejected; FA-QAR not rejected" if not row["H02_reject"]
                       else "QAR rejected; FA-QAR rejected")
        else:
            verdict = "QAR rejected; FA-QAR not tested"
        lines.append(f"m{m}.decision = {verdict}")
        table.append(row)
    out = ["decision_rule = reject when the original CvM statistic exceeds the (1 - alpha) percentile "
           "of its bootstrap distribution; "
           "H02 is tested only after H01 is rejected and factors are available"]
    out += lines
    out.append("")
    out.append("# CvM bootstrap p-values")
    out.append(f"{'m':>4} {'H01':>8} {'H02':>8}")
    for row in table:
        h2 = f"{row['H02_p']:.3f}" if "H02_p" in row else "-"
        out.append(f"{row['m']:>4} {row['H01_p']:>8.3f} {h2:>8}")
    _write_text(args.out, header, "\n".join(out) + "\n")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    for c in args.cases:
        if c not in CASES:
            raise ConfigError(f"unknown case {c!r}; choose from {sorted(CASES)}")
    if args.full_scale:
        args.mc_reps, args.boot_reps = 1000, 300
        warnings.warn("full-scale Monte Carlo (1000 x 300) requested: expect many hours of CPU time",
                      RuntimeWarning, stacklevel=1)
        print("warning: full-scale Monte Carlo (1000 x 300) runs for many hours", file=sys.stderr, flush=True)
    specs = []
    for c in args.cases:
        nulls = ("H01", "H02") if (c == "case2" and args.h02) else ("H01",)
        for T in args.T:
            specs.append(DgpSpec(c, T, rho1=args.rho1, beta1=args.beta1, nulls=nulls))
    wcfg = WeightConfig(phi=args.phi, kappa=args.kappa, gamma_max=args.gamma_max, n_gamma=args.n_gamma,
                        max_lag=args.max_lag, tie_blocks=True)
    table = run_experiment(specs, args.mc_reps, args.boot_reps, args.alpha, args.seed, k=args.k_factors,
                           weight_cfg=wcfg, taus=tau_grid(args.m), threads=args.threads)
    header = config_lines(args)
    table.to_csv(args.out, header)
    text_path = args.text_out if args.text_out is not None else str(Path(args.out).with_suffix(".txt"))
    _write_text(text_path, header, table.to_text())
    sys.stdout.write(table.to_text())
    return EXIT_OK


def cmd_smooth(args) -> int:
    header_row, periods, Q = read_matrix_csv(_require_file(args.quantiles, "quantiles"))
    cols = {}
    for j, name in enumerate(header_row[1:]):
        if name.startswith("q_"):
            cols[float(name[2:])] = j
    probs = tuple(args.probs)
    missing = [p for p in probs if not any(abs(p - c) < 1e-12 for c in cols)]
    if missing:
        raise ConfigError(f"quantile file lacks columns for probabilities {missing}")
    idx = [cols[min(cols, key=lambda c: abs(c - p))] for p in probs]
    header = config_lines(args)
    prow, drow = [], []
    for t, period in enumerate(periods):
        values = Q[t, idx]
        try:
            fit = fit_skewt(QuantileTargets(tuple(values), probs))
        except ParameterError as exc:
            log.warning("period %s skipped: %s", period, exc)
            prow.append([period, np.nan, np.nan, np.nan, np.nan, np.nan, 0, 0, "flagged: " + str(exc).split(":")[0]])
            continue
        except NumericError as exc:
            prow.append([period, np.nan, np.nan, np.nan, np.nan, np.nan, 0, 0, "numeric failure"])
            log.warning("period %s failed: %s", period, exc)
            continue
        p = fit.params
        prow.append([period, p.mu, p.sigma, p.alpha, p.nu, fit.objective, fit.iterations,
                     int(fit.converged), "ok"])
        span = float(values[-1] - values[0])
        grid = np.linspace(values[0] - span, values[-1] + span, args.grid)
        dens = skewt_pdf(grid, p)
        drow += [[period, g, f] for g, f in zip(grid, dens)]
    _write_csv(args.out, header, ["period", "mu", "sigma", "alpha", "nu", "objective", "iterations",
                                  "converged", "status"], prow)
    dpath = args.density_out if args.density_out is not None else str(Path(args.out).with_suffix("")) + "_density.csv"
    _write_csv(dpath, header, ["period", "y", "density"], drow)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _weight_options(p):
    p.add_argument("--phi", default="arctan", choices=sorted(PHI))
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--gamma-max", type=float, default=3.0)
    p.add_argument("--n-gamma", type=int, default=30)
    p.add_argument("--max-lag", type=int, default=4, help="history truncation c")


def _grid_options(p, m_list=False):
    if m_list:
        p.add_argument("--m", type=_int_list, default=[17], help="comma list of grid sizes")
    else:
        p.add_argument("--m", type=int, default=17)
    p.add_argument("--tau-lower", type=float, default=0.1)
    p.add_argument("--tau-upper", type=float, default=0.9)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qarspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", type=_none_or(str), default=None, help="key = value settings file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default=out_default)
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("factors", help="extract principal-components factors from a panel")
    common(p, "factors.csv")
    p.add_argument("--panel", type=_none_or(str), default=None)
    p.add_argument("--k", type=_k_option, default="auto")
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--penalty", default="icp2", choices=sorted(PENALTIES))
    p.add_argument("--report", type=_none_or(str), default=None, help="IC report path (stdout if unset)")
    p.set_defaults(func=cmd_factors)

    p = sub.add_parser("fit", help="fit a QAR / FA-QAR coefficient path")
    common(p, "coefficients.csv")
    p.add_argument("--series", type=_none_or(str), default=None)
    p.add_argument("--column", type=_none_or(str), default=None)
    p.add_argument("--factors", type=_none_or(str), default=None)
    p.add_argument("--p", type=int, default=1)
    _grid_options(p)
    p.add_argument("--taus", type=_none_or(_float_list), default=None, help="explicit comma list of levels")
    p.add_argument("--bands", type=int, default=0, help="bootstrap replications for percentile bands")
    p.add_argument("--band-level", type=float, default=0.9)
    p.add_argument("--quantiles-out", type=_none_or(str), default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="run the specification tests with bootstrap p-values")
    common(p, None)
    p.add_argument("--series", type=_none_or(str), default=None)
    p.add_argument("--column", type=_none_or(str), default=None)
    p.add_argument("--panel", type=_none_or(str), default=None)
    p.add_argument("--factors", type=_none_or(str), default=None)
    p.add_argument("--k", type=_k_option, default="auto")
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--penalty", default="icp2", choices=sorted(PENALTIES))
    p.add_argument("--p", type=int, default=1)
    _grid_options(p, m_list=True)
    _weight_options(p)
    p.add_argument("--tie-blocks", action="store_true", help="one Gamma shared by all conditioning blocks")
    p.add_argument("--replications", "--B", type=int, default=99)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--ks-form", default="squared", choices=["squared", "sup_abs"])
    p.add_argument("--cvm-form", default="squared", choices=["squared", "literal"])
    p.add_argument("--surface-dir", type=_none_or(str), default=None)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("montecarlo", help="size/power simulation")
    common(p, "montecarlo.csv")
    p.add_argument("--cases", type=_str_list, default=["case1", "case2"])
    p.add_argument("--T", type=_int_list, default=[100, 300, 500, 1000])
    p.add_argument("--mc-reps", type=int, default=200)
    p.add_argument("--boot-reps", type=int, default=99)
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--rho1", type=float, default=0.5)
    p.add_argument("--beta1", type=float, default=0.8)
    p.add_argument("--k-factors", type=int, default=1)
    p.add_argument("--h02", action="store_true", help="also test H02 on case2")
    p.add_argument("--m", type=int, default=17)
    _weight_options(p)
    p.add_argument("--text-out", type=_none_or(str), default=None)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("smooth", help="fit skewed-t densities to fitted quantiles")
    common(p, "skewt_params.csv")
    p.add_argument("--quantiles", type=_none_or(str), default=None)
    p.add_argument("--probs", type=_float_list, default=list(DEFAULT_PROBS))
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--density-out", type=_none_or(str), default=None)
    p.set_defaults(func=cmd_smooth)
    return parser


def _apply_config(parser, argv):
    """Parse once to find the subcommand and config, then reparse with config defaults."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    cfg = read_config(args.config)
    embedded_cmd = cfg.pop("command", args.command)
    cfg.pop("version", None)
    if embedded_cmd != args.command:
        raise ConfigError(f"config was written by {embedded_cmd!r}, not {args.command!r}")
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key in ("config",):
            continue
        if key not in actions:
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        if isinstance(actions[key], argparse._StoreTrueAction):
            if value.lower() not in ("true", "false"):
                raise ConfigError(f"{key} must be true or false")
            defaults[key] = value.lower() == "true"
        else:
            defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        if exc.trace:
            print(f"trace: {exc.trace}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ParameterError, LoadError, AlignmentError, SingularDesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
