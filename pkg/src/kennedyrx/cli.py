"""Command-line surface: config parsing, count-record I/O, experiment dispatch.

Subcommands
-----------
simulate      draw a detection record and write it as a counts file
estimate      Bayes posterior and estimate (both detector kinds) from counts
fisher        tabulate both Fisher informations over a phase grid
fano          Fano-inversion phase estimate from a counts file
discriminate  empirical bit-error rate vs the analytic error probability
sweep         estimator convergence curves over growing sample sizes

Configuration comes from an optional flat ``key=value`` file (one pair per
line, ``#`` comments) merged with command-line flags; flags win.  All tabular
output is CSV with a leading ``# key=value`` comment block that records the
fully resolved configuration, so any output can be reproduced by turning
those pairs back into flags.  Angles are always radians; reals are written
with 17 significant digits so re-parsing is lossless.

Exit status: 0 success, 2 config error, 3 data error, 4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from dataclasses import dataclass

import numpy as np

from .estimation import (
    CountRecord,
    DegenerateEvidenceError,
    PhaseGrid,
    UndefinedFanoError,
    bayes_estimate,
    crlb_variance,
    empirical_fano,
    fano_inversion_estimate,
    fisher_onoff,
    fisher_pnr,
    log_likelihood_onoff,
    log_likelihood_pnr,
    posterior,
)
from .montecarlo import (
    DEFAULT_M_LIST,
    InsufficientSupportError,
    SimConfig,
    run_convergence_sweep,
    run_discrimination,
    sample_counts,
    stream,
    to_onoff,
)
from .photonstats import GAMMA_MAX, DetectorPlaneAmplitudes
from .receiver import ReceiverParams, detector_amplitudes, error_probability

__all__ = [
    "RunConfig",
    "ConfigError",
    "DataError",
    "parse_config",
    "load_counts",
    "read_table",
    "dispatch",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Unreadable or malformed data file."""


def _parse_float(key: str, raw: str, lo=None, hi=None, lo_open=False, hi_open=False) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"config key '{key}': expected a real number, got {raw!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"config key '{key}': must be finite, got {raw!r}")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"config key '{key}': {_range_text(key, lo, hi, lo_open, hi_open)}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(f"config key '{key}': {_range_text(key, lo, hi, lo_open, hi_open)}")
    return v


def _range_text(key, lo, hi, lo_open, hi_open) -> str:
    if key == "tau":
        return "tau must lie in (0,1)"
    left = "(" if lo_open else "["
    right = ")" if hi_open else "]"
    lo_s = "-inf" if lo is None else f"{lo:g}"
    hi_s = "inf" if hi is None else f"{hi:g}"
    return f"{key} must lie in {left}{lo_s}, {hi_s}{right}"


def _parse_int(key: str, raw: str, lo=None, hi=None) -> int:
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"config key '{key}': expected an integer, got {raw!r}") from None
    if lo is not None and v < lo:
        raise ConfigError(f"config key '{key}': must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"config key '{key}': must be <= {hi}, got {v}")
    return v


def _parse_choice(key: str, raw: str, choices: tuple[str, ...]) -> str:
    if raw not in choices:
        raise ConfigError(f"config key '{key}': must be one of {', '.join(choices)}; got {raw!r}")
    return raw


def _parse_m_list(key: str, raw: str) -> tuple[int, ...]:
    try:
        values = tuple(int(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(
            f"config key '{key}': expected comma-separated integers, got {raw!r}"
        ) from None
    if not values or any(v < 1 for v in values):
        raise ConfigError(f"config key '{key}': sample sizes must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"config key '{key}': sample sizes must be strictly increasing")
    return values


# key -> converter(raw string) -> typed value
_CONVERTERS = {
    "a": lambda v: _parse_float("a", v, lo=0.0),
    "b": lambda v: _parse_float("b", v, lo=0.0),
    "alpha": lambda v: _parse_float("alpha", v, lo=0.0),
    "beta": lambda v: _parse_float("beta", v, lo=0.0),
    "tau": lambda v: _parse_float("tau", v, lo=0.0, hi=1.0, lo_open=True, hi_open=True),
    "phi": lambda v: _parse_float("phi", v),
    "gamma": lambda v: _parse_float("gamma", v, lo=0.0, hi=GAMMA_MAX),
    "M": lambda v: _parse_int("M", v, lo=1),
    "seed": lambda v: _parse_int("seed", v, lo=0, hi=2**64 - 1),
    "replications": lambda v: _parse_int("replications", v, lo=1),
    "grid": lambda v: _parse_int("grid", v, lo=2),
    "detector": lambda v: _parse_choice("detector", v, ("onoff", "pnr")),
    "method": lambda v: _parse_choice(
        "method", v, ("bayes-pnr", "bayes-onoff", "fano-inversion", "all")
    ),
    "m_list": lambda v: _parse_m_list("m_list", v),
    "counts": str,
    "out": str,
}

_FLAG_KEYS = tuple(_CONVERTERS)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration for one subcommand invocation."""

    command: str
    a: float | None = None
    b: float | None = None
    alpha: float | None = None
    beta: float | None = None
    tau: float | None = None
    phi: float | None = None
    gamma: float = 0.0
    M: int | None = None
    seed: int | None = None
    replications: int = 50
    grid: int | None = None
    detector: str = "pnr"
    method: str = "all"
    m_list: tuple[int, ...] = DEFAULT_M_LIST
    counts: str | None = None
    out: str | None = None

    def amplitudes(self) -> DetectorPlaneAmplitudes:
        """Detector-plane amplitudes from (a, b) or from (alpha, beta, tau)."""
        direct = self.a is not None or self.b is not None
        physical = self.alpha is not None or self.tau is not None
        if direct and physical:
            raise ConfigError("give either a and b, or alpha, beta and tau, not both")
        if direct:
            if self.a is None or self.b is None:
                raise ConfigError("both a and b are required when giving detector amplitudes")
            return DetectorPlaneAmplitudes(a=self.a, b=self.b)
        if physical:
            if self.alpha is None or self.beta is None or self.tau is None:
                raise ConfigError("alpha, beta and tau are all required for physical parameters")
            return detector_amplitudes(ReceiverParams(beta=self.beta, alpha=self.alpha, tau=self.tau))
        if self.beta is not None and self.command == "discriminate":
            # tau -> 1 proxy with matched LO: a = b = beta
            return DetectorPlaneAmplitudes(a=self.beta, b=self.beta)
        raise ConfigError("amplitudes unspecified: give a and b, or alpha, beta and tau")

    def require(self, *keys: str):
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ConfigError(
                f"subcommand '{self.command}' requires: {', '.join(missing)}"
            )


def _read_config_file(path: str) -> dict[str, str]:
    """Flat key=value file; '#' starts a comment, later keys override earlier ones."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONVERTERS:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        pairs[key] = value
    return pairs


_COMMANDS = ("simulate", "estimate", "fisher", "fano", "discriminate", "sweep")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kennedyrx",
        description="Kennedy-like BPSK receiver simulator with Bayesian phase monitoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    help_text = {
        "simulate": "draw a detection record and write a counts file",
        "estimate": "Bayesian phase estimate from a counts file (both detector kinds)",
        "fisher": "tabulate PNR and on/off Fisher information over a phase grid",
        "fano": "Fano-inversion phase estimate from a counts file",
        "discriminate": "empirical discrimination error vs the analytic formula",
        "sweep": "estimator convergence sweep over sample sizes",
    }
    for command in _COMMANDS:
        sp = sub.add_parser(command, help=help_text[command])
        sp.add_argument("--config", help="flat key=value config file")
        for key in _FLAG_KEYS:
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=key, default=None, metavar=key.upper())
    return parser


def parse_config(argv=None) -> RunConfig:
    """Merge config file and flags (flags win) into a validated RunConfig."""
    ns = _build_parser().parse_args(argv)
    raw = _read_config_file(ns.config) if ns.config else {}
    for key in _FLAG_KEYS:
        value = getattr(ns, key)
        if value is not None:
            raw[key] = value
    fields: dict[str, object] = {"command": ns.command}
    for key, value in raw.items():
        fields[key] = _CONVERTERS[key](value)
    return RunConfig(**fields)


def load_counts(path: str) -> CountRecord:
    """Read a counts file: one nonnegative integer per line, '#' comments allowed."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read counts file {path}: {exc}") from None
    values: list[int] = []
    for lineno, raw in enumerate(lines, 1):
        token = raw.strip()
        if not token or token.startswith("#"):
            continue
        if not (token.isascii() and token.isdigit()):
            raise DataError(f"{path}:{lineno}: not a nonnegative integer count: {token!r}")
        values.append(int(token))
    if not values:
        raise DataError(f"{path}: no counts found")
    return CountRecord(counts=np.asarray(values, dtype=np.int64))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _config_block(cfg: RunConfig, keys: tuple[str, ...]) -> list[str]:
    lines = [f"# kennedyrx {cfg.command}"]
    for key in keys:
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"# {key}={_fmt(value)}")
    return lines


def _write_lines(path: str, lines: list[str]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def _write_csv(path: str, comments: list[str], header: list[str], rows) -> None:
    lines = list(comments)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_lines(path, lines)


def read_table(path: str):
    """Re-parse an emitted CSV: returns (comment key/value dict, header, float rows).

    Non-numeric cells are kept as strings; numeric parsing uses float() so a
    round trip through :func:`_write_csv` is lossless.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    meta: dict[str, str] = {}
    body: list[str] = []
    for line in lines:
        if line.startswith("#"):
            stripped = line[1:].strip()
            if "=" in stripped:
                key, value = stripped.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        if line:
            body.append(line)
    if not body:
        raise DataError(f"{path}: no table found")
    header = body[0].split(",")
    rows = []
    for line in body[1:]:
        cells = []
        for cell in line.split(","):
            try:
                cells.append(float(cell))
            except ValueError:
                cells.append(cell)
        rows.append(cells)
    return meta, header, rows


# --- subcommand implementations -------------------------------------------


def _cmd_simulate(cfg: RunConfig) -> int:
    cfg.require("phi", "M", "seed", "out")
    amps = cfg.amplitudes()
    sim = SimConfig(
        amps=amps, phi_star=cfg.phi, M=cfg.M, seed=cfg.seed, gamma=cfg.gamma,
        detector_kind=cfg.detector, replications=cfg.replications,
    )
    record = sample_counts(sim)
    lines = _config_block(cfg, ("a", "b", "alpha", "beta", "tau", "phi", "gamma", "M", "seed", "detector", "out"))
    lines += [str(int(n)) for n in record.counts]
    _write_lines(cfg.out, lines)
    print(f"wrote {record.sample_size} counts to {cfg.out}")
    return EXIT_OK


def _estimate_summary(tag: str, est) -> str:
    crlb = "nan" if est.crlb is None else _fmt(est.crlb)
    skew = "nan" if est.skewness is None else _fmt(est.skewness)
    return (
        f"{tag}: mean={_fmt(est.mean)} variance={_fmt(est.variance)} "
        f"crlb={crlb} skewness={skew} M={est.sample_size}"
    )


def _cmd_estimate(cfg: RunConfig) -> int:
    cfg.require("counts", "out")
    amps = cfg.amplitudes()
    record = load_counts(cfg.counts)
    grid = PhaseGrid(size=cfg.grid if cfg.grid is not None else 2001)
    m_total = record.sample_size

    post_pnr = posterior(log_likelihood_pnr(record, amps, cfg.gamma, grid), grid)
    est_pnr = bayes_estimate(post_pnr, sample_size=m_total)
    est_pnr = dataclasses.replace(
        est_pnr, crlb=crlb_variance(fisher_pnr(amps, est_pnr.mean, cfg.gamma), m_total)
    )
    post_off = posterior(log_likelihood_onoff(to_onoff(record), amps, cfg.gamma, grid), grid)
    est_off = bayes_estimate(post_off, sample_size=m_total)
    est_off = dataclasses.replace(
        est_off, crlb=crlb_variance(fisher_onoff(amps, est_off.mean, cfg.gamma), m_total)
    )

    comments = _config_block(cfg, ("a", "b", "alpha", "beta", "tau", "gamma", "grid", "counts", "out"))
    comments.append("# " + _estimate_summary("pnr", est_pnr))
    comments.append("# " + _estimate_summary("onoff", est_off))
    rows = zip(grid.points, post_pnr.density, post_off.density)
    _write_csv(cfg.out, comments, ["phi", "density_pnr", "density_onoff"], rows)
    print(_estimate_summary("pnr", est_pnr))
    print(_estimate_summary("onoff", est_off))
    print(f"wrote posterior table to {cfg.out}")
    return EXIT_OK


def _cmd_fisher(cfg: RunConfig) -> int:
    cfg.require("out")
    amps = cfg.amplitudes()
    size = cfg.grid if cfg.grid is not None else 200
    if size < 2:
        raise ConfigError("config key 'grid': must be >= 2")
    phis = np.linspace(0.0, math.pi / 2, size)
    rows = [
        (phi, fisher_pnr(amps, phi, cfg.gamma), fisher_onoff(amps, phi, cfg.gamma))
        for phi in phis
    ]
    comments = _config_block(cfg, ("a", "b", "alpha", "beta", "tau", "gamma", "grid", "out"))
    _write_csv(cfg.out, comments, ["phi", "F_pnr", "F_onoff"], rows)
    print(f"wrote {size} Fisher-information rows to {cfg.out}")
    return EXIT_OK


def _cmd_fano(cfg: RunConfig) -> int:
    cfg.require("counts")
    amps = cfg.amplitudes()
    record = load_counts(cfg.counts)
    est = fano_inversion_estimate(record, amps)
    fano = empirical_fano(record)
    print(
        f"fano: value={_fmt(fano)} mean={_fmt(est.mean)} variance={_fmt(est.variance)} "
        f"clamped={str(est.clamped).lower()} M={est.sample_size}"
    )
    if cfg.out:
        comments = _config_block(cfg, ("a", "b", "alpha", "beta", "tau", "counts", "out"))
        _write_csv(
            cfg.out,
            comments,
            ["M", "fano", "mean", "variance", "clamped"],
            [(est.sample_size, fano, est.mean, est.variance, est.clamped)],
        )
        print(f"wrote estimate to {cfg.out}")
    return EXIT_OK


def _cmd_discriminate(cfg: RunConfig) -> int:
    cfg.require("phi", "M", "seed")
    amps = cfg.amplitudes()
    sim = SimConfig(
        amps=amps, phi_star=cfg.phi, M=cfg.M, seed=cfg.seed, gamma=cfg.gamma,
        detector_kind="onoff", replications=cfg.replications,
    )
    bits = stream(cfg.seed, 1).integers(0, 2, size=cfg.M)
    result = run_discrimination(sim, bits)
    beta_ref = cfg.beta if cfg.beta is not None else amps.b
    analytic = error_probability(beta_ref, cfg.phi)
    print(
        f"discriminate: errors={result.n_errors}/{result.sample_size} "
        f"rate={_fmt(result.error_rate)} se={_fmt(result.std_error)} "
        f"analytic={_fmt(analytic)} (beta={_fmt(beta_ref)})"
    )
    if cfg.out:
        comments = _config_block(cfg, ("a", "b", "alpha", "beta", "tau", "phi", "gamma", "M", "seed", "out"))
        _write_csv(
            cfg.out,
            comments,
            ["M", "n_errors", "error_rate", "std_error", "analytic_error"],
            [(result.sample_size, result.n_errors, result.error_rate, result.std_error, analytic)],
        )
        print(f"wrote discrimination summary to {cfg.out}")
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig) -> int:
    cfg.require("phi", "seed", "out")
    amps = cfg.amplitudes()
    grid = PhaseGrid(size=cfg.grid if cfg.grid is not None else 2001)
    sim = SimConfig(
        amps=amps, phi_star=cfg.phi, M=cfg.m_list[-1], seed=cfg.seed, gamma=cfg.gamma,
        detector_kind=cfg.detector, replications=cfg.replications,
    )
    methods = (
        ("bayes-pnr", "bayes-onoff", "fano-inversion") if cfg.method == "all" else (cfg.method,)
    )
    for method in methods:
        result = run_convergence_sweep(sim, method, cfg.m_list, grid=grid)
        comments = _config_block(
            cfg,
            ("a", "b", "alpha", "beta", "tau", "phi", "gamma", "seed",
             "replications", "grid", "method", "m_list", "out"),
        )
        rows = [
            (r.M, r.mean_ratio, r.sd_of_estimates, r.mean_variance,
             math.nan if r.crlb is None else r.crlb)
            for r in result.rows
        ]
        path = f"{cfg.out}_{method}.csv"
        _write_csv(path, comments, ["M", "mean_ratio", "sd_of_estimates", "mean_variance", "crlb"], rows)
        rep_rows = [
            (m, rep, result.estimates[i, rep], result.variances[i, rep])
            for i, m in enumerate(result.m_list)
            for rep in range(result.estimates.shape[1])
        ]
        rep_path = f"{cfg.out}_{method}_reps.csv"
        _write_csv(rep_path, comments, ["M", "replication", "estimate", "variance"], rep_rows)
        print(f"wrote {method} sweep to {path} and {rep_path}")
    return EXIT_OK


_DISPATCH = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "fisher": _cmd_fisher,
    "fano": _cmd_fano,
    "discriminate": _cmd_discriminate,
    "sweep": _cmd_sweep,
}


def dispatch(cfg: RunConfig) -> int:
    """Run one subcommand; returns the process exit status."""
    return _DISPATCH[cfg.command](cfg)


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        return dispatch(cfg)
    except ConfigError as exc:
        print(f"kennedyrx: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"kennedyrx: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateEvidenceError, UndefinedFanoError, InsufficientSupportError) as exc:
        print(f"kennedyrx: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
