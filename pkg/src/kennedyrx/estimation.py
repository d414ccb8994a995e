"""Grid-based Bayesian inference of the signal/LO relative phase.

The photon statistics are invariant under phi -> -phi and phi -> pi - phi,
so the phase is identifiable only on [0, pi/2]; that interval carries the
uniform prior.  Posteriors live on a uniform grid, log-likelihoods are
accumulated with max-subtraction before exponentiation, and all integrals
use the trapezoid rule.

Estimators share the detection record used for bit discrimination:

* Bayes posterior mean and variance, for photon-number-resolved ("pnr") and
  on/off detection, in batch form or via shot-by-shot streaming updates;
* Fisher informations of both detection models and the Cramer-Rao variance
  reference 1/(M*F);
* a moment-based alternative that inverts the phase dependence of the Fano
  factor, with a leave-one-out jackknife uncertainty.

Posterior values are immutable in spirit: updates return new objects, so
distinct posteriors may be processed in parallel; a single streaming chain
must be advanced by one writer at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from . import photonstats
from .photonstats import DetectorPlaneAmplitudes

__all__ = [
    "PhaseGrid",
    "PhasePosterior",
    "PhaseEstimate",
    "CountRecord",
    "OnOffRecord",
    "DetectorKind",
    "DegenerateEvidenceError",
    "UndefinedFanoError",
    "log_likelihood_pnr",
    "log_likelihood_onoff",
    "posterior",
    "uniform_posterior",
    "bayes_estimate",
    "sequential_update",
    "fisher_pnr",
    "fisher_onoff",
    "crlb_variance",
    "empirical_fano",
    "invert_fano",
    "fano_inversion_estimate",
]

DetectorKind = Literal["onoff", "pnr"]

# Likelihood terms with model probability below this are dropped from Fisher
# sums; they carry no usable information and would divide by ~0.
_FISHER_SUPPORT_EPS = 1e-30


class DegenerateEvidenceError(ValueError):
    """Raised when a likelihood is zero everywhere on the phase grid."""


class UndefinedFanoError(ValueError):
    """Raised when a record's sample mean vanishes and no Fano factor exists."""


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform phase grid over the identifiable domain (default [0, pi/2], 2001 points)."""

    lo: float = 0.0
    hi: float = math.pi / 2
    size: int = 2001

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"grid bounds must satisfy lo < hi, got [{self.lo!r}, {self.hi!r}]")
        if int(self.size) < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.size!r}")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "size", int(self.size))

    @property
    def points(self) -> np.ndarray:
        return _grid_points(self)


@lru_cache(maxsize=16)
def _grid_points(grid: PhaseGrid) -> np.ndarray:
    pts = np.linspace(grid.lo, grid.hi, grid.size)
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True)
class CountRecord:
    """Detection record {n_k}: one nonnegative photon count per shot."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if counts.size and not np.issubdtype(counts.dtype, np.integer):
            raise ValueError("counts must be integers")
        if counts.size and counts.min() < 0:
            raise ValueError("counts must be nonnegative")
        counts = counts.astype(np.int64, copy=True)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def sample_size(self) -> int:
        return int(self.counts.size)

    def occurrences(self, minlength: int = 0) -> np.ndarray:
        """Occurrence counts m_n (the sufficient statistics); sum(m) == M."""
        if self.counts.size == 0:
            return np.zeros(minlength, dtype=np.int64)
        return np.bincount(self.counts, minlength=minlength)


@dataclass(frozen=True)
class OnOffRecord:
    """Coarse-grained record: m_off vacuum shots and m_on bright shots."""

    m_on: int
    m_off: int

    def __post_init__(self) -> None:
        if self.m_on < 0 or self.m_off < 0:
            raise ValueError("event counts must be nonnegative")
        object.__setattr__(self, "m_on", int(self.m_on))
        object.__setattr__(self, "m_off", int(self.m_off))

    @property
    def sample_size(self) -> int:
        return self.m_on + self.m_off


@dataclass(frozen=True)
class PhasePosterior:
    """Discretized posterior density over the phase grid.

    ``log_density`` is the unnormalized log posterior up to an additive
    constant (updates re-center it at zero max); ``density`` is always
    re-derived from it by max-subtracted exponentiation and trapezoid
    normalization.  ``evidence_log`` accumulates the log of the integrated
    likelihood of all data folded in so far, i.e. log(1/N) of the Bayes
    normalization before prior weighting.
    """

    grid: PhaseGrid
    log_density: np.ndarray
    density: np.ndarray
    evidence_log: float

    def __post_init__(self) -> None:
        for name in ("log_density", "density"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.size,):
                raise ValueError(f"{name} must have one entry per grid point")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        total = np.trapezoid(self.density, self.grid.points)
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-8):
            raise ValueError(f"posterior density integrates to {total!r}, not 1")


@dataclass(frozen=True)
class PhaseEstimate:
    """Point estimate of the phase with its uncertainty and CRLB reference.

    ``crlb`` is the Cramer-Rao variance floor 1/(M*F) when available (None in
    degenerate regimes); ``clamped`` marks Fano inversions whose moment ratio
    fell outside the invertible range; ``skewness`` is recorded for posterior
    shape diagnostics.
    """

    mean: float
    variance: float
    crlb: float | None = None
    sample_size: int = 0
    clamped: bool = False
    skewness: float | None = None

    def __post_init__(self) -> None:
        if self.variance < 0:
            raise ValueError(f"variance must be nonnegative, got {self.variance!r}")
        if self.crlb is not None and self.crlb <= 0:
            raise ValueError(f"crlb must be positive when present, got {self.crlb!r}")


@lru_cache(maxsize=8)
def _pmf_table_cached(
    amps: DetectorPlaneAmplitudes, gamma: float, grid: PhaseGrid, n_cols: int
) -> np.ndarray:
    table = photonstats.pmf_table(amps, grid.points, gamma, n_max=n_cols - 1)
    table.setflags(write=False)
    return table


def _n_cols(amps: DetectorPlaneAmplitudes, max_count: int = 0) -> int:
    return max(photonstats.default_cutoff(amps) + 1, int(max_count) + 1)


def log_likelihood_pnr(
    record: CountRecord,
    amps: DetectorPlaneAmplitudes,
    gamma: float,
    grid: PhaseGrid,
) -> np.ndarray:
    """Log-likelihood sum_n m_n ln p_n(a, b, phi, gamma) at every grid point.

    Works from the occurrence counts m_n rather than the raw sample.  Grid
    points where an observed n has zero model probability get -inf, never an
    exception.
    """
    if record.sample_size == 0:
        return np.zeros(grid.size)
    m = record.occurrences(minlength=_n_cols(amps, int(record.counts.max())))
    table = _pmf_table_cached(amps, float(gamma), grid, m.size)
    observed = np.nonzero(m)[0]
    cols = table[:, observed]
    with np.errstate(divide="ignore"):
        ln_p = np.log(cols)
    # keep -inf out of the matmul: zero those terms, restore -inf afterwards
    impossible = (cols == 0.0).any(axis=1)
    if impossible.any():
        ln_p = np.where(cols == 0.0, 0.0, ln_p)
    ll = ln_p @ m[observed].astype(float)
    if impossible.any():
        ll[impossible] = -np.inf
    return ll


def log_likelihood_onoff(
    record: OnOffRecord,
    amps: DetectorPlaneAmplitudes,
    gamma: float,
    grid: PhaseGrid,
) -> np.ndarray:
    """Log-likelihood m_off ln P_off + m_on ln(1 - P_off) with P_off = p_0."""
    ll = np.zeros(grid.size)
    if record.sample_size == 0:
        return ll
    p_off = _pmf_table_cached(amps, float(gamma), grid, _n_cols(amps))[:, 0]
    with np.errstate(divide="ignore"):
        if record.m_off:
            ll = ll + record.m_off * np.log(p_off)
        if record.m_on:
            ll = ll + record.m_on * np.log1p(-p_off)
    return ll


def posterior(loglik, grid: PhaseGrid) -> PhasePosterior:
    """Posterior from a log-likelihood over the grid under the uniform prior.

    Max-subtracted exponentiation followed by trapezoid normalization; the
    constant prior cancels out of the density and is absorbed in the
    evidence convention (see :class:`PhasePosterior`).
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.shape != (grid.size,):
        raise ValueError("log-likelihood must have one entry per grid point")
    if np.isnan(ll).any():
        raise ValueError("log-likelihood contains NaN")
    peak = ll.max()
    if not math.isfinite(peak):
        raise DegenerateEvidenceError("likelihood vanishes at every grid point")
    shifted = ll - peak
    dens, log_norm = _normalize(shifted, grid)
    return PhasePosterior(
        grid=grid, log_density=shifted, density=dens, evidence_log=peak + log_norm
    )


def _normalize(log_density: np.ndarray, grid: PhaseGrid) -> tuple[np.ndarray, float]:
    dens = np.exp(log_density)
    z = np.trapezoid(dens, grid.points)
    if not (math.isfinite(z) and z > 0.0):
        raise DegenerateEvidenceError("posterior normalization is degenerate")
    return dens / z, math.log(z)


def bayes_estimate(
    post: PhasePosterior,
    sample_size: int = 0,
    crlb: float | None = None,
) -> PhaseEstimate:
    """Posterior mean, central variance and skewness by trapezoid quadrature.

    The CRLB reference is supplied by the caller (it depends on the detection
    model and the point where the Fisher information is evaluated).
    """
    pts = post.grid.points
    dens = post.density
    mean = float(np.trapezoid(dens * pts, pts))
    centered = pts - mean
    var = float(np.trapezoid(dens * centered * centered, pts))
    skew = None
    if var > 0.0:
        third = float(np.trapezoid(dens * centered**3, pts))
        skew = third / var**1.5
    return PhaseEstimate(
        mean=mean, variance=var, crlb=crlb, sample_size=sample_size, skewness=skew
    )


def _event_loglik(
    event: int,
    amps: DetectorPlaneAmplitudes,
    gamma: float,
    grid: PhaseGrid,
    detector_kind: DetectorKind,
) -> np.ndarray:
    if event < 0:
        raise ValueError(f"photon count must be nonnegative, got {event!r}")
    if detector_kind == "pnr":
        table = _pmf_table_cached(amps, float(gamma), grid, _n_cols(amps, event))
        with np.errstate(divide="ignore"):
            return np.log(table[:, event])
    if detector_kind == "onoff":
        p_off = _pmf_table_cached(amps, float(gamma), grid, _n_cols(amps))[:, 0]
        with np.errstate(divide="ignore"):
            return np.log(p_off) if event == 0 else np.log1p(-p_off)
    raise ValueError(f"detector_kind must be 'onoff' or 'pnr', got {detector_kind!r}")


def sequential_update(
    post: PhasePosterior,
    event: int,
    amps: DetectorPlaneAmplitudes,
    gamma: float,
    detector_kind: DetectorKind = "pnr",
) -> PhasePosterior:
    """Fold one detection event into a posterior, returning a new posterior.

    Adds the single-event log-likelihood pointwise, re-centers the log
    density at zero max (an additive constant, invisible to the density but
    essential to keep shot-by-shot accumulation at full precision), and
    renormalizes.  Folding a record event by event reproduces the batch
    posterior.
    """
    ll = _event_loglik(event, amps, gamma, post.grid, detector_kind)
    new_log = post.log_density + ll
    peak = new_log.max()
    if not math.isfinite(peak):
        raise DegenerateEvidenceError("event has zero probability at every grid point")
    new_log = new_log - peak
    dens, log_z_new = _normalize(new_log, post.grid)
    # evidence ratio of the accumulated likelihoods; log_density peaks at 0,
    # so both integrals are safe from overflow and the old one from underflow
    log_z_old = math.log(np.trapezoid(np.exp(post.log_density), post.grid.points))
    return PhasePosterior(
        grid=post.grid,
        log_density=new_log,
        density=dens,
        evidence_log=post.evidence_log + peak + log_z_new - log_z_old,
    )


def uniform_posterior(grid: PhaseGrid) -> PhasePosterior:
    """The prior state: a flat posterior before any data."""
    return posterior(np.zeros(grid.size), grid)


def fisher_pnr(amps: DetectorPlaneAmplitudes, phi: float, gamma: float = 0.0) -> float:
    """Fisher information of the photon-number-resolved model,
    F = sum_n (d p_n/d phi)^2 / p_n over the truncated support.

    Vanishes at phi = 0 and pi/2 where the statistics are stationary in phi;
    a zero marks the degenerate (no-information) regime rather than an error.
    """
    p = photonstats.pmf_table(amps, [phi], gamma)[0]
    dp = photonstats.dphi_table(amps, [phi], gamma)[0]
    support = p > _FISHER_SUPPORT_EPS
    return float(np.sum(dp[support] ** 2 / p[support]))


def fisher_onoff(amps: DetectorPlaneAmplitudes, phi: float, gamma: float = 0.0) -> float:
    """Fisher information of the on/off model, (d P_off/d phi)^2 / (P_off P_on).

    Returns 0.0 in degenerate regimes (P_off at 0 or 1, or stationary
    statistics) instead of raising; endpoint queries are legitimate in sweeps.
    """
    p_off = float(photonstats.pmf_table(amps, [phi], gamma, n_max=0)[0, 0])
    if not 0.0 < p_off < 1.0:
        return 0.0
    dp_off = float(photonstats.dphi_table(amps, [phi], gamma, n_max=0)[0, 0])
    return dp_off * dp_off / (p_off * (1.0 - p_off))


def crlb_variance(fisher: float, sample_size: int) -> float | None:
    """Cramer-Rao variance floor 1/(M*F); None when F = 0 (unbounded variance)."""
    if sample_size < 1:
        raise ValueError(f"sample_size must be >= 1, got {sample_size!r}")
    if fisher < 0:
        raise ValueError(f"Fisher information must be nonnegative, got {fisher!r}")
    if fisher == 0.0:
        return None
    return 1.0 / (sample_size * fisher)


def empirical_fano(record: CountRecord) -> float:
    """Sample Fano factor: unbiased sample variance over sample mean."""
    x = record.counts.astype(float)
    if x.size < 2:
        raise ValueError(f"Fano factor needs at least 2 shots, got {x.size}")
    mean = x.mean()
    if mean == 0.0:
        raise UndefinedFanoError("sample mean is zero; Fano factor undefined")
    return float(x.var(ddof=1) / mean)


def invert_fano(fano: float, amps: DetectorPlaneAmplitudes) -> tuple[float, bool]:
    """Phase whose Fano factor equals ``fano``: cos^2(phi) = (F-1)(a^2+b^2)/(4a^2b^2).

    The ratio is clamped to [0, 1] before the arccos (sampling noise pushes
    it outside near the edges); the flag reports whether clamping fired.
    """
    if amps.a * amps.b <= 0.0:
        raise ValueError("Fano inversion needs a > 0 and b > 0")
    ratio = (fano - 1.0) * amps.mean_photons / (4.0 * amps.a**2 * amps.b**2)
    clamped = not 0.0 <= ratio <= 1.0
    ratio = min(max(ratio, 0.0), 1.0)
    return math.acos(math.sqrt(ratio)), clamped


def fano_inversion_estimate(
    record: CountRecord, amps: DetectorPlaneAmplitudes
) -> PhaseEstimate:
    """Phase estimate from the empirical Fano factor of a count record.

    The point estimate inverts variance/mean (unbiased sample variance); the
    uncertainty is a leave-one-out jackknife over the shots, which needs at
    least 3 of them.  Records whose sample mean vanishes carry no Fano
    information and raise :class:`UndefinedFanoError`.
    """
    x = record.counts.astype(float)
    m = x.size
    if m < 3:
        raise ValueError(f"jackknife uncertainty needs at least 3 shots, got {m}")
    phi_hat, clamped = invert_fano(empirical_fano(record), amps)
    mean = x.mean()

    # leave-one-out moments from centered sums (numerically stable)
    y = x - mean
    q = float(np.dot(y, y))
    mean_loo = mean - y / (m - 1)
    var_loo = np.maximum(q - y * y * (m / (m - 1)), 0.0) / (m - 2)
    ratio = np.where(mean_loo > 0.0, var_loo / np.maximum(mean_loo, 1e-300), 1.0)
    ratio = np.clip((ratio - 1.0) * amps.mean_photons / (4.0 * amps.a**2 * amps.b**2), 0.0, 1.0)
    phi_loo = np.arccos(np.sqrt(ratio))
    jack_var = float((m - 1) / m * np.sum((phi_loo - phi_loo.mean()) ** 2))

    return PhaseEstimate(
        mean=phi_hat,
        variance=jack_var,
        crlb=None,
        sample_size=m,
        clamped=clamped,
    )
