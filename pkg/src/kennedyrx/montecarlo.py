"""Seeded simulation of detection records and estimator benchmarking.

Records are drawn from the exact receiver model: each shot picks one of the
two encoded signs with probability 1/2, optionally a uniform phase-noise
offset, and then a Poisson photon count with the corresponding mean.  Every
experiment derives its generator from (seed, spawn key), so replications are
independent streams that can run in any order (or in parallel) and still
reproduce bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import chi2

from . import estimation, photonstats
from .estimation import CountRecord, OnOffRecord, PhaseGrid
from .photonstats import DetectorPlaneAmplitudes, PhotonPmf
from .receiver import ReceiverParams, detector_amplitudes

__all__ = [
    "SimConfig",
    "SweepRow",
    "SweepResult",
    "DiscriminationResult",
    "GofResult",
    "InsufficientSupportError",
    "stream",
    "sample_counts",
    "to_onoff",
    "run_discrimination",
    "run_convergence_sweep",
    "goodness_of_fit",
    "DEFAULT_M_LIST",
]

# Default sweep sample sizes: two and a half decades, log-spaced.
DEFAULT_M_LIST = (100, 300, 1000, 3000, 10000, 30000)

_MIN_EXPECTED_PER_BIN = 5.0


class InsufficientSupportError(ValueError):
    """Raised when a goodness-of-fit test cannot form at least two bins."""


@dataclass(frozen=True)
class SimConfig:
    """One simulated experiment: who measures what, how often, and from which seed."""

    amps: DetectorPlaneAmplitudes
    phi_star: float
    M: int
    seed: int
    gamma: float = 0.0
    detector_kind: str = "pnr"
    replications: int = 50

    def __post_init__(self) -> None:
        if isinstance(self.amps, ReceiverParams):
            object.__setattr__(self, "amps", detector_amplitudes(self.amps))
        if not isinstance(self.amps, DetectorPlaneAmplitudes):
            raise ValueError("amps must be DetectorPlaneAmplitudes or ReceiverParams")
        if int(self.M) < 1:
            raise ValueError(f"M must be >= 1, got {self.M!r}")
        if int(self.replications) < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.detector_kind not in ("onoff", "pnr"):
            raise ValueError(f"detector_kind must be 'onoff' or 'pnr', got {self.detector_kind!r}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "replications", int(self.replications))
        object.__setattr__(self, "phi_star", float(self.phi_star))
        object.__setattr__(self, "gamma", float(self.gamma))


@dataclass(frozen=True)
class SweepRow:
    """Ensemble statistics of one sample size in a convergence sweep."""

    M: int
    mean_ratio: float
    sd_of_estimates: float
    mean_variance: float
    crlb: float | None


@dataclass(frozen=True)
class SweepResult:
    """Convergence-sweep output: ensemble rows plus per-replication trajectories."""

    method: str
    rows: tuple[SweepRow, ...]
    m_list: tuple[int, ...]
    estimates: np.ndarray  # (len(m_list), replications)
    variances: np.ndarray  # (len(m_list), replications)


class DiscriminationResult(NamedTuple):
    error_rate: float
    std_error: float
    n_errors: int
    sample_size: int


class GofResult(NamedTuple):
    statistic: float
    p_value: float


def stream(seed: int, *key: int) -> np.random.Generator:
    """Reproducible generator for experiment ``seed`` and derived stream ``key``.

    Distinct keys give statistically independent streams (SeedSequence
    spawning), so replications never share random numbers.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _poisson_inversion(rng: np.random.Generator, nu: np.ndarray, cap: int) -> np.ndarray:
    """Poisson draws by CDF inversion with sequential search, one uniform per draw.

    Exact for the moderate means used here (< ~30) and independent of any
    library sampling algorithm, so records are stable across numpy versions.
    """
    u = rng.random(nu.shape)
    term = np.exp(-nu)
    cum = term.copy()
    out = np.zeros(nu.shape, dtype=np.int64)
    active = u >= cum
    k = 0
    while active.any() and k < cap:
        k += 1
        term[active] *= nu[active] / k
        cum[active] += term[active]
        out[active] = k
        active &= u >= cum
    return out


def _draw_counts(
    rng: np.random.Generator,
    amps: DetectorPlaneAmplitudes,
    phi: float,
    gamma: float,
    signs: np.ndarray,
) -> np.ndarray:
    a, b = amps.a, amps.b
    if gamma > 0.0:
        psi = rng.uniform(-0.5 * gamma, 0.5 * gamma, size=signs.size)
        cos_term = np.cos(phi - psi)
    else:
        cos_term = math.cos(phi)
    nu = np.maximum(a * a + b * b + signs * (2.0 * a * b) * cos_term, 0.0)
    return _poisson_inversion(rng, nu, cap=photonstats.default_cutoff(amps) + 64)


def sample_counts(cfg: SimConfig, replication: int = 0) -> CountRecord:
    """Draw one detection record of cfg.M shots for the given replication.

    Per shot: sign +1 or -1 with probability 1/2 (the unknown transmitted
    bit), then a phase-noise offset if gamma > 0, then the Poisson count.
    Identical (cfg, replication) always gives the identical record.
    """
    rng = stream(cfg.seed, cfg.M, replication)
    signs = np.where(rng.random(cfg.M) < 0.5, 1.0, -1.0)
    counts = _draw_counts(rng, cfg.amps, cfg.phi_star, cfg.gamma, signs)
    return CountRecord(counts=counts)


def to_onoff(record: CountRecord) -> OnOffRecord:
    """Coarse-grain a count record to on/off events."""
    m_off = int(np.count_nonzero(record.counts == 0))
    return OnOffRecord(m_on=record.sample_size - m_off, m_off=m_off)


def run_discrimination(cfg: SimConfig, bits: Sequence[int]) -> DiscriminationResult:
    """Simulate shot-by-shot bit discrimination for a known transmitted bit string.

    The per-shot sign is fixed by the bit (1 -> +, 0 -> -) instead of being
    drawn; the decision rule is on/off (count > 0 means bit 1).  Returns the
    empirical error rate with its binomial standard error.
    """
    bits_arr = np.asarray(bits)
    if bits_arr.size != cfg.M:
        raise ValueError(f"got {bits_arr.size} bits for M={cfg.M} shots")
    if bits_arr.size and not np.isin(bits_arr, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    rng = stream(cfg.seed)
    signs = np.where(bits_arr == 1, 1.0, -1.0)
    counts = _draw_counts(rng, cfg.amps, cfg.phi_star, cfg.gamma, signs)
    decided = (counts > 0).astype(bits_arr.dtype)
    n_err = int(np.count_nonzero(decided != bits_arr))
    rate = n_err / cfg.M
    return DiscriminationResult(
        error_rate=rate,
        std_error=math.sqrt(rate * (1.0 - rate) / cfg.M),
        n_errors=n_err,
        sample_size=cfg.M,
    )


_METHODS = ("bayes-pnr", "bayes-onoff", "fano-inversion")


def _estimate_once(
    method: str,
    record: CountRecord,
    amps: DetectorPlaneAmplitudes,
    gamma: float,
    grid: PhaseGrid,
) -> tuple[float, float]:
    if method == "bayes-pnr":
        post = estimation.posterior(
            estimation.log_likelihood_pnr(record, amps, gamma, grid), grid
        )
        est = estimation.bayes_estimate(post, sample_size=record.sample_size)
    elif method == "bayes-onoff":
        post = estimation.posterior(
            estimation.log_likelihood_onoff(to_onoff(record), amps, gamma, grid), grid
        )
        est = estimation.bayes_estimate(post, sample_size=record.sample_size)
    elif method == "fano-inversion":
        est = estimation.fano_inversion_estimate(record, amps)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {_METHODS}")
    return est.mean, est.variance


def _reference_fisher(method: str, amps, phi: float, gamma: float) -> float:
    # the Fano route consumes the full photon statistics, so its data bound
    # is the PNR information
    if method == "bayes-onoff":
        return estimation.fisher_onoff(amps, phi, gamma)
    return estimation.fisher_pnr(amps, phi, gamma)


def run_convergence_sweep(
    cfg: SimConfig,
    method: str,
    m_list: Sequence[int] = DEFAULT_M_LIST,
    grid: PhaseGrid | None = None,
) -> SweepResult:
    """Estimator benchmark over growing sample sizes, cfg.replications runs each.

    Every (M, replication) pair generates an independent record, runs the
    chosen estimator and logs its point estimate and variance; rows aggregate
    the ensemble mean ratio to phi_star, the spread of the estimates, the
    mean reported variance and the CRLB reference 1/(M*F) at phi_star.
    """
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {_METHODS}")
    m_values = [int(m) for m in m_list]
    if not m_values or any(m2 <= m1 for m1, m2 in zip(m_values, m_values[1:])):
        raise ValueError("m_list must be non-empty and strictly increasing")
    if grid is None:
        grid = PhaseGrid()
    if cfg.phi_star == 0.0:
        raise ValueError("phi_star must be nonzero to report estimate/truth ratios")

    fisher_ref = _reference_fisher(method, cfg.amps, cfg.phi_star, cfg.gamma)
    reps = cfg.replications
    estimates = np.empty((len(m_values), reps))
    variances = np.empty((len(m_values), reps))
    rows = []
    for i, m in enumerate(m_values):
        cfg_m = replace(cfg, M=m)
        for rep in range(reps):
            record = sample_counts(cfg_m, replication=rep)
            estimates[i, rep], variances[i, rep] = _estimate_once(
                method, record, cfg.amps, cfg.gamma, grid
            )
        rows.append(
            SweepRow(
                M=m,
                mean_ratio=float(estimates[i].mean() / cfg.phi_star),
                sd_of_estimates=float(estimates[i].std(ddof=1)) if reps > 1 else 0.0,
                mean_variance=float(variances[i].mean()),
                crlb=estimation.crlb_variance(fisher_ref, m),
            )
        )
    return SweepResult(
        method=method,
        rows=tuple(rows),
        m_list=tuple(m_values),
        estimates=estimates,
        variances=variances,
    )


def goodness_of_fit(record: CountRecord, pmf: PhotonPmf) -> GofResult:
    """Pearson chi-square test of a count record against a model pmf.

    Adjacent photon-number bins are pooled left to right until each pooled
    bin expects at least 5 counts; whatever remains (including the analytic
    tail above the cutoff) merges into the last bin.  Needs M >= 50 and at
    least two pooled bins.
    """
    m_total = record.sample_size
    if m_total < 50:
        raise ValueError(f"goodness of fit needs at least 50 samples, got {m_total}")
    observed_full = record.occurrences(minlength=pmf.probs.size)
    expected_full = m_total * pmf.probs

    obs_bins: list[float] = []
    exp_bins: list[float] = []
    acc_o = 0.0
    acc_e = 0.0
    for n in range(pmf.probs.size):
        acc_o += float(observed_full[n]) if n < observed_full.size else 0.0
        acc_e += float(expected_full[n])
        if acc_e >= _MIN_EXPECTED_PER_BIN:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = 0.0
            acc_e = 0.0
    # remainder: mass above the last closed bin, plus the model tail and any
    # observed counts beyond the pmf cutoff
    acc_o += float(observed_full[pmf.probs.size :].sum())
    acc_e += m_total * pmf.tail_bound
    if not obs_bins:
        raise InsufficientSupportError("expected counts cannot fill a single bin")
    obs_bins[-1] += acc_o
    exp_bins[-1] += acc_e
    if len(obs_bins) < 2:
        raise InsufficientSupportError(
            "need at least two pooled bins with expected count >= 5"
        )

    obs = np.asarray(obs_bins)
    exp = np.asarray(exp_bins)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs_bins) - 1
    return GofResult(statistic=stat, p_value=float(chi2.sf(stat, dof)))
