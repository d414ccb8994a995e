import math

import numpy as np
import pytest

import helpers
from kennedyrx.estimation import (
    CountRecord,
    DegenerateEvidenceError,
    OnOffRecord,
    PhaseEstimate,
    PhaseGrid,
    UndefinedFanoError,
    bayes_estimate,
    crlb_variance,
    empirical_fano,
    fano_inversion_estimate,
    fisher_onoff,
    fisher_pnr,
    invert_fano,
    log_likelihood_onoff,
    log_likelihood_pnr,
    posterior,
    sequential_update,
    uniform_posterior,
)
from kennedyrx.montecarlo import SimConfig, sample_counts, to_onoff
from kennedyrx.photonstats import DetectorPlaneAmplitudes, fano_factor, photon_pmf

SQRT2 = math.sqrt(2.0)
GRID = PhaseGrid()


def amps(a, b):
    return DetectorPlaneAmplitudes(a=a, b=b)


class TestRecords:
    def test_count_record_occurrences(self):
        rec = CountRecord(counts=np.array([0, 2, 0, 5]))
        occ = rec.occurrences()
        assert occ[0] == 2 and occ[2] == 1 and occ[5] == 1
        assert occ.sum() == rec.sample_size == 4

    def test_count_record_rejects_negative(self):
        with pytest.raises(ValueError):
            CountRecord(counts=np.array([1, -1]))

    def test_onoff_partition(self):
        rec = OnOffRecord(m_on=3, m_off=1)
        assert rec.sample_size == 4


class TestLogLikelihoodPnr:
    def test_empty_record_is_flat(self):
        ll = log_likelihood_pnr(CountRecord(counts=np.array([], dtype=int)), amps(1, 1), 0.0, GRID)
        assert np.all(ll == 0.0)

    def test_single_off_event_closed_form(self):
        ll = log_likelihood_pnr(CountRecord(counts=np.array([0])), amps(1, 1), 0.0, GRID)
        phis = GRID.points
        nu_p = 2.0 + 2.0 * np.cos(phis)
        nu_m = 2.0 - 2.0 * np.cos(phis)
        expected = np.log(0.5 * (np.exp(-nu_p) + np.exp(-nu_m)))
        np.testing.assert_allclose(ll, expected, atol=1e-12)

    def test_argmax_near_truth(self):
        cfg = SimConfig(amps=amps(SQRT2, SQRT2), phi_star=0.3, M=10_000, seed=11)
        record = sample_counts(cfg)
        ll = log_likelihood_pnr(record, cfg.amps, 0.0, GRID)
        assert abs(GRID.points[np.argmax(ll)] - 0.3) < 0.02


class TestLogLikelihoodOnoff:
    def test_empty_record_is_flat(self):
        ll = log_likelihood_onoff(OnOffRecord(m_on=0, m_off=0), amps(1, 1), 0.0, GRID)
        assert np.all(ll == 0.0)

    def test_all_on_record(self):
        m = 17
        ll = log_likelihood_onoff(OnOffRecord(m_on=m, m_off=0), amps(1, 1), 0.0, GRID)
        p0 = photon_pmf(amps(1, 1), 0.0).probs[0]
        # spot-check the first grid point against the closed form
        assert ll[0] == pytest.approx(m * math.log1p(-p0), rel=1e-12)

    def test_coarse_grained_equivalence(self):
        # on/off likelihood == PNR likelihood with all n>0 merged into one bin
        cfg = SimConfig(amps=amps(1.12, 0.79), phi_star=0.25, M=500, seed=3)
        record = sample_counts(cfg)
        onoff = to_onoff(record)
        ll_onoff = log_likelihood_onoff(onoff, cfg.amps, 0.0, GRID)
        n = np.arange(photon_pmf(cfg.amps, 0.0).n_max + 1)
        merged = np.empty(GRID.size)
        for i, phi in enumerate(GRID.points):
            pmf = helpers.mixture_pmf_direct(1.12, 0.79, phi, n)
            merged[i] = onoff.m_off * math.log(pmf[0]) + onoff.m_on * math.log(
                1.0 - pmf[0]
            )
        np.testing.assert_allclose(ll_onoff, merged, atol=1e-10)


class TestPosterior:
    def test_flat_likelihood_gives_uniform_prior(self):
        post = posterior(np.zeros(GRID.size), GRID)
        np.testing.assert_allclose(post.density, 2.0 / math.pi, rtol=1e-12)
        assert post.evidence_log == pytest.approx(math.log(math.pi / 2), rel=1e-12)

    def test_gaussian_loglik_matches_truncated_normal(self):
        mu, sigma = 0.4, 0.01
        ll = -((GRID.points - mu) ** 2) / (2.0 * sigma**2)
        post = posterior(ll, GRID)
        est = bayes_estimate(post)
        mean_ref, var_ref = helpers.truncated_normal_moments(mu, sigma, 0.0, math.pi / 2)
        assert est.mean == pytest.approx(mean_ref, abs=1e-6)
        assert est.variance == pytest.approx(var_ref, abs=1e-6)

    def test_normalization_invariant(self):
        rng = np.random.default_rng(5)
        ll = rng.normal(size=GRID.size)
        post = posterior(ll, GRID)
        assert np.trapezoid(post.density, GRID.points) == pytest.approx(1.0, abs=1e-8)

    def test_pnr_sharper_than_onoff(self):
        cfg = SimConfig(amps=amps(1.12, 0.79), phi_star=0.25, M=4000, seed=21)
        record = sample_counts(cfg)
        post_pnr = posterior(log_likelihood_pnr(record, cfg.amps, 0.0, GRID), GRID)
        post_off = posterior(
            log_likelihood_onoff(to_onoff(record), cfg.amps, 0.0, GRID), GRID
        )
        peak = GRID.points[np.argmax(post_pnr.density)]
        assert abs(peak - 0.25) < 0.08
        assert bayes_estimate(post_pnr).variance < bayes_estimate(post_off).variance

    def test_degenerate_likelihood_raises(self):
        with pytest.raises(DegenerateEvidenceError):
            posterior(np.full(GRID.size, -np.inf), GRID)


class TestBayesEstimate:
    def test_uniform_moments(self):
        est = bayes_estimate(uniform_posterior(GRID))
        assert est.mean == pytest.approx(math.pi / 4, abs=1e-9)
        assert est.variance == pytest.approx(math.pi**2 / 48, rel=1e-6)

    def test_skewness_of_symmetric_posterior_is_zero(self):
        ll = -((GRID.points - math.pi / 4) ** 2) / (2.0 * 0.02**2)
        est = bayes_estimate(posterior(ll, GRID))
        assert est.skewness == pytest.approx(0.0, abs=1e-6)

    def test_coverage_over_replications(self):
        # |mean - phi*| <= 3 sd(posterior) in >= 99% of 100 seeded runs
        hits = 0
        for rep in range(100):
            cfg = SimConfig(amps=amps(SQRT2, SQRT2), phi_star=0.3, M=10_000, seed=100)
            record = sample_counts(cfg, replication=rep)
            post = posterior(log_likelihood_pnr(record, cfg.amps, 0.0, GRID), GRID)
            est = bayes_estimate(post, sample_size=cfg.M)
            if abs(est.mean - 0.3) <= 3.0 * math.sqrt(est.variance):
                hits += 1
        assert hits >= 99

    def test_estimates_stay_in_identifiable_domain(self):
        for seed in range(5):
            cfg = SimConfig(amps=amps(1, 1), phi_star=0.05, M=200, seed=seed)
            record = sample_counts(cfg)
            est = bayes_estimate(posterior(log_likelihood_pnr(record, cfg.amps, 0.0, GRID), GRID))
            assert 0.0 <= est.mean <= math.pi / 2


class TestSequentialUpdate:
    def test_phase_independent_event_leaves_density_unchanged(self):
        # a = 0 makes both component means equal to b^2 at every phase
        flat_amps = amps(0.0, 1.0)
        post = uniform_posterior(GRID)
        updated = sequential_update(post, 1, flat_amps, 0.0, detector_kind="pnr")
        np.testing.assert_allclose(updated.density, post.density, atol=1e-14)

    def test_single_off_event_equals_batch(self):
        post = sequential_update(uniform_posterior(GRID), 0, amps(1, 1), 0.0, detector_kind="onoff")
        batch = posterior(
            log_likelihood_onoff(OnOffRecord(m_on=0, m_off=1), amps(1, 1), 0.0, GRID), GRID
        )
        np.testing.assert_allclose(post.density, batch.density, atol=1e-12)
        assert post.evidence_log == pytest.approx(batch.evidence_log, rel=1e-10)

    @pytest.mark.parametrize("kind", ["pnr", "onoff"])
    def test_streaming_replay_equals_batch(self, kind):
        cfg = SimConfig(amps=amps(1.12, 0.79), phi_star=0.25, M=4000, seed=42)
        record = sample_counts(cfg)
        post = uniform_posterior(GRID)
        for n in record.counts:
            post = sequential_update(post, int(n), cfg.amps, 0.0, detector_kind=kind)
        if kind == "pnr":
            ll = log_likelihood_pnr(record, cfg.amps, 0.0, GRID)
        else:
            ll = log_likelihood_onoff(to_onoff(record), cfg.amps, 0.0, GRID)
        batch = posterior(ll, GRID)
        np.testing.assert_allclose(post.density, batch.density, atol=1e-10)
        assert post.evidence_log == pytest.approx(batch.evidence_log, rel=1e-9)

    def test_impossible_event_raises(self):
        with pytest.raises(DegenerateEvidenceError):
            # vacuum input never yields a photon
            sequential_update(uniform_posterior(GRID), 3, amps(0.0, 0.0), 0.0, detector_kind="pnr")


class TestFisher:
    def test_vanishes_at_domain_endpoints(self):
        for a, b in [(0.5, 0.5), (1, 1), (1.12, 0.79), (SQRT2, SQRT2)]:
            for phi in (0.0, math.pi / 2):
                assert fisher_pnr(amps(a, b), phi) < 1e-9
                assert fisher_onoff(amps(a, b), phi) < 1e-9

    def test_single_interior_maximum_experimental_curve(self):
        phis = np.linspace(0.0, math.pi / 2, 200)
        curve = np.array([fisher_pnr(amps(1.12, 0.79), p) for p in phis])
        peak = int(np.argmax(curve))
        assert 0 < peak < len(phis) - 1
        # strictly rising then falling around the single interior maximum
        assert np.all(np.diff(curve[: peak + 1]) > 0)
        assert np.all(np.diff(curve[peak:]) < 0)

    def test_onoff_closed_form(self):
        a = amps(1, 1)
        phi = 0.7
        p0 = photon_pmf(a, phi).probs[0]
        dp0 = helpers.fd_dphi(lambda p: photon_pmf(a, p).probs, phi)[0]
        expected = dp0**2 / (p0 * (1.0 - p0))
        assert fisher_onoff(a, phi) == pytest.approx(expected, rel=1e-6)

    def test_onoff_never_exceeds_pnr(self):
        rng = np.random.default_rng(99)
        for _ in range(40):
            a, b = rng.uniform(0.3, 2.0, size=2)
            phi = rng.uniform(0.0, math.pi / 2)
            gamma = rng.choice([0.0, math.pi / 4])
            assert fisher_onoff(amps(a, b), phi, gamma) <= fisher_pnr(amps(a, b), phi, gamma) + 1e-12

    @pytest.mark.parametrize("gamma", [0.0, math.pi / 4])
    @pytest.mark.parametrize("pair", [(0.5, 0.5), (1.0, 1.0), (1.12, 0.79), (SQRT2, SQRT2)])
    def test_data_processing_ordering_on_grid(self, pair, gamma):
        a = amps(*pair)
        for phi in np.linspace(0.0, math.pi / 2, 500):
            gap = fisher_onoff(a, phi, gamma) - fisher_pnr(a, phi, gamma)
            assert gap <= 1e-12

    def test_matches_likelihood_curvature(self):
        cfg = SimConfig(amps=amps(SQRT2, SQRT2), phi_star=0.3, M=200_000, seed=8)
        record = sample_counts(cfg)
        h = 1e-3
        grid3 = PhaseGrid(lo=0.3 - h, hi=0.3 + h, size=3)
        ll = log_likelihood_pnr(record, cfg.amps, 0.0, grid3)
        observed_info = -(ll[2] - 2.0 * ll[1] + ll[0]) / h**2 / cfg.M
        assert observed_info == pytest.approx(fisher_pnr(cfg.amps, 0.3), rel=0.05)


class TestCrlb:
    def test_unit_case(self):
        assert crlb_variance(1.0, 1) == 1.0

    def test_scaling(self):
        assert crlb_variance(2.0, 10_000) == pytest.approx(5e-5, rel=1e-12)

    def test_zero_information_signals_unbounded(self):
        assert crlb_variance(0.0, 100) is None

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            crlb_variance(1.0, 0)
        with pytest.raises(ValueError):
            crlb_variance(-1.0, 10)


class TestFanoInversion:
    def test_exact_moment_identity(self):
        for phi_star in (0.2, 0.7, 1.2):
            fano = fano_factor(amps(SQRT2, SQRT2), phi_star)
            phi_hat, clamped = invert_fano(fano, amps(SQRT2, SQRT2))
            assert not clamped
            assert phi_hat == pytest.approx(phi_star, abs=1e-10)

    def test_poisson_boundary_clamps_about_half_the_time(self):
        # phi* = pi/2 statistics are exactly Poissonian: Fano hat straddles 1
        clamped_runs = 0
        reps = 40
        for rep in range(reps):
            cfg = SimConfig(amps=amps(1, 1), phi_star=math.pi / 2, M=2000, seed=77)
            record = sample_counts(cfg, replication=rep)
            est = fano_inversion_estimate(record, cfg.amps)
            assert est.mean > 1.2  # near pi/2
            clamped_runs += est.clamped
        assert 0.25 * reps <= clamped_runs <= 0.75 * reps

    def test_larger_spread_than_bayes(self):
        errs_fano, errs_bayes = [], []
        for rep in range(10):
            cfg = SimConfig(amps=amps(SQRT2, SQRT2), phi_star=0.3, M=10_000, seed=13)
            record = sample_counts(cfg, replication=rep)
            est_f = fano_inversion_estimate(record, cfg.amps)
            post = posterior(log_likelihood_pnr(record, cfg.amps, 0.0, GRID), GRID)
            est_b = bayes_estimate(post)
            errs_fano.append(abs(est_f.mean - 0.3))
            errs_bayes.append(abs(est_b.mean - 0.3))
            assert est_f.variance > est_b.variance
        assert np.mean(errs_fano) > np.mean(errs_bayes)

    def test_jackknife_tracks_sampling_spread(self):
        # jackknife variance should approximate the ensemble variance
        cfg = SimConfig(amps=amps(SQRT2, SQRT2), phi_star=0.4, M=5000, seed=19)
        estimates, jack_vars = [], []
        for rep in range(60):
            record = sample_counts(cfg, replication=rep)
            est = fano_inversion_estimate(record, cfg.amps)
            estimates.append(est.mean)
            jack_vars.append(est.variance)
        ratio = np.mean(jack_vars) / np.var(estimates, ddof=1)
        assert 0.5 < ratio < 2.0

    def test_zero_mean_record_raises(self):
        with pytest.raises(UndefinedFanoError):
            fano_inversion_estimate(CountRecord(counts=np.zeros(10, dtype=int)), amps(1, 1))

    def test_empirical_fano_of_constant_record(self):
        assert empirical_fano(CountRecord(counts=np.full(50, 3))) == 0.0


class TestTypes:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            PhaseGrid(size=1)
        with pytest.raises(ValueError):
            PhaseGrid(lo=1.0, hi=0.5)

    def test_grid_points_are_inclusive_and_uniform(self):
        g = PhaseGrid(size=5)
        np.testing.assert_allclose(g.points, np.linspace(0, math.pi / 2, 5))

    def test_estimate_validation(self):
        with pytest.raises(ValueError):
            PhaseEstimate(mean=0.3, variance=-1.0)
        with pytest.raises(ValueError):
            PhaseEstimate(mean=0.3, variance=0.1, crlb=0.0)
