"""Tests for the misspecification diagnostics: Gaussian KL (KLDN),
posterior predictive checks, bootstrap variance checks, inflation-prior
departure, and the coverage harness."""

import numpy as np
import pytest

from synlik.diagnostics import (
    BootstrapVarianceReport,
    CoverageConfig,
    bootstrap_variance_check,
    coverage_experiment,
    coverage_rows_to_csv,
    gamma_departure,
    kldn,
    kldn_report,
    posterior_predictive_check,
)
from synlik.errors import DomainError, ParameterDomainError
from synlik.models import ma1_model
from synlik.posterior import Chain, bsl_rwmh
from synlik.rng import make_rng
from synlik.summaries import BootstrapSpec

MODEL = ma1_model()


def flat_prior(theta):
    return 0.0


class TestKldn:
    def test_identical_distributions_zero(self):
        assert kldn(0.3, 1.2, 0.3, 1.2) == pytest.approx(0.0, abs=1e-15)

    def test_unit_mean_shift_oracle(self):
        # Equal unit scales, means one apart: KL = 1/2.
        assert kldn(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.5)

    def test_scale_doubling_oracle(self):
        # N(0,1) against N(0,4): KL = ln 2 + 1/8 - 1/2.
        assert kldn(0.0, 1.0, 0.0, 2.0) == pytest.approx(np.log(2.0) + 0.125 - 0.5)

    def test_combined_oracle(self):
        # N(1, 0.5^2) vs N(0, 1): ln(1/0.5) + (0.25 + 1)/2 - 0.5 = 0.80685...
        assert kldn(1.0, 0.5, 0.0, 1.0) == pytest.approx(0.8181471805599453)

    def test_nonnegative(self):
        rng = make_rng(1)
        for _ in range(200):
            m1, m2 = rng.normal(size=2)
            s1, s2 = np.exp(rng.normal(size=2) * 0.5)
            assert kldn(m1, s1, m2, s2) >= 0.0

    def test_affine_invariance(self):
        # KL between Gaussians is invariant to a common affine map.
        base = kldn(0.2, 0.7, -0.1, 1.3)
        a, b = 3.0, -5.0
        assert kldn(a * 0.2 + b, a * 0.7, a * (-0.1) + b, a * 1.3) == pytest.approx(
            base, rel=1e-12
        )

    def test_domain(self):
        with pytest.raises(DomainError):
            kldn(0.0, 0.0, 0.0, 1.0)
        with pytest.raises(DomainError):
            kldn(0.0, 1.0, 0.0, -1.0)

    def test_report_matches_moments(self):
        rng = make_rng(2)
        a = rng.normal(0.0, 1.0, size=(5000, 2))
        b = rng.normal(1.0, 2.0, size=(5000, 2))
        rep = kldn_report(a, b)
        assert rep.values.shape == (2,)
        for j in range(2):
            expect = kldn(rep.mu_S[j], rep.sd_S[j], rep.mu_A[j], rep.sd_A[j])
            assert rep.values[j] == pytest.approx(expect)
        # moments near the generating values
        assert np.allclose(rep.mu_A, 1.0, atol=0.1)
        assert np.allclose(rep.sd_A, 2.0, atol=0.1)


class TestPpc:
    def test_calibrated_when_model_generates_data(self):
        # Summaries simulated from the fitted parameter are typical of the
        # predictive: tail probabilities stay away from the extremes.
        theta0 = 0.4
        rng = make_rng(3)
        y = MODEL.simulate(theta0, 1, 500, rng)
        s_obs = np.atleast_2d(MODEL.summarize(y))[0]
        chain = np.full((200, 1), theta0)  # degenerate posterior at truth
        rep = posterior_predictive_check(
            chain, MODEL, MODEL.summarize, s_obs, n_rep=400, seed=5, n=500
        )
        assert rep.predictive.shape == (400, 2)
        assert np.all(rep.tail_probs > 0.01)
        assert np.all(rep.tail_probs <= 0.5)

    def test_incompatible_observation_flagged(self):
        # An observed lag-1 autocovariance far outside the model range has
        # a tiny predictive tail probability.
        chain = np.full((100, 1), 0.3)
        s_obs = np.array([1.09, 5.0])
        rep = posterior_predictive_check(
            chain, MODEL, MODEL.summarize, s_obs, n_rep=300, seed=6, n=500
        )
        assert rep.tail_probs[1] == pytest.approx(1.0 / 302.0)

    def test_tail_prob_continuity_correction(self):
        # With all predictive values above obs, the corrected tail is
        # 1/(n_rep + 2), never zero.
        chain = np.full((50, 1), 0.0)
        rep = posterior_predictive_check(
            chain, MODEL, MODEL.summarize, np.array([-10.0, 0.0]),
            n_rep=98, seed=7, n=100,
        )
        assert rep.tail_probs[0] == pytest.approx(1.0 / 100.0)

    def test_deterministic(self):
        chain = np.full((50, 1), 0.2)
        kw = dict(n_rep=50, seed=9, n=200)
        a = posterior_predictive_check(
            chain, MODEL, MODEL.summarize, np.array([1.0, 0.2]), **kw
        )
        b = posterior_predictive_check(
            chain, MODEL, MODEL.summarize, np.array([1.0, 0.2]), **kw
        )
        assert np.array_equal(a.predictive, b.predictive)

    def test_empty_chain_rejected(self):
        with pytest.raises(DomainError):
            posterior_predictive_check(
                np.empty((0, 1)), MODEL, MODEL.summarize, np.array([1.0, 0.2]),
                n_rep=10, seed=0, n=100,
            )

    def test_csv_layout(self, tmp_path):
        chain = np.full((20, 1), 0.2)
        rep = posterior_predictive_check(
            chain, MODEL, MODEL.summarize, np.array([1.0, 0.2]),
            n_rep=5, seed=1, n=100,
        )
        path = tmp_path / "ppc.csv"
        rep.to_csv(path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "rep,S1,S2"
        assert len(rows) == 6


class TestBootstrapVarianceCheck:
    def test_compatible_data_not_flagged(self):
        rng = make_rng(11)
        y = MODEL.simulate(0.4, 1, 600, rng)[0]
        chain = np.full((100, 1), 0.4)
        rep = bootstrap_variance_check(
            y, MODEL.summarize, chain, MODEL,
            BootstrapSpec(block_len=10, n_boot=300, seed=2),
            n_rep=120, seed=3,
        )
        assert isinstance(rep, BootstrapVarianceReport)
        assert rep.observed_var.shape == (2,)
        assert not np.any(rep.flagged)

    def test_variance_mismatch_flagged(self):
        # Observed data with far heavier variability than anything the
        # fitted parameter can produce: observed bootstrap variance falls
        # in the extreme predictive tail.
        rng = make_rng(12)
        y = 10.0 * rng.standard_normal(600) * np.linspace(0.2, 3.0, 600)
        chain = np.full((100, 1), 0.1)
        rep = bootstrap_variance_check(
            y, MODEL.summarize, chain, MODEL,
            BootstrapSpec(block_len=10, n_boot=300, seed=2),
            n_rep=120, seed=3,
        )
        assert rep.flagged[0]

    def test_deterministic(self):
        rng = make_rng(13)
        y = MODEL.simulate(0.2, 1, 300, rng)[0]
        chain = np.full((50, 1), 0.2)
        kw = dict(n_rep=40, seed=4)
        spec = BootstrapSpec(block_len=10, n_boot=100, seed=1)
        a = bootstrap_variance_check(y, MODEL.summarize, chain, MODEL, spec, **kw)
        b = bootstrap_variance_check(y, MODEL.summarize, chain, MODEL, spec, **kw)
        assert np.array_equal(a.predictive_var, b.predictive_var)
        assert np.array_equal(a.tail_probs, b.tail_probs)


def _chain_with_gammas(gammas):
    m = gammas.shape[0]
    return Chain(
        draws=np.zeros((m, 1)),
        loglik_trace=np.zeros(m),
        accepted=np.ones(m, dtype=bool),
        seed=0,
        proposal_scale=np.array([0.1]),
        gammas=gammas,
    )


class TestGammaDeparture:
    def test_prior_samples_small_departure(self):
        rng = make_rng(21)
        gam = rng.exponential(0.5, size=(20_000, 3))
        out = gamma_departure(_chain_with_gammas(gam), prior_mean=0.5)
        assert len(out) == 3
        assert all(stat < 0.02 for _, stat in out)

    def test_shifted_coordinate_ranked_first(self):
        rng = make_rng(22)
        gam = rng.exponential(0.5, size=(5000, 3))
        gam[:, 1] += 2.0
        out = gamma_departure(_chain_with_gammas(gam), prior_mean=0.5)
        assert out[0][0] == 1
        assert out[0][1] > 0.5
        assert out[0][1] > 3.0 * out[1][1]

    def test_sorted_descending(self):
        rng = make_rng(23)
        gam = rng.exponential(0.5, size=(2000, 4))
        gam[:, 2] *= 3.0
        out = gamma_departure(_chain_with_gammas(gam))
        stats = [s for _, s in out]
        assert stats == sorted(stats, reverse=True)

    def test_requires_gamma_chain(self):
        ch = Chain(
            draws=np.zeros((10, 1)),
            loglik_trace=np.zeros(10),
            accepted=np.ones(10, dtype=bool),
            seed=0,
            proposal_scale=np.array([0.1]),
        )
        with pytest.raises(DomainError):
            gamma_departure(ch)

    def test_prior_mean_domain(self):
        with pytest.raises(ParameterDomainError):
            gamma_departure(_chain_with_gammas(np.ones((10, 1))), prior_mean=0.0)


class TestCoverageExperiment:
    CFG = CoverageConfig(
        n_values=(100,),
        n_reps=4,
        n_grid=501,
        n_draws=1000,
        bootstrap=BootstrapSpec(block_len=10, n_boot=100, seed=0),
        master_seed=7,
    )

    def test_row_layout_and_reproducibility(self):
        rows1 = coverage_experiment(self.CFG)
        rows2 = coverage_experiment(self.CFG)
        assert rows1 == rows2
        assert len(rows1) == 2
        methods = {r["method"] for r in rows1}
        assert methods == {"naive", "adjusted"}
        for r in rows1:
            assert r["n"] == 100
            assert 0.0 <= r["cov"] <= 1.0
            assert r["var"] > 0.0

    def test_adjusted_variance_below_naive(self):
        # Under the incompatible volatility DGP the sandwich target is far
        # tighter than the naive fixed-covariance posterior, so the
        # adjustment shrinks the draws.
        rows = coverage_experiment(self.CFG)
        by = {r["method"]: r for r in rows}
        assert by["adjusted"]["var"] < by["naive"]["var"]

    def test_csv_roundtrip(self, tmp_path):
        rows = coverage_experiment(self.CFG)
        path = tmp_path / "coverage.csv"
        coverage_rows_to_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "method,n,mean_x1000,var,cov"
        assert len(lines) == 3
