import numpy as np
import pytest
from scipy.special import expit

from mpple.data import Dataset, SubjectRecord, TermGrammar, design_matrix
from mpple.exceptions import DataError, SeparationError, SingularMatrixError
from mpple.missingness import (MissingnessFit, _loglik, _score_info, fit_cause_probability,
                               influence_omega, pi_gradient, predict_pi)
from mpple.simulation import ScenarioConfig, generate_dataset

from conftest import random_dataset


def _counts_dataset(n1, n2, extra_censored=3):
    n = n1 + n2 + extra_censored
    cause = [1] * n1 + [2] * n2 + [0] * extra_censored
    event = [1] * (n1 + n2) + [0] * extra_censored
    time = np.linspace(0.1, 1.0, n)
    return Dataset(time, event, np.ones(n, dtype=int), cause, np.zeros((n, 1)))


def _fixed_fit(gamma, specs=("1",), k=2, covariate_names=()):
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    g = TermGrammar.parse(list(specs), covariate_names)
    dim = gamma.size
    return MissingnessFit(gamma, g, k, np.eye(dim), np.zeros((1, dim)), 0.0, True, 0, 0)


class TestFit:
    def test_balanced_intercept(self):
        fit = fit_cause_probability(_counts_dataset(10, 10), TermGrammar.parse(["1"]))
        assert fit.gamma_hat == pytest.approx([0.0], abs=1e-12)

    def test_intercept_is_empirical_logit(self):
        fit = fit_cause_probability(_counts_dataset(15, 5), TermGrammar.parse(["1"]))
        assert fit.gamma_hat[0] == pytest.approx(np.log(3), abs=1e-10)
        assert fit.converged

    def test_scenario1_implied_logit(self):
        # P(cause 1 | T, Z) = expit(beta2 + beta2 Z2 + beta1 Z1 - nu T) exactly
        ds, true_cause, _ = generate_dataset(ScenarioConfig(n=50_000, seed=5), 0,
                                             return_truth=True)
        full = Dataset(ds.time, ds.event, np.ones(ds.n, dtype=int), true_cause,
                       ds.covariates, k=2, covariate_names=ds.covariate_names, tau=ds.tau)
        fit = fit_cause_probability(full, TermGrammar.for_dataset(["1", "t", "z1", "z2"], full))
        truth = np.array([0.5, -0.2, -0.5, 0.5])
        assert np.all(np.abs(fit.gamma_hat - truth) < 3.5 * fit.se)

    def test_loglik_monotone(self):
        ds = random_dataset(n=200, p=2, k=3, seed=4)
        trace = []
        fit_cause_probability(ds, TermGrammar.for_dataset(["1", "t", "z1", "z2"], ds), trace=trace)
        assert len(trace) > 2
        assert np.all(np.diff(trace) >= -1e-12)

    def test_converged_score_and_symmetric_info(self):
        ds = random_dataset(n=200, p=2, k=3, seed=8)
        g = TermGrammar.for_dataset(["1", "t", "z1"], ds)
        fit = fit_cause_probability(ds, g)
        W = design_matrix(g, ds, ds.complete_case)
        Y = np.eye(3)[ds.cause[ds.complete_case] - 1]
        score, info, _ = _score_info(fit.gamma, W, Y)
        assert np.max(np.abs(score)) < 1e-8
        np.testing.assert_allclose(fit.fisher_info, fit.fisher_info.T)
        assert np.all(np.linalg.eigvalsh(fit.fisher_info) > 0)

    def test_no_complete_case_for_cause(self):
        ds = Dataset([1, 2, 3], [1, 1, 1], [1, 1, 0], [1, 1, 0], np.zeros((3, 1)), k=2)
        with pytest.raises(DataError, match="cause 2"):
            fit_cause_probability(ds, TermGrammar.parse(["1"]))

    def test_rank_deficient_design(self):
        ds = random_dataset(n=60, p=1, seed=1)
        g = TermGrammar.parse(["1", "z1", "z1"], ("z1",))
        with pytest.raises(SingularMatrixError):
            fit_cause_probability(ds, g)

    def test_separation(self):
        # cause determined by the sign of z1
        n = 40
        z = np.linspace(-1, 1, n)
        cause = np.where(z > 0, 1, 2)
        ds = Dataset(np.linspace(0.1, 1, n), np.ones(n, int), np.ones(n, int), cause, z[:, None])
        with pytest.raises(SeparationError):
            fit_cause_probability(ds, TermGrammar.parse(["1", "z1"], ("z1",)))


class TestDerivatives:
    @pytest.mark.parametrize("k", [2, 3])
    def test_score_and_information_match_finite_differences(self, k):
        rng = np.random.default_rng(k)
        W = np.column_stack([np.ones(15), rng.normal(size=(15, 2))])
        y = rng.integers(0, k, size=15)
        Y = np.eye(k)[y]
        gamma = rng.normal(scale=0.5, size=(k - 1, 3))
        score, info, _ = _score_info(gamma, W, Y)
        h = 1e-6
        fd_score = np.empty(gamma.size)
        fd_info = np.empty((gamma.size, gamma.size))
        for a in range(gamma.size):
            e = np.zeros(gamma.size)
            e[a] = h
            e = e.reshape(gamma.shape)
            fd_score[a] = (_loglik(gamma + e, W, y) - _loglik(gamma - e, W, y)) / (2 * h)
            fd_info[:, a] = -(_score_info(gamma + e, W, Y)[0] - _score_info(gamma - e, W, Y)[0]) / (2 * h)
        np.testing.assert_allclose(score, fd_score, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(info, fd_info, rtol=1e-6, atol=1e-8)

    def test_gradient_at_zero(self):
        fit = _fixed_fit([[0.0, 0.0]], ("1", "t"))
        r = SubjectRecord(2.0, 1, 1, 1, ())
        np.testing.assert_allclose(pi_gradient(fit, r, 1), [0.25, 0.5])
        np.testing.assert_allclose(pi_gradient(fit, r, 2), [-0.25, -0.5])

    def test_binary_gradient_formula(self):
        fit = _fixed_fit([[0.3, -0.7]], ("1", "t"))
        r = SubjectRecord(1.5, 1, 0, None, ())
        p = expit(0.3 - 0.7 * 1.5)
        np.testing.assert_allclose(pi_gradient(fit, r, 1), p * (1 - p) * np.array([1, 1.5]))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        gamma = rng.normal(size=(2, 3))
        r = SubjectRecord(0.7, 1, 0, None, (0.4, -1.2))
        for j in (1, 2, 3):
            grad = pi_gradient(_fixed_fit(gamma, ("1", "t", "z1"), 3, ("z1", "z2")), r, j)
            fd = np.empty(gamma.size)
            for a in range(gamma.size):
                e = np.zeros(gamma.size)
                e[a] = 1e-6
                up = predict_pi(_fixed_fit(gamma + e.reshape(2, 3), ("1", "t", "z1"), 3,
                                           ("z1", "z2")), r)[j - 1]
                dn = predict_pi(_fixed_fit(gamma - e.reshape(2, 3), ("1", "t", "z1"), 3,
                                           ("z1", "z2")), r)[j - 1]
                fd[a] = (up - dn) / 2e-6
            np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-10)


class TestPredict:
    def test_zero_gamma_uniform(self):
        r = SubjectRecord(1.0, 1, 0, None, ())
        assert predict_pi(_fixed_fit([[0.0]]), r) == pytest.approx([0.5, 0.5])
        assert predict_pi(_fixed_fit([[0.0], [0.0]], k=3), r) == pytest.approx([1 / 3] * 3)

    def test_logit_identity(self):
        r = SubjectRecord(1.0, 1, 0, None, ())
        assert predict_pi(_fixed_fit([[np.log(3)]]), r) == pytest.approx([0.75, 0.25])

    def test_random_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            fit = _fixed_fit(rng.normal(scale=3, size=(3, 2)), ("1", "t"), 4)
            p = predict_pi(fit, SubjectRecord(rng.uniform(0.1, 3), 1, 0, None, ()))
            assert abs(p.sum() - 1) < 1e-14
            assert np.all((p > 0) & (p < 1))

    def test_censored_record_rejected(self):
        with pytest.raises(DataError):
            predict_pi(_fixed_fit([[0.0]]), SubjectRecord(1.0, 0, 1, None, ()))


class TestOmega:
    def test_sum_zero_and_censored_rows(self):
        ds = random_dataset(n=120, p=2, seed=2)
        fit = fit_cause_probability(ds, TermGrammar.for_dataset(["1", "t", "z1"], ds))
        omega = influence_omega(fit, ds)
        assert np.max(np.abs(omega.sum(axis=0))) < 1e-8 * ds.n
        assert np.all(omega[~ds.complete_case] == 0)

    def test_omega_second_moment_matches_sampling_sd(self):
        # n^-1 sum omega omega' estimates n Var(gamma_hat); compare with refits
        reps, n = 500, 400
        g = None
        est, ase = [], []
        for r in range(reps):
            ds = generate_dataset(ScenarioConfig(n=n, seed=77), r)
            g = g or TermGrammar.for_dataset(["1", "t", "z1", "z2"], ds)
            fit = fit_cause_probability(ds, g)
            est.append(fit.gamma_hat)
            ase.append(np.sqrt(np.mean(fit.omega ** 2, axis=0) / n))
        ratio = np.mean(ase, axis=0) / np.std(est, axis=0, ddof=1)
        assert np.all((ratio > 0.85) & (ratio < 1.15)), ratio
