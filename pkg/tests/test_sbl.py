import numpy as np
import pytest

from xlce.measurement import SparseProblem
from xlce.sbl import (
    GAMMA_BOUNDS,
    FrozenPriorUpdater,
    PosteriorState,
    PriorState,
    StdSblUpdater,
    e_step,
    estimate_std_sbl,
    m_step_std,
    run_sbl,
    update_noise,
)

from conftest import make_problem, random_dense_problem


def _oracle_posterior(prob, gamma, zeta):
    """Independently coded dense Bayesian-regression formula."""
    v = zeta * prob.phi.conj().T @ prob.phi + np.diag(gamma.astype(complex))
    sigma = np.linalg.inv(v)
    mu = zeta * sigma @ prob.phi.conj().T @ prob.y
    return mu, sigma


class TestEStep:
    def test_identity_design(self):
        y = np.array([1.0 + 1j, -2.0])
        prob = SparseProblem(y=y, phi=np.eye(2, dtype=complex), zeta_true=1.0)
        post = e_step(prob, PriorState(gamma=np.ones(2), zeta=1.0))
        np.testing.assert_allclose(post.sigma, np.eye(2) / 2)
        np.testing.assert_allclose(post.mu, y / 2)

    def test_dominant_prior_suppresses_mean(self):
        rng = np.random.default_rng(0)
        prob = random_dense_problem(rng, 6, 4)
        post = e_step(prob, PriorState(gamma=np.full(4, 1e12), zeta=1.0))
        assert np.linalg.norm(post.mu) <= 1e-9 * np.linalg.norm(prob.y)

    def test_matches_oracle_dense(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            prob = random_dense_problem(rng, 8, 4)
            gamma = rng.uniform(0.1, 10.0, 4)
            zeta = rng.uniform(0.5, 50.0)
            post = e_step(prob, PriorState(gamma=gamma, zeta=zeta))
            mu, sigma = _oracle_posterior(prob, gamma, zeta)
            assert np.linalg.norm(post.mu - mu) / np.linalg.norm(mu) < 1e-10
            assert np.linalg.norm(post.sigma - sigma) / np.linalg.norm(sigma) < 1e-10

    def test_block_path_matches_oracle(self, desk_cfg):
        prob = make_problem(desk_cfg, seed=3)
        rng = np.random.default_rng(2)
        gamma = rng.uniform(0.1, 10.0, prob.n)
        zeta = 3.0
        post = e_step(prob, PriorState(gamma=gamma, zeta=zeta))
        mu, sigma = _oracle_posterior(prob, gamma, zeta)
        assert np.linalg.norm(post.mu - mu) / np.linalg.norm(mu) < 1e-10
        assert np.linalg.norm(post.sigma - sigma) / np.linalg.norm(sigma) < 1e-9

    def test_posterior_is_hermitian_pd(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            prob = random_dense_problem(rng, 6, 5)
            post = e_step(prob, PriorState(gamma=rng.uniform(0.5, 2, 5), zeta=2.0))
            np.testing.assert_allclose(post.sigma, post.sigma.conj().T, atol=1e-12)
            assert np.linalg.eigvalsh(post.sigma).min() > 0
            assert np.abs(post.v @ post.sigma - np.eye(5)).max() < 1e-8

    def test_rejects_bad_prior(self):
        rng = np.random.default_rng(4)
        prob = random_dense_problem(rng, 4, 3)
        with pytest.raises(ValueError):
            e_step(prob, PriorState(gamma=np.zeros(3), zeta=1.0))
        with pytest.raises(ValueError):
            e_step(prob, PriorState(gamma=np.ones(3), zeta=0.0))


class TestMStepStd:
    def test_unit_values(self):
        post = PosteriorState(
            mu=np.array([1.0 + 0j]), sigma=np.array([[1.0 + 0j]]), v=np.array([[1.0 + 0j]])
        )
        assert m_step_std(post)[0] == pytest.approx(0.5)

    def test_degenerate_clamps_to_max(self):
        post = PosteriorState(
            mu=np.array([0.0 + 0j]), sigma=np.array([[0.0 + 0j]]), v=np.array([[1.0 + 0j]])
        )
        assert m_step_std(post)[0] == GAMMA_BOUNDS[1]

    def test_elementwise_oracle(self):
        rng = np.random.default_rng(5)
        n = 6
        mu = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        diag = rng.uniform(0.1, 2.0, n)
        sigma = np.diag(diag).astype(complex)
        post = PosteriorState(mu=mu, sigma=sigma, v=np.linalg.inv(sigma))
        gamma = m_step_std(post)
        for i in range(n):
            expected = min(max(1.0 / (abs(mu[i]) ** 2 + diag[i]), GAMMA_BOUNDS[0]), GAMMA_BOUNDS[1])
            assert gamma[i] == pytest.approx(expected, rel=1e-12)


class TestUpdateNoise:
    def test_exact_fit_unit_spread(self):
        n = 5
        mu = np.arange(1.0, n + 1) + 0j
        prob = SparseProblem(y=mu.copy(), phi=np.eye(n, dtype=complex), zeta_true=1.0)
        post = PosteriorState(mu=mu, sigma=np.eye(n, dtype=complex), v=np.eye(n, dtype=complex))
        # zero residual and tr(phi sigma phi^H) = n = m gives exactly 1
        assert update_noise(post, prob) == pytest.approx(1.0)

    def test_residual_scaling(self):
        n = 4
        tiny = 1e-9
        phi = np.eye(n, dtype=complex)
        post = lambda mu: PosteriorState(
            mu=mu, sigma=tiny * np.eye(n, dtype=complex), v=np.eye(n, dtype=complex) / tiny
        )
        y = np.ones(n, dtype=complex)
        z1 = update_noise(post(np.zeros(n, dtype=complex)), SparseProblem(y=y, phi=phi, zeta_true=1.0))
        z2 = update_noise(post(-y), SparseProblem(y=y, phi=phi, zeta_true=1.0))
        # doubling the residual amplitude quadruples the energy
        assert z1 / z2 == pytest.approx(4.0, rel=1e-6)

    def test_formula_oracle(self):
        rng = np.random.default_rng(6)
        prob = random_dense_problem(rng, 7, 5)
        post = e_step(prob, PriorState(gamma=rng.uniform(0.5, 2, 5), zeta=2.0))
        resid = np.linalg.norm(prob.y - prob.phi @ post.mu) ** 2
        spread = np.trace(prob.phi @ post.sigma @ prob.phi.conj().T).real
        assert update_noise(post, prob) == pytest.approx(prob.m / (resid + spread), rel=1e-10)

    def test_noiseless_estimate_exceeds_truth(self):
        # exact recovery drives the residual toward zero, so the noise
        # precision estimate overshoots the value used in simulation
        from xlce.channel import SystemConfig

        cfg = SystemConfig(n_t=32, m_sub=2, k_sc=4, f_c=30e9, f_s=1.6e9, n_rf=1, p_slots=16)
        prob = make_problem(cfg, seed=10, noiseless=True)
        prior = PriorState(gamma=np.ones(prob.n), zeta=1.0)
        post = e_step(prob, prior)
        for _ in range(100):
            prior.gamma = m_step_std(post)
            prior.zeta = update_noise(post, prob)
            post = e_step(prob, prior)
        assert prior.zeta > prob.zeta_true


class TestRunSbl:
    def test_frozen_updater_single_round_is_one_e_step(self):
        rng = np.random.default_rng(7)
        prob = random_dense_problem(rng, 6, 4)
        mu_run = run_sbl(prob, FrozenPriorUpdater(), 1, update_zeta=False)
        post = e_step(prob, PriorState(gamma=np.ones(4), zeta=1.0))
        np.testing.assert_allclose(mu_run, post.mu, atol=1e-14)

    def test_invertible_noiseless_recovery(self):
        from xlce.channel import SystemConfig

        cfg = SystemConfig(n_t=32, m_sub=2, k_sc=4, f_c=30e9, f_s=1.6e9, n_rf=1, p_slots=16)
        prob = make_problem(cfg, seed=11, noiseless=True)  # q_beams = n_sub: square system
        # noiseless operation holds the noise precision at a large value;
        # re-estimating it from scratch approaches the same answer only
        # logarithmically on a square system
        mu = run_sbl(prob, StdSblUpdater(), 50, update_zeta=False, zeta_init=1e8)
        nmse = 10 * np.log10(
            np.linalg.norm(mu - prob.x_true) ** 2 / np.linalg.norm(prob.x_true) ** 2
        )
        assert nmse < -40.0

    def test_beats_fixed_ridge_on_compressive_draws(self, desk_cfg):
        # trial-mean NMSE of the adaptive prior (run at the calibrated
        # noise precision) must improve on the gamma-frozen ridge baseline
        deltas = []
        for seed in range(200):
            prob = make_problem(desk_cfg, seed=1000 + seed, snr_db=5.0, subarray=1 + seed % 4)
            mu_sbl = run_sbl(
                prob, StdSblUpdater(), 200, tol=1e-6, update_zeta=False, zeta_init=prob.zeta_true
            )
            mu_ridge = run_sbl(prob, FrozenPriorUpdater(), 1, update_zeta=False, zeta_init=1.0)
            e_sbl = np.linalg.norm(mu_sbl - prob.x_true) ** 2
            e_ridge = np.linalg.norm(mu_ridge - prob.x_true) ** 2
            deltas.append((e_sbl - e_ridge) / np.linalg.norm(prob.x_true) ** 2)
        assert np.mean(deltas) < 0.0

    def test_gamma_clamp_never_violated(self):
        rng = np.random.default_rng(8)
        prob = random_dense_problem(rng, 8, 6, noise=1e-6)

        seen = []

        class Recorder:
            def begin(self, prob):
                pass

            def update(self, post, prior):
                g = m_step_std(post)
                seen.append(g.copy())
                return g

        run_sbl(prob, Recorder(), 30)
        for g in seen:
            assert np.all(g >= GAMMA_BOUNDS[0]) and np.all(g <= GAMMA_BOUNDS[1])

    def test_frozen_gamma_equals_ridge_formula(self):
        rng = np.random.default_rng(9)
        for n in (4, 12, 32):
            prob = random_dense_problem(rng, n + 2, n)
            mu = run_sbl(prob, FrozenPriorUpdater(), 3, update_zeta=False)
            v = prob.phi.conj().T @ prob.phi + np.eye(n)
            expected = np.linalg.solve(v, prob.phi.conj().T @ prob.y)
            np.testing.assert_allclose(mu, expected, atol=1e-10)

    def test_rejects_zero_iterations(self):
        rng = np.random.default_rng(10)
        prob = random_dense_problem(rng, 4, 3)
        with pytest.raises(ValueError):
            run_sbl(prob, StdSblUpdater(), 0)
