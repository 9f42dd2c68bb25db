import math

import numpy as np
import pytest

from xlce.channel import SystemConfig, assemble_channel, draw_paths, subarray_slice
from xlce.measurement import (
    acquire,
    build_combiners,
    calibrate_noise,
    local_angular_truth,
    stack_combiner,
    vec,
    vectorize_problem,
)
from xlce.numerics import unitary_dft

from conftest import make_problem


def _chan_and_combiners(cfg, seed=0):
    chan = assemble_channel(draw_paths(cfg, 4, seed=seed), cfg)
    return chan, build_combiners(cfg, seed=seed + 1)


class TestAcquire:
    def test_noiseless(self, desk_cfg):
        chan, ws = _chan_and_combiners(desk_cfg)
        h1 = subarray_slice(chan, 1, desk_cfg)
        np.testing.assert_array_equal(acquire(h1, ws[0], math.inf, seed=0), ws[0] @ h1)

    def test_determinism(self, desk_cfg):
        chan, ws = _chan_and_combiners(desk_cfg)
        h1 = subarray_slice(chan, 1, desk_cfg)
        a = acquire(h1, ws[0], 3.0, seed=9)
        b = acquire(h1, ws[0], 3.0, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_noise_variance(self, desk_cfg):
        # identity combiner isolates the additive noise; empirical
        # per-entry variance must track 1/zeta
        chan, _ = _chan_and_combiners(desk_cfg)
        h1 = subarray_slice(chan, 1, desk_cfg)
        w_id = np.eye(desk_cfg.n_sub)
        zeta = 4.0
        draws = np.stack(
            [acquire(h1, w_id, zeta, seed=s) - h1 for s in range(400)]
        )
        var = np.mean(np.abs(draws) ** 2)
        n_samples = draws.size
        se = (1 / zeta) / np.sqrt(n_samples)
        assert abs(var - 1 / zeta) < 3 * se

    def test_rejects_mismatched_shapes(self, desk_cfg):
        chan, ws = _chan_and_combiners(desk_cfg)
        with pytest.raises(ValueError):
            acquire(chan.h, ws[0], 1.0, seed=0)


class TestVectorizeProblem:
    def test_noiseless_roundtrip(self, desk_cfg):
        prob = make_problem(desk_cfg, seed=5, noiseless=True)
        assert np.linalg.norm(prob.y - prob.phi @ prob.x_true) < 1e-10

    def test_identity_combiner_roundtrip(self, desk_cfg):
        chan, _ = _chan_and_combiners(desk_cfg, seed=2)
        h1 = subarray_slice(chan, 1, desk_cfg)
        w_id = np.eye(desk_cfg.n_sub)
        y = acquire(h1, w_id, math.inf, seed=0)
        prob = vectorize_problem(y, w_id, desk_cfg, zeta=1.0)
        f_l = unitary_dft(desk_cfg.n_sub)
        f_d = unitary_dft(desk_cfg.k_sc)
        x = vec(f_l @ h1 @ f_d.conj().T)
        assert np.linalg.norm(prob.y - prob.phi @ x) < 1e-10

    def test_single_subcarrier_reduces_to_spatial(self):
        cfg = SystemConfig(n_t=16, m_sub=2, k_sc=1, f_c=30e9, f_s=1.6e9, n_rf=1, p_slots=4)
        chan, ws = _chan_and_combiners(cfg, seed=3)
        h1 = subarray_slice(chan, 1, cfg)
        y = acquire(h1, ws[0], math.inf, seed=0)
        prob = vectorize_problem(y, ws[0], cfg, zeta=1.0)
        f_l = unitary_dft(cfg.n_sub)
        np.testing.assert_allclose(prob.phi, ws[0] @ f_l.conj().T, atol=1e-14)

    def test_kronecker_oracle(self):
        cfg = SystemConfig(n_t=4, m_sub=2, k_sc=2, f_c=30e9, f_s=1.6e9, n_rf=1, p_slots=2)
        chan, ws = _chan_and_combiners(cfg, seed=4)
        h1 = subarray_slice(chan, 1, cfg)
        y = acquire(h1, ws[0], math.inf, seed=0)
        prob = vectorize_problem(y, ws[0], cfg, zeta=1.0)
        f_d = unitary_dft(cfg.k_sc)
        a = ws[0] @ unitary_dft(cfg.n_sub).conj().T
        q, n = a.shape
        # brute-force Kronecker assembly, entry by entry
        expected = np.zeros((cfg.k_sc * q, cfg.k_sc * n), dtype=complex)
        for i in range(cfg.k_sc):
            for j in range(cfg.k_sc):
                expected[i * q : (i + 1) * q, j * n : (j + 1) * n] = f_d.T[i, j] * a
        np.testing.assert_allclose(prob.phi, expected, atol=1e-14)

    def test_gram_is_block_diagonal(self, desk_cfg):
        prob = make_problem(desk_cfg, seed=6)
        gram = prob.gram
        nb = prob.block
        off = gram.copy()
        for lo in range(0, prob.n, nb):
            off[lo : lo + nb, lo : lo + nb] = 0
        assert np.abs(off).max() < 1e-12 * np.abs(gram).max()


class TestCalibrateNoise:
    def test_unit_energy_gives_unit_precision(self, desk_cfg):
        # scale the channel so the combined energy equals the received
        # entry count, which pins zeta to exactly 1 at 0 dB
        chan, ws = _chan_and_combiners(desk_cfg, seed=7)
        w_block = stack_combiner(ws)
        wh = w_block @ chan.h
        h_scaled = chan.h * np.sqrt(wh.size / np.linalg.norm(wh) ** 2)
        assert calibrate_noise(h_scaled, w_block, 0.0) == pytest.approx(1.0, rel=1e-12)

    def test_ten_db_scales_tenfold(self, desk_cfg):
        chan, ws = _chan_and_combiners(desk_cfg, seed=8)
        w_block = stack_combiner(ws)
        z0 = calibrate_noise(chan.h, w_block, 5.0)
        z1 = calibrate_noise(chan.h, w_block, 15.0)
        assert z1 / z0 == pytest.approx(10.0, rel=1e-12)

    def test_empirical_snr(self, desk_cfg):
        chan, ws = _chan_and_combiners(desk_cfg, seed=9)
        w_block = stack_combiner(ws)
        target = 5.0
        zeta = calibrate_noise(chan.h, w_block, target)
        signal = np.linalg.norm(w_block @ chan.h) ** 2
        noise_energy = []
        for s in range(500):
            n = np.empty((w_block.shape[0], desk_cfg.k_sc), dtype=complex)
            rng = np.random.default_rng(s)
            n = np.sqrt(1 / (2 * zeta)) * (
                rng.standard_normal(n.shape) + 1j * rng.standard_normal(n.shape)
            )
            noise_energy.append(np.linalg.norm(n) ** 2)
        snr_emp = 10 * np.log10(signal / np.mean(noise_energy))
        assert abs(snr_emp - target) < 0.2

    def test_rejects_zero_channel(self, desk_cfg):
        _, ws = _chan_and_combiners(desk_cfg)
        with pytest.raises(ZeroDivisionError):
            calibrate_noise(np.zeros((desk_cfg.n_t, desk_cfg.k_sc)), stack_combiner(ws), 0.0)


class TestNoiseEnergyScaling:
    def test_expected_noise_energy(self, desk_cfg):
        # E ||N||_F^2 = Q K / zeta per subarray, within 3 standard errors
        chan, ws = _chan_and_combiners(desk_cfg, seed=10)
        h1 = subarray_slice(chan, 1, desk_cfg)
        zeta = 2.5
        q, k = desk_cfg.q_beams, desk_cfg.k_sc
        energies = [
            np.linalg.norm(acquire(h1, ws[0], zeta, seed=s) - ws[0] @ h1) ** 2
            for s in range(500)
        ]
        expected = q * k / zeta
        se = expected / np.sqrt(q * k) / np.sqrt(len(energies))
        assert abs(np.mean(energies) - expected) < 3 * se
