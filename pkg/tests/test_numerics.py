import numpy as np
import pytest

from xlce.numerics import (
    NumericalError,
    derive_seed,
    hadamard_combiner,
    hpd_inverse,
    hpd_solve,
    sample_cgaussian,
    unitary_dft,
)


class TestUnitaryDft:
    def test_one_point(self):
        np.testing.assert_allclose(unitary_dft(1), [[1.0]])

    def test_two_point(self):
        expected = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        np.testing.assert_allclose(unitary_dft(2), expected, atol=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64, 128, 256])
    def test_unitarity(self, n):
        f = unitary_dft(n)
        assert np.abs(f @ f.conj().T - np.eye(n)).max() < 1e-12

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            unitary_dft(0)


class TestHadamardCombiner:
    def test_order_two_rows(self):
        w = hadamard_combiner(2, 1, 2, seed=9)
        expected = {(1, 1), (1, -1)}
        rows = {tuple(np.round(r * np.sqrt(2)).astype(int)) for r in w}
        assert rows == expected

    def test_entry_values(self):
        w = hadamard_combiner(16, 1, 8, seed=1)
        assert np.all(np.isin(w, [1 / 4.0, -1 / 4.0]))

    def test_semi_unitary(self):
        w = hadamard_combiner(16, 1, 8, seed=5)
        # distinct Hadamard rows are orthogonal, checked by direct product
        np.testing.assert_allclose(w @ w.conj().T, np.eye(8), atol=1e-12)

    def test_per_slot_blocks_semi_unitary(self):
        n_rf, slots = 2, 4
        w = hadamard_combiner(16, n_rf, slots, seed=5)
        for p in range(slots):
            block = w[p * n_rf : (p + 1) * n_rf]
            np.testing.assert_allclose(block @ block.conj().T, np.eye(n_rf), atol=1e-12)

    def test_unit_norm_orthogonal_rows(self):
        for seed in range(20):
            w = hadamard_combiner(32, 1, 12, seed=seed)
            gram = w @ w.T
            np.testing.assert_allclose(gram, np.eye(12), atol=1e-12)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            hadamard_combiner(12, 1, 4, seed=0)

    def test_rejects_too_many_rows(self):
        with pytest.raises(ValueError):
            hadamard_combiner(8, 2, 5, seed=0)


class TestSampleCgaussian:
    def test_zero_variance(self):
        np.testing.assert_array_equal(sample_cgaussian(4, 3, 0.0, seed=2), np.zeros((4, 3)))

    def test_determinism(self):
        a = sample_cgaussian(5, 7, 1.3, seed=42)
        b = sample_cgaussian(5, 7, 1.3, seed=42)
        np.testing.assert_array_equal(a, b)

    def test_mean_square(self):
        # |z|^2 is exponential with mean 2 and variance 4, so the standard
        # error of the empirical mean over 1e5 samples is 2/sqrt(1e5)
        z = sample_cgaussian(100_000, 1, 2.0, seed=7)
        ms = np.mean(np.abs(z) ** 2)
        assert abs(ms - 2.0) < 3 * 2.0 / np.sqrt(100_000)

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            sample_cgaussian(2, 2, -1.0, seed=0)


class TestHpdSolve:
    def test_identity(self):
        b = np.arange(6.0).reshape(3, 2) + 0j
        np.testing.assert_allclose(hpd_solve(np.eye(3, dtype=complex), b), b)

    def test_scaled_identity(self):
        b = np.arange(6.0).reshape(3, 2) + 1j
        np.testing.assert_allclose(hpd_solve(2 * np.eye(3, dtype=complex), b), b / 2)

    def test_random_residual(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        a = m.conj().T @ m + np.eye(8)
        b = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
        x = hpd_solve(a, b)
        assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) < 1e-10

    def test_recovers_solution(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
            a = m.conj().T @ m + np.eye(6)
            x0 = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
            x = hpd_solve(a, a @ x0)
            assert np.linalg.norm(x - x0) / np.linalg.norm(x0) < 1e-9

    def test_rejects_non_hermitian(self):
        a = np.array([[2.0, 1.0], [0.0, 2.0]], dtype=complex)
        with pytest.raises(NumericalError):
            hpd_solve(a, np.eye(2, dtype=complex))

    def test_rejects_indefinite(self):
        a = np.diag([1.0, -1.0]).astype(complex)
        with pytest.raises(NumericalError):
            hpd_solve(a, np.eye(2, dtype=complex))

    def test_inverse_is_hermitian(self):
        rng = np.random.default_rng(4)
        m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        a = m.conj().T @ m + np.eye(5)
        inv = hpd_inverse(a)
        np.testing.assert_allclose(inv, inv.conj().T)
        np.testing.assert_allclose(a @ inv, np.eye(5), atol=1e-10)


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)

    def test_distinct_paths(self):
        seeds = {derive_seed(7, a, b) for a in range(10) for b in range(10)}
        assert len(seeds) == 100

    def test_distinct_masters(self):
        assert derive_seed(1, 0) != derive_seed(2, 0)
