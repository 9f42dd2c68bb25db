"""Deterministic complex linear algebra and sampling primitives.

Everything in this module is a pure function of its arguments; random
sampling is driven by an explicit 64-bit seed so that identical seeds
give bit-identical streams on every platform.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, hadamard

SPEED_OF_LIGHT = 2.99792458e8
"""Propagation speed used for every delay/geometry conversion, in m/s."""

HERMITIAN_RTOL = 1e-10
"""Relative asymmetry above which a matrix is rejected as non-Hermitian."""


class NumericalError(ArithmeticError):
    """A linear-algebra routine failed (indefinite or non-Hermitian input)."""


def rng_from_seed(seed: int) -> np.random.Generator:
    """Generator with a fixed bit stream for a given 64-bit seed."""
    return np.random.default_rng(np.uint64(seed))


def derive_seed(master: int, *path: int) -> int:
    """Derive a child seed from a master seed and an integer path.

    Distinct (master, path) tuples give statistically independent streams;
    the derivation is stable across platforms and sessions, which is what
    makes parallel and sequential experiment schedules bit-identical.
    """
    ss = np.random.SeedSequence([int(master)] + [int(p) for p in path])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def unitary_dft(n: int) -> np.ndarray:
    """Unitary DFT matrix F with F[j, k] = exp(-2i*pi*j*k/n) / sqrt(n).

    Satisfies F @ F.conj().T == I, which several transform identities in
    this package rely on for exact cancellation.
    """
    if n < 1:
        raise ValueError(f"DFT size must be a positive integer, got {n}")
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)


def hadamard_rows(n_antennas: int, q: int, seed: int) -> np.ndarray:
    """Distinct Hadamard row indices drawn uniformly without replacement."""
    n = int(n_antennas)
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"Hadamard combiner needs a power-of-two antenna count, got {n}")
    if q > n:
        raise ValueError(f"cannot draw {q} distinct rows from an order-{n} Hadamard matrix")
    return rng_from_seed(seed).permutation(n)[:q]


def combiner_from_rows(n_antennas: int, rows: np.ndarray) -> np.ndarray:
    """Scaled Hadamard rows; every entry is +-1/sqrt(N)."""
    h = hadamard(int(n_antennas)).astype(np.float64)
    return h[np.asarray(rows, dtype=np.intp)] / np.sqrt(n_antennas)


def hadamard_combiner(n_antennas: int, n_rf: int, n_slots: int, seed: int) -> np.ndarray:
    """Random analog combining matrix built from distinct Hadamard rows.

    Returns a (n_rf * n_slots, n_antennas) real matrix whose rows are
    distinct rows of the order-``n_antennas`` Hadamard matrix scaled by
    1/sqrt(n_antennas). Every entry is +-1/sqrt(N) and every slot block of
    ``n_rf`` rows is semi-unitary, so combined noise stays white.
    """
    rows = hadamard_rows(n_antennas, int(n_rf) * int(n_slots), seed)
    return combiner_from_rows(n_antennas, rows)


def sample_cgaussian(rows: int, cols: int, variance: float, seed: int) -> np.ndarray:
    """I.i.d. circularly symmetric complex Gaussian matrix.

    Real and imaginary parts are independent with variance ``variance/2``
    each, so the complex entries have total variance ``variance``.
    """
    if variance < 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    rng = rng_from_seed(seed)
    scale = np.sqrt(variance / 2.0)
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return scale * (re + 1j * im)


def _check_hermitian(a: np.ndarray) -> None:
    asym = np.linalg.norm(a - a.conj().T)
    if asym > HERMITIAN_RTOL * max(np.linalg.norm(a), 1.0):
        raise NumericalError(f"matrix is not Hermitian (asymmetry {asym:.3e})")


def hpd_cholesky(a: np.ndarray):
    """Cholesky factorization of a Hermitian positive definite matrix.

    Returns an opaque factor consumable by :func:`hpd_solve_factored`.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    _check_hermitian(a)
    try:
        return cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc


def hpd_solve_factored(factor, b: np.ndarray) -> np.ndarray:
    """Solve A @ X = B given the factor from :func:`hpd_cholesky`."""
    return cho_solve(factor, b, check_finite=False)


def hpd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A @ X = B for Hermitian positive definite A.

    Raises :class:`NumericalError` when A is detectably non-Hermitian or
    indefinite instead of returning garbage.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"non-conformal shapes {a.shape} and {b.shape}")
    return hpd_solve_factored(hpd_cholesky(a), b)


def hpd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a Hermitian positive definite matrix, symmetrized."""
    a = np.asarray(a)
    inv = hpd_solve(a, np.eye(a.shape[0], dtype=complex))
    # round-trip through the solver leaves ~eps asymmetry; remove it so the
    # result is usable as a covariance without further care
    return 0.5 * (inv + inv.conj().T)
