"""Hybrid-combined pilot acquisition and the vectorized recovery problem.

A subarray observes its channel only through an analog combining matrix
``W`` (a few beams per slot). Stacking all slots and subcarriers and
moving to the local angular-delay basis turns estimation into a standard
sparse linear model y = Phi x + n with Phi = F_D^T kron (W F_L^H).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .channel import SystemConfig
from .numerics import derive_seed, hadamard_combiner, sample_cgaussian, unitary_dft


@dataclass
class PilotSetup:
    """Per-subarray combiners plus the shared noise precision."""

    combiners: list[np.ndarray]  # each (q_beams, n_sub)
    q_beams: int
    zeta: float


@dataclass
class SparseProblem:
    """One subarray's vectorized observation model y = phi @ x + n.

    ``x_true`` is the vectorized local angular-delay channel when the
    problem comes from a simulation; ``block`` marks the size of the
    diagonal blocks of phi^H phi when phi has Kronecker structure (the
    angular blocks decouple across delay bins), which solvers may exploit
    without changing any value they produce.
    """

    y: np.ndarray
    phi: np.ndarray
    zeta_true: float
    x_true: np.ndarray | None = None
    block: int | None = None
    _gram: np.ndarray | None = field(default=None, repr=False)
    _proj: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def gram(self) -> np.ndarray:
        """phi^H phi, computed once."""
        if self._gram is None:
            self._gram = self.phi.conj().T @ self.phi
        return self._gram

    @property
    def proj(self) -> np.ndarray:
        """phi^H y, computed once."""
        if self._proj is None:
            self._proj = self.phi.conj().T @ self.y
        return self._proj


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization, the convention of vec(AXB) = (B^T kron A) vec(X)."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(x).reshape(rows, cols, order="F")


def build_combiners(cfg: SystemConfig, seed: int) -> list[np.ndarray]:
    """Independent random Hadamard combiners, one per subarray."""
    return [
        hadamard_combiner(cfg.n_sub, cfg.n_rf, cfg.p_slots, derive_seed(seed, m))
        for m in range(cfg.m_sub)
    ]


def acquire(h_m: np.ndarray, w_m: np.ndarray, zeta: float, seed: int) -> np.ndarray:
    """Received pilot matrix Y = W @ H + N for one subarray.

    Noise entries are i.i.d. circularly symmetric complex Gaussian with
    variance 1/zeta; this is valid because the per-slot combiner blocks
    are semi-unitary, so combining does not color the noise. Pass
    ``zeta=math.inf`` to disable noise entirely.
    """
    h_m = np.asarray(h_m)
    w_m = np.asarray(w_m)
    if w_m.shape[1] != h_m.shape[0]:
        raise ValueError(f"combiner {w_m.shape} does not match channel {h_m.shape}")
    if not zeta > 0:
        raise ValueError(f"noise precision must be positive, got {zeta}")
    signal = w_m @ h_m
    if math.isinf(zeta):
        return signal
    noise = sample_cgaussian(signal.shape[0], signal.shape[1], 1.0 / zeta, seed)
    return signal + noise


def vectorize_problem(
    y_mat: np.ndarray,
    w_m: np.ndarray,
    cfg: SystemConfig,
    zeta: float = 1.0,
    x_true: np.ndarray | None = None,
) -> SparseProblem:
    """Stack the received pilot matrix into the sparse recovery model.

    y = vec(Y), phi = F_D^T kron (W F_L^H) where F_D and F_L are the
    unitary DFTs over subcarriers and subarray antennas, so that
    y = phi @ vec(F_L H F_D^H) + noise.
    """
    y_mat = np.asarray(y_mat)
    w_m = np.asarray(w_m)
    if y_mat.shape != (w_m.shape[0], cfg.k_sc):
        raise ValueError(f"pilot matrix {y_mat.shape} does not match (Q={w_m.shape[0]}, K={cfg.k_sc})")
    if w_m.shape[1] != cfg.n_sub:
        raise ValueError(f"combiner {w_m.shape} does not match n_sub={cfg.n_sub}")
    f_d = unitary_dft(cfg.k_sc)
    f_l = unitary_dft(cfg.n_sub)
    phi = np.kron(f_d.T, w_m @ f_l.conj().T)
    return SparseProblem(
        y=vec(y_mat),
        phi=phi,
        zeta_true=float(zeta),
        x_true=None if x_true is None else np.asarray(x_true),
        block=cfg.n_sub,
    )


def local_angular_truth(h_m: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Vectorized local angular-delay channel x = vec(F_L H_m F_D^H)."""
    f_d = unitary_dft(cfg.k_sc)
    f_l = unitary_dft(cfg.n_sub)
    return vec(f_l @ np.asarray(h_m) @ f_d.conj().T)


def stack_combiner(combiners: list[np.ndarray]) -> np.ndarray:
    """Block-diagonal combiner of the whole array, subarrays in order."""
    return block_diag(*combiners)


def calibrate_noise(h: np.ndarray, w_block: np.ndarray, snr_db: float) -> float:
    """Noise precision that hits a target received SNR.

    The received SNR is the ratio of combined signal energy ||W H||_F^2 to
    expected noise energy; with per-entry noise variance 1/zeta over all
    Q*M*K received entries this gives
    zeta = (Q*M*K / ||W H||_F^2) * 10^(snr_db/10).
    """
    wh = np.asarray(w_block) @ np.asarray(h)
    energy = float(np.linalg.norm(wh) ** 2)
    if energy == 0.0:
        raise ZeroDivisionError("cannot calibrate noise against a zero channel")
    return wh.size / energy * 10.0 ** (snr_db / 10.0)
