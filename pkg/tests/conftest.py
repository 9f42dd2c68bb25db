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
    vectorize_problem,
)
from xlce.measurement import SparseProblem
from xlce.numerics import derive_seed


@pytest.fixture
def desk_cfg() -> SystemConfig:
    """Reduced-scale system used throughout the suite."""
    return SystemConfig(n_t=64, m_sub=4, k_sc=8, f_c=30e9, f_s=1.6e9, n_rf=1, p_slots=8)


def make_problem(
    cfg: SystemConfig,
    seed: int,
    snr_db: float = 5.0,
    subarray: int = 1,
    g_paths: int = 4,
    noiseless: bool = False,
) -> SparseProblem:
    """One simulated per-subarray recovery problem."""
    paths = draw_paths(cfg, g_paths, derive_seed(seed, 0))
    chan = assemble_channel(paths, cfg)
    combiners = build_combiners(cfg, derive_seed(seed, 1))
    zeta = calibrate_noise(chan.h, stack_combiner(combiners), snr_db)
    h_m = subarray_slice(chan, subarray, cfg)
    w = combiners[subarray - 1]
    y = acquire(h_m, w, math.inf if noiseless else zeta, derive_seed(seed, 2))
    return vectorize_problem(y, w, cfg, zeta=zeta, x_true=local_angular_truth(h_m, cfg))


def random_dense_problem(rng: np.random.Generator, m: int, n: int, sparsity: float = 0.3,
                         noise: float = 0.01) -> SparseProblem:
    """Unstructured random instance (no Kronecker block structure)."""
    phi = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2 * m)
    x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    x *= rng.random(n) < sparsity
    w = np.sqrt(noise / 2) * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    return SparseProblem(y=phi @ x + w, phi=phi, zeta_true=1.0 / noise, x_true=x, block=None)
