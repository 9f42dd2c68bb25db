"""Binary training-instance files.

Layout: magic "XLMM", version u32, config digest u64, instance count
u32, then the per-subarray dimensions (n_sub, k_sc, q_beams) as u32.
Each instance stores the SNR, the true noise precision, the subarray
index, the combiner's Hadamard row indices, and the complex payloads
(ground-truth coefficients, then stacked observations) as interleaved
little-endian float64 real/imag pairs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..channel import assemble_channel, draw_paths, subarray_slice
from ..measurement import (
    SparseProblem,
    acquire,
    calibrate_noise,
    local_angular_truth,
    stack_combiner,
    vectorize_problem,
)
from ..numerics import combiner_from_rows, derive_seed, hadamard_rows, rng_from_seed
from .config import ExperimentConfig

DATASET_MAGIC = b"XLMM"
DATASET_VERSION = 1

# seed stream tags so every random draw has its own independent stream
STREAM_CHANNEL = 0
STREAM_COMBINER = 1
STREAM_NOISE = 2
STREAM_SNR = 3


@dataclass
class DatasetInstance:
    """One stored recovery instance plus its generation metadata."""

    snr_db: float
    zeta: float
    subarray: int
    w_rows: np.ndarray  # (q_beams,) uint32 Hadamard row indices
    x_true: np.ndarray  # (n_sub * k_sc,) complex
    y: np.ndarray  # (q_beams * k_sc,) complex


def _write_complex(fh, arr: np.ndarray) -> None:
    inter = np.empty(2 * arr.size)
    inter[0::2] = np.real(arr)
    inter[1::2] = np.imag(arr)
    fh.write(inter.astype("<f8").tobytes())


def _read_complex(fh, count: int) -> np.ndarray:
    inter = np.frombuffer(fh.read(16 * count), dtype="<f8")
    return inter[0::2] + 1j * inter[1::2]


def draw_instance(cfg: ExperimentConfig, master_seed: int, index: int) -> DatasetInstance:
    """Generate instance ``index`` of a dataset deterministically.

    Each instance draws its own channel and combiners, picks the subarray
    round-robin, and calibrates noise to an SNR uniform over the
    configured training range.
    """
    sys_cfg = cfg.system_config()
    snr_rng = rng_from_seed(derive_seed(master_seed, STREAM_SNR, index))
    snr_db = float(snr_rng.uniform(cfg.train.snr_min_db, cfg.train.snr_max_db))
    paths = draw_paths(
        sys_cfg,
        cfg.system.g_paths,
        derive_seed(master_seed, STREAM_CHANNEL, index),
        r_range=(cfg.system.r_min_m, cfg.system.r_max_m),
    )
    chan = assemble_channel(paths, sys_cfg)
    comb_seed = derive_seed(master_seed, STREAM_COMBINER, index)
    w_rows_all = []
    combiners = []
    for m in range(sys_cfg.m_sub):
        rows = hadamard_rows(sys_cfg.n_sub, sys_cfg.q_beams, derive_seed(comb_seed, m))
        w_rows_all.append(rows)
        combiners.append(combiner_from_rows(sys_cfg.n_sub, rows))
    zeta = calibrate_noise(chan.h, stack_combiner(combiners), snr_db)
    m_idx = index % sys_cfg.m_sub
    h_m = subarray_slice(chan, m_idx + 1, sys_cfg)
    y_mat = acquire(h_m, combiners[m_idx], zeta, derive_seed(master_seed, STREAM_NOISE, index))
    return DatasetInstance(
        snr_db=snr_db,
        zeta=zeta,
        subarray=m_idx,
        w_rows=np.asarray(w_rows_all[m_idx], dtype=np.uint32),
        x_true=local_angular_truth(h_m, sys_cfg),
        y=y_mat.reshape(-1, order="F"),
    )


def generate_dataset(cfg: ExperimentConfig, count: int, seed: int, path) -> None:
    """Write ``count`` training instances to ``path``."""
    if count < 1:
        raise ValueError(f"need at least one instance, got {count}")
    sys_cfg = cfg.system_config()
    try:
        with open(path, "wb") as fh:
            fh.write(DATASET_MAGIC)
            fh.write(
                struct.pack(
                    "<IQIIII",
                    DATASET_VERSION,
                    cfg.digest(),
                    count,
                    sys_cfg.n_sub,
                    sys_cfg.k_sc,
                    sys_cfg.q_beams,
                )
            )
            for i in range(count):
                inst = draw_instance(cfg, seed, i)
                fh.write(struct.pack("<ddI", inst.snr_db, inst.zeta, inst.subarray))
                fh.write(inst.w_rows.astype("<u4").tobytes())
                _write_complex(fh, inst.x_true)
                _write_complex(fh, inst.y)
    except OSError as exc:
        raise OSError(f"failed writing dataset to {path}: {exc}") from exc


def read_instances(path) -> tuple[list[DatasetInstance], tuple[int, int, int], int]:
    """Read raw instances; returns (instances, (n_sub, k_sc, q), digest)."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != DATASET_MAGIC:
                raise ValueError(f"{path}: not a dataset file (magic {magic!r})")
            version, digest, count, n_sub, k_sc, q = struct.unpack("<IQIIII", fh.read(28))
            if version != DATASET_VERSION:
                raise ValueError(f"{path}: unsupported dataset version {version}")
            instances = []
            for _ in range(count):
                snr_db, zeta, subarray = struct.unpack("<ddI", fh.read(20))
                w_rows = np.frombuffer(fh.read(4 * q), dtype="<u4").copy()
                x_true = _read_complex(fh, n_sub * k_sc)
                y = _read_complex(fh, q * k_sc)
                instances.append(
                    DatasetInstance(
                        snr_db=snr_db,
                        zeta=zeta,
                        subarray=subarray,
                        w_rows=w_rows,
                        x_true=x_true,
                        y=y,
                    )
                )
    except OSError as exc:
        raise OSError(f"failed reading dataset from {path}: {exc}") from exc
    return instances, (n_sub, k_sc, q), digest


def instance_to_problem(inst: DatasetInstance, cfg: ExperimentConfig) -> SparseProblem:
    """Rebuild the recovery problem of a stored instance."""
    sys_cfg = cfg.system_config()
    w = combiner_from_rows(sys_cfg.n_sub, inst.w_rows)
    y_mat = inst.y.reshape(sys_cfg.q_beams, sys_cfg.k_sc, order="F")
    return vectorize_problem(y_mat, w, sys_cfg, zeta=inst.zeta, x_true=inst.x_true)


def load_dataset(path, cfg: ExperimentConfig) -> list[SparseProblem]:
    """Load a dataset written by :func:`generate_dataset` as problems."""
    instances, dims, _ = read_instances(path)
    sys_cfg = cfg.system_config()
    if dims != (sys_cfg.n_sub, sys_cfg.k_sc, sys_cfg.q_beams):
        raise ValueError(
            f"{path}: dataset dimensions {dims} do not match the config "
            f"({sys_cfg.n_sub}, {sys_cfg.k_sc}, {sys_cfg.q_beams})"
        )
    return [instance_to_problem(inst, cfg) for inst in instances]
