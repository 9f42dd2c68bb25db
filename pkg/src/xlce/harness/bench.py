"""Benchmark sweeps: SNR x pilot slots x estimator x refinement.

Every cell of the sweep is run for the configured number of trials with
seeds derived from (master seed, trial), so the whole benchmark is a
pure function of (config, seed) and the emitted CSV is byte-identical
across runs. Wall-clock timing is off by default for exactly that
reason; [run] measure_time = true fills the timing column instead of
zeros. Aggregate rows (trial = -1) report the dB of the trial-mean
linear NMSE per arm.
"""

from __future__ import annotations

import csv

import numpy as np

from ..gnn_prior.params import GnnParams
from .config import ExperimentConfig
from .pipeline import ResultRow, build_scene, run_arm_on_scene, run_centralized

CSV_HEADER = ["estimator", "snr_db", "p_slots", "trial", "nmse_local_db", "nmse_global_db", "wall_time_ms"]


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def rows_to_csv(rows: list[ResultRow], path) -> None:
    """Write rows with a stable float format (deterministic bytes)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.estimator,
                    _fmt(r.snr_db),
                    str(r.p_slots),
                    str(r.trial),
                    _fmt(r.nmse_local_db),
                    _fmt(r.nmse_global_db),
                    _fmt(r.wall_time_ms),
                ]
            )


def aggregate_rows(rows: list[ResultRow]) -> list[ResultRow]:
    """Per-cell means over trials, encoded as trial = -1 rows.

    NMSE columns aggregate as the dB of the mean linear ratio; the time
    column is a plain mean.
    """
    cells: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        cells.setdefault((r.estimator, r.snr_db, r.p_slots), []).append(r)
    out = []
    for (estimator, snr_db, p_slots), group in cells.items():
        lin_local = np.mean([10 ** (g.nmse_local_db / 10.0) for g in group])
        lin_global = np.mean([10 ** (g.nmse_global_db / 10.0) for g in group])
        out.append(
            ResultRow(
                estimator=estimator,
                snr_db=snr_db,
                p_slots=p_slots,
                trial=-1,
                nmse_local_db=float(10.0 * np.log10(lin_local)),
                nmse_global_db=float(10.0 * np.log10(lin_global)),
                wall_time_ms=float(np.mean([g.wall_time_ms for g in group])),
            )
        )
    return out


def bench(
    cfg: ExperimentConfig,
    master_seed: int | None = None,
    params: GnnParams | None = None,
    progress=None,
) -> list[ResultRow]:
    """Run the full sweep; returns per-trial rows plus aggregates.

    A failing cell is recorded as a row with NMSE columns set to NaN and
    the run continues; determinism of the remaining rows is unaffected.
    """
    master_seed = cfg.run.master_seed if master_seed is None else master_seed
    measure_time = cfg.run.measure_time
    rows: list[ResultRow] = []
    for p_slots in cfg.p_slots_sweep():
        sys_cfg = cfg.system_config(p_slots=p_slots)
        for snr_db in cfg.sweep.snr_db:
            for trial in range(cfg.run.trials):
                scene = build_scene(cfg, sys_cfg, snr_db, master_seed, trial)
                for estimator in cfg.run.estimators:
                    try:
                        _, arm_rows = run_arm_on_scene(
                            scene, cfg, estimator, params, trial, measure_time
                        )
                        rows.extend(arm_rows)
                    except Exception as exc:  # record and continue
                        rows.append(
                            ResultRow(estimator, snr_db, p_slots, trial, np.nan, np.nan, 0.0)
                        )
                        if progress is not None:
                            progress(f"{estimator} snr={snr_db} p={p_slots} trial={trial}: {exc}")
                if cfg.run.include_centralized:
                    try:
                        rows.append(
                            run_centralized(
                                cfg, trial, snr_db, p_slots, master_seed, measure_time, scene=scene
                            )
                        )
                    except Exception as exc:
                        rows.append(
                            ResultRow("centralized", snr_db, p_slots, trial, np.nan, np.nan, 0.0)
                        )
                        if progress is not None:
                            progress(f"centralized snr={snr_db} p={p_slots} trial={trial}: {exc}")
                if progress is not None:
                    progress(f"p={p_slots} snr={snr_db} trial={trial} done")
    rows.extend(aggregate_rows(rows))
    return rows
