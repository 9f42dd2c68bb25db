"""Command line front end.

Subcommands: gen-data, train, estimate, bench. Every subcommand takes
--config and --seed; artifact-producing ones take --out. Exit status is
0 on success, 1 on usage or configuration errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ..gnn_prior import TrainSettings, init_params, load_checkpoint, save_checkpoint, train
from ..gnn_prior.backprop import UnrollSettings
from ..gnn_prior.graph import MrfHyper
from .bench import bench, rows_to_csv
from .config import ConfigError, ExperimentConfig, load_config
from .dataset import generate_dataset, load_dataset
from .pipeline import run_two_stage


class UsageError(Exception):
    """Bad invocation; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="xlce", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required):
        p.add_argument("--config", required=True, help="experiment config (TOML)")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", required=out_required, help="output artifact path")

    p = sub.add_parser("gen-data", help="generate a training dataset file")
    common(p, out_required=True)
    p.add_argument("--count", type=int, default=None, help="instances (default: [train] count)")

    p = sub.add_parser("train", help="train the learned prior updater")
    common(p, out_required=True)
    p.add_argument("--data", default=None, help="dataset file (default: generate in memory)")
    p.add_argument("--loss-csv", default=None, help="write the loss trace as CSV")

    p = sub.add_parser("estimate", help="run one trial of one estimator arm")
    common(p, out_required=False)
    p.add_argument("--estimator", default=None, help="std-sbl or sbl-gnn (default: first configured)")
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--p-slots", type=int, default=None)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--checkpoint", default=None, help="parameters for the sbl-gnn arm")

    p = sub.add_parser("bench", help="run the full benchmark sweep to CSV")
    common(p, out_required=True)
    p.add_argument("--checkpoint", default=None, help="parameters for the sbl-gnn arm")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def _seed(cfg: ExperimentConfig, args) -> int:
    return cfg.run.master_seed if args.seed is None else args.seed


def _load_params(cfg: ExperimentConfig, args):
    path = getattr(args, "checkpoint", None) or cfg.run.checkpoint
    needs = "sbl-gnn" in cfg.run.estimators or getattr(args, "estimator", None) == "sbl-gnn"
    if not path:
        if needs:
            raise UsageError("the sbl-gnn estimator needs --checkpoint (or [run] checkpoint)")
        return None
    return load_checkpoint(path)


def _cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    count = args.count if args.count is not None else cfg.train.count
    generate_dataset(cfg, count, _seed(cfg, args), args.out)
    print(f"wrote {count} instances to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = _seed(cfg, args)
    if args.data is not None:
        problems = load_dataset(args.data, cfg)
    else:
        from .dataset import draw_instance, instance_to_problem

        print(f"generating {cfg.train.count} training instances in memory")
        problems = [
            instance_to_problem(draw_instance(cfg, seed, i), cfg)
            for i in range(cfg.train.count)
        ]
    update_zeta, zeta_init = cfg.zeta_mode()
    unroll = UnrollSettings(
        layers=cfg.stage1.gnn_layers,
        rounds=cfg.stage1.gnn_rounds,
        hyper=MrfHyper(alpha=cfg.mrf.alpha, beta=cfg.mrf.beta),
        edge_policy=cfg.edge_policy(),
        update_zeta=update_zeta,
        zeta_init=zeta_init,
        dtype=cfg.train_dtype(),
    )
    settings = TrainSettings(
        epochs=cfg.train.epochs,
        batch_size=cfg.train.batch_size,
        learning_rate=cfg.train.learning_rate,
        unroll=unroll,
        shuffle_seed=seed,
    )
    params = init_params(seed=seed)

    def log(epoch, batch, loss):
        if batch == 0:
            print(f"epoch {epoch:3d}  batch {batch:3d}  loss {loss:.6f}", flush=True)

    params, trace = train(problems, params, settings, loss_csv=args.loss_csv, log=log)
    save_checkpoint(args.out, params)
    print(f"final loss {trace[-1][2]:.6f}; checkpoint written to {args.out}")
    return 0


def _cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    params = _load_params(cfg, args)
    _, rows = run_two_stage(
        cfg,
        params=params,
        trial=args.trial,
        snr_db=args.snr_db,
        p_slots=args.p_slots,
        estimator=args.estimator,
        master_seed=_seed(cfg, args),
    )
    for r in rows:
        print(
            f"{r.estimator},{r.snr_db:.10g},{r.p_slots},{r.trial},"
            f"{r.nmse_local_db:.10g},{r.nmse_global_db:.10g},{r.wall_time_ms:.10g}"
        )
    if args.out:
        rows_to_csv(rows, args.out)
    return 0


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    params = _load_params(cfg, args)
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    rows = bench(cfg, master_seed=_seed(cfg, args), params=params, progress=progress)
    rows_to_csv(rows, args.out)
    n_agg = sum(1 for r in rows if r.trial == -1)
    print(f"wrote {len(rows)} rows ({n_agg} aggregates) to {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "estimate": _cmd_estimate,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
