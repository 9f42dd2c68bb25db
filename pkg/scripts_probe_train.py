"""Dev probe: short training run + eval delta vs StdSBL (not shipped)."""
import sys
import time

import numpy as np

from xlce.gnn_prior import GnnPriorUpdater, TrainSettings, init_params, train
from xlce.gnn_prior.backprop import UnrollSettings, loss_and_estimates, prepare_batch
from xlce.harness.config import load_config
from xlce.harness.dataset import draw_instance, instance_to_problem
from xlce.harness.pipeline import build_scene, stage1_estimates
from xlce.sbl import StdSblUpdater, run_sbl

cfg = load_config("configs/desk.toml")
count = int(sys.argv[1]) if len(sys.argv) > 1 else 256
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 4
lr = float(sys.argv[3]) if len(sys.argv) > 3 else 1e-4

t0 = time.time()
problems = [instance_to_problem(draw_instance(cfg, 555, i), cfg) for i in range(count)]
print(f"dataset {count} in {time.time()-t0:.1f}s", flush=True)

update_zeta, zeta_init = cfg.zeta_mode()
unroll = UnrollSettings(layers=5, rounds=3, edge_policy="block",
                        update_zeta=update_zeta, zeta_init=zeta_init, dtype=np.float32)
params = init_params(seed=1)

prepared_eval = prepare_batch(problems[:128], edge_policy="block")
before, _ = loss_and_estimates(params, prepared_eval, unroll)
print(f"initial eval loss {before:.5f}", flush=True)

settings = TrainSettings(epochs=epochs, batch_size=32, learning_rate=lr, unroll=unroll, shuffle_seed=2)
t0 = time.time()
params, trace = train(problems, params, settings,
                      log=lambda e, b, l: (b == 0) and print(f"  epoch {e} loss {l:.5f}", flush=True))
print(f"trained in {time.time()-t0:.0f}s; last batch loss {trace[-1][2]:.5f}", flush=True)
after, _ = loss_and_estimates(params, prepared_eval, unroll)
print(f"final eval loss {after:.5f} (ratio {after/before:.3f})", flush=True)

# fresh trials at 5 dB: per-subarray NMSE of GNN vs StdSBL
gnn_err, std_err = [], []
for trial in range(40):
    scene = build_scene(cfg, cfg.system_config(), 5.0, 777, trial)
    for prob in scene.problems:
        t = np.linalg.norm(prob.x_true) ** 2
        mu_g = run_sbl(prob, GnnPriorUpdater(params, rounds=3, edge_policy="block"), 5,
                       update_zeta=update_zeta, zeta_init=prob.zeta_true)
        mu_s = run_sbl(prob, StdSblUpdater(), 200, tol=1e-6,
                       update_zeta=update_zeta, zeta_init=prob.zeta_true)
        gnn_err.append(np.linalg.norm(mu_g - prob.x_true) ** 2 / t)
        std_err.append(np.linalg.norm(mu_s - prob.x_true) ** 2 / t)
gnn_err, std_err = np.array(gnn_err), np.array(std_err)
d = gnn_err - std_err
print(f"eval 5dB local: GNN {gnn_err.mean():.4f} vs StdSBL {std_err.mean():.4f}")
print(f"paired diff {d.mean():.4f} sem {d.std()/np.sqrt(len(d)):.4f}")
