import csv

import numpy as np
import pytest

from xlce.gnn_prior import TrainSettings, gradients, init_params, train
from xlce.gnn_prior.backprop import UnrollSettings, loss_and_estimates, prepare_batch
from xlce.gnn_prior.params import GnnDims
from xlce.gnn_prior.training import Adam, TrainingError
from xlce.channel import SystemConfig

from conftest import make_problem
from test_gnn_gradients import TINY, _tiny_params, _tiny_problem


class TestAdam:
    def test_descends_a_quadratic(self):
        params = init_params(TINY, seed=0)
        target = {k: v + 0.5 for k, v in params.tensors.items()}
        opt = Adam(params, lr=0.05)
        for _ in range(200):
            grads = {k: params.tensors[k] - target[k] for k in params.tensors}
            opt.step(grads)
        err = max(np.abs(params.tensors[k] - target[k]).max() for k in params.tensors)
        assert err < 0.05


class TestGradientsOp:
    def test_returns_all_tensors(self):
        params = _tiny_params(1)
        loss, grads = gradients(params, [_tiny_problem(2)], sbl_layers=1, rounds=1,
                                edge_policy="full")
        assert set(grads) == set(params.tensors)
        assert np.isfinite(loss)


class TestTrain:
    def test_loss_decreases_on_small_set(self, desk_cfg):
        small_cfg = SystemConfig(n_t=32, m_sub=2, k_sc=4, f_c=30e9, f_s=1.6e9, n_rf=1, p_slots=8)
        dataset = [
            make_problem(small_cfg, seed=100 + i, snr_db=5.0, subarray=1 + i % 2)
            for i in range(48)
        ]
        unroll = UnrollSettings(
            layers=2, rounds=2, edge_policy="block", update_zeta=False, zeta_init="true",
            dtype=np.float32,
        )
        params = init_params(GnnDims(n_u=4, n_h1=8, n_h2=6), seed=3)
        prepared = prepare_batch(dataset, edge_policy="block")
        before, _ = loss_and_estimates(params, prepared, unroll)
        settings = TrainSettings(
            epochs=12, batch_size=16, learning_rate=2e-3, unroll=unroll, shuffle_seed=0
        )
        params, trace = train(dataset, params, settings)
        after, _ = loss_and_estimates(params, prepared, unroll)
        assert after < before
        assert len(trace) == 12 * 3

    def test_loss_csv_written(self, tmp_path):
        dataset = [_tiny_problem(i) for i in range(8)]
        unroll = UnrollSettings(layers=1, rounds=1, edge_policy="full", update_zeta=True)
        params = _tiny_params(4)
        path = tmp_path / "loss.csv"
        train(
            dataset,
            params,
            TrainSettings(epochs=2, batch_size=4, learning_rate=1e-4, unroll=unroll),
            loss_csv=path,
        )
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "batch", "loss"]
        assert len(rows) == 1 + 2 * 2

    def test_rejects_empty_dataset(self):
        with pytest.raises(TrainingError):
            train([], init_params(TINY, seed=0), TrainSettings())
