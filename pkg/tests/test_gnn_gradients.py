"""Finite-difference validation of the reverse-mode gradients.

With a single estimation layer the truncation convention coincides with
the exact derivative, so central differences through the full forward
pass are an independent oracle.
"""

import numpy as np
import pytest

from xlce.gnn_prior import GnnDims, init_params
from xlce.gnn_prior.backprop import (
    UnrollSettings,
    forward_backward,
    loss_and_estimates,
    prepare_batch,
)
from xlce.measurement import SparseProblem

TINY = GnnDims(n_u=3, n_h1=5, n_h2=4)


def _tiny_problem(seed, n=4, m=3):
    rng = np.random.default_rng(seed)
    phi = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2 * m)
    x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * (rng.random(n) < 0.6)
    noise = 0.05 * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    return SparseProblem(y=phi @ x + noise, phi=phi, zeta_true=400.0, x_true=x, block=None)


def _tiny_params(seed):
    params = init_params(TINY, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for name, t in params.tensors.items():
        if t.ndim == 1:
            params.tensors[name] = 0.3 * rng.standard_normal(t.shape)
    params.tensors["h_b3"] += 1.0
    return params


def _fd_check(params, prepared, settings, step=1e-5, rtol=1e-4):
    loss, grads = forward_backward(params, prepared, settings, reduction="sum")
    worst = {}
    for name, grad in grads.items():
        tensor = params.tensors[name]
        numeric = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + step
            up, _ = loss_and_estimates(params, prepared, settings, reduction="sum")
            tensor[idx] = orig - step
            down, _ = loss_and_estimates(params, prepared, settings, reduction="sum")
            tensor[idx] = orig
            numeric[idx] = (up - down) / (2 * step)
        denom = max(np.abs(numeric).max(), 1e-8)
        worst[name] = np.abs(grad - numeric).max() / denom
    assert all(err < rtol for err in worst.values()), worst
    return loss, worst


class TestFiniteDifferences:
    def test_single_layer_single_round(self):
        params = _tiny_params(0)
        prepared = prepare_batch([_tiny_problem(1)], edge_policy="full")
        settings = UnrollSettings(layers=1, rounds=1, edge_policy="full", update_zeta=True)
        _fd_check(params, prepared, settings)

    def test_multiple_rounds_exercise_recurrence(self):
        # three rounds make the GRU state-to-state weights load-bearing
        params = _tiny_params(2)
        prepared = prepare_batch([_tiny_problem(3)], edge_policy="full")
        settings = UnrollSettings(layers=1, rounds=3, edge_policy="full", update_zeta=False)
        loss, worst = _fd_check(params, prepared, settings)
        _, grads = forward_backward(params, prepared, settings, reduction="sum")
        assert np.abs(grads["gru_wh"]).max() > 0

    def test_batch_of_two(self):
        params = _tiny_params(4)
        prepared = prepare_batch([_tiny_problem(5), _tiny_problem(6)], edge_policy="full")
        settings = UnrollSettings(layers=1, rounds=2, edge_policy="full", update_zeta=True)
        _fd_check(params, prepared, settings)


class TestGradientStructure:
    def test_disconnected_state_weights_have_zero_gradient(self):
        # with one round the GRU sees only the zero initial state, so the
        # state-to-state weight matrix cannot influence the loss
        params = _tiny_params(7)
        prepared = prepare_batch([_tiny_problem(8)], edge_policy="full")
        settings = UnrollSettings(layers=1, rounds=1, edge_policy="full", update_zeta=False)
        _, grads = forward_backward(params, prepared, settings, reduction="sum")
        np.testing.assert_array_equal(grads["gru_wh"], np.zeros_like(grads["gru_wh"]))

    def test_duplicated_instance_doubles_summed_gradient(self):
        params = _tiny_params(9)
        settings = UnrollSettings(layers=1, rounds=2, edge_policy="full", update_zeta=True)
        prob = _tiny_problem(10)
        _, g1 = forward_backward(
            params, prepare_batch([prob], edge_policy="full"), settings, reduction="sum"
        )
        _, g2 = forward_backward(
            params, prepare_batch([prob, prob], edge_policy="full"), settings, reduction="sum"
        )
        for name in g1:
            np.testing.assert_allclose(g2[name], 2 * g1[name], rtol=1e-12, atol=1e-300)

    def test_mean_reduction_scales_by_batch(self):
        params = _tiny_params(11)
        settings = UnrollSettings(layers=1, rounds=1, edge_policy="full", update_zeta=False)
        prob = _tiny_problem(12)
        batch = prepare_batch([prob, prob], edge_policy="full")
        loss_sum, g_sum = forward_backward(params, batch, settings, reduction="sum")
        loss_mean, g_mean = forward_backward(params, batch, settings, reduction="mean")
        assert loss_sum == pytest.approx(2 * loss_mean)
        for name in g_sum:
            np.testing.assert_allclose(g_sum[name], 2 * g_mean[name], rtol=1e-12)
