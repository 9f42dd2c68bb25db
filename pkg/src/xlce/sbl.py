"""Sparse Bayesian learning engine shared by all stage-one estimators.

The iteration alternates an exact Gaussian posterior computation (the
observation step) with a pluggable prior update that re-estimates the
per-coefficient precisions gamma. The classical closed-form update and
the learned graph-network update both implement :class:`PriorUpdater`,
so the surrounding loop, noise re-estimation and stopping logic are
written once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .measurement import SparseProblem
from .numerics import hpd_cholesky, hpd_solve_factored

GAMMA_BOUNDS = (1e-6, 1e8)
"""Clamp for prior precisions; the floor keeps the posterior matrix
invertible even when a learned update emits zero through its ReLU."""

ZETA_BOUNDS = (1e-8, 1e12)
"""Clamp for the noise precision estimate."""


@dataclass
class PriorState:
    """Per-coefficient prior precisions and the noise precision."""

    gamma: np.ndarray
    zeta: float


@dataclass
class PosteriorState:
    """Gaussian posterior of one observation step.

    ``v`` is the posterior precision matrix as formed (zeta*phi^H phi +
    diag gamma) before inversion; ``sigma`` is its inverse and ``mu`` the
    posterior mean.
    """

    mu: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


@runtime_checkable
class PriorUpdater(Protocol):
    """Rule mapping the current posterior to new prior precisions."""

    def begin(self, prob: SparseProblem) -> None:
        """Reset any per-run state (called once at the start of a run)."""

    def update(self, post: PosteriorState, prior: PriorState) -> np.ndarray:
        """Return the next gamma vector (already clamped)."""


def clamp_gamma(gamma: np.ndarray) -> np.ndarray:
    return np.clip(gamma, GAMMA_BOUNDS[0], GAMMA_BOUNDS[1])


def clamp_zeta(zeta: float) -> float:
    return float(min(max(zeta, ZETA_BOUNDS[0]), ZETA_BOUNDS[1]))


def _block_inverse(v: np.ndarray, block: int) -> np.ndarray:
    """Inverse of a block-diagonal Hermitian PD matrix, block by block.

    Off-block entries of the result are exactly zero; the caller is
    responsible for only using this when v truly is block diagonal.
    """
    n = v.shape[0]
    sigma = np.zeros_like(v)
    eye = np.eye(block, dtype=v.dtype)
    for lo in range(0, n, block):
        hi = lo + block
        factor = hpd_cholesky(v[lo:hi, lo:hi])
        inv = hpd_solve_factored(factor, eye)
        sigma[lo:hi, lo:hi] = 0.5 * (inv + inv.conj().T)
    return sigma


def e_step(prob: SparseProblem, prior: PriorState) -> PosteriorState:
    """Exact Gaussian posterior for the linear model under the current prior.

    v = zeta * phi^H phi + diag(gamma), sigma = v^{-1},
    mu = zeta * sigma @ phi^H y.
    """
    gamma = np.asarray(prior.gamma, dtype=float)
    if gamma.shape != (prob.n,) or np.any(gamma <= 0):
        raise ValueError("gamma must be a positive vector matching the problem size")
    if not prior.zeta > 0:
        raise ValueError(f"noise precision must be positive, got {prior.zeta}")
    v = prior.zeta * prob.gram + np.diag(gamma.astype(complex))
    if prob.block is not None and prob.n % prob.block == 0 and prob.block < prob.n:
        sigma = _block_inverse(v, prob.block)
    else:
        factor = hpd_cholesky(v)
        inv = hpd_solve_factored(factor, np.eye(prob.n, dtype=complex))
        sigma = 0.5 * (inv + inv.conj().T)
    mu = prior.zeta * (sigma @ prob.proj)
    return PosteriorState(mu=mu, sigma=sigma, v=v)


def m_step_std(post: PosteriorState) -> np.ndarray:
    """Closed-form precision update gamma_n = 1 / (|mu_n|^2 + Sigma_nn)."""
    second_moment = np.abs(post.mu) ** 2 + np.real(np.diag(post.sigma))
    with np.errstate(divide="ignore"):
        gamma = np.where(second_moment > 0, 1.0 / second_moment, np.inf)
    return clamp_gamma(gamma)


def update_noise(post: PosteriorState, prob: SparseProblem) -> float:
    """EM noise-precision update from the residual and posterior spread.

    zeta = m / (||y - phi mu||^2 + tr(phi sigma phi^H)), clamped.
    """
    residual = float(np.linalg.norm(prob.y - prob.phi @ post.mu) ** 2)
    spread = float(np.real(np.sum(post.sigma * np.conj(prob.gram))))
    return clamp_zeta(prob.m / (residual + spread))


class StdSblUpdater:
    """Classical EM prior update (stateless)."""

    def begin(self, prob: SparseProblem) -> None:
        pass

    def update(self, post: PosteriorState, prior: PriorState) -> np.ndarray:
        return m_step_std(post)


class FrozenPriorUpdater:
    """Keeps gamma fixed; the run then computes a plain ridge estimate."""

    def begin(self, prob: SparseProblem) -> None:
        pass

    def update(self, post: PosteriorState, prior: PriorState) -> np.ndarray:
        return prior.gamma


def run_sbl(
    prob: SparseProblem,
    updater: PriorUpdater,
    t_iters: int,
    tol: float | None = None,
    update_zeta: bool = True,
    zeta_init: float = 1.0,
) -> np.ndarray:
    """Run the estimation loop and return the final posterior mean.

    Starts from gamma = 1, performs an observation step, then ``t_iters``
    rounds of [prior update, optional noise update, observation step].
    With ``tol`` set, stops early once the relative change of the mean
    between consecutive observation steps falls below it.
    """
    if t_iters < 1:
        raise ValueError(f"need at least one iteration, got {t_iters}")
    prior = PriorState(gamma=np.ones(prob.n), zeta=float(zeta_init))
    updater.begin(prob)
    post = e_step(prob, prior)
    for _ in range(t_iters):
        prior.gamma = clamp_gamma(updater.update(post, prior))
        if update_zeta:
            prior.zeta = update_noise(post, prob)
        new_post = e_step(prob, prior)
        if tol is not None:
            denom = max(float(np.linalg.norm(post.mu)), 1e-30)
            change = float(np.linalg.norm(new_post.mu - post.mu)) / denom
            post = new_post
            if change < tol:
                break
        else:
            post = new_post
    return post.mu


def estimate_std_sbl(
    prob: SparseProblem,
    max_iters: int = 200,
    tol: float = 1e-6,
    update_zeta: bool = True,
) -> np.ndarray:
    """Classical SBL with its default iteration budget and early stop."""
    return run_sbl(prob, StdSblUpdater(), max_iters, tol=tol, update_zeta=update_zeta)
