"""Global fusion and chain-structured variational denoising.

Local angular-delay estimates are aligned into the global angular basis
(a column-block split of the full-array DFT makes this a lossless linear
map) and summed. The aggregate is then treated as a noisy observation of
the true global angular-delay channel and denoised by coordinate-wise
variational updates under a three-layer prior: a binary Markov chain
picks active/inactive precision states, Gamma laws generate the
per-coefficient precisions, and the coefficients are conditionally
Gaussian. The chain rewards contiguous support blocks, which is exactly
how multipath energy clusters in this basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SystemConfig
from .measurement import unvec, vec
from .numerics import unitary_dft

UPSILON_BOUNDS = (1e-8, 1e12)
"""Clamp for coefficient precision estimates, keeps posterior variances finite."""


@dataclass(frozen=True)
class MarkovPrior:
    """Markov-chain hierarchical prior over coefficient precision states.

    p01 is the 0->1 transition probability of the support chain and p10
    the 1->0 probability; (a, b) are the Gamma shape/rate of the active
    precision and (a_bar, b_bar) of the inactive one. With the defaults,
    active coefficients have order-one variance and inactive ones are
    driven to zero (mean precision 1e6).
    """

    p01: float = 0.1 * 0.1 / 0.9
    p10: float = 0.1
    a: float = 1.0
    b: float = 1.0
    a_bar: float = 1.0
    b_bar: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("p01", "p10"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} is not a probability")
        for name in ("a", "b", "a_bar", "b_bar"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def p00(self) -> float:
        return 1.0 - self.p01

    @property
    def p11(self) -> float:
        return 1.0 - self.p10

    @property
    def stationary(self) -> float:
        """Stationary probability of the active state."""
        return self.p01 / (self.p01 + self.p10)

    @classmethod
    def from_sparsity(cls, rho: float = 0.1, p10: float = 0.1, **gamma_params) -> "MarkovPrior":
        """Build transitions whose stationary active fraction is rho."""
        if not 0.0 < rho < 1.0:
            raise ValueError(f"target sparsity must be in (0, 1), got {rho}")
        return cls(p01=rho * p10 / (1.0 - rho), p10=p10, **gamma_params)


@dataclass
class RefineState:
    """All per-iteration quantities of the denoiser, for inspection."""

    x_tilde: np.ndarray
    tau_tilde: np.ndarray
    upsilon_tilde: np.ndarray
    kappa_tilde: float
    pi_out: np.ndarray
    pi_in: np.ndarray
    psi_f: np.ndarray
    psi_b: np.ndarray


def angular_block(cfg: SystemConfig, m: int) -> np.ndarray:
    """Columns of the full-array DFT owned by subarray m (1-based)."""
    f_a = unitary_dft(cfg.n_t)
    lo = (m - 1) * cfg.n_sub
    return f_a[:, lo : lo + cfg.n_sub]


def fuse(local_estimates: list[np.ndarray], cfg: SystemConfig) -> np.ndarray:
    """Aggregate local angular-delay estimates in the global angular basis.

    Returns r = vec(sum_m F_{A,m} F_L^H Hhat_m) where Hhat_m is subarray
    m's local angular-delay estimate; the delay-side transforms cancel
    because both bases use the same unitary subcarrier DFT.
    """
    if len(local_estimates) != cfg.m_sub:
        raise ValueError(f"expected {cfg.m_sub} local estimates, got {len(local_estimates)}")
    f_l = unitary_dft(cfg.n_sub)
    total = np.zeros((cfg.n_t, cfg.k_sc), dtype=complex)
    for m, est in enumerate(local_estimates, start=1):
        est = np.asarray(est)
        if est.shape != (cfg.n_sub, cfg.k_sc):
            raise ValueError(f"local estimate {m} has shape {est.shape}, expected {(cfg.n_sub, cfg.k_sc)}")
        total += angular_block(cfg, m) @ (f_l.conj().T @ est)
    return vec(total)


def msg_pi_out(
    x_tilde: np.ndarray,
    tau_tilde: np.ndarray,
    prior: MarkovPrior,
    exact: bool = False,
) -> np.ndarray:
    """Per-coefficient evidence for the active state.

    With s_j = |x_j|^2 + tau_j the default rule is
    a*(b_bar+s) / (a*(b_bar+s) + a_bar*(b+s)); ``exact=True`` instead
    integrates the Gamma mixture, giving
    a*b^a/(b+s)^(a+1) versus a_bar*b_bar^a_bar/(b_bar+s)^(a_bar+1).
    """
    s = np.abs(x_tilde) ** 2 + np.asarray(tau_tilde, dtype=float)
    if np.any(s <= 0):
        raise ValueError("second moments must be positive")
    if exact:
        # evidence of each state under its Gamma law, in log space for range safety
        log_e1 = np.log(prior.a) + prior.a * np.log(prior.b) - (prior.a + 1) * np.log(prior.b + s)
        log_e0 = (
            np.log(prior.a_bar)
            + prior.a_bar * np.log(prior.b_bar)
            - (prior.a_bar + 1) * np.log(prior.b_bar + s)
        )
        return 1.0 / (1.0 + np.exp(log_e0 - log_e1))
    active = prior.a * (prior.b_bar + s)
    inactive = prior.a_bar * (prior.b + s)
    return active / (active + inactive)


def chain_forward_backward(
    pi_out: np.ndarray, prior: MarkovPrior
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward/backward messages along the support chain.

    Boundary conditions: the forward message at the first site is the
    stationary active probability, the backward message at the last site
    is uninformative (1/2). Returns (psi_f, psi_b, pi_in) where pi_in is
    the extrinsic posterior combining both directions but excluding the
    local evidence.
    """
    pi_out = np.asarray(pi_out, dtype=float)
    if np.any((pi_out < 0) | (pi_out > 1)):
        raise ValueError("pi_out entries must lie in [0, 1]")
    n = pi_out.size
    p01, p10, p11 = prior.p01, prior.p10, prior.p11
    p0 = prior.p10 + prior.p00
    p1 = prior.p11 + prior.p01

    psi_f = np.empty(n)
    psi_f[0] = prior.stationary
    for j in range(1, n):
        w1 = psi_f[j - 1] * pi_out[j - 1]
        w0 = (1.0 - psi_f[j - 1]) * (1.0 - pi_out[j - 1])
        denom = w0 + w1
        if denom == 0.0:
            psi_f[j] = psi_f[j - 1]  # degenerate evidence: carry the message
        else:
            psi_f[j] = (p01 * w0 + p11 * w1) / denom

    psi_b = np.empty(n)
    psi_b[n - 1] = 0.5
    for j in range(n - 2, -1, -1):
        w1 = psi_b[j + 1] * pi_out[j + 1]
        w0 = (1.0 - psi_b[j + 1]) * (1.0 - pi_out[j + 1])
        denom = p0 * w0 + p1 * w1
        if denom == 0.0:
            psi_b[j] = psi_b[j + 1]
        else:
            psi_b[j] = (p10 * w0 + p11 * w1) / denom

    on = psi_f * psi_b
    off = (1.0 - psi_f) * (1.0 - psi_b)
    with np.errstate(invalid="ignore"):
        pi_in = np.where(on + off > 0, on / np.maximum(on + off, 1e-300), 0.5)
    return psi_f, psi_b, pi_in


def update_upsilon(
    pi_in: np.ndarray,
    x_tilde: np.ndarray,
    tau_tilde: np.ndarray,
    prior: MarkovPrior,
) -> np.ndarray:
    """Posterior-mean precision under the two-state Gamma mixture."""
    s = np.abs(x_tilde) ** 2 + np.asarray(tau_tilde, dtype=float)
    pi_in = np.asarray(pi_in, dtype=float)
    ups = pi_in * (prior.a + 1.0) / (prior.b + s) + (1.0 - pi_in) * (prior.a_bar + 1.0) / (
        prior.b_bar + s
    )
    return np.clip(ups, UPSILON_BOUNDS[0], UPSILON_BOUNDS[1])


def update_x(
    r: np.ndarray, kappa_tilde: float, upsilon_tilde: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient posterior mean and variance (scalar Wiener shrinkage)."""
    if not kappa_tilde > 0:
        raise ValueError(f"kappa must be positive, got {kappa_tilde}")
    denom = kappa_tilde + np.asarray(upsilon_tilde, dtype=float)
    return np.asarray(r) * (kappa_tilde / denom), 1.0 / denom


def update_kappa(r: np.ndarray, x_tilde: np.ndarray, tau_tilde: np.ndarray) -> float:
    """Posterior-mean observation precision from residual plus spread."""
    total = float(np.sum(np.abs(np.asarray(r) - x_tilde) ** 2 + tau_tilde))
    return np.asarray(r).size / total


def run_refinement(
    r: np.ndarray,
    prior: MarkovPrior,
    max_iter: int = 50,
    tol: float = 1e-6,
    exact_pi_out: bool = False,
    return_state: bool = False,
):
    """Denoise the aggregated angular-delay vector.

    Iterates the message schedule (local evidence, chain sweep, precision
    update, coefficient update, noise update) until the estimate moves by
    less than ``tol`` in relative norm or ``max_iter`` is hit. Returns the
    denoised vector, or (vector, final state) with ``return_state``.
    """
    if max_iter < 1:
        raise ValueError(f"need at least one iteration, got {max_iter}")
    r = np.asarray(r, dtype=complex)
    n = r.size
    x_tilde = np.zeros(n, dtype=complex)
    tau_tilde = np.ones(n)
    upsilon = np.ones(n)
    kappa = 1.0
    state = None
    for _ in range(max_iter):
        pi_out = msg_pi_out(x_tilde, tau_tilde, prior, exact=exact_pi_out)
        psi_f, psi_b, pi_in = chain_forward_backward(pi_out, prior)
        upsilon = update_upsilon(pi_in, x_tilde, tau_tilde, prior)
        x_new, tau_tilde = update_x(r, kappa, upsilon)
        kappa = update_kappa(r, x_new, tau_tilde)
        change = float(np.linalg.norm(x_new - x_tilde)) / max(float(np.linalg.norm(x_tilde)), 1e-30)
        x_tilde = x_new
        if return_state:
            state = RefineState(
                x_tilde=x_tilde,
                tau_tilde=tau_tilde,
                upsilon_tilde=upsilon,
                kappa_tilde=kappa,
                pi_out=pi_out,
                pi_in=pi_in,
                psi_f=psi_f,
                psi_b=psi_b,
            )
        if change < tol:
            break
    if return_state:
        return x_tilde, state
    return x_tilde


def reconstruct(x_tilde: np.ndarray, cfg: SystemConfig) -> tuple[np.ndarray, list[np.ndarray]]:
    """Map the global angular-delay vector back to the antenna-frequency domain.

    Returns the full (n_t, k_sc) channel estimate and its per-subarray row
    slices.
    """
    x_tilde = np.asarray(x_tilde)
    if x_tilde.shape != (cfg.n_t * cfg.k_sc,):
        raise ValueError(f"expected a vector of length {cfg.n_t * cfg.k_sc}, got {x_tilde.shape}")
    f_a = unitary_dft(cfg.n_t)
    f_d = unitary_dft(cfg.k_sc)
    h = f_a.conj().T @ unvec(x_tilde, cfg.n_t, cfg.k_sc) @ f_d
    slices = [h[m * cfg.n_sub : (m + 1) * cfg.n_sub] for m in range(cfg.m_sub)]
    return h, slices
