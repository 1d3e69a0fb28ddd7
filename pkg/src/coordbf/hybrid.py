"""Hybrid RF/baseband factorization of a fully-digital precoder.

Bayesian-learning (EM over a Gaussian scale-mixture prior on the rows of the
baseband matrix) selects dictionary columns; SOMP is the greedy baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import sinr as _sinr
from .metrics import sum_rate

SIGMA_E2 = 1e-3
GAMMA_FLOOR = 1e-12
ETA_MAX = 50
RHO = 1e-5
COND_MAX = 1e13


class SingularCovariance(np.linalg.LinAlgError):
    pass


@dataclass
class HybridPrecoder:
    support: tuple
    G_rf: np.ndarray  # (N_t, N_rf) dictionary columns
    G_bb: np.ndarray  # (N_rf, K)
    residual: float
    info: dict = field(default_factory=dict)

    @property
    def precoder(self) -> np.ndarray:
        return self.G_rf @ self.G_bb


@dataclass
class BlState:
    gamma: np.ndarray
    sigma_e2: float = SIGMA_E2
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    iteration: int = 0

    @classmethod
    def initial(cls, G: int, sigma_e2: float = SIGMA_E2) -> "BlState":
        return cls(gamma=np.ones(G), sigma_e2=sigma_e2)


def bl_posterior(state: BlState, F: np.ndarray, G_opt: np.ndarray):
    """Posterior mean (G x K) and covariance (G x G) of the sparse coefficients.

    Uses the Woodbury form Omega = Gam - Gam F^H Sy^-1 F Gam with
    Sy = sigma_e2 I + F Gam F^H, which only inverts an N_t x N_t matrix.
    """
    gam = np.asarray(state.gamma, dtype=float)
    if np.any(gam <= 0):
        raise ValueError("hyperparameters must be positive")
    Nt = F.shape[0]
    FG = F * gam  # F Gam
    Sy = state.sigma_e2 * np.eye(Nt) + FG @ F.conj().T
    if not np.all(np.isfinite(Sy)) or np.linalg.cond(Sy) > COND_MAX:
        raise SingularCovariance("observation covariance is ill-conditioned")
    B = np.linalg.solve(Sy, np.hstack([FG, G_opt]))  # Sy^-1 [F Gam, G_opt]
    SyFG, SyG = B[:, : F.shape[1]], B[:, F.shape[1] :]
    mean = FG.conj().T @ SyG
    cov = np.diag(gam).astype(complex) - FG.conj().T @ SyFG
    cov = 0.5 * (cov + cov.conj().T)
    return mean, cov


def bl_m_step(mean: np.ndarray, cov: np.ndarray, K: int, floor: float = GAMMA_FLOOR) -> np.ndarray:
    """gamma_i = ||mean(i, :)||^2 / K + cov_ii, floored."""
    g = np.sum(np.abs(mean) ** 2, axis=1) / K + np.real(np.diag(cov))
    return np.maximum(g, floor)


def m_stage_objective(gamma: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Expected negative log prior (up to constants) minimized by the M-step."""
    K = mean.shape[1]
    q = np.sum(np.abs(mean) ** 2, axis=1) + K * np.real(np.diag(cov))
    return float(np.sum(K * np.log(gamma) + q / gamma))


def _refit(G_opt, F, support, info):
    support = tuple(int(i) for i in support)
    G_rf = F[:, list(support)]
    G_bb = np.linalg.lstsq(G_rf, G_opt, rcond=None)[0]
    res = float(np.linalg.norm(G_opt - G_rf @ G_bb))
    return HybridPrecoder(support, G_rf, G_bb, res, info)


def bl_decompose(G_opt, F, N_rf: int, sigma_e2: float = SIGMA_E2, rho: float = RHO, eta_max: int = ETA_MAX) -> HybridPrecoder:
    """EM hyperparameter learning, top-N_rf support, least-squares baseband refit.

    The EM runs on G_opt scaled to unit Frobenius norm so that the fixed
    sigma_e2 is relative to the precoder's energy; the refit uses G_opt as given.
    """
    G_opt = np.asarray(G_opt, dtype=complex)
    if G_opt.ndim == 1:
        G_opt = G_opt[:, None]
    Gdim = F.shape[1]
    if not 1 <= N_rf <= Gdim:
        raise ValueError("need 1 <= N_rf <= G")
    K = G_opt.shape[1]
    nrm = np.linalg.norm(G_opt)
    Y = G_opt / nrm if nrm > 0 else G_opt
    state = BlState.initial(Gdim, sigma_e2)
    converged = False
    for j in range(1, eta_max + 1):
        state.mean, state.cov = bl_posterior(state, F, Y)
        new = bl_m_step(state.mean, state.cov, K)
        change = np.max(np.abs(new - state.gamma))
        state.gamma = new
        state.iteration = j
        if change < rho:
            converged = True
            break
    order = np.argsort(-state.gamma, kind="stable")
    support = np.sort(order[:N_rf])
    info = dict(converged=converged, iterations=state.iteration, gamma=state.gamma, method="bl")
    return _refit(G_opt, F, support, info)


def somp_decompose(G_opt, F, N_rf: int) -> HybridPrecoder:
    """Simultaneous OMP: pick the column most correlated with the residual, refit, repeat."""
    G_opt = np.asarray(G_opt, dtype=complex)
    if G_opt.ndim == 1:
        G_opt = G_opt[:, None]
    if not 1 <= N_rf <= F.shape[1]:
        raise ValueError("need 1 <= N_rf <= G")
    chosen: list = []
    R = G_opt
    for _ in range(N_rf):
        corr = np.sum(np.abs(F.conj().T @ R) ** 2, axis=1)
        corr[chosen] = -np.inf
        chosen.append(int(np.argmax(corr)))
        B = np.linalg.lstsq(F[:, chosen], G_opt, rcond=None)[0]
        R = G_opt - F[:, chosen] @ B
    return _refit(G_opt, F, sorted(chosen), dict(method="somp", order=list(chosen)))


def hybrid_beamformers(hybrids) -> np.ndarray:
    """Effective beamformers g[n, k] = G_rf,n G_bb,n[:, k]; shape (N, K, N_t)."""
    return np.array([(hp.G_rf @ hp.G_bb).T for hp in hybrids])


def evaluate_hybrid(channels, hybrids, config):
    """Per-user SINR and sum rate of the hybrid precoders (one per BS)."""
    g = hybrid_beamformers(hybrids)
    gam = _sinr(g, channels.h, config.sigma2_nk)
    return gam, sum_rate(gam)
