"""Centralized SDR power minimization and beamformer extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .channel import ChannelSet, SystemConfig
from .conic import DimensionMismatch, SdpProblem, SdpSolution, Status, TraceConstraint, extract_principal, solve_sdp
from .metrics import sinr

RANK_TOL = 1e-6
N_RAND = 100


class DesignInfeasible(Exception):
    """No feasible beamformer was produced."""

    def __init__(self, msg: str = "", status: Optional[Status] = None):
        super().__init__(msg or str(status))
        self.status = status


class Infeasible(DesignInfeasible):
    """The solver did not return an optimal point (infeasible or no convergence)."""


class ExtractionFailed(DesignInfeasible):
    """Randomized rounding found no candidate meeting every constraint."""


def block_name(n: int, k: int) -> str:
    return f"G{n}_{k}"


@dataclass
class FdBeamformers:
    g: np.ndarray  # (N, K, N_t)
    sinr: np.ndarray  # (N, K)
    rank1: np.ndarray  # (N, K) bool
    beta: np.ndarray
    objective: float = float("nan")  # SDP optimum (lower bound)
    extra: dict = field(default_factory=dict)

    @property
    def powers(self) -> np.ndarray:
        return np.sum(np.abs(self.g) ** 2, axis=(1, 2))

    @property
    def total_weighted(self) -> float:
        return float(self.beta @ self.powers)


def _check_dims(channels: ChannelSet, config: SystemConfig):
    if channels.h.shape != (config.N, config.N, config.K, config.N_t):
        raise DimensionMismatch(
            f"channel shape {channels.h.shape} does not match (N, N, K, N_t) = {(config.N, config.N, config.K, config.N_t)}"
        )


def build_sdr_problem(channels: ChannelSet, config: SystemConfig) -> SdpProblem:
    """SDR of the sum-power problem with one SINR inequality per user."""
    _check_dims(channels, config)
    N, K = config.N, config.K
    h = channels.h
    gamma, sigma2, beta = config.gamma_nk, config.sigma2_nk, config.beta_n
    prob = SdpProblem()
    for n in range(N):
        for k in range(K):
            prob.add_block(block_name(n, k), config.N_t)
            prob.objective_blocks[block_name(n, k)] = float(beta[n])
    for n in range(N):
        for k in range(K):
            coefs = {}
            for m in range(N):
                H = np.outer(h[m, n, k], h[m, n, k].conj())
                for j in range(K):
                    if m == n and j == k:
                        coefs[block_name(m, j)] = H / gamma[n, k]
                    else:
                        coefs[block_name(m, j)] = -H
            prob.add(TraceConstraint(coefs, {}, ">=", float(sigma2[n, k]), name=f"sinr{n}_{k}"))
    return prob


def blocks_to_array(solution_blocks: dict, N: int, K: int) -> np.ndarray:
    return np.array([[solution_blocks[block_name(n, k)] for k in range(K)] for n in range(N)])


def nominal_scale(g: np.ndarray, h: np.ndarray, gamma: np.ndarray, sigma2: np.ndarray) -> float:
    """Smallest common power factor a^2 making every SINR of a*g meet its target (inf if none)."""
    N, K = g.shape[:2]
    p = np.abs(np.einsum("mnka,mia->mnki", h.conj(), g)) ** 2
    total = p.sum(axis=(0, 3))
    idx = np.arange(N)
    sig = p[idx, idx][:, np.arange(K), np.arange(K)]
    margin = sig - gamma * (total - sig)
    if np.any(margin <= 0):
        return np.inf
    return float(np.max(gamma * sigma2 / margin))


def extract_beamformers(
    blocks: np.ndarray,
    channels: ChannelSet,
    config: SystemConfig,
    rng: Optional[np.random.Generator] = None,
    n_rand: int = N_RAND,
    rank_tol: float = RANK_TOL,
    scale_fn: Optional[Callable[[np.ndarray], float]] = None,
    objective: float = float("nan"),
) -> FdBeamformers:
    """Beamformers from SDR blocks (an SdpSolution or an (N, K, N_t, N_t) array).

    Rank-1 blocks give sqrt(lambda_max) times the principal eigenvector. If any
    block is not rank-1, candidates are drawn from the block covariances and
    rescaled by the smallest common factor restoring every constraint
    (``scale_fn``, nominal SINR by default); the cheapest candidate is kept.
    """
    N, K, Nt = config.N, config.K, config.N_t
    if isinstance(blocks, SdpSolution):
        if blocks.status is not Status.OPTIMAL:
            raise Infeasible(status=blocks.status)
        objective = blocks.objective
        blocks = blocks_to_array(blocks.blocks, N, K)
    beta = config.beta_n
    if scale_fn is None:
        gamma, sigma2 = config.gamma_nk, config.sigma2_nk

        def scale_fn(g):
            return nominal_scale(g, channels.h, gamma, sigma2)

    g0 = np.zeros((N, K, Nt), dtype=complex)
    rank1 = np.zeros((N, K), dtype=bool)
    factors = {}
    for n in range(N):
        for k in range(K):
            Gb = 0.5 * (blocks[n, k] + blocks[n, k].conj().T)
            w, V = np.linalg.eigh(Gb)
            lmax = w[-1]
            lam, v = extract_principal(Gb)
            g0[n, k] = np.sqrt(max(lam, 0.0)) * v
            second = w[-2] if Nt > 1 else 0.0
            rank1[n, k] = lmax <= 0 or max(second, 0.0) <= rank_tol * lmax
            if not rank1[n, k]:
                factors[(n, k)] = V * np.sqrt(np.maximum(w, 0.0))
    extra = {"randomized": bool(factors)}
    if not factors:
        g = g0
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        best, best_cost = None, np.inf
        for trial in range(n_rand + 1):
            cand = g0.copy()
            if trial > 0:
                for (n, k), F in factors.items():
                    r = (rng.standard_normal(Nt) + 1j * rng.standard_normal(Nt)) / np.sqrt(2.0)
                    cand[n, k] = F @ r
            a2 = scale_fn(cand)
            if not np.isfinite(a2):
                continue
            cand = np.sqrt(a2) * cand
            cost = float(beta @ np.sum(np.abs(cand) ** 2, axis=(1, 2)))
            if cost < best_cost:
                best, best_cost = cand, cost
        if best is None:
            raise ExtractionFailed("no randomized candidate satisfies the constraints")
        g = best
    return FdBeamformers(
        g=g,
        sinr=sinr(g, channels.h, config.sigma2_nk),
        rank1=rank1,
        beta=beta,
        objective=float(objective),
        extra=extra,
    )


def solve_centralized(
    channels: ChannelSet,
    config: SystemConfig,
    rng: Optional[np.random.Generator] = None,
    n_rand: int = N_RAND,
    tol: float = 1e-7,
) -> FdBeamformers:
    """Solve the SDR and extract beamformers; raises Infeasible / ExtractionFailed."""
    sol = solve_sdp(build_sdr_problem(channels, config), tol=tol)
    if sol.status is not Status.OPTIMAL:
        raise Infeasible(status=sol.status)
    fd = extract_beamformers(sol, channels, config, rng=rng, n_rand=n_rand)
    fd.extra["sdp_iterations"] = sol.iterations
    return fd
