"""Worst-case beamforming under bounded CSI errors.

Each quantified quadratic constraint over an error ellipsoid
{xi : xi^H R xi <= 1} (a ball of radius eps when R = I / eps^2) becomes one
LMI with a nonnegative multiplier. With T = R^{-1/2} the LMIs are built in
the congruent form

    P A P^H + diag(lam I, -lam) + corner terms,   P = [T; h^H],

which equals diag(T, 1)^H [[A + lam R, A h], [h^H A, h^H A h - lam]] diag(T, 1)
and is well scaled for small eps. Verification uses an exact trust-region
solver that is independent of the SDP machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .centralized import (
    N_RAND,
    ExtractionFailed,
    FdBeamformers,
    Infeasible,
    block_name,
    blocks_to_array,
    extract_beamformers,
)
from .channel import ChannelSet, SystemConfig
from .conic import DimensionMismatch, LmiConstraint, SdpProblem, Status, TraceConstraint, extract_principal, solve_sdp
from .ici import IciLayout, build_layout
from .metrics import sinr as nominal_sinr


@dataclass
class UncertaintyModel:
    """Per-link error sets. ``eps`` has shape (N, N, K); ``R`` shape (N, N, K, N_t, N_t)."""

    kind: str
    eps: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "spherical":
            self.eps = np.asarray(self.eps, dtype=float)
            if np.any(self.eps < 0):
                raise ValueError("radii must be nonnegative")
        elif self.kind == "ellipsoidal":
            self.R = np.asarray(self.R)
            w = np.linalg.eigvalsh(self.R)
            if np.any(w <= 0):
                raise ValueError("shape matrices must be positive definite")
            self._T = _inv_sqrt(self.R)
        else:
            raise ValueError(f"unknown uncertainty kind {self.kind!r}")

    @classmethod
    def spherical(cls, eps, N: int, K: int) -> "UncertaintyModel":
        return cls("spherical", eps=np.broadcast_to(np.asarray(eps, dtype=float), (N, N, K)).copy())

    @classmethod
    def ellipsoidal(cls, R) -> "UncertaintyModel":
        return cls("ellipsoidal", R=R)

    def shape(self, m: int, n: int, k: int, N_t: int) -> np.ndarray:
        """T with the error set {T u : ||u|| <= 1} for link (m, n, k)."""
        if self.kind == "spherical":
            return self.eps[m, n, k] * np.eye(N_t)
        return self._T[m, n, k]

    def R_matrix(self, m: int, n: int, k: int, N_t: int) -> np.ndarray:
        if self.kind == "spherical":
            return np.eye(N_t) / self.eps[m, n, k] ** 2
        return self.R[m, n, k]


def _inv_sqrt(R):
    w, V = np.linalg.eigh(R)
    return (V / np.sqrt(w)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)


# ---------------------------------------------------------------------------
# trust-region machinery


def trs_min(Q: np.ndarray, q: np.ndarray, r: float = 1.0):
    """Minimize u^H Q u + 2 Re(q^H u) over ||u|| <= r. Returns (value, u)."""
    Q = 0.5 * (Q + Q.conj().T)
    n = Q.shape[0]
    if r == 0:
        return 0.0, np.zeros(n, dtype=complex)
    d, V = np.linalg.eigh(Q)
    b = V.conj().T @ q
    scale = max(np.abs(d).max(initial=0.0), np.linalg.norm(b) / r, 1e-300)

    def value(u):
        return float(np.real(np.vdot(u, Q @ u)) + 2.0 * np.real(np.vdot(q, u)))

    if d[0] > 0:
        u0 = -b / d
        if np.linalg.norm(u0) <= r:
            u = V @ u0
            return value(u), u
    mu_lo = max(0.0, -d[0])
    low = d <= d[0] + 1e-12 * scale
    b_low = np.linalg.norm(b[low])

    def norm_u(mu):
        return np.sqrt(np.sum(np.abs(b) ** 2 / (d + mu) ** 2))

    if b_low <= 1e-12 * max(np.linalg.norm(b), 1e-300) and d[0] <= 0:
        # possible hard case: check the norm at the smallest admissible multiplier
        mu = -d[0]
        ut = np.zeros(n, dtype=complex)
        ut[~low] = -b[~low] / (d[~low] + mu)
        nrm = np.linalg.norm(ut)
        if nrm <= r:
            j = int(np.flatnonzero(low)[0])
            ut[j] += np.sqrt(max(r * r - nrm * nrm, 0.0))
            u = V @ ut
            return value(u), u
    # regular case: ||u(mu)|| decreases from above r at mu_lo to below r at hi
    eps = 1e-8 * scale
    while not norm_u(mu_lo + eps) > r:
        eps *= 1e-2
        if eps < 1e-300:
            break
    lo = mu_lo + eps
    hi = mu_lo + np.linalg.norm(b) / r + scale
    while norm_u(hi) > r:
        hi *= 2.0
    if not norm_u(lo) > r:
        mu = lo
    else:
        # 1/r - 1/||u(mu)|| is nearly linear in mu
        mu = brentq(lambda x: 1.0 / r - 1.0 / norm_u(x), lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    ut = -b / (d + mu)
    ut *= r / np.linalg.norm(ut)
    u = V @ ut
    return value(u), u


def _link_quadratic(h, A, T):
    """Coefficients of u -> (h + T u)^H A (h + T u) = c0 + u^H Q u + 2 Re(q^H u)."""
    Ah = A @ h
    return float(np.real(np.vdot(h, Ah))), T.conj().T @ A @ T, T.conj().T @ Ah


def worst_case_quadratic(h_hat, A, eps: float = 0.0, shape: Optional[np.ndarray] = None, return_point: bool = False):
    """max over the error set of (h + xi)^H A (h + xi).

    The error set is the ball of radius ``eps`` or, when ``shape`` T is
    given, {T u : ||u|| <= 1}. A may be indefinite.
    """
    h_hat = np.asarray(h_hat, dtype=complex)
    T = eps * np.eye(len(h_hat)) if shape is None else shape
    c0, Q, q = _link_quadratic(h_hat, A, T)
    val, u = trs_min(-Q, -q, 1.0)
    if return_point:
        return c0 - val, T @ u
    return c0 - val


def best_case_quadratic(h_hat, A, eps: float = 0.0, shape: Optional[np.ndarray] = None, return_point: bool = False):
    """min over the error set of (h + xi)^H A (h + xi)."""
    h_hat = np.asarray(h_hat, dtype=complex)
    T = eps * np.eye(len(h_hat)) if shape is None else shape
    c0, Q, q = _link_quadratic(h_hat, A, T)
    val, u = trs_min(Q, q, 1.0)
    if return_point:
        return c0 + val, T @ u
    return c0 + val


# ---------------------------------------------------------------------------
# LMI builders


def _P(h, T):
    return np.vstack([T.conj().T, h.conj()[None, :]])


def build_phi(k: int, blocks: list, V_refs, lam_ref: str, h_hat, gamma: float, sigma2: float, T) -> LmiConstraint:
    """Worst-case SINR LMI of user k served by the BS owning ``blocks``.

    ``blocks`` are the names of that BS's K beamforming blocks, ``V_refs``
    the scalar name(s) whose sum is the admitted inter-cell interference,
    ``lam_ref`` the multiplier and T the error-set shape for the direct link.
    """
    h_hat = np.asarray(h_hat, dtype=complex)
    Nt = len(h_hat)
    if T.shape != (Nt, Nt):
        raise DimensionMismatch("shape matrix does not match channel length")
    P = _P(h_hat, T)
    p = Nt + 1
    F0 = np.zeros((p, p))
    F0[-1, -1] = -sigma2
    Flam = np.eye(p)
    Flam[-1, -1] = -1.0
    corner = np.zeros((p, p))
    corner[-1, -1] = -1.0
    terms = [(b, (1.0 / gamma) if j == k else -1.0, P) for j, b in enumerate(blocks)]
    V_refs = [V_refs] if isinstance(V_refs, str) else list(V_refs)
    scalars = {lam_ref: Flam}
    for v in V_refs:
        scalars[v] = corner
    return LmiConstraint(const=F0, blocks=terms, scalars=scalars, name=f"phi{k}")


def build_psi(blocks: list, v_ref: str, lam_ref: str, h_hat, T) -> LmiConstraint:
    """Worst-case interference budget LMI: all beams of ``blocks`` leak at most v onto h."""
    h_hat = np.asarray(h_hat, dtype=complex)
    Nt = len(h_hat)
    if T.shape != (Nt, Nt):
        raise DimensionMismatch("shape matrix does not match channel length")
    P = _P(h_hat, T)
    p = Nt + 1
    Flam = np.eye(p)
    Flam[-1, -1] = -1.0
    Fv = np.zeros((p, p))
    Fv[-1, -1] = 1.0
    terms = [(b, -1.0, P) for b in blocks]
    return LmiConstraint(const=np.zeros((p, p)), blocks=terms, scalars={lam_ref: Flam, v_ref: Fv}, name=f"psi_{v_ref}")


def phi_matrix(G_blocks, k, V, lam, h_hat, gamma, sigma2, R):
    """Dense evaluation of the worst-case SINR LMI in its unscaled form (side N_t + 1)."""
    A = G_blocks[k] / gamma - sum(G for j, G in enumerate(G_blocks) if j != k)
    top = np.vstack([np.eye(len(h_hat)), h_hat.conj()[None, :]])
    M = top @ A @ top.conj().T
    M[:-1, :-1] += lam * R
    M[-1, -1] += -sigma2 - V - lam
    return M


def psi_matrix(G_blocks, v, lam, h_hat, R):
    A = -sum(G_blocks)
    top = np.vstack([np.eye(len(h_hat)), h_hat.conj()[None, :]])
    M = top @ A @ top.conj().T
    M[:-1, :-1] += lam * R
    M[-1, -1] += v - lam
    return M


def evaluate_lmi(lmi: LmiConstraint, block_values: dict, scalar_values: dict) -> np.ndarray:
    M = np.array(lmi.const, dtype=complex)
    for name, coef, P in lmi.blocks:
        X = block_values[name]
        M = M + coef * (X if P is None else P @ X @ P.conj().T)
    for name, F in lmi.scalars.items():
        M = M + scalar_values[name] * F
    return M


# ---------------------------------------------------------------------------
# robust problems


@dataclass
class RobustSolution:
    blocks: np.ndarray  # (N, K, N_t, N_t)
    lambdas: dict
    v: dict
    objective: float
    beamformers: Optional[FdBeamformers] = None
    margins: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)


def build_robust_problem(channels: ChannelSet, config: SystemConfig, uncertainty: UncertaintyModel) -> SdpProblem:
    N, K, Nt = config.N, config.K, config.N_t
    h = channels.h
    gamma, sigma2, beta = config.gamma_nk, config.sigma2_nk, config.beta_n
    prob = SdpProblem()
    for n in range(N):
        for k in range(K):
            prob.add_block(block_name(n, k), Nt)
            prob.objective_blocks[block_name(n, k)] = float(beta[n])
    for n in range(N):
        for k in range(K):
            prob.add_scalar(f"lam{n}_{n}_{k}")
            for m in range(N):
                if m != n:
                    prob.add_scalar(f"v{m}_{n}_{k}")
                    prob.add_scalar(f"lam{m}_{n}_{k}")
    for n in range(N):
        own = [block_name(n, j) for j in range(K)]
        for k in range(K):
            prob.add(
                build_phi(
                    k, own, [f"v{m}_{n}_{k}" for m in range(N) if m != n], f"lam{n}_{n}_{k}",
                    h[n, n, k], gamma[n, k], sigma2[n, k], uncertainty.shape(n, n, k, Nt),
                )
            )
            for m in range(N):
                if m != n:
                    blocks_m = [block_name(m, j) for j in range(K)]
                    prob.add(build_psi(blocks_m, f"v{m}_{n}_{k}", f"lam{m}_{n}_{k}", h[m, n, k], uncertainty.shape(m, n, k, Nt)))
    return prob


def robust_constraint_margins(g, channels: ChannelSet, uncertainty: UncertaintyModel, gamma, sigma2):
    """Per-user (worst-case useful minus worst-case interference) in power units.

    Returns (num, inter) with num[n, k] = min over the direct-link error of
    (1/gamma)|h^H g_k|^2 - sum_{i != k} |h^H g_i|^2 and inter[n, k] the sum of
    worst-case inter-cell powers. The SINR target holds robustly iff
    num - inter >= sigma2.
    """
    N, K, Nt = g.shape
    h = channels.h
    gamma = np.broadcast_to(gamma, (N, K))
    num = np.zeros((N, K))
    inter = np.zeros((N, K))
    for n in range(N):
        for k in range(K):
            A = np.outer(g[n, k], g[n, k].conj()) / gamma[n, k]
            for j in range(K):
                if j != k:
                    A = A - np.outer(g[n, j], g[n, j].conj())
            num[n, k] = best_case_quadratic(h[n, n, k], A, shape=uncertainty.shape(n, n, k, Nt))
            for m in range(N):
                if m != n:
                    B = g[m].T @ g[m].conj()  # sum_i g_mi g_mi^H
                    inter[n, k] += worst_case_quadratic(h[m, n, k], B, shape=uncertainty.shape(m, n, k, Nt))
    return num, inter


def robust_scale(g, channels, uncertainty, gamma, sigma2) -> float:
    """Smallest common power factor making every worst-case SINR meet its target (inf if none)."""
    num, inter = robust_constraint_margins(g, channels, uncertainty, gamma, sigma2)
    slack = num - inter
    if np.any(slack <= 0):
        return np.inf
    return float(np.max(np.broadcast_to(sigma2, slack.shape) / slack))


def worst_case_sinr(g, channels: ChannelSet, uncertainty: UncertaintyModel, sigma2) -> np.ndarray:
    """Exact worst-case SINR of every user under independent per-link errors.

    Inter-cell terms are maximized per link; the ratio over the direct-link
    error is minimized by bisection on t with
    phi(t) = min_xi (h+xi)^H (g_k g_k^H - t sum_{i!=k} g_i g_i^H)(h+xi) - t D.
    """
    N, K, Nt = g.shape
    h = channels.h
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (N, K))
    out = np.zeros((N, K))
    for n in range(N):
        for k in range(K):
            T = uncertainty.shape(n, n, k, Nt)
            D = sigma2[n, k]
            for m in range(N):
                if m != n:
                    B = g[m].T @ g[m].conj()
                    D += worst_case_quadratic(h[m, n, k], B, shape=uncertainty.shape(m, n, k, Nt))
            Sk = np.outer(g[n, k], g[n, k].conj())
            Ik = sum((np.outer(g[n, j], g[n, j].conj()) for j in range(K) if j != k), np.zeros((Nt, Nt), complex))

            def phi(t):
                return best_case_quadratic(h[n, n, k], Sk - t * Ik, shape=T) - t * D

            f0 = phi(0.0)
            if f0 <= 0:
                out[n, k] = 0.0
                continue
            hk = h[n, n, k]
            t_hi = np.abs(np.vdot(hk, g[n, k])) ** 2 / (np.real(np.vdot(hk, Ik @ hk)) + D)
            if phi(t_hi) >= 0:
                out[n, k] = t_hi
                continue
            out[n, k] = brentq(phi, 0.0, t_hi, xtol=1e-14 * max(t_hi, 1e-300), rtol=1e-13, maxiter=500)
    return out


def verify_robust_sinr(g, channels: ChannelSet, uncertainty: UncertaintyModel, gamma, sigma2) -> np.ndarray:
    """Worst-case SINR minus target for every user."""
    N, K = g.shape[:2]
    return worst_case_sinr(g, channels, uncertainty, sigma2) - np.broadcast_to(gamma, (N, K))


def solve_robust_centralized(
    channels: ChannelSet,
    config: SystemConfig,
    uncertainty: UncertaintyModel,
    rng: Optional[np.random.Generator] = None,
    n_rand: int = N_RAND,
    tol: float = 1e-7,
) -> RobustSolution:
    """Robust SDR; raises Infeasible or ExtractionFailed."""
    sol = solve_sdp(build_robust_problem(channels, config, uncertainty), tol=tol)
    if sol.status is not Status.OPTIMAL:
        raise Infeasible(status=sol.status)
    N, K = config.N, config.K
    blocks = blocks_to_array(sol.blocks, N, K)
    gamma, sigma2 = config.gamma_nk, config.sigma2_nk

    def scale_fn(g):
        return robust_scale(g, channels, uncertainty, gamma, sigma2)

    fd = extract_beamformers(blocks, channels, config, rng=rng, n_rand=n_rand, scale_fn=scale_fn, objective=sol.objective)
    margins = verify_robust_sinr(fd.g, channels, uncertainty, gamma, sigma2)
    lambdas = {k: v for k, v in sol.scalars.items() if k.startswith("lam")}
    vs = {k: v for k, v in sol.scalars.items() if k.startswith("v")}
    return RobustSolution(blocks, lambdas, vs, sol.objective, fd, margins, dict(sdp_iterations=sol.iterations))


def add_robust_local_constraints(prob: SdpProblem, n: int, h_n, config: SystemConfig, layout: IciLayout, uncertainty, gn):
    """Worst-case SINR and interference-budget LMIs of BS n (variables named as in sync_dist)."""
    K, Nt = layout.K, h_n.shape[-1]
    gamma, sigma2 = config.gamma_nk, config.sigma2_nk
    for k in range(K):
        prob.add_scalar(f"lam{n}_{k}")
        prob.add(build_phi(k, gn, f"V{k}", f"lam{n}_{k}", h_n[n, k], gamma[n, k], sigma2[n, k], uncertainty.shape(n, n, k, Nt)))
    for m in layout.others(n):
        for k in range(K):
            prob.add_scalar(f"lam{m}_{k}")
            prob.add(build_psi(gn, f"v{m}_{k}", f"lam{m}_{k}", h_n[m, k], uncertainty.shape(n, m, k, Nt)))


def solve_robust_local(state, h_n, config, layout, uncertainty):
    from .sync_dist import local_subproblem

    return local_subproblem(state, h_n, config, layout, uncertainty)


# ---------------------------------------------------------------------------
# feasibility recovery


@dataclass
class Recovery:
    feasible: bool
    n: int
    G: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None  # (K, N_t)
    power: float = float("nan")
    rank1: Optional[np.ndarray] = None


def _local_budgets(n, v, layout):
    loc = np.maximum(layout.W[n] @ v, 0.0)
    K = layout.K
    V = loc[:K]
    budgets = {m: loc[layout.local_v_index(n, m, 0) : layout.local_v_index(n, m, 0) + K] for m in layout.others(n)}
    return V, budgets


def _local_window(g_n, n, V, budgets, h_n, config, uncertainty):
    """Feasible range [lo, hi] of a common power factor for BS n's beams."""
    K, Nt = g_n.shape
    gamma, sigma2 = config.gamma_nk, config.sigma2_nk
    lo, hi = 0.0, np.inf
    for k in range(K):
        A = np.outer(g_n[k], g_n[k].conj()) / gamma[n, k] - sum(
            (np.outer(g_n[j], g_n[j].conj()) for j in range(K) if j != k), np.zeros((Nt, Nt), complex)
        )
        T = uncertainty.shape(n, n, k, Nt) if uncertainty is not None else np.zeros((Nt, Nt))
        num = best_case_quadratic(h_n[n, k], A, shape=T)
        if num <= 0:
            return np.inf, 0.0
        lo = max(lo, (sigma2[n, k] + V[k]) / num)
    B = g_n.T @ g_n.conj()
    for m, bud in budgets.items():
        for k in range(K):
            T = uncertainty.shape(n, m, k, Nt) if uncertainty is not None else np.zeros((Nt, Nt))
            leak = worst_case_quadratic(h_n[m, k], B, shape=T)
            if leak > 0:
                hi = min(hi, bud[k] / leak)
    return lo, hi


def feasibility_recovery(
    n: int,
    v: np.ndarray,
    channels: ChannelSet,
    config: SystemConfig,
    uncertainty: Optional[UncertaintyModel] = None,
    layout: Optional[IciLayout] = None,
    rng: Optional[np.random.Generator] = None,
    n_rand: int = N_RAND,
    rank_tol: float = 1e-6,
    tol: float = 1e-7,
) -> Recovery:
    """BS n's power minimization with the consensus ICI vector held fixed.

    Negative consensus entries are clipped to zero (interference powers are
    nonnegative). Without an uncertainty model the nominal constraints are used.
    """
    layout = layout or build_layout(config.N, config.K)
    K, Nt = config.K, config.N_t
    h_n = channels.local(n)
    gamma, sigma2 = config.gamma_nk, config.sigma2_nk
    V, budgets = _local_budgets(n, v, layout)
    prob = SdpProblem()
    gn = [prob.add_block(f"G{k}", Nt) for k in range(K)]
    for b in gn:
        prob.objective_blocks[b] = float(config.beta_n[n])
    if uncertainty is None:
        for k in range(K):
            H = np.outer(h_n[n, k], h_n[n, k].conj())
            coefs = {gn[j]: (H / gamma[n, k] if j == k else -H) for j in range(K)}
            prob.add(TraceConstraint(coefs, {}, ">=", float(sigma2[n, k] + V[k])))
        for m, bud in budgets.items():
            for k in range(K):
                H = np.outer(h_n[m, k], h_n[m, k].conj())
                prob.add(TraceConstraint({b: H for b in gn}, {}, "<=", float(bud[k])))
    else:
        for k in range(K):
            prob.add_scalar(f"lam{n}_{k}")
            phi = build_phi(k, gn, [], f"lam{n}_{k}", h_n[n, k], gamma[n, k], sigma2[n, k] + V[k], uncertainty.shape(n, n, k, Nt))
            prob.add(phi)
        for m, bud in budgets.items():
            for k in range(K):
                prob.add_scalar(f"lam{m}_{k}")
                psi = build_psi(gn, f"_fixed{m}_{k}", f"lam{m}_{k}", h_n[m, k], uncertainty.shape(n, m, k, Nt))
                Fv = psi.scalars.pop(f"_fixed{m}_{k}")
                psi.const = psi.const + float(bud[k]) * Fv
                prob.add(psi)
    sol = solve_sdp(prob, tol=tol)
    if sol.status is not Status.OPTIMAL:
        return Recovery(False, n)
    G = np.array([sol.blocks[b] for b in gn])
    g = np.zeros((K, Nt), dtype=complex)
    rank1 = np.zeros(K, dtype=bool)
    factors = {}
    for k in range(K):
        w, Vec = np.linalg.eigh(G[k])
        lam, vec = extract_principal(G[k])
        g[k] = np.sqrt(max(lam, 0.0)) * vec
        rank1[k] = w[-1] <= 0 or max(w[-2], 0.0) <= rank_tol * w[-1]
        if not rank1[k]:
            factors[k] = Vec * np.sqrt(np.maximum(w, 0.0))
    if factors:
        rng = np.random.default_rng(0) if rng is None else rng
        best, best_p = None, np.inf
        for trial in range(n_rand + 1):
            cand = g.copy()
            if trial > 0:
                for k, Fk in factors.items():
                    cand[k] = Fk @ ((rng.standard_normal(Nt) + 1j * rng.standard_normal(Nt)) / np.sqrt(2.0))
            lo, hi = _local_window(cand, n, V, budgets, h_n, config, uncertainty)
            if lo <= hi and np.isfinite(lo):
                p = lo * float(np.sum(np.abs(cand) ** 2))
                if p < best_p:
                    best, best_p = np.sqrt(lo) * cand, p
        if best is None:
            return Recovery(False, n, G=G, rank1=rank1)
        g = best
    power = float(config.beta_n[n] * np.sum(np.abs(g) ** 2))
    return Recovery(True, n, G=G, g=g, power=power, rank1=rank1)


def recover_all(v, channels, config, uncertainty=None, layout=None, rng=None):
    """Run feasibility recovery at every BS; returns (all feasible, beamformers or None, recoveries)."""
    layout = layout or build_layout(config.N, config.K)
    recs = [feasibility_recovery(n, v, channels, config, uncertainty, layout, rng=rng) for n in range(config.N)]
    ok = all(r.feasible for r in recs)
    g = np.array([r.g for r in recs]) if ok else None
    return ok, g, recs


def run_robust_sdbf(channels, config, uncertainty, recover: bool = True, **kw):
    from .sync_dist import run_sdbf

    tr = run_sdbf(channels, config, uncertainty=uncertainty, **kw)
    if recover:
        _attach_recovery(tr, channels, config, uncertainty)
    return tr


def run_robust_adbf(channels, config, acfg, uncertainty, recover: bool = True, **kw):
    from .async_proto import run_adbf

    tr = run_adbf(channels, config, acfg, uncertainty=uncertainty, **kw)
    if recover:
        _attach_recovery(tr, channels, config, uncertainty)
    return tr


def _attach_recovery(tr, channels, config, uncertainty):
    s = tr.summary
    if not s.get("feasible", False):
        s.update(recovered=False, g=None, recovered_power=np.nan)
        return
    ok, g, recs = recover_all(s["v"], channels, config, uncertainty)
    s.update(recovered=ok, g=g, recovered_power=float(sum(r.power for r in recs)) if ok else np.nan)


__all__ = [
    "UncertaintyModel",
    "RobustSolution",
    "Recovery",
    "trs_min",
    "worst_case_quadratic",
    "best_case_quadratic",
    "build_phi",
    "build_psi",
    "phi_matrix",
    "psi_matrix",
    "evaluate_lmi",
    "build_robust_problem",
    "solve_robust_centralized",
    "solve_robust_local",
    "run_robust_sdbf",
    "run_robust_adbf",
    "feasibility_recovery",
    "recover_all",
    "verify_robust_sinr",
    "worst_case_sinr",
    "robust_scale",
    "robust_constraint_margins",
    "ExtractionFailed",
    "nominal_sinr",
]
