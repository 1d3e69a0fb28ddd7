"""Synchronous distributed beamforming: per-BS ADMM subproblem and consensus loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import ChannelSet, SystemConfig
from .conic import LmiConstraint, SdpProblem, Status, TraceConstraint, solve_sdp
from .ici import IciLayout, build_layout
from .metrics import ExperimentTrace

C_DEFAULT = 1.0
STOP_TOL = 1e-4
MAX_OUTER = 300
LOCAL_TOL = 1e-7


class LocalInfeasible(Exception):
    def __init__(self, n: int, status=None):
        super().__init__(f"local problem of BS {n} has no solution ({status})")
        self.n = n
        self.status = status


@dataclass
class BsLocalState:
    n: int
    v_n: np.ndarray
    nu: np.ndarray
    v_tilde: np.ndarray
    G: Optional[np.ndarray] = None  # (K, N_t, N_t)
    power: float = 0.0
    i_n: int = 0
    c: float = C_DEFAULT
    extra: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, n: int, layout: IciLayout, c: float = C_DEFAULT) -> "BsLocalState":
        return cls(n=n, v_n=np.zeros(layout.local_dim), nu=np.zeros(layout.local_dim), v_tilde=np.zeros(layout.dim), c=c)


@dataclass
class CuState:
    v: np.ndarray
    v_hat: np.ndarray  # (N, NK)
    nu_hat: np.ndarray  # (N, NK)
    tau_n: np.ndarray
    i: int = 0

    @classmethod
    def initial(cls, layout: IciLayout) -> "CuState":
        L = layout.local_dim
        return cls(
            v=np.zeros(layout.dim),
            v_hat=np.zeros((layout.N, L)),
            nu_hat=np.zeros((layout.N, L)),
            tau_n=np.ones(layout.N, dtype=int),
        )


def local_names(n: int, layout: IciLayout):
    """Scalar names of BS n's local ICI vector in layout order."""
    names = [f"V{k}" for k in range(layout.K)]
    for m in layout.others(n):
        names += [f"v{m}_{k}" for k in range(layout.K)]
    return names


def add_consensus_penalty(prob: SdpProblem, names, anchor: np.ndarray, c: float) -> None:
    """Add (c/2) ||v_n - anchor||^2 to the objective through t >= ||v_n - anchor||^2."""
    L = len(names)
    prob.add_scalar("t")
    prob.objective_scalars["t"] = 0.5 * c
    F0 = np.zeros((L + 1, L + 1))
    F0[1:, 1:] = np.eye(L)
    F0[0, 1:] = F0[1:, 0] = -anchor
    Ft = np.zeros((L + 1, L + 1))
    Ft[0, 0] = 1.0
    sc = {"t": Ft}
    for j, nm in enumerate(names):
        F = np.zeros((L + 1, L + 1))
        F[0, j + 1] = F[j + 1, 0] = 1.0
        sc[nm] = F
    prob.add(LmiConstraint(const=F0, scalars=sc, name="penalty"))


def build_local_problem(state: BsLocalState, h_n: np.ndarray, config: SystemConfig, layout: IciLayout, uncertainty=None):
    """ADMM subproblem of BS n as an SdpProblem.

    h_n[m, k] is the channel from BS n to user k of cell m.
    """
    n, K, Nt = state.n, layout.K, h_n.shape[-1]
    beta = config.beta_n[n]
    gamma, sigma2 = config.gamma_nk, config.sigma2_nk
    prob = SdpProblem()
    gn = [prob.add_block(f"G{k}", Nt) for k in range(K)]
    for b in gn:
        prob.objective_blocks[b] = float(beta)
    names = local_names(n, layout)
    for nm in names:
        prob.add_scalar(nm)
    if uncertainty is None:
        for k in range(K):
            H = np.outer(h_n[n, k], h_n[n, k].conj())
            coefs = {gn[j]: (H / gamma[n, k] if j == k else -H) for j in range(K)}
            prob.add(TraceConstraint(coefs, {f"V{k}": -1.0}, ">=", float(sigma2[n, k]), name=f"sinr{k}"))
        for m in layout.others(n):
            for k in range(K):
                H = np.outer(h_n[m, k], h_n[m, k].conj())
                prob.add(TraceConstraint({b: H for b in gn}, {f"v{m}_{k}": -1.0}, "==", 0.0, name=f"ici{m}_{k}"))
    else:
        from .robust import add_robust_local_constraints

        add_robust_local_constraints(prob, n, h_n, config, layout, uncertainty, gn)
    anchor = layout.W[n] @ state.v_tilde + state.nu / state.c
    add_consensus_penalty(prob, names, anchor, state.c)
    return prob, gn, names


def local_subproblem(state: BsLocalState, h_n: np.ndarray, config: SystemConfig, layout: IciLayout, uncertainty=None, tol: float = LOCAL_TOL):
    """Solve BS n's subproblem; returns (v_n, G blocks (K, N_t, N_t), weighted power)."""
    prob, gn, names = build_local_problem(state, h_n, config, layout, uncertainty)
    sol = solve_sdp(prob, tol=tol)
    if sol.status is not Status.OPTIMAL:
        raise LocalInfeasible(state.n, sol.status)
    G = np.array([sol.blocks[b] for b in gn])
    v_n = np.array([sol.scalars[nm] for nm in names])
    power = float(config.beta_n[state.n] * np.real(np.trace(G, axis1=1, axis2=2)).sum())
    return v_n, G, power


def dual_update(nu: np.ndarray, c: float, Wv: np.ndarray, v_n: np.ndarray) -> np.ndarray:
    return nu + c * (Wv - v_n)


def global_update(v_hat: np.ndarray, nu_hat: np.ndarray, c: float, layout: IciLayout) -> np.ndarray:
    """v = W^+ (stacked v_hat - stacked nu_hat / c)."""
    return layout.W_pinv @ (np.ravel(v_hat) - np.ravel(nu_hat) / c)


def consensus_residual(v: np.ndarray, v_locals, layout: IciLayout) -> float:
    return max(float(np.linalg.norm(layout.W[n] @ v - v_locals[n])) for n in range(layout.N))


TRACE_COLUMNS = ["iteration", "powers", "total_power", "residual", "feasible"]


def bs_solve(state: BsLocalState, channels: ChannelSet, config, layout, uncertainty=None) -> BsLocalState:
    """Run the local solve for ``state`` and store the results in it."""
    v_n, G, power = local_subproblem(state, channels.local(state.n), config, layout, uncertainty)
    state.v_n, state.G, state.power = v_n, G, power
    return state


def run_sdbf(
    channels: ChannelSet,
    config: SystemConfig,
    c: float = C_DEFAULT,
    max_outer: int = MAX_OUTER,
    stop_tol: float = STOP_TOL,
    uncertainty=None,
    layout: Optional[IciLayout] = None,
) -> ExperimentTrace:
    """Synchronous ADMM loop: all BSs solve, CU averages, all BSs update duals."""
    N = config.N
    if N < 2:
        raise ValueError("distributed design needs N >= 2")
    layout = layout or build_layout(N, config.K)
    states = [BsLocalState.initial(n, layout, c) for n in range(N)]
    v = np.zeros(layout.dim)
    trace = ExperimentTrace(list(TRACE_COLUMNS))
    converged = False
    infeasible_bs = []
    it = 0
    for it in range(1, max_outer + 1):
        for st in states:
            st.v_tilde = v
            try:
                bs_solve(st, channels, config, layout, uncertainty)
            except LocalInfeasible as e:
                infeasible_bs.append(e.n)
        if infeasible_bs:
            # the local feasible sets do not depend on the iterate, so this is final
            trace.add(iteration=it, powers=[s.power for s in states], total_power=np.nan, residual=np.nan, feasible=False)
            break
        v_hat = np.array([s.v_n for s in states])
        nu_hat = np.array([s.nu for s in states])
        v = global_update(v_hat, nu_hat, c, layout)
        for st in states:
            st.nu = dual_update(st.nu, c, layout.W[st.n] @ v, st.v_n)
            st.i_n += 1
        res = consensus_residual(v, v_hat, layout)
        powers = [s.power for s in states]
        trace.add(iteration=it, powers=powers, total_power=float(sum(powers)), residual=res, feasible=True)
        if res <= stop_tol:
            converged = True
            break
    trace.summary = dict(
        converged=converged,
        iterations=it,
        final_power=trace.rows[-1][2] if trace.rows else np.nan,
        final_residual=trace.rows[-1][3] if trace.rows else np.nan,
        feasible=not infeasible_bs,
        local_infeasible=len(infeasible_bs),
        v=v,
        G=np.array([s.G for s in states]) if not infeasible_bs else None,
        v_locals=np.array([s.v_n for s in states]),
        nu=np.array([s.nu for s in states]),
    )
    return trace
