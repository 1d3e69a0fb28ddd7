"""Asynchronous distributed beamforming as a seeded discrete-event simulation.

Time advances in ticks. On each tick:

1. broadcasts issued by the CU on the previous tick reach their recipients,
   which update their duals, re-solve their local problems and queue a message;
2. every BS with a queued message gets it through with probability p
   (failed attempts retry on later ticks);
3. the CU buffers the arrivals and fires when it holds at least S fresh
   updates and no absent BS has exhausted its delay budget tau.

BSs and the CU exchange only explicit message tuples.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import ChannelSet, SystemConfig
from .ici import IciLayout, build_layout
from .metrics import ExperimentTrace
from .sync_dist import (
    C_DEFAULT,
    STOP_TOL,
    TRACE_COLUMNS,
    BsLocalState,
    CuState,
    LocalInfeasible,
    bs_solve,
    consensus_residual,
    dual_update,
    global_update,
)

WAITING = None


@dataclass
class AsyncConfig:
    S: int = 1
    tau: int = 4
    p: float = 0.6
    Q: int = 40
    seed: int = 0
    max_ticks: Optional[int] = None

    def validate(self, N: int) -> None:
        if not 1 <= self.S <= N:
            raise ValueError(f"S must be in [1, {N}]")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not 0 < self.p <= 1:
            raise ValueError("p must be in (0, 1]")
        if self.Q < 1:
            raise ValueError("Q must be >= 1")

    def tick_limit(self) -> int:
        if self.max_ticks is not None:
            return self.max_ticks
        # generous guard: the expected number of ticks per CU iteration is at most ~1/p^N
        return int(self.Q * 50 / self.p + 1000)


class ArrivalModel:
    """Seeded Bernoulli(p) transmit successes, one draw per BS per tick."""

    def __init__(self, N: int, p: float, seed: int):
        self.N = N
        self.p = p
        self.rng = np.random.default_rng(seed)

    def draw(self) -> np.ndarray:
        return self.rng.random(self.N) < self.p


@dataclass
class CuProtocol:
    """CU state plus the buffer of fresh updates received since the last firing."""

    state: CuState
    buffer: dict = field(default_factory=dict)  # n -> (v_n, nu_n)


def cu_step(cu: CuProtocol, arrivals: dict, cfg: AsyncConfig, layout: IciLayout, c: float):
    """One CU decision.

    ``arrivals`` maps BS ids to (v_n, nu_n). Returns (v, recipients) when the
    CU fires and WAITING otherwise.
    """
    cu.buffer.update(arrivals)
    st = cu.state
    fresh = sorted(cu.buffer)
    absent = [n for n in range(layout.N) if n not in cu.buffer]
    if len(fresh) < cfg.S or any(st.tau_n[n] >= cfg.tau for n in absent):
        return WAITING
    for n in fresh:
        v_n, nu_n = cu.buffer[n]
        st.v_hat[n] = v_n
        st.nu_hat[n] = nu_n
        st.tau_n[n] = 1
    for n in absent:
        st.tau_n[n] += 1
    assert st.tau_n.max() <= cfg.tau, "bounded-delay invariant violated"
    st.v = global_update(st.v_hat, st.nu_hat, c, layout)
    st.i += 1
    cu.buffer = {}
    return st.v, fresh


def bs_step(state: BsLocalState, received: Optional[np.ndarray], channels: ChannelSet, config, layout, uncertainty=None):
    """One BS reaction. Returns the message (v_n, nu_n, power) to queue, or None when idle.

    On receipt of a global vector the dual is updated against the BS's latest
    local solution, the local clock advances and the local problem is re-solved.
    """
    if received is None:
        return None
    state.nu = dual_update(state.nu, state.c, layout.W[state.n] @ received, state.v_n)
    state.v_tilde = received
    state.i_n += 1
    bs_solve(state, channels, config, layout, uncertainty)
    return (state.v_n.copy(), state.nu.copy(), state.power)


ADBF_COLUMNS = TRACE_COLUMNS + ["tick", "tau", "fresh"]
EVENT_COLUMNS = ["tick", "cu_iter", "event_type", "bs_id", "residual", "total_power"]


def run_adbf(
    channels: ChannelSet,
    config: SystemConfig,
    acfg: AsyncConfig,
    c: float = C_DEFAULT,
    stop_tol: float = STOP_TOL,
    uncertainty=None,
    layout: Optional[IciLayout] = None,
    record_events: bool = False,
) -> ExperimentTrace:
    N = config.N
    if N < 2:
        raise ValueError("distributed design needs N >= 2")
    acfg.validate(N)
    layout = layout or build_layout(N, config.K)
    arrivals = ArrivalModel(N, acfg.p, acfg.seed)
    states = [BsLocalState.initial(n, layout, c) for n in range(N)]
    cu = CuProtocol(CuState.initial(layout))
    known_power = np.zeros(N)
    trace = ExperimentTrace(list(ADBF_COLUMNS))
    events = []
    participation = np.zeros(N, dtype=int)

    def log(tick, kind, n, res=np.nan, power=np.nan):
        if record_events:
            events.append([tick, cu.state.i, kind, n, res, power, *cu.state.tau_n.tolist()])

    outbox: dict = {}  # n -> (v_n, nu_n, power) waiting for a successful transmit
    inbox: dict = {}  # n -> global v delivered at the next tick
    status = "budget"
    tick = 0
    try:
        for st in states:
            bs_solve(st, channels, config, layout, uncertainty)
            outbox[st.n] = (st.v_n.copy(), st.nu.copy(), st.power)
        limit = acfg.tick_limit()
        while True:
            if tick > 0:
                delivered, inbox = inbox, {}
                for n in sorted(delivered):
                    log(tick, "deliver", n)
                    msg = bs_step(states[n], delivered[n], channels, config, layout, uncertainty)
                    if msg is not None:
                        outbox[n] = msg
            ok = arrivals.draw()
            arrived = {}
            for n in sorted(outbox):
                if ok[n]:
                    v_n, nu_n, power = outbox.pop(n)
                    arrived[n] = (v_n, nu_n)
                    known_power[n] = power
                    log(tick, "arrive", n, power=power)
            out = cu_step(cu, arrived, acfg, layout, c)
            if out is WAITING:
                log(tick, "wait", -1)
            else:
                v, fresh = out
                participation[fresh] += 1
                for n in fresh:
                    inbox[n] = v
                res = consensus_residual(v, cu.state.v_hat, layout)
                powers = known_power.tolist()
                total = float(sum(powers))
                trace.add(
                    iteration=cu.state.i,
                    powers=powers,
                    total_power=total,
                    residual=res,
                    feasible=True,
                    tick=tick,
                    tau=cu.state.tau_n.tolist(),
                    fresh=list(fresh),
                )
                log(tick, "fire", -1, res, total)
                if res <= stop_tol:
                    status = "converged"
                    break
                if cu.state.i >= acfg.Q:
                    status = "budget"
                    break
            tick += 1
            if tick > limit:
                status = "aborted"
                break
    except LocalInfeasible:
        status = "infeasible"
    trace.summary = dict(
        status=status,
        converged=status == "converged",
        feasible=status != "infeasible",
        aborted=status == "aborted",
        iterations=cu.state.i,
        ticks=tick,
        final_power=trace.rows[-1][2] if trace.rows else np.nan,
        final_residual=trace.rows[-1][3] if trace.rows else np.nan,
        local_iterations=[s.i_n for s in states],
        participation=participation.tolist(),
        v=cu.state.v,
        G=np.array([s.G for s in states]) if status != "infeasible" else None,
        events=events,
    )
    return trace


def events_to_csv(trace: ExperimentTrace, N: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_COLUMNS + [f"tau_{n + 1}" for n in range(N)])
    for e in trace.summary.get("events", []):
        w.writerow([repr(x) if isinstance(x, float) else x for x in e])
    return buf.getvalue()
