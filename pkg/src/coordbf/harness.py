"""Monte-Carlo experiment orchestration, cross-pipeline comparison and self-checks.

Every trial draws its channels from ``default_rng([seed, trial])`` so the same
realizations are reused across the points of a sweep, and results are reduced
in (point, trial) order so the output does not depend on the worker count.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .async_proto import AsyncConfig, run_adbf
from .centralized import DesignInfeasible, solve_centralized
from .channel import SystemConfig, build_dictionary, perturb_channel, sample_channel
from .hybrid import bl_decompose, evaluate_hybrid, somp_decompose
from .ici import build_layout
from .metrics import (
    normalized_power_accuracy,
    settling_iteration,
    signaling_overhead,
    sinr,
    sum_rate,
    to_dbm,
)
from .robust import UncertaintyModel, run_robust_adbf, solve_robust_centralized, verify_robust_sinr
from .sync_dist import C_DEFAULT, STOP_TOL, TRACE_COLUMNS, run_sdbf

EXPERIMENTS = (
    "feasibility_vs_gamma",
    "feasibility_vs_eps",
    "power_vs_gamma",
    "power_per_realization",
    "accuracy_vs_iter",
    "convergence_vs_S",
    "convergence_vs_tau",
    "sumrate_bl_vs_somp",
)

LIMITS = dict(N=4, K=3, N_t=16, G=64)
ACC_THRESHOLD = 0.01


class GuardrailError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    experiment: str
    grid: list
    trials: int = 20
    seed: int = 0
    system: dict = field(default_factory=dict)
    async_: dict = field(default_factory=dict)
    eps: float = 0.0
    c: float = C_DEFAULT
    max_iter: int = 300
    stop_tol: float = STOP_TOL

    def validate(self, allow_large: bool = False) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.grid:
            raise ValueError("sweep grid is empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        cfg = self.config()
        if not allow_large:
            for key, lim in LIMITS.items():
                if getattr(cfg, key) > lim:
                    raise GuardrailError(f"{key}={getattr(cfg, key)} exceeds the desk-scale limit {lim} (use --allow-large)")

    def config(self, **over) -> SystemConfig:
        return SystemConfig(**{**self.system, **over})

    def async_config(self, **over) -> AsyncConfig:
        return AsyncConfig(**{**self.async_, **over})


# experiment-specific defaults layered under the config file
DEFAULTS = {
    "feasibility_vs_gamma": dict(grid=[0.0, 2.0, 4.0, 6.0, 8.0, 10.0], system=dict(N=2, K=2), eps=0.4),
    "feasibility_vs_eps": dict(grid=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5], system=dict(N=2, K=2, gamma=10 ** 0.5)),
    "power_vs_gamma": dict(grid=[0.0, 2.0, 4.0, 6.0, 8.0, 10.0], system=dict(N=2, K=2), eps=0.1),
    "power_per_realization": dict(grid=[20, 40], system=dict(N=2, K=2), eps=0.1),
    "accuracy_vs_iter": dict(grid=[1, 2], system=dict(N=2, K=2)),
    "convergence_vs_S": dict(grid=[1, 2, 3, 4], system=dict(N=4, K=2), async_=dict(tau=4)),
    "convergence_vs_tau": dict(grid=[1, 2, 4, 8], system=dict(N=4, K=2), async_=dict(S=2)),
    "sumrate_bl_vs_somp": dict(grid=[0.0, 2.0, 4.0, 6.0, 8.0, 10.0], system=dict(N=3, K=2, N_t=16), async_=dict(S=2), eps=0.1),
}

_INT_KEYS = {"N", "K", "N_t", "N_rf", "L", "G", "seed", "S", "tau", "Q", "max_ticks"}


def _parse(key: str, raw: str):
    raw = raw.strip()
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def _parse_grid(raw: str) -> list:
    return [float(x) for x in raw.replace(",", " ").split()]


def load_config(path: Optional[str]) -> dict:
    """Read an INI file with sections [system], [async], [robust], [experiment]."""
    out = {"system": {}, "async": {}, "robust": {}, "experiment": {}}
    if path is None:
        return out
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    for sec in cp.sections():
        if sec not in out:
            raise ValueError(f"unknown config section [{sec}]")
        for key, raw in cp.items(sec):
            key = _canonical_key(key)
            if sec == "experiment":
                if key == "grid":
                    out[sec][key] = _parse_grid(raw)
                elif key in ("trials", "seed", "max_iter"):
                    out[sec][key] = int(raw)
                elif key == "id":
                    out[sec][key] = raw.strip()
                else:
                    out[sec][key] = float(raw)
            elif sec == "robust":
                out[sec][key] = float(raw)
            else:
                out[sec][key] = _parse(key, raw)
    return out


def _canonical_key(key: str) -> str:
    # configparser lower-cases keys; restore the symbol spelling
    return {"n": "N", "k": "K", "n_t": "N_t", "n_rf": "N_rf", "l": "L", "g": "G", "s": "S", "q": "Q"}.get(key, key)


def make_spec(experiment: Optional[str] = None, file_cfg: Optional[dict] = None, **flags) -> ExperimentSpec:
    """Experiment defaults < config file < CLI flags."""
    file_cfg = file_cfg or {"system": {}, "async": {}, "robust": {}, "experiment": {}}
    exp = experiment or file_cfg["experiment"].get("id")
    if exp is None:
        raise ValueError("no experiment selected")
    if exp not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    d = DEFAULTS[exp]
    e = file_cfg["experiment"]
    spec = ExperimentSpec(
        experiment=exp,
        grid=list(e.get("grid", d["grid"])),
        trials=int(e.get("trials", 20)),
        seed=int(e.get("seed", 0)),
        system={**d.get("system", {}), **file_cfg["system"]},
        async_={**d.get("async_", {}), **file_cfg["async"]},
        eps=float(file_cfg["robust"].get("eps", d.get("eps", 0.0))),
        c=float(e.get("c", C_DEFAULT)),
        max_iter=int(e.get("max_iter", 300)),
        stop_tol=float(e.get("stop_tol", STOP_TOL)),
    )
    for key in ("trials", "seed"):
        if flags.get(key) is not None:
            setattr(spec, key, int(flags[key]))
    return spec


# ---------------------------------------------------------------------------
# trial kernels (module level so worker processes can pickle them)


def _channels(spec: ExperimentSpec, trial: int, cfg: SystemConfig):
    return sample_channel(cfg, np.random.default_rng([spec.seed, trial]))


def _db(x):
    return 10.0 ** (float(x) / 10.0)


def _robust_feasible(ch, cfg, eps):
    """(feasible, power) of the robust centralized design; feasible means SDP optimal and extraction succeeded."""
    if eps == 0:
        try:
            fd = solve_centralized(ch, cfg)
        except DesignInfeasible:
            return False, np.nan
        return True, fd.total_weighted
    unc = UncertaintyModel.spherical(eps, cfg.N, cfg.K)
    try:
        rs = solve_robust_centralized(ch, cfg, unc)
    except DesignInfeasible:
        return False, np.nan
    return True, rs.beamformers.total_weighted


def _accuracy_trace(trace, P):
    acc = normalized_power_accuracy(np.asarray(trace.column("total_power"), dtype=float), P)
    return np.atleast_1d(acc)


def trial_feasibility_vs_gamma(spec, point, trial):
    cfg = spec.config(gamma=_db(point))
    ok, power = _robust_feasible(_channels(spec, trial, cfg), cfg, spec.eps)
    return [dict(feasible=int(ok), power_dbm=to_dbm(power) if ok else np.nan)]


def trial_feasibility_vs_eps(spec, point, trial):
    cfg = spec.config()
    ok, power = _robust_feasible(_channels(spec, trial, cfg), cfg, float(point))
    return [dict(feasible=int(ok), power_dbm=to_dbm(power) if ok else np.nan)]


def trial_power_vs_gamma(spec, point, trial):
    cfg = spec.config(gamma=_db(point))
    ch = _channels(spec, trial, cfg)
    row = dict(centralized_dbm=np.nan, adbf_dbm=np.nan, robust_dbm=np.nan, adbf_converged=0)
    try:
        row["centralized_dbm"] = to_dbm(solve_centralized(ch, cfg).total_weighted)
    except DesignInfeasible:
        return [row]
    tr = run_adbf(ch, cfg, spec.async_config(seed=trial, Q=spec.max_iter), c=spec.c, stop_tol=spec.stop_tol)
    if tr.summary["feasible"]:
        row["adbf_dbm"] = to_dbm(tr.summary["final_power"])
        row["adbf_converged"] = int(tr.summary["converged"])
    if spec.eps > 0:
        ok, power = _robust_feasible(ch, cfg, spec.eps)
        row["robust_dbm"] = to_dbm(power) if ok else np.nan
    return [row]


def trial_power_per_realization(spec, point, trial):
    cfg = spec.config()
    ch = _channels(spec, trial, cfg)
    row = dict(centralized=np.nan, adbf=np.nan, robust_adbf=np.nan)
    try:
        row["centralized"] = solve_centralized(ch, cfg).total_weighted
    except DesignInfeasible:
        return [row]
    acfg = spec.async_config(seed=trial, Q=int(point))
    tr = run_adbf(ch, cfg, acfg, c=spec.c, stop_tol=spec.stop_tol)
    if tr.summary["feasible"]:
        row["adbf"] = tr.summary["final_power"]
    if spec.eps > 0:
        unc = UncertaintyModel.spherical(spec.eps, cfg.N, cfg.K)
        rt = run_robust_adbf(ch, cfg, spec.async_config(seed=trial, Q=int(point)), unc, c=spec.c, stop_tol=spec.stop_tol)
        if rt.summary.get("recovered"):
            row["robust_adbf"] = rt.summary["recovered_power"]
    return [row]


def distributed_run(ch, cfg, spec, S, tau=None, seed=0):
    """SDBF when S == N and tau == 1 (or tau unset with S == N), ADBF otherwise."""
    ac = spec.async_config(S=int(S), seed=seed, Q=spec.max_iter)
    if tau is not None:
        ac.tau = int(tau)
    if int(S) == cfg.N and tau is None:
        return run_sdbf(ch, cfg, c=spec.c, max_outer=spec.max_iter, stop_tol=spec.stop_tol)
    return run_adbf(ch, cfg, ac, c=spec.c, stop_tol=spec.stop_tol)


def trial_accuracy_vs_iter(spec, point, trial):
    cfg = spec.config()
    ch = _channels(spec, trial, cfg)
    try:
        P = solve_centralized(ch, cfg).total_weighted
    except DesignInfeasible:
        return []
    tr = distributed_run(ch, cfg, spec, S=point, seed=trial)
    if not tr.summary["feasible"]:
        return []
    acc = _accuracy_trace(tr, P)
    return [dict(iteration=i + 1, accuracy=float(a)) for i, a in enumerate(acc)]


def _settle_row(ch, cfg, spec, S, tau, seed):
    try:
        P = solve_centralized(ch, cfg).total_weighted
    except DesignInfeasible:
        return dict(feasible=0, settle=np.nan, iterations=0, converged=0)
    tr = distributed_run(ch, cfg, spec, S=S, tau=tau, seed=seed)
    if not tr.summary["feasible"] or tr.summary.get("aborted"):
        return dict(feasible=0, settle=np.nan, iterations=tr.summary["iterations"], converged=0)
    s = settling_iteration(_accuracy_trace(tr, P), ACC_THRESHOLD)
    # runs that never settle are censored at the budget
    return dict(
        feasible=1,
        settle=float(s) if s is not None else float(spec.max_iter + 1),
        iterations=tr.summary["iterations"],
        converged=int(tr.summary["converged"]),
    )


def trial_convergence_vs_S(spec, point, trial):
    cfg = spec.config()
    return [_settle_row(_channels(spec, trial, cfg), cfg, spec, S=point, tau=spec.async_.get("tau", 4), seed=trial)]


def trial_convergence_vs_tau(spec, point, trial):
    cfg = spec.config()
    return [_settle_row(_channels(spec, trial, cfg), cfg, spec, S=spec.async_.get("S", 2), tau=point, seed=trial)]


def trial_sumrate_bl_vs_somp(spec, point, trial):
    """FD from the SDR on estimated channels; rates evaluated on channels perturbed within eps."""
    cfg = spec.config(gamma=_db(point))
    ch = _channels(spec, trial, cfg)
    try:
        fd = solve_centralized(ch, cfg)
    except DesignInfeasible:
        return [dict(feasible=0, fd_rate=np.nan, bl_rate=np.nan, somp_rate=np.nan)]
    rng = np.random.default_rng([spec.seed, trial, 1])
    true = perturb_channel(ch, spec.eps, rng)
    F = build_dictionary(cfg.G, cfg.N_t, cfg.d_over_lambda)
    bl = [bl_decompose(fd.g[n].T, F, cfg.N_rf) for n in range(cfg.N)]
    so = [somp_decompose(fd.g[n].T, F, cfg.N_rf) for n in range(cfg.N)]
    return [
        dict(
            feasible=1,
            fd_rate=sum_rate(sinr(fd.g, true.h, cfg.sigma2_nk)),
            bl_rate=evaluate_hybrid(true, bl, cfg)[1],
            somp_rate=evaluate_hybrid(true, so, cfg)[1],
        )
    ]


TRIALS = {name: globals()[f"trial_{name}"] for name in EXPERIMENTS}


def _run_task(args):
    spec, pi, point, trial = args
    try:
        rows = TRIALS[spec.experiment](spec, point, trial)
        err = ""
    except Exception as e:  # partial-failure tolerant: record, never crash the sweep
        rows, err = [], f"{type(e).__name__}: {e}"
    return [dict(point=point, trial=trial, error=err, **r) for r in rows] or [dict(point=point, trial=trial, error=err or "no result")]


def run_trials(spec: ExperimentSpec, threads: int = 1) -> list:
    tasks = [(spec, pi, p, t) for pi, p in enumerate(spec.grid) for t in range(spec.trials)]
    if threads <= 1:
        chunks = list(map(_run_task, tasks))
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(_run_task, tasks))
    return [r for c in chunks for r in c]


# ---------------------------------------------------------------------------
# summaries and CSV


def _nanmedian(x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(np.median(x)) if len(x) else float("nan")


def _nanmean(x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(np.mean(x)) if len(x) else float("nan")


def summarize(spec: ExperimentSpec, rows: list) -> list:
    out = []
    for point in spec.grid:
        rs = [r for r in rows if r["point"] == point and not r["error"]]
        s = dict(point=point, n=len(rs))
        exp = spec.experiment
        if exp.startswith("feasibility"):
            s["feasibility_rate"] = 100.0 * np.mean([r["feasible"] for r in rs]) if rs else float("nan")
            s["mean_power_dbm"] = _nanmean([r["power_dbm"] for r in rs])
        elif exp == "power_vs_gamma":
            for key in ("centralized_dbm", "adbf_dbm", "robust_dbm"):
                s[f"mean_{key}"] = _nanmean([r[key] for r in rs])
        elif exp == "power_per_realization":
            for key in ("centralized", "adbf", "robust_adbf"):
                s[f"mean_{key}"] = _nanmean([r[key] for r in rs])
        elif exp == "accuracy_vs_iter":
            trials = sorted({r["trial"] for r in rs})
            s["trials"] = len(trials)
            settles = []
            for t in trials:
                acc = [r["accuracy"] for r in rs if r["trial"] == t]
                v = settling_iteration(acc, ACC_THRESHOLD)
                settles.append(np.nan if v is None else v)
            s["median_settle"] = _nanmedian(settles)
        elif exp.startswith("convergence"):
            feas = [r for r in rs if r["feasible"]]
            s["median_settle"] = _nanmedian([r["settle"] for r in feas])
            s["converged"] = int(sum(r["converged"] for r in feas))
        elif exp == "sumrate_bl_vs_somp":
            for key in ("fd_rate", "bl_rate", "somp_rate"):
                s[f"mean_{key}"] = _nanmean([r[key] for r in rs if r["feasible"]])
        out.append(s)
    return out


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def provenance(spec: ExperimentSpec) -> list:
    d = asdict(spec)
    return [
        f"# coordbf {__version__}",
        f"# experiment={spec.experiment} seed={spec.seed} trials={spec.trials}",
        "# spec=" + json.dumps(d, sort_keys=True, default=float),
    ]


def write_csv(path: str, header: list, rows: list) -> None:
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in cols])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def run_experiment(spec: ExperimentSpec, out_dir: str = ".", threads: int = 1, allow_large: bool = False) -> list:
    """Run a sweep and write <id>.csv (per trial) and <id>_summary.csv. Returns the paths."""
    spec.validate(allow_large)
    rows = run_trials(spec, threads)
    summary = summarize(spec, rows)
    os.makedirs(out_dir, exist_ok=True)
    head = provenance(spec)
    p1 = os.path.join(out_dir, f"{spec.experiment}.csv")
    p2 = os.path.join(out_dir, f"{spec.experiment}_summary.csv")
    write_csv(p1, head, rows)
    write_csv(p2, head, summary)
    return [p1, p2]


# ---------------------------------------------------------------------------
# cross-pipeline comparison


def same_trace(sync_trace, async_trace) -> bool:
    """Bitwise equality of the shared columns (iteration, powers, total power, residual, feasibility)."""
    n = len(TRACE_COLUMNS)
    a = [r[:n] for r in sync_trace.rows]
    b = [r[:n] for r in async_trace.rows]
    return repr(a) == repr(b)


def compare_pipelines(channels, config: SystemConfig, acfg: Optional[AsyncConfig] = None, eps: float = 0.0, c: float = C_DEFAULT, max_iter: int = 300) -> dict:
    """Run every pipeline on one instance; returns table rows and cross-checks."""
    acfg = acfg or AsyncConfig()
    rows = []

    def add(name, status, power, iterations, margin):
        rows.append(dict(pipeline=name, status=status, power=power, iterations=iterations, min_sinr_margin=margin))

    gam = config.gamma_nk
    try:
        fd = solve_centralized(channels, config)
        P = fd.total_weighted
        add("centralized", "feasible", P, fd.extra.get("sdp_iterations", 0), float(np.min(fd.sinr - gam)))
    except DesignInfeasible as e:
        add("centralized", f"infeasible ({e})", np.nan, 0, np.nan)
        return dict(rows=rows, checks={})
    sd = run_sdbf(channels, config, c=c, max_outer=max_iter)
    add("sdbf", "converged" if sd.summary["converged"] else "not converged", sd.summary["final_power"], sd.summary["iterations"], np.nan)
    ad = run_adbf(channels, config, AsyncConfig(**{**asdict(acfg), "Q": max_iter}), c=c)
    add("adbf", ad.summary["status"], ad.summary["final_power"], ad.summary["iterations"], np.nan)
    red = run_adbf(channels, config, AsyncConfig(S=config.N, tau=1, p=1.0, Q=max_iter), c=c)
    add("adbf_reduced", red.summary["status"], red.summary["final_power"], red.summary["iterations"], np.nan)
    checks = {
        "sdbf_gap_le_2pct": bool(sd.summary["converged"] and abs(sd.summary["final_power"] - P) <= 0.02 * P),
        "reduced_adbf_equals_sdbf": same_trace(sd, red),
    }
    if eps > 0:
        unc = UncertaintyModel.spherical(eps, config.N, config.K)
        try:
            rs = solve_robust_centralized(channels, config, unc)
            Pr = rs.beamformers.total_weighted
            add("robust_centralized", "feasible", Pr, rs.extra["sdp_iterations"], float(rs.margins.min()))
            checks["robust_ge_nominal"] = bool(Pr >= P * (1 - 1e-6))
        except DesignInfeasible as e:
            add("robust_centralized", f"infeasible ({e})", np.nan, 0, np.nan)
    return dict(rows=rows, checks=checks)


# ---------------------------------------------------------------------------
# self-checks for the verify subcommand


def verify_invariants(seed: int = 0, trials: int = 3) -> list:
    """Fast invariant checks on small instances. Returns (name, ok, detail) triples."""
    from .conic import SdpProblem, Status, TraceConstraint, solve_sdp
    from .sync_dist import global_update

    out = []
    rng = np.random.default_rng(seed)

    # single-user closed form
    worst = 0.0
    for _ in range(10 * trials):
        Nt = int(rng.integers(1, 6))
        h = rng.standard_normal(Nt) + 1j * rng.standard_normal(Nt)
        gam, s2 = rng.uniform(0.1, 10), rng.uniform(0.1, 10)
        prob = SdpProblem()
        prob.add_block("G", Nt)
        prob.objective_blocks["G"] = 1.0
        prob.add(TraceConstraint({"G": np.outer(h, h.conj()) / gam}, {}, ">=", s2))
        sol = solve_sdp(prob)
        ref = gam * s2 / np.linalg.norm(h) ** 2
        worst = max(worst, abs(sol.objective - ref) / ref if sol.status is Status.OPTIMAL else np.inf)
    out.append(("single_user_closed_form", worst <= 1e-6, f"max rel err {worst:.2e}"))

    # consensus round trip
    err = 0.0
    for N in (2, 3, 4):
        for K in (1, 2, 3):
            lay = build_layout(N, K)
            v = rng.standard_normal(lay.dim)
            stack = np.array([W @ v for W in lay.W])
            err = max(err, float(np.abs(global_update(stack, np.zeros_like(stack), 1.0, lay) - v).max()))
    out.append(("ici_round_trip", err <= 1e-10, f"max err {err:.1e}"))

    # overhead closed forms
    ok = signaling_overhead("centralized", 2, 2, 16) == 128 and signaling_overhead("adbf", 3, 2, 16, 1) == 6
    out.append(("overhead_closed_forms", ok, ""))

    # protocol reduction and bounded delay on small instances
    cfg = SystemConfig(N=2, K=2, N_t=4, gamma=1.0)
    same = True
    bounded = True
    for t in range(trials):
        ch = sample_channel(cfg, np.random.default_rng([seed, t]))
        sd = run_sdbf(ch, cfg, max_outer=30)
        red = run_adbf(ch, cfg, AsyncConfig(S=2, tau=1, p=1.0, Q=30))
        same &= same_trace(sd, red)
        try:
            run_adbf(ch, cfg, AsyncConfig(S=1, tau=2, p=0.5, Q=20, seed=t))
        except AssertionError:
            bounded = False
    out.append(("adbf_reduces_to_sdbf", bool(same), f"{trials} instances"))
    out.append(("bounded_delay", bounded, ""))

    # robust soundness
    worst = np.inf
    for t in range(trials):
        ch = sample_channel(cfg, np.random.default_rng([seed, 100 + t]))
        unc = UncertaintyModel.spherical(0.1, 2, 2)
        try:
            rs = solve_robust_centralized(ch, cfg, unc)
        except DesignInfeasible:
            continue
        m = verify_robust_sinr(rs.beamformers.g, ch, unc, cfg.gamma_nk, cfg.sigma2_nk)
        worst = min(worst, float(m.min()))
    out.append(("robust_soundness", bool(worst >= -1e-4), f"min margin {worst:.2e}"))
    return out
