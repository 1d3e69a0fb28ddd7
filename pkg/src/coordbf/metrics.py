"""Figures of merit: SINR, sum rate, feasibility rate, power accuracy, overhead."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


def sinr(g: np.ndarray, h: np.ndarray, sigma2) -> np.ndarray:
    """SINR of every user.

    g[n, k] is the beamformer BS n uses for its user k, h[m, n, k] the channel
    from BS m to user k of cell n. Returns an (N, K) array.
    """
    g = np.asarray(g)
    h = np.asarray(h)
    N, K = g.shape[:2]
    # p[m, n, k, i] = |h_mnk^H g_mi|^2
    p = np.abs(np.einsum("mnka,mia->mnki", h.conj(), g)) ** 2
    total = p.sum(axis=(0, 3))
    idx = np.arange(N)
    sig = p[idx, idx][:, np.arange(K), np.arange(K)]
    interf = total - sig
    return sig / (interf + np.broadcast_to(np.asarray(sigma2, dtype=float), (N, K)))


def sum_rate(gammas) -> float:
    return float(np.sum(np.log2(1.0 + np.asarray(gammas, dtype=float))))


def feasibility_rate(outcomes) -> float:
    """Percentage of truthy outcomes."""
    outcomes = list(outcomes)
    if not outcomes:
        return float("nan")
    return 100.0 * sum(bool(o) for o in outcomes) / len(outcomes)


def normalized_power_accuracy(p_hat, p_ref) -> np.ndarray | float:
    out = np.abs(np.asarray(p_hat, dtype=float) - p_ref) / p_ref
    return float(out) if np.ndim(out) == 0 else out


def settling_iteration(acc, threshold: float = 0.01):
    """First 1-based index after which the sequence stays at or below threshold.

    Returns None if the last entry is above the threshold.
    """
    acc = np.asarray(acc, dtype=float)
    if len(acc) == 0 or not acc[-1] <= threshold:
        return None
    above = np.flatnonzero(~(acc <= threshold))
    return int(above[-1]) + 2 if len(above) else 1


def signaling_overhead(mode: str, N: int, K: int, N_t: int, iterations: int = 1) -> int:
    """Number of exchanged real values.

    ``centralized``: 2 N_t K N (N-1) for the cross-channel CSI;
    ``adbf``: N K per iteration; ``prior``: (N-1) N K per iteration.
    """
    if mode == "centralized":
        return 2 * N_t * K * N * (N - 1)
    if mode == "adbf":
        return N * K * iterations
    if mode == "prior":
        return (N - 1) * N * K * iterations
    raise ValueError(f"unknown mode {mode!r}")


def to_dbm(p_mw) -> np.ndarray | float:
    """Power in dBm assuming linear values in mW."""
    out = 10.0 * np.log10(np.asarray(p_mw, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ExperimentTrace:
    """Per-iteration records plus a final summary."""

    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add(self, **row) -> None:
        self.rows.append([row.get(c) for c in self.columns])

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue() if fh is None else ""


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_fmt(x) for x in np.ravel(v))
    return v
