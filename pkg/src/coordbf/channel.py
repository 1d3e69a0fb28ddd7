"""Geometric mmWave channels, ULA responses, AoD dictionary, CSI perturbation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


@dataclass
class SystemConfig:
    """Network dimensions and QoS parameters.

    ``sigma2``, ``gamma`` may be scalars or (N, K) arrays; ``beta`` a scalar
    or length-N array. They are broadcast by the accessor properties.
    """

    N: int = 2
    K: int = 2
    N_t: int = 16
    N_rf: Optional[int] = None
    L: int = 3
    d_over_lambda: float = 0.5
    G: int = 64
    sigma2: object = 1.0
    gamma: object = 1.0
    beta: object = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.N_rf is None:
            self.N_rf = self.K
        if self.N < 1 or self.K < 1 or self.L < 1 or self.N_t < 1:
            raise ValueError("N, K, L and N_t must be positive")
        if not 1 <= self.N_rf <= self.N_t:
            raise ValueError("need 1 <= N_rf <= N_t")
        for nm in ("sigma2", "gamma", "beta"):
            if np.any(np.asarray(getattr(self, nm)) <= 0):
                raise ValueError(f"{nm} must be positive")

    @property
    def sigma2_nk(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma2, dtype=float), (self.N, self.K)).copy()

    @property
    def gamma_nk(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.gamma, dtype=float), (self.N, self.K)).copy()

    @property
    def beta_n(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.beta, dtype=float), (self.N,)).copy()

    def with_(self, **kw) -> "SystemConfig":
        return replace(self, **kw)


@dataclass
class ChannelSet:
    """h[m, n, k] is the channel from BS m to user k of cell n (length N_t)."""

    h: np.ndarray
    gains: Optional[np.ndarray] = None
    aods: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        if self.h.ndim != 4 or self.h.shape[0] != self.h.shape[1]:
            raise ValueError(f"channel array must have shape (N, N, K, N_t), got {self.h.shape}")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channel entries must be finite")

    @property
    def N(self) -> int:
        return self.h.shape[0]

    @property
    def K(self) -> int:
        return self.h.shape[2]

    @property
    def N_t(self) -> int:
        return self.h.shape[3]

    def local(self, n: int) -> np.ndarray:
        """Channels from BS n to every user, shape (N, K, N_t)."""
        return self.h[n]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "n", "k", "antenna", "real", "imag"])
            for idx in np.ndindex(self.h.shape):
                v = self.h[idx]
                w.writerow([*idx, repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path) -> "ChannelSet":
        rows = []
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            next(r)
            for row in r:
                rows.append((int(row[0]), int(row[1]), int(row[2]), int(row[3]), float(row[4]), float(row[5])))
        arr = np.array(rows, dtype=float)
        shape = tuple(int(arr[:, i].max()) + 1 for i in range(4))
        h = np.zeros(shape, dtype=complex)
        idx = tuple(arr[:, i].astype(int) for i in range(4))
        h[idx] = arr[:, 4] + 1j * arr[:, 5]
        return cls(h)


def array_response(theta, N_t: int, d_over_lambda: float = 0.5) -> np.ndarray:
    """ULA steering vector with entries exp(j 2 pi d/lambda p sin(theta)) / sqrt(N_t).

    ``theta`` may be an array; the antenna axis is appended last.
    """
    theta = np.asarray(theta, dtype=float)
    p = np.arange(N_t)
    phase = 2.0 * np.pi * d_over_lambda * np.multiply.outer(np.sin(theta), p)
    return np.exp(1j * phase) / np.sqrt(N_t)


def sample_channel(config: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw h_mnk = sqrt(N_t/L) sum_l alpha_l a(theta_l) for every link."""
    N, K, L, Nt = config.N, config.K, config.L, config.N_t
    shape = (N, N, K, L)
    gains = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    aods = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    a = array_response(aods, Nt, config.d_over_lambda)  # (N, N, K, L, Nt)
    h = np.sqrt(Nt / L) * np.einsum("mnkl,mnklp->mnkp", gains, a)
    return ChannelSet(h, gains=gains, aods=aods)


def dictionary_grid(G: int) -> np.ndarray:
    """Grid 2(g-1)/G - 1 for g = 1..G."""
    return 2.0 * np.arange(G) / G - 1.0


def build_dictionary(G: int, N_t: int, d_over_lambda: float = 0.5) -> np.ndarray:
    """N_t x G matrix of unit-norm array responses on a uniform spatial-frequency grid.

    Column g steers to the angle whose sine equals 2(g-1)/G - 1, so the grid
    values are the per-antenna phase progressions (in units of 2 pi d/lambda)
    and all G columns are distinct.
    """
    if G < 1:
        raise ValueError("G must be positive")
    u = dictionary_grid(G)
    return array_response(np.arcsin(u), N_t, d_over_lambda).T


def sample_ball(shape, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Complex vectors uniform in the Euclidean ball of given radius; last axis is the vector."""
    shape = tuple(shape)
    dim = shape[-1]
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    # 2*dim real degrees of freedom
    r = radius * rng.uniform(size=shape[:-1] + (1,)) ** (1.0 / (2 * dim))
    return z * r


def perturb_channel(channels: ChannelSet, epsilon: float, rng: np.random.Generator) -> ChannelSet:
    """Add an error uniform in the ball of radius ``epsilon`` to every link."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon == 0:
        return ChannelSet(channels.h.copy(), channels.gains, channels.aods)
    xi = sample_ball(channels.h.shape, epsilon, rng)
    return ChannelSet(channels.h + xi, channels.gains, channels.aods)
