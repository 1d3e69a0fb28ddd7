"""Index algebra for the inter-cell-interference (ICI) consensus variables.

The global vector stacks v_mnk (interference power from BS m onto user k of
cell n, m != n) ordered by m, then n != m ascending, then k. The local vector
of BS n is [V_n1..V_nK, v_nmk for m != n ascending and k], where V_nk is the
total interference user nk receives from other cells and v_nmk the
interference BS n causes to user k of cell m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidDimensions(ValueError):
    pass


@dataclass(frozen=True)
class IciLayout:
    N: int
    K: int
    W: tuple  # per-BS (NK, N(N-1)K) 0/1 matrices
    W_stack: np.ndarray
    W_pinv: np.ndarray

    @property
    def dim(self) -> int:
        return self.N * (self.N - 1) * self.K

    @property
    def local_dim(self) -> int:
        return self.N * self.K

    def global_index(self, m: int, n: int, k: int) -> int:
        """Position of v_mnk (BS m onto user k of cell n) in the global vector."""
        if m == n:
            raise IndexError("v_mnk is defined for m != n only")
        n_rel = n if n < m else n - 1
        return (m * (self.N - 1) + n_rel) * self.K + k

    def local_V_index(self, k: int) -> int:
        return k

    def local_v_index(self, n: int, m: int, k: int) -> int:
        """Position of v_nmk (BS n onto user k of cell m) in BS n's local vector."""
        if m == n:
            raise IndexError("v_nmk is defined for m != n only")
        m_rel = m if m < n else m - 1
        return self.K + m_rel * self.K + k

    def others(self, n: int):
        return [m for m in range(self.N) if m != n]

    def split(self, stacked: np.ndarray) -> list:
        L = self.local_dim
        return [stacked[n * L : (n + 1) * L] for n in range(self.N)]


def build_layout(N: int, K: int) -> IciLayout:
    if N < 2 or K < 1:
        raise InvalidDimensions(f"need N >= 2 and K >= 1, got N={N}, K={K}")
    proto = IciLayout(N, K, (), np.zeros(0), np.zeros(0))
    Ws = []
    for n in range(N):
        Wn = np.zeros((N * K, N * (N - 1) * K))
        for k in range(K):
            for m in range(N):
                if m != n:
                    Wn[proto.local_V_index(k), proto.global_index(m, n, k)] = 1.0
                    Wn[proto.local_v_index(n, m, k), proto.global_index(n, m, k)] = 1.0
        Ws.append(Wn)
    W = np.vstack(Ws)
    # least-squares pseudoinverse through a QR factorization (W has full column rank)
    Q, R = np.linalg.qr(W)
    W_pinv = np.linalg.solve(R, Q.T)
    for Wn in Ws:
        Wn.setflags(write=False)
    W.setflags(write=False)
    W_pinv.setflags(write=False)
    return IciLayout(N, K, tuple(Ws), W, W_pinv)


def compute_local_ici(n: int, g_n: np.ndarray, h_n: np.ndarray, layout: IciLayout) -> np.ndarray:
    """Local ICI vector of BS n from its beamformers.

    g_n is (K, N_t); h_n[m, k] is the channel from BS n to user k of cell m.
    V entries are placeholders (zero); they come from the other cells.
    """
    out = np.zeros(layout.local_dim)
    for m in layout.others(n):
        for k in range(layout.K):
            out[layout.local_v_index(n, m, k)] = float(np.sum(np.abs(g_n.conj() @ h_n[m, k]) ** 2))
    return out
