"""Small dense semidefinite programming solver.

Primal-dual interior-point method on the homogeneous self-dual embedding with
Nesterov-Todd scaling and Mehrotra predictor-corrector steps.

User problems are stated over complex Hermitian PSD blocks and nonnegative
scalars, with trace-linear constraints and affine LMIs. Internally every LMI
becomes a slack PSD block tied to the decision variables by entrywise linear
equalities, giving the standard form

    minimize    sum_b <C_b, X_b> + c_l^T x
    subject to  sum_b <A_ib, X_b> + a_i^T x = b_i,   X_b >= 0,  x >= 0.

Blocks stay in native complex arithmetic; an LMI whose data is entirely real
gets a real symmetric slack block.
"""

from __future__ import annotations

import enum
from functools import lru_cache
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

HERM_TOL = 1e-9
# absolute duality-gap floor (scaled units) for problems with objective near zero
GAP_FLOOR = 1e-11


class ConicError(Exception):
    """Base class for solver input errors."""


class NonHermitianInput(ConicError, ValueError):
    pass


class DimensionMismatch(ConicError, ValueError):
    pass


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"

    def __str__(self) -> str:
        return self.value


@dataclass
class TraceConstraint:
    """sum_j Tr(A_j X_j) + sum_j c_j s_j  (sense)  rhs, sense in {">=", "<=", "=="}."""

    blocks: dict
    scalars: dict
    sense: str
    rhs: float
    name: str = ""


@dataclass
class LmiConstraint:
    """const + sum coef * P X P^H + sum s_j F_j  is PSD.

    ``blocks`` holds (block name, coef, P) triples; P may be None for the
    identity. ``scalars`` maps scalar names to Hermitian matrices F_j.
    """

    const: np.ndarray
    blocks: list = field(default_factory=list)
    scalars: dict = field(default_factory=dict)
    name: str = ""


Constraint = Union[TraceConstraint, LmiConstraint]


@dataclass
class SdpProblem:
    blocks: list = field(default_factory=list)  # (name, side)
    scalars: list = field(default_factory=list)  # names
    objective_blocks: dict = field(default_factory=dict)  # name -> weight on Tr, or matrix
    objective_scalars: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)

    def add_block(self, name: str, side: int) -> str:
        self.blocks.append((name, int(side)))
        return name

    def add_scalar(self, name: str) -> str:
        self.scalars.append(name)
        return name

    def add(self, con: Constraint) -> None:
        self.constraints.append(con)

    def block_sides(self) -> dict:
        return dict(self.blocks)


@dataclass
class SdpSolution:
    status: Status
    blocks: dict
    scalars: dict
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    dual_objective: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# validation and compilation to standard form


def _check_herm(M: np.ndarray, what: str) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{what}: expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{what}: non-finite entries")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M - M.conj().T).max(initial=0.0) > HERM_TOL * scale:
        raise NonHermitianInput(f"{what}: coefficient matrix is not Hermitian")
    return 0.5 * (M + M.conj().T)


def _coef_matrix(val, side: int, what: str) -> np.ndarray:
    if np.isscalar(val):
        if not np.isfinite(val):
            raise ValueError(f"{what}: non-finite coefficient")
        return float(val) * np.eye(side)
    M = _check_herm(val, what)
    if M.shape[0] != side:
        raise DimensionMismatch(f"{what}: side {M.shape[0]} but block side is {side}")
    return M


def _herm_basis(p: int, real: bool) -> np.ndarray:
    """Orthonormal basis of p x p Hermitian (or real symmetric) matrices."""
    mats = []
    dtype = float if real else complex
    for i in range(p):
        E = np.zeros((p, p), dtype=dtype)
        E[i, i] = 1.0
        mats.append(E)
    s = 1.0 / np.sqrt(2.0)
    for i in range(p):
        for j in range(i + 1, p):
            E = np.zeros((p, p), dtype=dtype)
            E[i, j] = E[j, i] = s
            mats.append(E)
            if not real:
                E = np.zeros((p, p), dtype=complex)
                E[i, j] = 1j * s
                E[j, i] = -1j * s
                mats.append(E)
    return np.array(mats)


def _inner(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.real(np.vdot(A, B)))


@lru_cache(maxsize=None)
def _basis(p: int, real: bool):
    """Basis stack, sparse entry lists (row, col, value) with two slots per element, CSR basis rows."""
    E = _herm_basis(p, real)
    ne = len(E)
    a = np.zeros((ne, 2), dtype=int)
    b = np.zeros((ne, 2), dtype=int)
    val = np.zeros((ne, 2), dtype=float if real else complex)
    for e in range(ne):
        nz = np.argwhere(E[e] != 0)
        for s, (i, j) in enumerate(nz):
            a[e, s], b[e, s], val[e, s] = i, j, E[e, i, j]
    E.setflags(write=False)
    T = sp.csr_matrix(E.reshape(ne, -1))
    return E, a, b, val, T


class _Dense:
    """Constraint rows with explicit coefficient matrices on one block."""

    def __init__(self, idx, A):
        self.idx = np.asarray(idx, dtype=int)
        self.A = np.ascontiguousarray(A)
        self.Ac = self.A.reshape(len(self.idx), -1).conj()
        self.rsc = np.ones(len(self.idx))

    def rownorm2(self):
        return np.sum(np.abs(self.Ac) ** 2, axis=1)

    def op(self, X):
        return self.rsc * np.real(self.Ac @ X.reshape(-1))

    def adj(self, y):
        return np.tensordot(self.rsc * y[self.idx], self.A, axes=1)

    def mats(self):
        return self.rsc[:, None, None] * self.A


class _Kron:
    """Rows coef * P^H E_e P for an orthonormal Hermitian basis {E_e} (LMI rows)."""

    def __init__(self, idx, coef, P, p, real):
        self.idx = np.asarray(idx, dtype=int)
        self.coef = float(coef)
        self.P = P
        self.E, self.a, self.b, self.val, self.T = _basis(p, real)
        self.rsc = np.ones(len(self.idx))

    def _coords(self, Z):
        """<E_e, Z> for every basis element; Z may carry leading batch axes."""
        out = 0.0
        for s in range(2):
            out = out + np.conj(self.val[:, s]) * Z[..., self.a[:, s], self.b[:, s]]
        return np.real(out)

    def rownorm2(self):
        Y = self.P @ self.P.conj().T
        return self.coef**2 * np.diag(_kron_pair(self, self, Y))

    def op(self, X):
        return self.rsc * self.coef * self._coords(self.P @ X @ self.P.conj().T)

    def adj(self, y):
        S = np.tensordot(self.rsc * self.coef * y[self.idx], self.E, axes=1)
        return self.P.conj().T @ S @ self.P

    def mats(self):
        return (self.rsc * self.coef)[:, None, None] * (self.P.conj().T[None] @ self.E @ self.P[None])


def _kron_pair(g1: _Kron, g2: _Kron, Y):
    """Re tr(E_i Y F_l Y^H) for basis elements E_i of g1 and F_l of g2."""
    p1, p2 = Y.shape
    # K4[(a, b), (c, d)] = Y[b, c] conj(Y[a, d])
    K4 = np.einsum("bc,ad->abcd", Y, Y.conj()).reshape(p1 * p1, p2 * p2)
    return np.real(g1.T @ (g2.T @ K4.T).T)


def _pair(g1, g2, W):
    """Schur entries <A_i, W A_l W> between rows of two groups on the same block."""
    if isinstance(g1, _Dense) and isinstance(g2, _Dense):
        T = W[None] @ g2.A @ W[None]
        B = np.real(g1.Ac @ T.reshape(len(g2.idx), -1).T)
    elif isinstance(g1, _Dense):
        T = g2.P[None] @ W[None] @ g1.A @ W[None] @ g2.P.conj().T[None]
        B = g2.coef * g2._coords(T)
    elif isinstance(g2, _Dense):
        return _pair(g2, g1, W).T
    else:
        Y = g1.P @ W @ g2.P.conj().T
        B = g1.coef * g2.coef * _kron_pair(g1, g2, Y)
    return B * np.outer(g1.rsc, g2.rsc)


def _sel(i, j):
    """Index for the (i, j) submatrix; plain slices when both runs are contiguous."""
    def run(ix):
        if len(ix) and ix[-1] - ix[0] == len(ix) - 1:
            return slice(int(ix[0]), int(ix[-1]) + 1)
        return None

    ri, rj = run(i), run(j)
    if ri is not None and rj is not None:
        return ri, rj
    return np.ix_(i, j)


class _Block:
    """A PSD block of the standard form with the constraint rows touching it."""

    def __init__(self, name, side, real):
        self.name = name
        self.n = side
        self.real = real
        self.dtype = float if real else complex
        self.C = np.zeros((side, side), dtype=self.dtype)
        self.groups: list = []
        self._rows: list = []
        self._mats: list = []

    def add_dense(self, row, A):
        self._rows.append(row)
        self._mats.append(A)

    def finalize(self):
        if self._rows:
            idx = np.array(self._rows)
            A = np.array(self._mats).astype(self.dtype if not self.real else float)
            uniq, inv = np.unique(idx, return_inverse=True)
            if len(uniq) != len(idx):
                merged = np.zeros((len(uniq),) + A.shape[1:], dtype=A.dtype)
                np.add.at(merged, inv, A)
                idx, A = uniq, merged
            self.groups.insert(0, _Dense(idx, A))
        self._rows, self._mats = [], []

    def op(self, X, out):
        for g in self.groups:
            out[g.idx] += g.op(X)

    def adj(self, y):
        M = np.zeros((self.n, self.n), dtype=self.dtype)
        for g in self.groups:
            M = M + g.adj(y)
        return M

    def schur(self, W, M):
        gs = self.groups
        for i, g1 in enumerate(gs):
            for g2 in gs[i:]:
                B = _pair(g1, g2, W)
                M[_sel(g1.idx, g2.idx)] += B
                if g2 is not g1:
                    M[_sel(g2.idx, g1.idx)] += B.T


class _Standard:
    """Compiled standard-form data."""

    def __init__(self, problem: SdpProblem):
        sides = {}
        self.blocks: list[_Block] = []
        self.user_blocks = {}
        for name, side in problem.blocks:
            if side < 1:
                raise DimensionMismatch(f"block {name!r} has side {side}")
            if name in sides:
                raise ValueError(f"duplicate block {name!r}")
            sides[name] = side
            self.user_blocks[name] = len(self.blocks)
            self.blocks.append(_Block(name, side, real=False))
        self.scalar_names = list(problem.scalars)
        if len(set(self.scalar_names)) != len(self.scalar_names):
            raise ValueError("duplicate scalar names")
        self.scalar_index = {s: i for i, s in enumerate(self.scalar_names)}
        self.n_user_scalars = len(self.scalar_names)
        lin_rows: list = []  # (row, scalar index, value)
        b: list = []

        for name, w in problem.objective_blocks.items():
            if name not in sides:
                raise DimensionMismatch(f"objective refers to unknown block {name!r}")
            blk = self.blocks[self.user_blocks[name]]
            blk.C = blk.C + _coef_matrix(w, sides[name], f"objective[{name}]")
        c_user = np.zeros(self.n_user_scalars)
        for name, w in problem.objective_scalars.items():
            if name not in self.scalar_index:
                raise DimensionMismatch(f"objective refers to unknown scalar {name!r}")
            if not np.isfinite(w):
                raise ValueError("non-finite objective coefficient")
            c_user[self.scalar_index[name]] += float(w)
        extra_scalars = 0

        def scalar_idx(name):
            if name not in self.scalar_index:
                raise DimensionMismatch(f"constraint refers to unknown scalar {name!r}")
            return self.scalar_index[name]

        for ci, con in enumerate(problem.constraints):
            if isinstance(con, TraceConstraint):
                row = len(b)
                if not np.isfinite(con.rhs):
                    raise ValueError(f"constraint {ci}: non-finite right-hand side")
                for name, A in con.blocks.items():
                    if name not in sides:
                        raise DimensionMismatch(f"constraint refers to unknown block {name!r}")
                    blk = self.blocks[self.user_blocks[name]]
                    blk.add_dense(row, _coef_matrix(A, sides[name], f"constraint {ci} block {name}"))
                for name, val in con.scalars.items():
                    lin_rows.append((row, scalar_idx(name), float(val)))
                if con.sense == ">=":
                    lin_rows.append((row, self.n_user_scalars + extra_scalars, -1.0))
                    extra_scalars += 1
                elif con.sense == "<=":
                    lin_rows.append((row, self.n_user_scalars + extra_scalars, 1.0))
                    extra_scalars += 1
                elif con.sense != "==":
                    raise ValueError(f"unknown constraint sense {con.sense!r}")
                b.append(float(con.rhs))
            elif isinstance(con, LmiConstraint):
                F0 = _check_herm(con.const, f"LMI {ci} constant")
                p = F0.shape[0]
                real = not (np.iscomplexobj(F0) and np.any(np.imag(F0)))
                terms = []
                for name, coef, P in con.blocks:
                    if name not in sides:
                        raise DimensionMismatch(f"LMI refers to unknown block {name!r}")
                    n = sides[name]
                    P = np.eye(n) if P is None else np.asarray(P)
                    if P.shape != (p, n):
                        raise DimensionMismatch(f"LMI {ci}: P for block {name} has shape {P.shape}, expected {(p, n)}")
                    if not np.all(np.isfinite(P)) or not np.isfinite(coef):
                        raise ValueError(f"LMI {ci}: non-finite data")
                    real = real and not (np.iscomplexobj(P) and np.any(np.imag(P)))
                    terms.append((name, float(coef), P))
                sterms = []
                for name, F in con.scalars.items():
                    F = _check_herm(F, f"LMI {ci} scalar {name}")
                    if F.shape != (p, p):
                        raise DimensionMismatch(f"LMI {ci}: scalar matrix {name} has shape {F.shape}")
                    real = real and not (np.iscomplexobj(F) and np.any(np.imag(F)))
                    sterms.append((scalar_idx(name), F))
                E = _basis(p, real)[0]
                ne = len(E)
                rows = np.arange(len(b), len(b) + ne)
                slack = _Block(f"_lmi{ci}", p, real=real)
                slack.groups.append(_Kron(rows, 1.0, np.eye(p), p, real))
                self.blocks.append(slack)
                for name, coef, P in terms:
                    # <E, coef P X P^H> = <coef P^H E P, X>
                    self.blocks[self.user_blocks[name]].groups.append(_Kron(rows, -coef, P.astype(complex), p, real))
                for si, F in sterms:
                    vals = -np.real(np.einsum("eij,ij->e", E.conj(), F))
                    for r, v in zip(rows, vals):
                        if v != 0.0:
                            lin_rows.append((int(r), si, float(v)))
                b.extend(np.real(np.einsum("eij,ij->e", E.conj(), F0)).tolist())
            else:
                raise TypeError(f"unsupported constraint type {type(con).__name__}")

        m = len(b)
        self.m = m
        self.b = np.array(b, dtype=float)
        self.nl = self.n_user_scalars + extra_scalars
        self.Al = np.zeros((m, self.nl))
        for r, j, v in lin_rows:
            self.Al[r, j] += v
        self.cl = np.concatenate([c_user, np.zeros(extra_scalars)])
        for blk in self.blocks:
            blk.finalize()
        self.rs = np.ones(m)
        self.cs = 1.0

    # operators over all blocks
    def op(self, Xs, x):
        out = self.Al @ x
        for blk, X in zip(self.blocks, Xs):
            blk.op(X, out)
        return out

    def adj(self, y):
        return [blk.adj(y) for blk in self.blocks], self.Al.T @ y

    def scale(self):
        """Row-normalize constraints and normalize the objective."""
        sq = np.sum(self.Al**2, axis=1)
        for blk in self.blocks:
            for g in blk.groups:
                np.add.at(sq, g.idx, g.rownorm2())
        rs = np.sqrt(sq)
        rs[rs == 0] = 1.0
        self.Al = self.Al / rs[:, None]
        self.b = self.b / rs
        cn2 = float(np.sum(self.cl**2))
        for blk in self.blocks:
            cn2 += float(np.sum(np.abs(blk.C) ** 2))
            for g in blk.groups:
                g.rsc = g.rsc / rs[g.idx]
        cs = np.sqrt(cn2) if cn2 > 0 else 1.0
        self.cl = self.cl / cs
        for blk in self.blocks:
            blk.C = blk.C / cs
        self.rs, self.cs = rs, cs
        return rs, cs


# ---------------------------------------------------------------------------
# interior-point kernel


def _factor(X):
    """Any square factor L with L L^H = X."""
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (X + X.conj().T))
        return V * np.sqrt(np.maximum(w, 1e-300))


def _nt_scaling(Xs, Zs):
    """R, lam such that R^-1 X R^-H = R^H Z R = diag(lam)."""
    L1 = _factor(Xs)
    L2 = _factor(Zs)
    _, s, Vh = np.linalg.svd(L2.conj().T @ L1)
    R = (L1 @ Vh.conj().T) / np.sqrt(s)
    return R, s


def _max_step(lam, D):
    """Largest alpha with diag(lam) + alpha D PSD (inf if unbounded)."""
    s = 1.0 / np.sqrt(lam)
    e = np.linalg.eigvalsh(D * s[:, None] * s[None, :])
    emin = e[0]
    return np.inf if emin >= 0 else -1.0 / emin


def _sym_prod(A, B):
    P = A @ B
    return 0.5 * (P + P.conj().T)


def _kernel(S: _Standard, tol: float, max_iter: int):
    blocks = S.blocks
    m = S.m
    b, Al, cl = S.b, S.Al, S.cl
    nu = sum(blk.n for blk in blocks) + S.nl
    R = [np.eye(blk.n, dtype=blk.dtype) for blk in blocks]
    lam = [np.ones(blk.n) for blk in blocks]
    x = np.ones(S.nl)
    z = np.ones(S.nl)
    y = np.zeros(m)
    tau = kappa = 1.0
    normb = np.linalg.norm(b)
    normc = np.sqrt(np.sum(cl**2) + sum(np.sum(np.abs(blk.C) ** 2) for blk in blocks))
    status = Status.MAX_ITER
    it = 0
    info = {}
    for it in range(max_iter + 1):
        Rinv = [np.linalg.inv(r) for r in R]
        Xs = [(r * l) @ r.conj().T for r, l in zip(R, lam)]
        Zs = [(ri.conj().T * l) @ ri for ri, l in zip(Rinv, lam)]
        Ws = [r @ r.conj().T for r in R]
        ATy, ATy_l = S.adj(y)
        AX = S.op(Xs, x)
        rp = b * tau - AX
        Rd = [blk.C * tau - a - Z for blk, a, Z in zip(blocks, ATy, Zs)]
        rd = cl * tau - ATy_l - z
        cx = sum(_inner(blk.C, X) for blk, X in zip(blocks, Xs)) + cl @ x
        by = b @ y
        rg = by - cx - kappa
        gap = sum(float(l @ l) for l in lam) + x @ z
        mu = (gap + tau * kappa) / (nu + 1)

        pres = np.linalg.norm(rp) / tau / (1.0 + normb)
        dres = np.sqrt(sum(np.sum(np.abs(r) ** 2) for r in Rd) + rd @ rd) / tau / (1.0 + normc)
        pobj, dobj = cx / tau, by / tau
        gapv = min(abs(pobj - dobj), gap / tau**2)
        gap_ok = gapv <= tol * max(abs(pobj), abs(dobj)) or gapv <= GAP_FLOOR
        info = dict(pres=pres, dres=dres, pobj=pobj, dobj=dobj, tau=tau, kappa=kappa)
        if pres <= tol and dres <= tol and gap_ok:
            status = Status.OPTIMAL
            break
        if by > 0:
            # (y, Z) with A*y + Z = 0 and b^T y > 0 certifies primal infeasibility
            cert = np.sqrt(sum(np.sum(np.abs(a + Z) ** 2) for a, Z in zip(ATy, Zs)) + np.sum((ATy_l + z) ** 2))
            if cert / by <= tol:
                status = Status.INFEASIBLE
                break
        if cx < 0:
            cert = np.linalg.norm(AX)
            if cert / (-cx) <= tol:
                status = Status.UNBOUNDED
                break
        if it == max_iter:
            break

        # Schur complement
        d2 = x / z
        d = np.sqrt(d2)
        laml = np.sqrt(x * z)
        M = (Al * d2) @ Al.T
        WCW = []
        g = Al @ (d2 * cl)
        q = float(cl @ (d2 * cl))
        for blk, W in zip(blocks, Ws):
            wcw = W @ blk.C @ W
            WCW.append(wcw)
            q += _inner(blk.C, wcw)
            blk.schur(W, M)
            blk.op(wcw, g)
        M = 0.5 * (M + M.T)
        try:
            cf = sla.cho_factor(M, check_finite=False)
            solveM = lambda r: sla.cho_solve(cf, r, check_finite=False)  # noqa: E731
        except np.linalg.LinAlgError:
            reg = 1e-14 * max(1.0, np.abs(np.diag(M)).max())
            w, V = np.linalg.eigh(M)
            w = np.maximum(w, reg)
            solveM = lambda r: V @ ((V.T @ r) / w)  # noqa: E731
        p1 = solveM(g + b)
        den_base = (g - b) @ p1 - q - kappa / tau
        WRdW = [W @ r @ W for W, r in zip(Ws, Rd)]

        def direction(eta, Us, Ul, rtau):
            Ys = [(r @ U) @ r.conj().T - eta * wr for r, U, wr in zip(R, Us, WRdW)]
            yl = d * Ul - eta * d2 * rd
            h1 = eta * rp - S.op(Ys, yl)
            h2 = eta * rg - rtau / tau - sum(_inner(blk.C, Y) for blk, Y in zip(blocks, Ys)) - cl @ yl
            p2 = solveM(h1)
            dtau = (h2 - (g - b) @ p2) / den_base
            dy = p2 + p1 * dtau
            ATdy, ATdy_l = S.adj(dy)
            zt = []
            xt = []
            for r, blk, rdb, a, U in zip(R, blocks, Rd, ATdy, Us):
                dZ = eta * rdb + blk.C * dtau - a
                ztb = r.conj().T @ dZ @ r
                ztb = 0.5 * (ztb + ztb.conj().T)
                zt.append(ztb)
                xt.append(U - ztb)
            dz = eta * rd + cl * dtau - ATdy_l
            ztl = d * dz
            xtl = Ul - ztl
            dkappa = (rtau - kappa * dtau) / tau
            return xt, zt, xtl, ztl, dy, dtau, dkappa

        def steplen(xt, zt, xtl, ztl, dtau, dkappa):
            a = np.inf
            for l, X, Z in zip(lam, xt, zt):
                a = min(a, _max_step(l, X), _max_step(l, Z))
            for u in (xtl, ztl):
                neg = u < 0
                if np.any(neg):
                    a = min(a, np.min(-laml[neg] / u[neg]))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        Us = [np.diag(-l).astype(blk.dtype) for l, blk in zip(lam, blocks)]
        aff = direction(1.0, Us, -laml, -tau * kappa)
        a_aff = min(1.0, steplen(*aff[:4], aff[5], aff[6]))
        sigma = (1.0 - a_aff) ** 3
        xa, za, xla, zla, _, dta, dka = aff
        # corrector
        Us = []
        for l, X, Z, blk in zip(lam, xa, za, blocks):
            rc = -_sym_prod(X, Z)
            rc[np.diag_indices_from(rc)] += sigma * mu - l * l
            Us.append(2.0 * rc / (l[:, None] + l[None, :]))
        Ul = (sigma * mu - laml * laml - xla * zla) / laml
        rtau = sigma * mu - tau * kappa - dta * dka
        xt, zt, xtl, ztl, dy, dtau, dkappa = direction(1.0 - sigma, Us, Ul, rtau)
        alpha = min(1.0, 0.99 * steplen(xt, zt, xtl, ztl, dtau, dkappa))

        newR, newlam = [], []
        for r, l, X, Z in zip(R, lam, xt, zt):
            Xn = np.diag(l) + alpha * X
            Zn = np.diag(l) + alpha * Z
            r2, l2 = _nt_scaling(0.5 * (Xn + Xn.conj().T), 0.5 * (Zn + Zn.conj().T))
            newR.append(r @ r2)
            newlam.append(l2)
        R, lam = newR, newlam
        x = x + alpha * d * xtl
        z = z + alpha * ztl / d
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa
        # guard against drift to the boundary of the orthant
        x = np.maximum(x, 1e-300)
        z = np.maximum(z, 1e-300)

    Xs = [(r * l) @ r.conj().T for r, l in zip(R, lam)]
    return status, Xs, x, y, tau, it, info


def solve_sdp(problem: SdpProblem, tol: float = 1e-7, max_iter: int = 200) -> SdpSolution:
    """Solve ``problem``; see module docstring for the standard form."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    S = _Standard(problem)
    b_norm = float(np.linalg.norm(S.b))
    rs, cs = S.scale()
    status, Xs, x, y, tau, it, info = _kernel(S, tol, max_iter)

    if status in (Status.OPTIMAL, Status.MAX_ITER):
        Xs = [X / tau for X in Xs]
        x = x / tau
    blocks = {}
    for name, i in S.user_blocks.items():
        X = Xs[i]
        blocks[name] = 0.5 * (X + X.conj().T)
    scalars = {nm: float(x[i]) for nm, i in S.scalar_index.items()}
    if status in (Status.OPTIMAL, Status.MAX_ITER):
        obj = cs * (sum(_inner(blk.C, X) for blk, X in zip(S.blocks, Xs)) + S.cl @ x)
        pres = np.linalg.norm(rs * (S.op(Xs, x) - S.b)) / (1.0 + b_norm)
        dres = info.get("dres", np.nan)
        dobj = info.get("dobj", np.nan) * cs
    else:
        obj = np.nan
        pres = info.get("pres", np.nan)
        dres = info.get("dres", np.nan)
        dobj = np.nan
    return SdpSolution(
        status=status,
        blocks=blocks,
        scalars=scalars,
        objective=float(obj),
        primal_residual=float(pres),
        dual_residual=float(dres),
        iterations=it,
        dual_objective=float(dobj),
    )


# ---------------------------------------------------------------------------
# helpers


def extract_principal(block: np.ndarray, tol: float = 1e-12):
    """Largest eigenvalue and a unit eigenvector with a fixed phase.

    For a repeated top eigenvalue the vector is the normalized projection of
    the lowest-index canonical basis vector onto the top eigenspace. The
    first entry with nonzero magnitude is made real-positive. The zero matrix
    returns (0, e_1).
    """
    A = np.asarray(block)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch("extract_principal expects a square matrix")
    n = A.shape[0]
    A = 0.5 * (A + A.conj().T)
    scale = float(np.abs(A).max(initial=0.0))
    e1 = np.zeros(n, dtype=complex)
    e1[0] = 1.0
    if scale == 0.0:
        return 0.0, e1
    w, V = np.linalg.eigh(A)
    top = w[-1]
    near = np.abs(w - top) <= tol * max(scale, abs(top))
    Vt = V[:, near]
    if Vt.shape[1] == 1:
        v = Vt[:, 0].astype(complex)
    else:
        proj = Vt @ Vt.conj().T
        j = int(np.argmax(np.linalg.norm(proj, axis=0) > 1e-8))
        v = proj[:, j].astype(complex)
        v /= np.linalg.norm(v)
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if len(nz):
        ph = v[nz[0]] / abs(v[nz[0]])
        v = v / ph
    return float(top), v


def dump_triplets(problem: SdpProblem, fh: IO[str]) -> int:
    """Write the compiled standard form as sparse triplets.

    Lines: ``constraint-id block/scalar-id row col real imag``. Constraint id 0
    is the objective; right-hand sides use the pseudo-variable ``rhs``.
    Returns the number of lines written.
    """
    S = _Standard(problem)
    n_lines = 0

    def emit(cid, var, i, j, val):
        nonlocal n_lines
        fh.write(f"{cid} {var} {i} {j} {np.real(val):.17g} {np.imag(val):.17g}\n")
        n_lines += 1

    def var_name(k):
        return S.scalar_names[k] if k < S.n_user_scalars else f"_s{k - S.n_user_scalars}"

    for blk in S.blocks:
        for i, j in zip(*np.nonzero(blk.C)):
            emit(0, blk.name, i, j, blk.C[i, j])
    for k in np.flatnonzero(S.cl):
        emit(0, var_name(k), 0, 0, S.cl[k])
    for blk in S.blocks:
        for grp in blk.groups:
            for r, A in zip(grp.idx, grp.mats()):
                for i, j in zip(*np.nonzero(np.abs(A) > 1e-15)):
                    emit(r + 1, blk.name, i, j, A[i, j])
    for r, k in zip(*np.nonzero(S.Al)):
        emit(r + 1, var_name(k), 0, 0, S.Al[r, k])
    for r in np.flatnonzero(S.b):
        emit(r + 1, "rhs", 0, 0, S.b[r])
    return n_lines
