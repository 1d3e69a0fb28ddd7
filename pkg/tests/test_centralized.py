import numpy as np
import pytest

from coordbf.centralized import (
    ExtractionFailed,
    Infeasible,
    block_name,
    build_sdr_problem,
    extract_beamformers,
    solve_centralized,
)
from coordbf.channel import ChannelSet, SystemConfig, sample_channel
from coordbf.conic import DimensionMismatch, TraceConstraint, solve_sdp
from coordbf.metrics import sinr


def test_problem_counts():
    for N, K in ((1, 1), (2, 2)):
        cfg = SystemConfig(N=N, K=K, N_t=4)
        prob = build_sdr_problem(sample_channel(cfg, np.random.default_rng(0)), cfg)
        assert len(prob.blocks) == N * K
        assert len(prob.constraints) == N * K
        assert all(isinstance(c, TraceConstraint) and c.sense == ">=" for c in prob.constraints)
        assert prob.scalars == []


def test_dimension_mismatch():
    cfg = SystemConfig(N=2, K=2, N_t=4)
    ch = sample_channel(SystemConfig(N=2, K=2, N_t=3), np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        build_sdr_problem(ch, cfg)


def test_constraint_matches_sinr_identity():
    rng = np.random.default_rng(1)
    cfg = SystemConfig(N=2, K=2, N_t=3, gamma=2.0, sigma2=0.7)
    ch = sample_channel(cfg, rng)
    prob = build_sdr_problem(ch, cfg)
    g = rng.standard_normal((2, 2, 3)) + 1j * rng.standard_normal((2, 2, 3))
    G = {block_name(n, k): np.outer(g[n, k], g[n, k].conj()) for n in range(2) for k in range(2)}
    s = sinr(g, ch.h, cfg.sigma2_nk)
    for (n, k), con in zip([(0, 0), (0, 1), (1, 0), (1, 1)], prob.constraints):
        lhs = sum(np.real(np.trace(A @ G[b])) for b, A in con.blocks.items())
        interf = abs(np.vdot(ch.h[n, n, k], g[n, k])) ** 2 / s[n, k] - cfg.sigma2_nk[n, k]
        signal = abs(np.vdot(ch.h[n, n, k], g[n, k])) ** 2
        assert lhs == pytest.approx(signal / 2.0 - interf, rel=1e-10)
        assert (lhs >= con.rhs) == (s[n, k] >= 2.0)


def test_rank1_block_gives_channel_direction():
    h = np.array([1.0, 1j, 0.5])
    cfg = SystemConfig(N=1, K=1, N_t=3)
    ch = ChannelSet(h.reshape(1, 1, 1, 3))
    fd = extract_beamformers(np.outer(h, h.conj()).reshape(1, 1, 3, 3), ch, cfg)
    g = fd.g[0, 0]
    assert abs(abs(np.vdot(g, h)) - np.linalg.norm(h) ** 2) < 1e-10
    assert fd.rank1.all()


def test_single_user_power():
    rng = np.random.default_rng(2)
    for _ in range(10):
        cfg = SystemConfig(N=1, K=1, N_t=4, gamma=rng.uniform(0.5, 5), sigma2=rng.uniform(0.5, 2))
        ch = sample_channel(cfg, rng)
        fd = solve_centralized(ch, cfg)
        ref = cfg.gamma * cfg.sigma2 / np.linalg.norm(ch.h) ** 2
        assert fd.total_weighted == pytest.approx(ref, rel=1e-5)


def test_decoupled_cells():
    # orthogonal cross links: no inter-cell interference
    Nt = 4
    h = np.zeros((2, 2, 1, Nt), dtype=complex)
    h[0, 0, 0] = [1, 1j, 0, 0]
    h[1, 1, 0] = [0, 0, 2, 1]
    h[0, 1, 0] = [0, 0, 1, 1j]  # BS0 -> cell1, orthogonal to any beam along h[0,0,0]
    h[1, 0, 0] = [1, -1j, 0, 0]
    cfg = SystemConfig(N=2, K=1, N_t=Nt, gamma=2.0)
    fd = solve_centralized(ChannelSet(h), cfg)
    for n in range(2):
        assert fd.powers[n] == pytest.approx(2.0 / np.linalg.norm(h[n, n, 0]) ** 2, rel=1e-5)


def test_heavy_interference_infeasible():
    cfg = SystemConfig(N=2, K=2, N_t=2, gamma=1e4)
    ch = sample_channel(cfg, np.random.default_rng(3))
    with pytest.raises(Infeasible):
        solve_centralized(ch, cfg)


def test_sinr_targets_and_lower_bound():
    rng = np.random.default_rng(4)
    for _ in range(5):
        cfg = SystemConfig(N=2, K=2, N_t=6, gamma=2.0)
        ch = sample_channel(cfg, rng)
        fd = solve_centralized(ch, cfg)
        assert np.all(fd.sinr >= cfg.gamma_nk - 1e-5)
        assert fd.total_weighted >= fd.objective - 1e-6


def test_permutation_equivariance():
    cfg = SystemConfig(N=2, K=2, N_t=5, gamma=1.5)
    ch = sample_channel(cfg, np.random.default_rng(5))
    a = solve_centralized(ch, cfg)
    b = solve_centralized(ChannelSet(ch.h[:, :, ::-1]), cfg)
    assert b.objective == pytest.approx(a.objective, rel=1e-6)
    assert np.allclose(np.abs(b.g[:, ::-1]), np.abs(a.g), atol=1e-4)


def test_randomization_path():
    # a rank-2 block forces Gaussian randomization; the result must still meet the targets
    rng = np.random.default_rng(6)
    cfg = SystemConfig(N=1, K=1, N_t=3, gamma=1.0)
    ch = sample_channel(cfg, rng)
    h = ch.h[0, 0, 0]
    u = np.array([h[1].conj(), -h[0].conj(), 0])  # orthogonal to h
    G = np.outer(h, h.conj()) + np.outer(u, u.conj())
    fd = extract_beamformers(G.reshape(1, 1, 3, 3), ch, cfg, rng=np.random.default_rng(0))
    assert not fd.rank1[0, 0]
    assert fd.extra["randomized"]
    assert fd.sinr[0, 0] >= 1.0 - 1e-9


def test_extraction_failure():
    cfg = SystemConfig(N=1, K=2, N_t=2, gamma=1.0)
    h = np.zeros((1, 1, 2, 2), dtype=complex)
    h[0, 0, 0] = [1, 0]
    h[0, 0, 1] = [1, 0]  # identical users cannot both reach SINR 1
    ch = ChannelSet(h)
    G = np.array([[np.eye(2), np.eye(2)]])
    with pytest.raises(ExtractionFailed):
        extract_beamformers(G, ch, cfg, n_rand=5)


def test_power_decreases_with_array_size():
    rng = np.random.default_rng(7)
    p8, p16 = [], []
    for t in range(8):
        c8 = SystemConfig(N=2, K=2, N_t=8)
        c16 = SystemConfig(N=2, K=2, N_t=16)
        p8.append(solve_centralized(sample_channel(c8, np.random.default_rng([7, t])), c8).total_weighted)
        p16.append(solve_centralized(sample_channel(c16, np.random.default_rng([7, t])), c16).total_weighted)
    assert np.median(p16) < np.median(p8)
