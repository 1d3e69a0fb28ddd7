import numpy as np
import pytest

from coordbf.channel import (
    ChannelSet,
    SystemConfig,
    array_response,
    build_dictionary,
    dictionary_grid,
    perturb_channel,
    sample_ball,
    sample_channel,
)


def test_array_response_broadside():
    assert np.allclose(array_response(0.0, 4), 0.5 * np.ones(4))


def test_array_response_single_antenna():
    assert np.allclose(array_response(1.234, 1), [1.0])


def test_array_response_entries_and_norm():
    rng = np.random.default_rng(0)
    for theta in rng.uniform(0, 2 * np.pi, 20):
        a = array_response(theta, 7, 0.5)
        assert np.linalg.norm(a) == pytest.approx(1.0)
        p = np.arange(7)
        assert np.allclose(a, np.exp(1j * np.pi * p * np.sin(theta)) / np.sqrt(7))


def test_single_path_norm_identity():
    cfg = SystemConfig(N=2, K=2, N_t=8, L=1)
    ch = sample_channel(cfg, np.random.default_rng(1))
    assert np.allclose(np.linalg.norm(ch.h, axis=-1), np.sqrt(8) * np.abs(ch.gains[..., 0]))


def test_sampling_deterministic():
    cfg = SystemConfig(N=2, K=2, N_t=8)
    a = sample_channel(cfg, np.random.default_rng(7))
    b = sample_channel(cfg, np.random.default_rng(7))
    assert np.array_equal(a.h, b.h)


def test_mean_channel_energy():
    cfg = SystemConfig(N=1, K=1, N_t=8, L=3)
    rng = np.random.default_rng(2)
    e = [np.linalg.norm(sample_channel(cfg, rng).h) ** 2 for _ in range(10_000)]
    assert np.mean(e) == pytest.approx(8.0, rel=0.05)


def test_dictionary_grid_and_columns():
    assert np.allclose(dictionary_grid(2), [-1.0, 0.0])
    F = build_dictionary(64, 16)
    assert F.shape == (16, 64)
    assert np.allclose(np.linalg.norm(F, axis=0), 1.0)
    gram = np.abs(F.conj().T @ F)
    np.fill_diagonal(gram, 0.0)
    assert gram.max() < 1 - 1e-6  # pairwise distinct
    assert np.allclose(np.abs(F), 1 / 4)


def test_dictionary_phase_progression():
    F = build_dictionary(8, 4)
    u = dictionary_grid(8)
    assert np.allclose(F[1] / F[0], np.exp(1j * np.pi * u))


def test_perturb_zero_is_identity():
    cfg = SystemConfig(N=2, K=2, N_t=4)
    ch = sample_channel(cfg, np.random.default_rng(3))
    out = perturb_channel(ch, 0.0, np.random.default_rng(0))
    assert np.array_equal(out.h, ch.h)


def test_perturb_within_ball_and_mean_radius():
    cfg = SystemConfig(N=2, K=2, N_t=4)
    ch = sample_channel(cfg, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    norms = []
    for _ in range(500):
        d = np.linalg.norm(perturb_channel(ch, 0.3, rng).h - ch.h, axis=-1)
        assert d.max() <= 0.3 + 1e-12
        norms.append(d.ravel())
    norms = np.concatenate(norms)
    # radius of a uniform point in a ball of real dimension 2 N_t = 8: E r = eps * 8/9
    assert 0 < norms.mean() < 0.3
    assert norms.mean() == pytest.approx(0.3 * 8 / 9, rel=0.02)


def test_sample_ball_shape():
    x = sample_ball((5, 3), 2.0, np.random.default_rng(0))
    assert x.shape == (5, 3) and np.all(np.linalg.norm(x, axis=-1) <= 2.0)


def test_perturb_negative_radius():
    ch = ChannelSet(np.zeros((1, 1, 1, 2)))
    with pytest.raises(ValueError):
        perturb_channel(ch, -0.1, np.random.default_rng(0))


def test_csv_round_trip(tmp_path):
    cfg = SystemConfig(N=2, K=1, N_t=3)
    ch = sample_channel(cfg, np.random.default_rng(5))
    p = tmp_path / "ch.csv"
    ch.to_csv(p)
    back = ChannelSet.from_csv(p)
    assert np.array_equal(back.h, ch.h)


def test_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(N_t=2, N_rf=3)
    with pytest.raises(ValueError):
        SystemConfig(gamma=0.0)
    assert SystemConfig(K=3).N_rf == 3
    cfg = SystemConfig(N=2, K=2, gamma=[[1, 2], [3, 4]])
    assert cfg.gamma_nk[1, 0] == 3
