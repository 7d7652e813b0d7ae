import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellfree.channel import (PowerSpectrum, angle_grid, build_power_spectrum,
                              covariance_from_spectrum, make_transforms, pas, pds,
                              sample_channels, sample_realization, spectrum_matrix,
                              subcarrier_response, to_angle_delay, to_space_frequency)
from cellfree.config import SystemConfig
from cellfree.scenario import build_scenario

from conftest import random_spectrum, small_config


def test_pas_values():
    s = math.radians(5)
    assert pas(0.3, 0.3, s) == 1.0
    assert pas(0.3 + s / math.sqrt(2), 0.3, s) == pytest.approx(math.exp(-1))
    assert pas(0.3 + 0.1, 0.3, s) == pytest.approx(pas(0.3 - 0.1, 0.3, s))
    with pytest.raises(ValueError):
        pas(0.0, 0.0, 0.0)


def test_pds_values():
    z = 0.2e-6
    assert pds(0.0, z) == 1.0
    assert pds(z, z) == pytest.approx(math.exp(-1))
    r1 = pds(0.1e-6 + 5e-8, z) / pds(0.1e-6, z)
    r2 = pds(0.4e-6 + 5e-8, z) / pds(0.4e-6, z)
    assert r1 == pytest.approx(r2)
    with pytest.raises(ValueError):
        pds(-1e-9, z)
    with pytest.raises(ValueError):
        pds(1e-6, z, max_delay=0.5e-6)


@pytest.mark.parametrize("n", [4, 16, 100])
def test_grid_unitarity(n):
    v = make_transforms(n, 8, 4).steering
    assert np.max(np.abs(v.conj().T @ v - np.eye(n))) <= 1e-12


def test_fourier_columns_orthonormal():
    f = make_transforms(4, 128, 16).fourier
    assert np.max(np.abs(f.conj().T @ f - np.eye(16))) <= 1e-12


def test_angle_grid_edges():
    g = angle_grid(8)
    assert g[0] == pytest.approx(-np.pi / 2) and g[-1] == pytest.approx(np.pi / 2)
    assert np.all(np.diff(g) > 0)


def _ps(cfg, seed=0):
    scn = build_scenario(cfg, seed)
    return scn, build_power_spectrum(scn, cfg)


def test_spectrum_normalization_and_taps():
    cfg = small_config()
    _, ps = _ps(cfg)
    N, Q = cfg.antennas_per_ula, cfg.cp_length
    assert np.all(ps.ups >= 0)
    assert np.allclose(ps.ups.sum(axis=(-2, -1)), N * Q, rtol=1e-12)
    assert np.all(ps.ups[..., cfg.num_taps:] == 0)


def test_delay_marginal_geometric():
    cfg = small_config()
    m = spectrum_matrix(0.2, 8, 8, 6, cfg.angle_spread, cfg.delay_spread, cfg.sample_duration)
    col = m.sum(axis=0)[:6]
    ratio = math.exp(-cfg.sample_duration / cfg.delay_spread)
    assert np.allclose(col[1:] / col[:-1], ratio, rtol=1e-10)


def test_narrow_angle_collapses_to_one_bin():
    n = 16
    edges = angle_grid(n)
    # left-edge sampling: the mass lands on the edge nearest to theta, which
    # is the containing bin when theta sits in the bin's left half
    theta = edges[5] + 0.25 * (edges[6] - edges[5])
    m = spectrum_matrix(theta, n, 8, 4, 1e-6, 0.2e-6, 48.8e-9)
    rows = m.sum(axis=1)
    assert rows.argmax() == 5
    assert rows[5] / rows.sum() > 1 - 1e-9


def test_sparsity_decreases_with_spreads():
    def frac(a, d):
        m = spectrum_matrix(0.3, 32, 16, 16, math.radians(a), d * 1e-6, 48.8e-9)
        return np.mean(m > 0.01 * m.max())
    assert frac(8, 0.2) > frac(4, 0.2) > frac(2, 0.2)
    assert frac(2, 0.8) > frac(2, 0.4) > frac(2, 0.2)


def test_sample_variances(rng):
    ps = random_spectrum(rng, 1, 1, 4, 4)
    var = ps.beta_weighted[0, 0]
    h = sample_channels(var, rng, size=(10_000,))
    emp = np.mean(np.abs(h) ** 2, axis=0)
    big = var >= 0.01 * var.max()
    assert np.all(np.abs(emp[big] / var[big] - 1) < 0.05)
    assert np.all(h[:, var == 0] == 0)
    flat = h.reshape(10_000, -1)[:, big.ravel()]
    cov = flat.conj().T @ flat / 10_000
    off = cov - np.diag(np.diag(cov))
    scale = np.sqrt(np.outer(np.diag(cov).real, np.diag(cov).real))
    assert np.max(np.abs(off) / scale) < 0.05


def test_realization_reproducible():
    cfg = small_config()
    _, ps = _ps(cfg)
    a = sample_realization(ps, 7).h_beta
    b = sample_realization(ps, 7).h_beta
    assert np.array_equal(a, b)


def test_domain_roundtrip(rng):
    t = make_transforms(8, 64, 8)
    h = rng.standard_normal((3, 8, 8)) + 1j * rng.standard_normal((3, 8, 8))
    g = to_space_frequency(h, t)
    assert np.max(np.abs(to_angle_delay(g, t) - h)) < 1e-10
    assert np.all(to_space_frequency(np.zeros((8, 8)), t) == 0)
    with pytest.raises(ValueError):
        to_space_frequency(np.zeros((4, 8)), t)


def test_subcarrier_column_matches_full_response(rng):
    t = make_transforms(8, 64, 8)
    h = rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8))
    g = to_space_frequency(h, t)
    for s in (0, 17, 63):
        assert np.allclose(subcarrier_response(h, t, s), g[..., s])


def test_covariance_properties(rng):
    ps = random_spectrum(rng, 1, 2, 4, 4, sparsity=0.7)
    t = make_transforms(4, 16, 4)
    c = covariance_from_spectrum(ps, t, 0)
    assert np.allclose(c, c.conj().T)
    assert np.linalg.eigvalsh(c).min() > -1e-10
    # columns of F ⊗ V have norm sqrt(N_cp/N_c) * 1 ... squared: 1 (V unitary, F entries 1/sqrt(N_c))
    basis = np.kron(t.fourier, np.kron(np.eye(2), t.steering))
    w = PowerSpectrum.stack(ps.beta_weighted[0]).flatten(order="F")
    assert np.trace(c).real == pytest.approx(np.sum(w * np.sum(np.abs(basis) ** 2, axis=0)))
    assert np.linalg.matrix_rank(c, tol=1e-9) <= np.count_nonzero(w)


def test_covariance_guard():
    ps = random_spectrum(np.random.default_rng(0), 1, 4, 16, 4)
    with pytest.raises(ValueError):
        covariance_from_spectrum(ps, make_transforms(16, 128, 4), 0)


def test_space_frequency_covariance_monte_carlo(rng):
    ps = random_spectrum(rng, 1, 1, 4, 4, sparsity=0.6)
    t = make_transforms(4, 8, 4)
    c = covariance_from_spectrum(ps, t, 0)
    h = sample_channels(ps.beta_weighted[0], rng, size=(20_000,))
    g = to_space_frequency(h, t)                           # (T, 1, N, Nc)
    vec = np.swapaxes(g[:, 0], 1, 2).reshape(20_000, -1)   # column-major vec
    emp = vec.T @ vec.conj() / 20_000
    dom = np.abs(c) >= 0.5 * np.abs(c).max()
    assert np.max(np.abs(emp[dom] - c[dom]) / np.abs(c[dom])) < 0.05


def test_power_conservation(rng):
    ps = random_spectrum(rng, 1, 2, 4, 4)
    t = make_transforms(4, 16, 4)
    h = sample_channels(ps.beta_weighted[0], rng, size=(4000,))
    g = to_space_frequency(h, t)
    assert np.mean(np.sum(np.abs(g) ** 2, axis=(-3, -2, -1))) == pytest.approx(
        ps.beta_weighted[0].sum(), rel=0.02)


def test_spectrum_roundtrip_file(tmp_path, rng):
    ps = random_spectrum(rng, 2, 2, 4, 4)
    ps.save(tmp_path / "ps.npz")
    back = PowerSpectrum.load(tmp_path / "ps.npz")
    assert np.array_equal(back.ups, ps.ups) and np.array_equal(back.beta, ps.beta)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(0.01, 0.5), st.floats(0.05e-6, 2e-6))
def test_spectrum_invariants(theta, spread, delay):
    m = spectrum_matrix(theta, 8, 8, 6, spread, delay, 48.8e-9)
    assert np.all(m >= 0) and np.all(np.isfinite(m))
    assert m.sum() == pytest.approx(64.0, rel=1e-12)
