import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellfree.activity import (HoppingPattern, build_patterns, calibrate_threshold,
                               detect_active, detection_statistics, expected_active_statistic,
                               likelihood_detect, make_unique, noise_statistics, pilot_frames,
                               sample_activity)
from cellfree.allocation import proposed_allocation
from cellfree.channel import build_power_spectrum
from cellfree.config import ConfigError, SystemConfig
from cellfree.scenario import build_scenario

from conftest import random_spectrum


def test_activity_extremes():
    assert sample_activity(10, 0.0, 0).size == 0
    assert sample_activity(10, 1.0, 0).tolist() == list(range(10))
    with pytest.raises(ValueError):
        sample_activity(10, 1.2, 0)


def test_activity_rate():
    rng = np.random.default_rng(0)
    K, p, n = 50, 0.25, 10_000
    frac = np.mean([sample_activity(K, p, rng).size / K for _ in range(n)])
    assert abs(frac - p) <= 3 * np.sqrt(p * (1 - p) / (K * n))


def test_patterns_unique_reference_size():
    rng = np.random.default_rng(0)
    sets = np.array([np.sort(rng.choice(1024, 4, replace=False)) for _ in range(200)])
    pat = build_patterns(sets, 4, 1)
    assert pat.shifts.shape == (200, 4)
    assert np.unique(pat.shifts, axis=0).shape[0] == 200
    for k in range(200):
        assert set(pat.shifts[k]) <= set(sets[k])


def test_single_ue_pattern():
    pat = build_patterns(np.array([[3, 7]]), 2, 0)
    assert pat.num_slots == 2 and pat.slot(0).shape == (1,)


def test_impossible_patterns_rejected():
    with pytest.raises(ConfigError):
        build_patterns(np.zeros((5, 2), dtype=int) + np.arange(2), 2, 0)


def test_collision_resampled():
    rng = np.random.default_rng(0)
    draws = np.array([[0, 1], [0, 1], [1, 1], [0, 1]])
    out = make_unique(draws, 2, rng)
    assert np.unique(out, axis=0).shape[0] == 4
    assert out[0].tolist() == [0, 1]        # first occurrence kept


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 27))
def test_patterns_always_distinct(seed, K):
    rng = np.random.default_rng(seed)
    sets = np.array([np.sort(rng.choice(64, 3, replace=False)) for _ in range(K)])
    pat = build_patterns(sets, 3, rng)
    assert np.unique(pat.shifts, axis=0).shape[0] == K


def _desk_detection(K=20, seed=0):
    cfg = SystemConfig.desk_scale(num_ues=K)
    scn = build_scenario(cfg, seed)
    ps = build_power_spectrum(scn, cfg)
    out = proposed_allocation(ps, scn.beta, 128, 1, 2, cfg.overlap_threshold, 4, seed)
    return cfg, scn, ps, build_patterns(out.sets, 4, seed)


def test_noise_free_single_ue_midpoint_threshold():
    rng = np.random.default_rng(1)
    ps = random_spectrum(rng, 6, 2, 4, 4, sparsity=0.3)
    sets = np.array([[0, 20], [5, 25], [10, 30], [15, 35], [40, 50], [45, 55]])
    pat = build_patterns(sets, 3, rng)
    frames = pilot_frames(ps, pat, [2], 1e12, 1, 64, rng)
    stats = detection_statistics(frames, pat, ps, 1e12, 1)
    silent = np.delete(stats, 2)
    assert stats[2] > 100 * silent.max()
    rep = detect_active(stats, 0.5 * (stats[2] + silent.max()), [2])
    assert rep.detected.tolist() == [2] and rep.misses == 0 and rep.false_alarms == 0


def test_zero_threshold_declares_everyone():
    stats = np.abs(np.random.default_rng(0).standard_normal(8))
    rep = detect_active(stats, 0.0, [1, 4])
    assert rep.detected.size == 8 and rep.false_alarms == 6 and rep.misses == 0
    assert rep.correct == 2


def test_noise_statistics_centered_on_noise_level():
    cfg, scn, ps, pat = _desk_detection(K=6)
    rho = scn.rho_p
    noise = noise_statistics(ps, pat, rho, 1, 128, 200, 3)
    w = ps.beta_weighted / (ps.beta_weighted + 1 / rho) * np.asarray(ps.mask)[:, :, None, None]
    per_ap = np.sum(w, axis=(-2, -1)) / (rho * ps.beta)
    expected = per_ap.sum(axis=1) / np.asarray(ps.mask).sum(axis=1)
    assert np.allclose(noise.mean(axis=0), expected, rtol=0.05)


def test_expected_active_statistic_matches_monte_carlo():
    cfg, scn, ps, pat = _desk_detection(K=6)
    rho = scn.rho_p
    single = HoppingPattern(np.arange(6)[:, None] * 16)     # PSOP-spaced, no contamination
    vals = np.array([detection_statistics(pilot_frames(ps, single, np.arange(6), rho, 1, 128, s),
                                          single, ps, rho, 1) for s in range(300)])
    assert np.allclose(vals.mean(axis=0), expected_active_statistic(ps, rho, 1), rtol=0.1)


def test_calibrated_threshold_modes():
    cfg, scn, ps, pat = _desk_detection(K=6)
    noise = calibrate_threshold(ps, pat, scn.rho_p, 1, 128, 50, seed=0, mode="noise")
    bal = calibrate_threshold(ps, pat, scn.rho_p, 1, 128, 50, seed=0)
    assert np.all(bal >= noise)
    with pytest.raises(ValueError):
        calibrate_threshold(ps, pat, scn.rho_p, 1, 128, 5, seed=0, mode="other")


def test_likelihood_detection_high_snr():
    for seed in range(5):
        cfg, scn, ps, pat = _desk_detection(seed=seed)
        rng = np.random.default_rng(seed)
        active = np.sort(rng.permutation(20)[:5])
        rho = scn.rho_p * 1e4
        frames = pilot_frames(ps, pat, active, rho, 1, 128, rng)
        rep = likelihood_detect(frames, pat, ps, rho, 1, 0.25, active)
        assert rep.misses == 0 and rep.false_alarms == 0
        assert np.all(rep.log_likelihood_ratio[active] > 0)


def test_likelihood_detection_nobody_active():
    cfg, scn, ps, pat = _desk_detection()
    frames = pilot_frames(ps, pat, [], scn.rho_p, 1, 128, 0)
    rep = likelihood_detect(frames, pat, ps, scn.rho_p, 1, 0.25, [])
    assert rep.detected.size == 0
