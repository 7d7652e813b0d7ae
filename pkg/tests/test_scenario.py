import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellfree.config import SystemConfig
from cellfree.scenario import (build_scenario, fold_bearing, path_loss_db, pathloss_constant,
                               select_serving_aps)

CHI = 141.46457300396514


def test_pathloss_constant():
    assert pathloss_constant(SystemConfig()) == pytest.approx(CHI, abs=1e-10)


def test_pathloss_at_near_breakpoint_in_metres():
    cfg = SystemConfig(pathloss_distance_unit="m")
    expected = -CHI - 15 * math.log10(50) - 20 * math.log10(10)
    assert path_loss_db(10.0, cfg) == pytest.approx(expected, abs=1e-10)
    assert path_loss_db(10.0, cfg) == pytest.approx(-186.96, abs=0.02)


def test_pathloss_at_near_breakpoint_in_km():
    cfg = SystemConfig()
    expected = -CHI - 15 * math.log10(0.05) - 20 * math.log10(0.01)
    assert path_loss_db(10.0, cfg) == pytest.approx(expected, abs=1e-10)


def test_pathloss_flat_below_near_breakpoint():
    for unit in ("m", "km"):
        cfg = SystemConfig(pathloss_distance_unit=unit)
        assert path_loss_db(5.0, cfg) == path_loss_db(10.0, cfg)


def test_pathloss_far_branch():
    assert path_loss_db(1000.0, SystemConfig(pathloss_distance_unit="m")) == pytest.approx(-CHI - 105)
    assert path_loss_db(1000.0, SystemConfig()) == pytest.approx(-CHI)


def test_pathloss_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        path_loss_db(0.0, SystemConfig())


def test_serving_set_extremes():
    beta = np.random.default_rng(0).random((5, 4))
    assert all(s.size == 4 for s in select_serving_aps(beta, 1.0))
    strongest = np.argmax(beta, axis=1)
    for k, s in enumerate(select_serving_aps(beta, 1e-9)):
        assert s.tolist() == [strongest[k]]


def test_serving_tie_prefers_lower_index():
    beta = np.array([[1.0, 1.0, 1.0]])
    assert select_serving_aps(beta, 0.3)[0].tolist() == [0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_serving_sets_monotone_and_minimal(seed, l1, l2):
    lo, hi = sorted((l1, l2))
    beta = np.random.default_rng(seed).lognormal(size=(4, 6))
    small, large = select_serving_aps(beta, lo), select_serving_aps(beta, hi)
    for k in range(4):
        assert set(small[k]) <= set(large[k])
        chosen = beta[k, large[k]]
        assert chosen.sum() >= hi * beta[k].sum() * (1 - 1e-12)
        assert chosen.sum() - chosen.min() < hi * beta[k].sum()


def test_fold_bearing_range():
    a = np.linspace(-4, 4, 101)
    f = fold_bearing(a)
    assert np.all(f >= -np.pi / 2) and np.all(f < np.pi / 2)
    assert np.allclose(np.sin(2 * f), np.sin(2 * a))


def test_scenario_reproducible_and_well_formed():
    cfg = SystemConfig.desk_scale()
    a, b = build_scenario(cfg, 3), build_scenario(cfg, 3)
    assert np.array_equal(a.beta, b.beta) and np.array_equal(a.mask, b.mask)
    assert a.beta.shape == (40, 6)
    assert np.all(a.mask.sum(axis=1) >= 1)
    assert a.rho_p == a.rho_u == pytest.approx(0.5 / cfg.noise_power)
    assert np.all(np.abs(a.mean_aoa) <= np.pi / 2)


def test_no_shadowing_inside_far_breakpoint():
    cfg = SystemConfig.desk_scale(area_side=30.0)
    scn = build_scenario(cfg, 1)
    d = np.linalg.norm(scn.ue_positions[:, None] - scn.ap_positions[None], axis=-1)
    pl = np.vectorize(lambda x: path_loss_db(max(x, 1e-9), cfg))(d)
    near = d <= cfg.breakpoint_far
    assert near.any()
    assert np.allclose(10 * np.log10(scn.beta[near]), pl[near])
