import numpy as np
import pytest

from cellfree.channel import PowerSpectrum, build_power_spectrum
from cellfree.config import SystemConfig
from cellfree.scenario import build_scenario


def small_config(**changes) -> SystemConfig:
    base = dict(antennas_per_ula=8, num_aps=2, num_subcarriers=64, cp_length=8,
                num_taps=4, num_ues=6)
    base.update(changes)
    return SystemConfig().replace(**base)


def random_spectrum(rng, K, L, N, Q, beta_range=(0.5, 2.0), sparsity=0.5) -> PowerSpectrum:
    """Sparse random spectra normalized per link, all APs serving."""
    ups = rng.random((K, L, N, Q)) * (rng.random((K, L, N, Q)) > sparsity)
    ups[..., 0, 0] += 0.1
    ups *= N * Q / ups.sum(axis=(-2, -1), keepdims=True)
    beta = rng.uniform(*beta_range, size=(K, L))
    return PowerSpectrum(ups, beta, np.ones((K, L), dtype=np.int8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk():
    cfg = SystemConfig.desk_scale()
    scn = build_scenario(cfg, 0)
    return cfg, scn, build_power_spectrum(scn, cfg)


# acceptance verdict lines, printed once at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
