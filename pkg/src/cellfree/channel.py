"""Angle-delay power spectra and channel synthesis.

Channels are drawn element-wise in the angle-delay domain, where entries are
independent with variances given by the power spectrum, and mapped to the
space-frequency domain with the steering-grid and truncated Fourier matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SystemConfig
from .scenario import Scenario

MAX_COVARIANCE_DIM = 4096


def pas(theta, theta_mean, spread):
    """Laplacian power azimuth spectrum, unnormalized (peak value 1)."""
    if not np.all(np.asarray(spread) > 0):
        raise ValueError("angle spread must be positive")
    return np.exp(-np.sqrt(2.0) * np.abs(np.asarray(theta) - theta_mean) / spread)


def pds(tau, spread, max_delay=None):
    """Exponential power delay spectrum, unnormalized (value 1 at zero delay)."""
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.asarray(spread) > 0):
        raise ValueError("delay spread must be positive")
    if np.any(tau < 0) or (max_delay is not None and np.any(tau > max_delay * (1 + 1e-12))):
        raise ValueError("delay outside the supported range")
    return np.exp(-tau / spread)


def angle_grid(n_antennas: int) -> np.ndarray:
    """Grid angles arcsin(2n/N - 1) for n = 0..N (N + 1 edges)."""
    n = np.arange(n_antennas + 1)
    return np.arcsin(np.clip(2.0 * n / n_antennas - 1.0, -1.0, 1.0))


@dataclass(frozen=True)
class TransformPair:
    steering: np.ndarray   # V_N, (N, N)
    fourier: np.ndarray    # F, (N_c, N_cp)

    @property
    def num_antennas(self) -> int:
        return self.steering.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.fourier.shape[0]


def steering_matrix(n_antennas: int) -> np.ndarray:
    i = np.arange(n_antennas)[:, None]
    sin_grid = 2.0 * np.arange(n_antennas)[None, :] / n_antennas - 1.0
    return np.exp(-1j * np.pi * i * sin_grid) / np.sqrt(n_antennas)


def fourier_matrix(n_subcarriers: int, n_cols: int) -> np.ndarray:
    s = np.arange(n_subcarriers)[:, None]
    q = np.arange(n_cols)[None, :]
    return np.exp(-2j * np.pi * s * q / n_subcarriers) / np.sqrt(n_subcarriers)


def make_transforms(n_antennas: int, n_subcarriers: int, cp_length: int) -> TransformPair:
    return TransformPair(steering_matrix(n_antennas), fourier_matrix(n_subcarriers, cp_length))


def transforms_for(cfg: SystemConfig) -> TransformPair:
    return make_transforms(cfg.antennas_per_ula, cfg.num_subcarriers, cfg.cp_length)


@dataclass(frozen=True)
class PowerSpectrum:
    """Per-link normalized spectra plus the large-scale data needed to weight them.

    ``ups[k, l]`` is the N x N_cp spectrum between UE k and AP l with entries
    summing to N * N_cp.
    """

    ups: np.ndarray    # (K, L, N, N_cp)
    beta: np.ndarray   # (K, L)
    mask: np.ndarray   # (K, L)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.ups.shape

    @property
    def beta_weighted(self) -> np.ndarray:
        return self.ups * self.beta[:, :, None, None]

    @property
    def masked(self) -> np.ndarray:
        return self.ups * self.mask[:, :, None, None]

    @property
    def masked_beta(self) -> np.ndarray:
        return self.ups * (self.beta * self.mask)[:, :, None, None]

    @staticmethod
    def stack(per_ap: np.ndarray) -> np.ndarray:
        """Stack (..., L, N, N_cp) into (..., L*N, N_cp)."""
        *lead, L, N, Q = per_ap.shape
        return per_ap.reshape(*lead, L * N, Q)

    def save(self, path: str | Path) -> None:
        np.savez(path, ups=self.ups, beta=self.beta, mask=self.mask)

    @classmethod
    def load(cls, path: str | Path) -> "PowerSpectrum":
        with np.load(path) as data:
            return cls(data["ups"], data["beta"], data["mask"])


def spectrum_matrix(mean_aoa: float, n_antennas: int, cp_length: int, taps: int,
                    angle_spread: float, delay_spread: float,
                    sample_duration: float) -> np.ndarray:
    """One N x N_cp spectrum, normalized to total power N * N_cp."""
    if angle_spread <= 0 or delay_spread <= 0:
        raise ValueError("spreads must be positive")
    edges = angle_grid(n_antennas)
    width = np.diff(edges)
    # log-domain weights so that tiny spreads do not underflow
    log_a = np.log(width) - np.sqrt(2.0) * np.abs(edges[:-1] - mean_aoa) / angle_spread
    log_d = np.full(cp_length, -np.inf)
    q = np.arange(min(taps, cp_length))
    log_d[q] = -q * sample_duration / delay_spread
    log_p = log_a[:, None] + log_d[None, :]
    p = np.exp(log_p - log_p.max())
    return p * (n_antennas * cp_length / p.sum())


def build_power_spectrum(scn: Scenario, cfg: SystemConfig) -> PowerSpectrum:
    K, L = scn.beta.shape
    N, Q = cfg.antennas_per_ula, cfg.cp_length
    ups = np.empty((K, L, N, Q))
    for k in range(K):
        for l in range(L):
            ups[k, l] = spectrum_matrix(scn.mean_aoa[k, l], N, Q, cfg.effective_taps,
                                        cfg.angle_spread, cfg.delay_spread,
                                        cfg.sample_duration)
    return PowerSpectrum(ups, np.asarray(scn.beta, dtype=float), np.asarray(scn.mask))


def sample_channels(variance: np.ndarray, rng: np.random.Generator,
                    size: tuple[int, ...] = ()) -> np.ndarray:
    """Independent CN(0, variance) entries; ``size`` prepends batch axes."""
    shape = tuple(size) + variance.shape
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z * np.sqrt(variance / 2.0)


@dataclass(frozen=True)
class ChannelRealization:
    h_beta: np.ndarray              # (K, L, N, N_cp), includes large-scale fading
    g_beta: np.ndarray | None = None  # (K, L, N, N_c)


def sample_realization(ps: PowerSpectrum, rng: np.random.Generator | int | None = None,
                       ues=None, with_frequency: TransformPair | None = None) -> ChannelRealization:
    rng = np.random.default_rng(rng)
    var = ps.beta_weighted if ues is None else ps.beta_weighted[np.asarray(ues)]
    h = sample_channels(var, rng)
    g = to_space_frequency(h, with_frequency) if with_frequency is not None else None
    return ChannelRealization(h, g)


def to_space_frequency(h_beta: np.ndarray, t: TransformPair) -> np.ndarray:
    """V H F^T per AP; works on any (..., N, N_cp) stack."""
    h_beta = np.asarray(h_beta)
    N, Q = h_beta.shape[-2:]
    if N != t.steering.shape[0] or Q != t.fourier.shape[1]:
        raise ValueError(f"dimension mismatch: channel {h_beta.shape[-2:]}, "
                         f"transforms {t.steering.shape}, {t.fourier.shape}")
    return t.steering @ h_beta @ t.fourier.T


def to_angle_delay(g_beta: np.ndarray, t: TransformPair) -> np.ndarray:
    """Inverse of :func:`to_space_frequency` (V^H G F^*)."""
    return t.steering.conj().T @ g_beta @ t.fourier.conj()


def subcarrier_response(h_beta: np.ndarray, t: TransformPair, s: int) -> np.ndarray:
    """Column ``s`` of the space-frequency response, shape (..., N)."""
    return (np.asarray(h_beta) @ t.fourier[s]) @ t.steering.T


def covariance_from_spectrum(ps: PowerSpectrum, t: TransformPair, k: int) -> np.ndarray:
    """Space-frequency covariance of vec(G_k) implied by the spectrum of UE k.

    Validation tool only; refuses when M * N_c exceeds 4096.
    """
    K, L, N, Q = ps.ups.shape
    Nc = t.fourier.shape[0]
    dim = L * N * Nc
    if dim > MAX_COVARIANCE_DIM:
        raise ValueError(f"covariance dimension {dim} exceeds guard {MAX_COVARIANCE_DIM}")
    v_m = np.kron(np.eye(L), t.steering)
    basis = np.kron(t.fourier, v_m)
    ups_k = PowerSpectrum.stack(ps.beta_weighted[k])
    weights = ups_k.flatten(order="F")
    return (basis * weights) @ basis.conj().T
