"""Network geometry, large-scale fading and AP selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


def _log10_distance(d: float, cfg: SystemConfig) -> float:
    scale = 1e-3 if cfg.pathloss_distance_unit == "km" else 1.0
    return math.log10(d * scale)


def pathloss_constant(cfg: SystemConfig) -> float:
    """The frequency/height term of the three-slope model, in dB."""
    lf = math.log10(cfg.carrier_freq)
    return (46.3 + 33.9 * lf - 13.82 * math.log10(cfg.ap_height)
            - (1.1 * lf - 0.7) * cfg.ue_height + (1.56 * lf - 0.8))


def path_loss_db(d: float, cfg: SystemConfig) -> float:
    """Three-slope path loss (a negative gain, in dB) at distance ``d`` metres.

    Distances are converted to ``cfg.pathloss_distance_unit`` before taking
    logarithms; the breakpoints are always given in metres.
    """
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    chi = pathloss_constant(cfg)
    if d > cfg.breakpoint_far:
        return -chi - 35.0 * _log10_distance(d, cfg)
    head = -chi - 15.0 * _log10_distance(cfg.breakpoint_far, cfg)
    if d > cfg.breakpoint_near:
        return head - 20.0 * _log10_distance(d, cfg)
    return head - 20.0 * _log10_distance(cfg.breakpoint_near, cfg)


def select_serving_aps(beta: np.ndarray, threshold: float) -> list[np.ndarray]:
    """Minimal set of strongest APs holding ``threshold`` of each UE's total gain.

    Ties in ``beta`` are broken in favour of the lower AP index.
    """
    beta = np.asarray(beta, dtype=float)
    sets = []
    for row in beta:
        order = np.argsort(-row, kind="stable")
        if threshold >= 1.0:
            count = row.size
        else:
            csum = np.cumsum(row[order])
            count = int(np.searchsorted(csum, threshold * csum[-1], side="left")) + 1
            count = min(max(count, 1), row.size)
        sets.append(np.sort(order[:count]))
    return sets


def fold_bearing(angle: np.ndarray) -> np.ndarray:
    """Map a planar bearing onto the half-plane seen by the facing ULA."""
    return np.mod(np.asarray(angle) + np.pi / 2, np.pi) - np.pi / 2


@dataclass(frozen=True)
class Scenario:
    ap_positions: np.ndarray     # (L, 2)
    ue_positions: np.ndarray     # (K, 2)
    beta: np.ndarray             # (K, L) linear gain
    mean_aoa: np.ndarray         # (K, L) rad
    serving_sets: tuple          # K arrays of AP indices
    mask: np.ndarray             # (K, L) {0, 1}
    rho_p: float
    rho_u: float

    @property
    def num_ues(self) -> int:
        return self.beta.shape[0]

    @property
    def num_aps(self) -> int:
        return self.beta.shape[1]

    def serving_counts(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def with_threshold(self, threshold: float) -> "Scenario":
        """Same geometry and fading with a different AP-selection threshold."""
        sets = select_serving_aps(self.beta, threshold)
        return _assemble(self.ap_positions, self.ue_positions, self.beta,
                         self.mean_aoa, sets, self.rho_p, self.rho_u)


def _assemble(ap_pos, ue_pos, beta, aoa, sets, rho_p, rho_u) -> Scenario:
    mask = np.zeros(beta.shape, dtype=np.int8)
    for k, s in enumerate(sets):
        mask[k, s] = 1
    for arr in (ap_pos, ue_pos, beta, aoa, mask):
        arr.setflags(write=False)
    return Scenario(ap_pos, ue_pos, beta, aoa, tuple(sets), mask, rho_p, rho_u)


def build_scenario(cfg: SystemConfig, seed: int | None = None) -> Scenario:
    rng = np.random.default_rng(cfg.rng_seed if seed is None else seed)
    L, K = cfg.num_aps, cfg.num_ues
    ap_pos = rng.uniform(0.0, cfg.area_side, size=(L, 2))
    ue_pos = rng.uniform(0.0, cfg.area_side, size=(K, 2))

    delta = ue_pos[:, None, :] - ap_pos[None, :, :]
    dist = np.hypot(delta[..., 0], delta[..., 1])
    # coincident points: clamp into the flat branch of the path-loss model
    dist = np.maximum(dist, 1e-9)
    pl = np.vectorize(lambda d: path_loss_db(d, cfg), otypes=[float])(dist)
    shadow = rng.normal(0.0, cfg.shadow_sigma, size=(K, L))
    shadow = np.where(dist > cfg.breakpoint_far, shadow, 0.0)
    beta = 10.0 ** ((pl + shadow) / 10.0)

    if cfg.aoa_mode == "geometric":
        aoa = fold_bearing(np.arctan2(delta[..., 1], delta[..., 0]))
    else:
        aoa = rng.uniform(-np.pi / 2, np.pi / 2, size=(K, L))

    sets = select_serving_aps(beta, cfg.ap_selection_threshold)
    rho = cfg.rho
    return _assemble(ap_pos, ue_pos, beta, aoa, sets, rho, rho)
