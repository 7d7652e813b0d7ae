"""Sporadic activation, hopping patterns and energy-based activity detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PowerSpectrum, sample_channels
from .config import ConfigError
from .pilot import delay_frames, read_window

MAX_RESAMPLE_ROUNDS = 10_000


def sample_activity(K: int, p_a: float, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Indices of UEs that are active, each independently with probability ``p_a``."""
    if not 0.0 <= p_a <= 1.0:
        raise ValueError("activation probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return np.flatnonzero(rng.random(K) < p_a)


@dataclass(frozen=True)
class HoppingPattern:
    shifts: np.ndarray  # (K, R) shift used by each UE in each slot

    @property
    def num_slots(self) -> int:
        return self.shifts.shape[1]

    def slot(self, r: int) -> np.ndarray:
        return self.shifts[:, r]


def make_unique(draws: np.ndarray, set_size: int, rng: np.random.Generator,
                sets: np.ndarray | None = None) -> np.ndarray:
    """Resample rows of ``draws`` (set indices, (K, R)) until all patterns differ.

    Distinctness is judged on the resulting shift sequences when ``sets`` is
    given, otherwise on the index rows. The first occurrence of a repeated
    pattern is kept.
    """
    draws = np.array(draws, dtype=np.int64)
    K, R = draws.shape
    rows = np.arange(K)[:, None]
    for _ in range(MAX_RESAMPLE_ROUNDS):
        key = draws if sets is None else np.asarray(sets)[rows, draws]
        _, first = np.unique(key, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(K), first)
        if dup.size == 0:
            return draws
        draws[dup] = rng.integers(0, set_size, size=(dup.size, R))
    raise ConfigError("could not draw distinct hopping patterns")


def build_patterns(sets: np.ndarray, R: int,
                   seed: int | np.random.Generator | None = None) -> HoppingPattern:
    """Distinct pseudo-random per-UE shift sequences over ``R`` slots."""
    sets = np.asarray(sets, dtype=np.int64)
    K, Y = sets.shape
    if Y ** R < K:
        raise ConfigError(f"|Y|^R = {Y ** R} < K = {K}: unique hopping patterns impossible")
    rng = np.random.default_rng(seed)
    draws = make_unique(rng.integers(0, Y, size=(K, R)), Y, rng, sets)
    return HoppingPattern(sets[np.arange(K)[:, None], draws])


@dataclass(frozen=True)
class DetectionReport:
    detected: np.ndarray
    misses: int
    false_alarms: int
    statistics: np.ndarray
    log_likelihood_ratio: np.ndarray | None = None

    @property
    def correct(self) -> int:
        return self.detected.size - self.false_alarms


def detection_weights(ps: PowerSpectrum, rho_p: float, Z: int) -> np.ndarray:
    """Matched weights Υ^β/(Υ^β + 1/(ρ_p Z)), restricted to serving APs."""
    ub = ps.beta_weighted
    w = ub / (ub + 1.0 / (rho_p * Z))
    return w * np.asarray(ps.mask)[:, :, None, None]


def pilot_frames(ps: PowerSpectrum, patterns: HoppingPattern, active, rho_p: float,
                 Z: int, n_subcarriers: int,
                 seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Received delay frames for every slot, (R, Z, L, N, N_c).

    Channels are redrawn in every slot; silent UEs do not transmit.
    """
    rng = np.random.default_rng(seed)
    active = np.asarray(active, dtype=np.int64)
    var = ps.beta_weighted[active]
    out = []
    for r in range(patterns.num_slots):
        h = sample_channels(var, rng)
        out.append(delay_frames(h, patterns.shifts[active, r], Z, n_subcarriers, rho_p, rng=rng))
    return np.stack(out)


def detection_statistics(frames: np.ndarray, patterns: HoppingPattern, ps: PowerSpectrum,
                         rho_p: float, Z: int) -> np.ndarray:
    """Weighted observation energy of every hypothesized UE, (K,)."""
    K, L, N, Q = ps.ups.shape
    w = detection_weights(ps, rho_p, Z)
    inv_beta = 1.0 / ps.beta
    counts = np.asarray(ps.mask).sum(axis=1)
    R = patterns.num_slots
    stats = np.zeros(K)
    for k in range(K):
        acc = 0.0
        for r in range(R):
            win = read_window(frames[r], int(patterns.shifts[k, r]), Z, Q)
            energy = np.sum(w[k] * (np.abs(win) ** 2), axis=(-2, -1)) * inv_beta[k]
            acc += float(np.sum(energy))
        stats[k] = acc / (R * counts[k])
    return stats


def noise_statistics(ps: PowerSpectrum, patterns: HoppingPattern, rho_p: float, Z: int,
                     n_subcarriers: int, trials: int,
                     seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Statistics with no UE transmitting, (trials, K)."""
    rng = np.random.default_rng(seed)
    none = np.array([], dtype=np.int64)
    return np.stack([
        detection_statistics(pilot_frames(ps, patterns, none, rho_p, Z, n_subcarriers, rng),
                             patterns, ps, rho_p, Z)
        for _ in range(trials)
    ])


def expected_active_statistic(ps: PowerSpectrum, rho_p: float, Z: int) -> np.ndarray:
    """Mean statistic of a UE transmitting without contamination, (K,)."""
    w = detection_weights(ps, rho_p, Z)
    noise = 1.0 / (rho_p * Z * ps.beta)
    per_ap = np.sum(w * (ps.ups + noise[:, :, None, None]), axis=(-2, -1))
    return per_ap.sum(axis=1) / np.asarray(ps.mask).sum(axis=1)


def calibrate_threshold(ps: PowerSpectrum, patterns: HoppingPattern, rho_p: float, Z: int,
                        n_subcarriers: int, trials: int = 200, percentile: float = 99.0,
                        seed: int | np.random.Generator | None = None,
                        mode: str = "balanced") -> np.ndarray:
    """Per-UE decision thresholds.

    ``mode="noise"`` returns the noise-only percentile. ``mode="balanced"``
    raises it to half of the contamination-free active mean whenever that is
    larger, which keeps strong same-group interferers from triggering false
    alarms at high SNR.
    """
    noise = np.percentile(noise_statistics(ps, patterns, rho_p, Z, n_subcarriers, trials, seed),
                          percentile, axis=0)
    if mode == "noise":
        return noise
    if mode != "balanced":
        raise ValueError(f"unknown threshold mode {mode!r}")
    return np.maximum(noise, 0.5 * expected_active_statistic(ps, rho_p, Z))


def detect_active(statistics: np.ndarray, threshold, active=None) -> DetectionReport:
    """Declare UEs whose statistic reaches the threshold; score against ``active``."""
    statistics = np.asarray(statistics, dtype=float)
    tau = np.broadcast_to(np.asarray(threshold, dtype=float), statistics.shape)
    detected = np.flatnonzero(statistics >= tau)
    if active is None:
        return DetectionReport(detected, 0, 0, statistics)
    truth = set(int(a) for a in np.asarray(active).ravel())
    hits = sum(1 for d in detected if int(d) in truth)
    return DetectionReport(detected, len(truth) - hits, detected.size - hits, statistics)


# --- likelihood-based detection -----------------------------------------------------

def _footprints(ps: PowerSpectrum, patterns: HoppingPattern, Z: int, n_subcarriers: int):
    """Per-UE variance footprint in the delay frames: (group, columns) per slot."""
    Q = ps.ups.shape[-1]
    q = np.arange(Q)
    sh = patterns.shifts
    return sh % Z, (sh[..., None] // Z + q) % n_subcarriers  # (K, R), (K, R, Q)


def _ll_change(var, power, extra, sign):
    """Change of the Gaussian log-likelihood when ``sign * extra`` joins ``var``."""
    new = var + sign * extra
    return float(np.sum(np.log(var) - np.log(new) + power / var - power / new))


def likelihood_detect(frames: np.ndarray, patterns: HoppingPattern, ps: PowerSpectrum,
                      rho_p: float, Z: int, p_a: float | None = None,
                      active=None, max_steps: int | None = None) -> DetectionReport:
    """Activity detection by greedy maximization of the frame likelihood.

    Every delay-frame entry is an independent zero-mean complex Gaussian
    whose variance is the noise level plus the shifted spectra of the active
    UEs, so the likelihood of any hypothesized active set is exact. UEs are
    added or removed one at a time, always taking the largest improvement,
    until no change helps. A Bernoulli(``p_a``) prior adds its log-odds to
    every addition.
    """
    R, _, L, N, n_sub = frames.shape
    K = ps.ups.shape[0]
    groups, cols = _footprints(ps, patterns, Z, n_sub)
    ub = ps.beta_weighted
    power = np.abs(frames) ** 2
    var = np.full(frames.shape, 1.0 / (rho_p * Z))
    prior = 0.0 if p_a is None or p_a in (0.0, 1.0) else float(np.log(p_a / (1.0 - p_a)))
    member = np.zeros(K, dtype=bool)

    def change(k: int) -> float:
        sign = -1.0 if member[k] else 1.0
        total = 0.0
        for r in range(R):
            c = cols[k, r]
            v = var[r, groups[k, r]][..., c]
            p = power[r, groups[k, r]][..., c]
            total += _ll_change(v, p, ub[k], sign)
        return total - prior if member[k] else total + prior

    def apply(k: int) -> None:
        sign = -1.0 if member[k] else 1.0
        for r in range(R):
            g, c = groups[k, r], cols[k, r]
            var[r, g][..., c] += sign * ub[k]
        member[k] = not member[k]

    steps = max_steps if max_steps is not None else 4 * K
    for _ in range(steps):
        gains = np.array([change(k) for k in range(K)])
        best = int(np.argmax(gains))
        if gains[best] <= 0.0:
            break
        apply(best)
        # guard against round-off drift after removals
        np.maximum(var, 1.0 / (rho_p * Z), out=var)
    llr = np.array([change(k) for k in range(K)])
    llr = np.where(member, -llr, llr)
    stats = detection_statistics(frames, patterns, ps, rho_p, Z)
    detected = np.flatnonzero(member)
    if active is None:
        return DetectionReport(detected, 0, 0, stats, llr)
    truth = set(int(a) for a in np.asarray(active).ravel())
    hits = sum(1 for d in detected if int(d) in truth)
    return DetectionReport(detected, len(truth) - hits, detected.size - hits, stats, llr)
