"""Uplink data phase: normalized MRC, Monte-Carlo link statistics and SE.

One Monte-Carlo pass draws channels, synthesizes decorrelated pilot
observations, forms element-wise MMSE estimates and the normalized MRC
combiners at a single subcarrier, and keeps per-trial scalars. Those are
enough to evaluate both the use-and-then-forget lower bound and the
estimate-conditioned SE for any power coefficients.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .channel import PowerSpectrum, TransformPair, sample_channels, subcarrier_response
from .pilot import delay_frames, read_window, slot_denominators

log = logging.getLogger(__name__)

MIN_STAT_TRIALS = 500
MIN_GENIE_TRIALS = 200
MAX_GENIE_DIM = 4096


def spectral_efficiency_factor(n_subcarriers: int, cp_length: int, slot_symbols: int,
                               pilot_symbols: int) -> float:
    """Fraction of resources carrying data after CP and pilot overhead."""
    return (n_subcarriers / (n_subcarriers + cp_length)
            * (slot_symbols - pilot_symbols) / slot_symbols)


def mrc_combiner(g_hat: np.ndarray) -> np.ndarray:
    """Normalized MRC ``g_hat / ||g_hat||^2`` along the last axis (zero for zero input)."""
    g_hat = np.asarray(g_hat, dtype=complex)
    n2 = np.sum(np.abs(g_hat) ** 2, axis=-1, keepdims=True)
    out = np.zeros_like(g_hat)
    np.divide(g_hat, n2, out=out, where=n2 > 0)
    if np.any(n2 == 0):
        log.debug("zero channel estimate: combiner set to zero")
    return out


@dataclass(frozen=True)
class LinkStatistics:
    """Monte-Carlo expectations for the active UEs (in the order of ``active``)."""

    active: np.ndarray
    coh: np.ndarray        # |E{c_k^H g_k}|^2
    cross: np.ndarray      # E{|c_k^H g_k'|^2}, (K_a, K_a)
    cnorm: np.ndarray      # E{||c_k||^2}
    coh_se: np.ndarray
    cross_se: np.ndarray
    cnorm_se: np.ndarray
    rho_u: float
    trials: int
    subcarrier: int
    # per-trial terms of the estimate-conditioned SE (optional)
    est_gain: np.ndarray | None = None   # |c_k^H ĝ_k'|^2, (T, K_a, K_a)
    err_quad: np.ndarray | None = None   # c_k^H R_k' c_k, (T, K_a, K_a)
    cnorm_samples: np.ndarray | None = None  # (T, K_a)

    @property
    def num_active(self) -> int:
        return self.coh.size

    def save(self, path: str | Path) -> None:
        arrays = {f.name: getattr(self, f.name) for f in fields(self)
                  if getattr(self, f.name) is not None}
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "LinkStatistics":
        with np.load(path) as data:
            kw = {k: data[k] for k in data.files}
        for name in ("rho_u",):
            kw[name] = float(kw[name])
        for name in ("trials", "subcarrier"):
            kw[name] = int(kw[name])
        return cls(**kw)

    @classmethod
    def from_moments(cls, coh, cross, cnorm, rho_u: float, trials: int = 0,
                     subcarrier: int = 0) -> "LinkStatistics":
        """Statistics given directly (no Monte-Carlo error)."""
        coh = np.asarray(coh, dtype=float)
        cross = np.asarray(cross, dtype=float)
        cnorm = np.asarray(cnorm, dtype=float)
        z = np.zeros_like
        return cls(np.arange(coh.size), coh, cross, cnorm, z(coh), z(cross), z(cnorm),
                   float(rho_u), trials, subcarrier)


def _mean_se(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    m = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(m.shape, np.nan)
    return m, se


def estimate_link_statistics(ps: PowerSpectrum, transforms: TransformPair, active, shifts,
                             rho_p: float, rho_u: float, Z: int, subcarrier: int,
                             trials: int, seed: int | np.random.Generator | None = None,
                             chunk: int = 100, keep_samples: bool = True,
                             min_trials: int = MIN_STAT_TRIALS) -> LinkStatistics:
    """Monte-Carlo expectations of the combined gains at one subcarrier.

    ``shifts`` lists the pilot shifts of the active UEs. Every active UE is
    estimated at every AP (so that the estimate-conditioned SE sees the other
    UEs' estimates), and its combiner is masked to its serving APs.
    """
    if trials < min_trials:
        raise ValueError(f"at least {min_trials} trials required, got {trials}")
    rng = np.random.default_rng(seed)
    active = np.asarray(active, dtype=np.int64)
    shifts = np.asarray(shifts, dtype=np.int64)
    Ka = active.size
    _, L, N, Q = ps.ups.shape
    n_sub = transforms.num_subcarriers
    ub = ps.beta_weighted[active]                          # (Ka, L, N, Q)
    den = slot_denominators(ub, shifts, Z, n_sub, rho_p)
    gain = ub / den
    xi_beta = ub - ub * gain                               # β-weighted error variances
    err_rows = xi_beta.sum(axis=-1) / n_sub                # (Ka, L, N)
    mask = np.asarray(ps.mask)[active].astype(float)       # (Ka, L)
    vh = transforms.steering.conj().T

    inner, norms, est_gain, err_quad = [], [], [], []
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        h = sample_channels(ub, rng, size=(t,))            # (t, Ka, L, N, Q)
        frames = delay_frames(h, shifts, Z, n_sub, rho_p, rng=rng)
        win = np.stack([read_window(frames, int(p), Z, Q) for p in shifts], axis=1)
        h_hat = gain * win
        g = subcarrier_response(h, transforms, subcarrier)       # (t, Ka, L, N)
        g_hat = subcarrier_response(h_hat, transforms, subcarrier)
        c = mrc_combiner(g_hat) * mask[None, :, :, None]
        cf = c.reshape(t, Ka, L * N)
        inner.append(np.einsum("tkm,tjm->tkj", cf.conj(), g.reshape(t, Ka, L * N)))
        norms.append(np.sum(np.abs(cf) ** 2, axis=-1))
        if keep_samples:
            ih = np.einsum("tkm,tjm->tkj", cf.conj(), g_hat.reshape(t, Ka, L * N))
            est_gain.append(np.abs(ih) ** 2)
            a = np.abs(c @ vh.T) ** 2                      # |V^H c_{k,l}|^2, (t, Ka, L, N)
            err_quad.append(np.einsum("tkln,jln->tkj", a, err_rows))
        done += t

    inner = np.concatenate(inner)
    norms = np.concatenate(norms)
    diag = np.diagonal(inner, axis1=1, axis2=2)
    m_re, se_re = _mean_se(diag.real)
    m_im, se_im = _mean_se(diag.imag)
    coh = m_re ** 2 + m_im ** 2
    coh_se = 2.0 * np.sqrt(m_re ** 2 * se_re ** 2 + m_im ** 2 * se_im ** 2)
    cross, cross_se = _mean_se(np.abs(inner) ** 2)
    cnorm, cnorm_se = _mean_se(norms)
    extra = {}
    if keep_samples:
        extra = dict(est_gain=np.concatenate(est_gain), err_quad=np.concatenate(err_quad),
                     cnorm_samples=norms)
    return LinkStatistics(active, coh, cross, cnorm, coh_se, cross_se, cnorm_se,
                          float(rho_u), int(trials), int(subcarrier), **extra)


def error_covariance(xi_beta: np.ndarray, steering: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """Space-domain estimation-error covariance at any subcarrier.

    ``xi_beta`` is the (L, N, N_cp) β-weighted error variance of one UE; the
    result is block diagonal with blocks V diag(row sums) V^H / N_c.
    """
    xi_beta = np.asarray(xi_beta, dtype=float)
    L, N, _ = xi_beta.shape
    if L * N > MAX_GENIE_DIM:
        raise ValueError(f"covariance dimension {L * N} exceeds guard {MAX_GENIE_DIM}")
    out = np.zeros((L * N, L * N), dtype=complex)
    rows = xi_beta.sum(axis=-1) / n_subcarriers
    for l in range(L):
        blk = (steering * rows[l]) @ steering.conj().T
        out[l * N:(l + 1) * N, l * N:(l + 1) * N] = blk
    return out


def _eta(eta, n: int) -> np.ndarray:
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (n,))
    if np.any(eta < 0) or np.any(eta > 1):
        raise ValueError("power coefficients must lie in [0, 1]")
    return eta


def sinr_lb(eta, stats: LinkStatistics) -> np.ndarray:
    """Use-and-then-forget SINR of every active UE."""
    eta = _eta(eta, stats.num_active)
    sig = eta * stats.coh
    den = stats.cross @ eta - sig + stats.cnorm / stats.rho_u
    assert np.all(den > 0), "nonpositive SINR denominator"
    return sig / den


def se_lb(eta, stats: LinkStatistics, varpi: float) -> np.ndarray:
    return varpi * np.log2(1.0 + sinr_lb(eta, stats))


def se_genie(eta, stats: LinkStatistics, varpi: float) -> np.ndarray:
    """Estimate-conditioned SE averaged over the stored trials."""
    if stats.est_gain is None:
        raise ValueError("statistics were computed without per-trial samples")
    if stats.est_gain.shape[0] < MIN_GENIE_TRIALS:
        raise ValueError(f"at least {MIN_GENIE_TRIALS} trials required")
    eta = _eta(eta, stats.num_active)
    rho = stats.rho_u
    own = np.diagonal(stats.est_gain, axis1=1, axis2=2)           # (T, Ka)
    others = stats.est_gain @ eta - own * eta
    den = rho * others + rho * (stats.err_quad @ eta) + stats.cnorm_samples
    ratio = np.divide(rho * eta * own, den, out=np.zeros_like(own), where=den > 0)
    return varpi * np.mean(np.log2(1.0 + ratio), axis=0)


# --- disk cache --------------------------------------------------------------------

def statistics_key(**parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


def plan_digest(sets: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(sets, dtype=np.int64).tobytes()).hexdigest()[:16]


def cached_statistics(cache_dir: str | Path | None, key: str, compute) -> LinkStatistics:
    """Load statistics stored under ``key`` or compute and store them."""
    if cache_dir is None:
        return compute()
    path = Path(cache_dir) / f"link-{key}.npz"
    if path.exists():
        return LinkStatistics.load(path)
    stats = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    stats.save(path)
    return stats
