"""Adjustable phase shift pilots, decorrelation and element-wise MMSE estimation.

A phase shift ``phi`` in ``{0, ..., N_c*Z - 1}`` selects the pilot group
``phi % Z`` (a row of a Z x Z unitary matrix across pilot symbols) and the
delay offset ``phi // Z`` (a linear phase ramp across subcarriers). Pilots in
different groups are orthogonal; within a group they differ by a cyclic delay.

After decorrelation everything is expressed in the angle-delay domain. The
simulation keeps, per AP and pilot group, one "delay frame" of N_c delay bins
in which every active UE's channel sits at its own delay offset; a UE's
decorrelated observation is the N_cp-wide window of that frame starting at its
offset, scaled by its large-scale fading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_PILOT_DIM = 4096


def pilot_group(phi, Z: int):
    return np.asarray(phi) % Z


def delay_offset(phi, Z: int):
    return np.asarray(phi) // Z


@dataclass(frozen=True)
class PilotPlan:
    """Allocated APSP sets, one row of distinct shifts per UE."""

    num_subcarriers: int
    pilot_symbols: int
    sets: np.ndarray  # (K, |Y|) int

    def __post_init__(self) -> None:
        sets = np.asarray(self.sets, dtype=np.int64)
        if sets.ndim != 2:
            raise ValueError("sets must be a (K, |Y|) array")
        if sets.size and (sets.min() < 0 or sets.max() >= self.universe_size):
            raise ValueError("shift outside the phase-shift universe")
        for row in sets:
            if np.unique(row).size != row.size:
                raise ValueError("APSP sets must hold distinct shifts")
        sets.setflags(write=False)
        object.__setattr__(self, "sets", sets)

    @property
    def universe_size(self) -> int:
        return self.num_subcarriers * self.pilot_symbols

    @property
    def set_size(self) -> int:
        return self.sets.shape[1]

    def groups(self) -> np.ndarray:
        return pilot_group(self.sets, self.pilot_symbols)

    def offsets(self) -> np.ndarray:
        return delay_offset(self.sets, self.pilot_symbols)

    def draw_shifts(self, rng: np.random.Generator) -> np.ndarray:
        """One shift per UE, uniform over its set."""
        pick = rng.integers(0, self.set_size, size=self.sets.shape[0])
        return self.sets[np.arange(self.sets.shape[0]), pick]

    def to_text(self) -> str:
        lines = [f"# apsp-plan num_subcarriers={self.num_subcarriers} "
                 f"pilot_symbols={self.pilot_symbols}"]
        for k, row in enumerate(self.sets):
            lines.append(f"{k}: " + " ".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PilotPlan":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        header = dict(tok.split("=") for tok in lines[0].lstrip("#").split()[1:])
        rows = {}
        for ln in lines[1:]:
            ue, vals = ln.split(":")
            rows[int(ue)] = [int(v) for v in vals.split()]
        sets = np.array([rows[k] for k in range(len(rows))], dtype=np.int64)
        return cls(int(header["num_subcarriers"]), int(header["pilot_symbols"]), sets)


# --- explicit pilot matrices (validation scale) ---------------------------

def unitary_dft(Z: int) -> np.ndarray:
    z = np.arange(Z)
    return np.exp(-2j * np.pi * np.outer(z, z) / Z) / np.sqrt(Z)


def phase_ramp(n_subcarriers: int, offset: int) -> np.ndarray:
    """Diagonal of the delay matrix D_offset."""
    s = np.arange(n_subcarriers)
    return np.exp(-2j * np.pi * s * offset / n_subcarriers)


def build_pilot_matrix(phi: int, n_subcarriers: int, Z: int,
                       unitary: np.ndarray | None = None,
                       base: np.ndarray | None = None) -> np.ndarray:
    """Full N_c x N_c*Z pilot matrix of shift ``phi``.

    ``base`` is the diagonal of the shared unit-modulus base pilot (all ones by
    default); ``unitary`` defaults to the Z-point DFT.
    """
    if n_subcarriers * Z > MAX_PILOT_DIM:
        raise ValueError(f"pilot dimension {n_subcarriers * Z} exceeds guard {MAX_PILOT_DIM}")
    if not 0 <= phi < n_subcarriers * Z:
        raise ValueError("shift outside the phase-shift universe")
    U = unitary_dft(Z) if unitary is None else np.asarray(unitary)
    b = np.ones(n_subcarriers) if base is None else np.asarray(base)
    block = np.diag(phase_ramp(n_subcarriers, int(phi) // Z) * b)
    return np.kron(U[int(phi) % Z][None, :], block)


# --- cyclic delay shifts ---------------------------------------------------

def shift_columns(x: np.ndarray, d: int, n_subcarriers: int) -> np.ndarray:
    """Cyclically delay the last axis by ``d`` bins within an N_c-wide frame.

    The input occupies the first N_cp bins of the frame; the output is the
    same window after the shift, so bins pushed past N_cp are dropped and
    bins wrapping around from the end of the frame are zero.
    """
    Q = x.shape[-1]
    src = (np.arange(Q) - int(d)) % n_subcarriers
    valid = src < Q
    out = np.zeros_like(x)
    out[..., valid] = x[..., src[valid]]
    return out


def shift_spectrum(ups_beta: np.ndarray, d: int, n_subcarriers: int) -> np.ndarray:
    return shift_columns(np.asarray(ups_beta), d, n_subcarriers)


# --- decorrelated observations ----------------------------------------------

def delay_frames(h_beta: np.ndarray, shifts: np.ndarray, Z: int, n_subcarriers: int,
                 rho_p: float, rng: np.random.Generator | None = None,
                 noise: np.ndarray | None = None) -> np.ndarray:
    """Per-group delay frames, shape (..., Z, L, N, N_c), in large-scale units.

    ``h_beta`` holds the transmitting UEs' channels with shape
    (..., K_a, L, N, N_cp) and ``shifts`` their shifts (K_a,). The noise has
    unit-variance entries scaled by 1/sqrt(rho_p Z); pass ``noise`` (same
    shape as the output, unscaled) to reuse a specific draw.
    """
    h_beta = np.asarray(h_beta)
    *batch, Ka, L, N, Q = h_beta.shape
    shape = (*batch, Z, L, N, n_subcarriers)
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise is required")
        noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    frames = np.array(noise, dtype=complex, copy=True) / np.sqrt(rho_p * Z)
    shifts = np.asarray(shifts, dtype=np.int64)
    for j in range(Ka):
        g, o = int(shifts[j]) % Z, int(shifts[j]) // Z
        cols = (o + np.arange(Q)) % n_subcarriers
        frames[..., g, :, :, cols] += np.moveaxis(h_beta[..., j, :, :, :], -1, 0)
    return frames


def read_window(frames: np.ndarray, phi: int, Z: int, cp_length: int) -> np.ndarray:
    """The N_cp-wide window of a delay frame seen by shift ``phi``: (..., L, N, N_cp)."""
    n_sub = frames.shape[-1]
    cols = (int(phi) // Z + np.arange(cp_length)) % n_sub
    return frames[..., int(phi) % Z, :, :, :][..., cols]


def decorrelated_observation(phi: int, beta_l: np.ndarray, frames: np.ndarray,
                             Z: int, cp_length: int) -> np.ndarray:
    """Normalized observation for a UE using shift ``phi``; beta_l is its (L,) fading."""
    win = read_window(frames, phi, Z, cp_length)
    return win / np.sqrt(np.asarray(beta_l))[:, None, None]


def synthesize_decorrelated(k: int, l: int, h_beta: np.ndarray, beta: np.ndarray,
                            shifts: np.ndarray, active, rho_p: float, Z: int,
                            n_subcarriers: int, rng=None, noise: np.ndarray | None = None):
    """Decorrelated observation of UE ``k`` at AP ``l``.

    ``h_beta`` is the (K, L, N, N_cp) realization of all UEs and ``shifts``
    their per-slot shifts; only UEs in ``active`` transmit. ``noise`` may be a
    (Z, N, N_c) unit-variance frame noise for AP ``l``.
    """
    active = np.asarray(active, dtype=np.int64)
    if k not in set(active.tolist()):
        raise ValueError(f"UE {k} is not active")
    rng = np.random.default_rng(rng) if noise is None else None
    hl = np.asarray(h_beta)[active][:, l:l + 1]
    nz = None if noise is None else np.asarray(noise)[:, None]
    frames = delay_frames(hl, np.asarray(shifts)[active], Z, n_subcarriers, rho_p,
                          rng=rng, noise=nz)
    Q = hl.shape[-1]
    return decorrelated_observation(int(shifts[k]), np.asarray(beta)[k, l:l + 1],
                                    frames, Z, Q)[0]


# --- MMSE estimation ---------------------------------------------------------

def interference_power(ups_beta: np.ndarray, shifts: np.ndarray, target: int,
                       Z: int, n_subcarriers: int) -> np.ndarray:
    """Sum over same-group transmitters of their delay-shifted spectra.

    ``ups_beta`` is (K_a, ..., N_cp) for the transmitting UEs in the order of
    ``shifts``; ``target`` indexes into that order. The target's own unshifted
    spectrum is included.
    """
    shifts = np.asarray(shifts, dtype=np.int64)
    g0, o0 = shifts[target] % Z, shifts[target] // Z
    total = np.zeros_like(ups_beta[target], dtype=float)
    for j, phi in enumerate(shifts):
        if phi % Z != g0:
            continue
        total += shift_columns(ups_beta[j], int(phi // Z - o0), n_subcarriers)
    return total


def slot_denominators(ups_beta: np.ndarray, shifts: np.ndarray, Z: int,
                      n_subcarriers: int, rho_p: float) -> np.ndarray:
    """Estimator denominators for every transmitter, (K_a, ..., N_cp)."""
    ups_beta = np.asarray(ups_beta, dtype=float)
    out = np.empty_like(ups_beta)
    for i in range(ups_beta.shape[0]):
        out[i] = interference_power(ups_beta, shifts, i, Z, n_subcarriers)
    return out + 1.0 / (rho_p * Z)


def _active_index(k: int, active) -> int:
    active = [int(a) for a in np.asarray(active).ravel()]
    if k not in active:
        raise ValueError(f"UE {k} is not active")
    return active.index(k)


def _denominator(k, l, ps, shifts, active, rho_p, Z, n_subcarriers):
    active = np.asarray(active, dtype=np.int64)
    i = _active_index(k, active)
    ub = ps.beta_weighted[active, l]
    den = interference_power(ub, np.asarray(shifts)[active], i, Z, n_subcarriers)
    return den + 1.0 / (rho_p * Z)


def mmse_gain(k: int, l: int, ps, shifts, active, rho_p: float, Z: int,
              n_subcarriers: int) -> np.ndarray:
    """Element-wise gain applied to the decorrelated observation of (k, l).

    ``ps`` is a :class:`~cellfree.channel.PowerSpectrum`; ``shifts`` holds the
    per-slot shift of every UE (entries of silent UEs are ignored).
    """
    den = _denominator(k, l, ps, shifts, active, rho_p, Z, n_subcarriers)
    return ps.beta[k, l] * ps.ups[k, l] / den


def mmse_estimate(y_check: np.ndarray, k: int, l: int, ps, shifts, active,
                  rho_p: float, Z: int, n_subcarriers: int) -> np.ndarray:
    """MMSE estimate of the normalized channel H_{k,l}."""
    return mmse_gain(k, l, ps, shifts, active, rho_p, Z, n_subcarriers) * y_check


def mse_ce_closed_form(k: int, l: int, ps, shifts, active, rho_p: float, Z: int,
                       n_subcarriers: int) -> np.ndarray:
    """Per-element estimation error variance of the normalized channel."""
    den = _denominator(k, l, ps, shifts, active, rho_p, Z, n_subcarriers)
    ups = ps.ups[k, l]
    return ups - ups * (ps.beta[k, l] * ups) / den


@dataclass(frozen=True)
class EstimationResult:
    estimate: np.ndarray       # (N, N_cp)
    error: np.ndarray          # closed-form Xi, (N, N_cp)
    empirical: np.ndarray | None = None


def estimate_link(k: int, l: int, y_check: np.ndarray, ps, shifts, active, rho_p: float,
                  Z: int, n_subcarriers: int, truth: np.ndarray | None = None) -> EstimationResult:
    """Estimate plus closed-form error, with the squared error when ``truth`` is known."""
    den = _denominator(k, l, ps, shifts, active, rho_p, Z, n_subcarriers)
    ups = ps.ups[k, l]
    est = (ps.beta[k, l] * ups / den) * y_check
    err = ups - ups * (ps.beta[k, l] * ups) / den
    emp = None if truth is None else np.abs(np.asarray(truth) - est) ** 2
    return EstimationResult(est, err, emp)
