"""APSP set allocation, averaged estimation error and random baselines.

The allocator clusters UEs by their large-scale fading vectors, then walks
each cluster greedily, giving every UE the phase shifts whose delay-shifted
interference spectra overlap least with its own serving-AP spectrum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import PowerSpectrum
from .pilot import PilotPlan, interference_power

KMEANS_MAX_ITERS = 100
EXHAUSTIVE_LIMIT = 10_000


# --- overlap -----------------------------------------------------------------

def overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized overlap of two nonnegative matrices, 0 if either is zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(np.sum(a * a)))
    nb = math.sqrt(float(np.sum(b * b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(abs(float(np.sum(a * b))) / (na * nb), 1.0)


def _delay_index(cp_length: int, n_subcarriers: int) -> np.ndarray:
    q = np.arange(cp_length)
    return (q[:, None] - q[None, :]) % n_subcarriers


def shifted_inner_products(a: np.ndarray, b: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """``sum(a * shift(b, d))`` for every delay d in 0..N_c-1.

    Both inputs are (M, N_cp). Computed from the column cross-Gram matrix,
    so entries with no common support are exact zeros.
    """
    gram = np.asarray(a, dtype=float).T @ np.asarray(b, dtype=float)
    idx = _delay_index(gram.shape[0], n_subcarriers)
    return np.bincount(idx.ravel(), weights=gram.ravel(), minlength=n_subcarriers)


def overlap_profile(a: np.ndarray, b: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """``overlap(a, shift(b, d))`` for every delay d in 0..N_c-1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    inner = shifted_inner_products(a, b, n_subcarriers)
    col = np.sum(b * b, axis=0)
    idx = _delay_index(b.shape[1], n_subcarriers)
    nb2 = np.bincount(idx.ravel(), weights=np.broadcast_to(col[None, :], idx.shape).ravel(),
                      minlength=n_subcarriers)
    na = math.sqrt(float(np.sum(a * a)))
    out = np.zeros(n_subcarriers)
    ok = (nb2 > 0) & (na > 0)
    out[ok] = np.minimum(np.abs(inner[ok]) / (na * np.sqrt(nb2[ok])), 1.0)
    return out


# --- clustering ----------------------------------------------------------------

def _similarity(x: np.ndarray, cents: np.ndarray) -> np.ndarray:
    """Overlap between each row of ``x`` and each centroid, (K, J)."""
    nx = np.linalg.norm(x, axis=1)
    nc = np.linalg.norm(cents, axis=1)
    denom = np.outer(nx, nc)
    sim = np.abs(x @ cents.T)
    return np.divide(sim, denom, out=np.zeros_like(sim), where=denom > 0)


def kmeans_cluster(beta: np.ndarray, n_clusters: int,
                   seed: int | np.random.Generator | None = None,
                   max_iters: int = KMEANS_MAX_ITERS) -> list[np.ndarray]:
    """Partition UEs by maximal overlap between fading vectors and centroids.

    Seeding picks each new centroid with probability proportional to the
    dissimilarity ``1 - overlap`` to the closest existing one. Returns J
    sorted index arrays; empty clusters are refilled with the UE least
    similar to its own centroid.
    """
    x = np.asarray(beta, dtype=float)
    K = x.shape[0]
    if not 1 <= n_clusters <= K:
        raise ValueError("number of clusters must lie in [1, K]")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(K))
    chosen = [first]
    for _ in range(1, n_clusters):
        sim = _similarity(x, x[chosen]).max(axis=1)
        w = np.clip(1.0 - sim, 0.0, None)
        w[chosen] = 0.0
        if w.sum() <= 0:
            pool = np.setdiff1d(np.arange(K), chosen)
            chosen.append(int(rng.choice(pool)))
        else:
            chosen.append(int(rng.choice(K, p=w / w.sum())))
    cents = x[chosen].copy()

    labels = np.full(K, -1)
    for _ in range(max_iters):
        sim = _similarity(x, cents)
        new = np.argmax(sim, axis=1)
        new = _repair_empty(new, sim, n_clusters)
        if np.array_equal(new, labels):
            break
        labels = new
        cents = np.array([x[labels == j].mean(axis=0) for j in range(n_clusters)])
    return [np.flatnonzero(labels == j) for j in range(n_clusters)]


def _repair_empty(labels: np.ndarray, sim: np.ndarray, n_clusters: int) -> np.ndarray:
    labels = labels.copy()
    for j in range(n_clusters):
        if np.any(labels == j):
            continue
        own = sim[np.arange(labels.size), labels]
        counts = np.bincount(labels, minlength=n_clusters)
        movable = counts[labels] > 1
        own = np.where(movable, own, np.inf)
        labels[int(np.argmin(own))] = j
    return labels


# --- allocation -------------------------------------------------------------------

@dataclass(frozen=True)
class AllocationOutcome:
    plan: PilotPlan
    clusters: tuple
    optimal: bool
    fallbacks: int = 0

    @property
    def sets(self) -> np.ndarray:
        return self.plan.sets


def _allocation_spectra(ps: PowerSpectrum) -> tuple[np.ndarray, np.ndarray]:
    own = PowerSpectrum.stack(ps.masked) ** 2       # Υ⁰ ⊙ Υ⁰
    intf = PowerSpectrum.stack(ps.beta_weighted)    # Υ^β
    return own, intf


def _shift_criterion(profile: np.ndarray, allocated: np.ndarray, Z: int,
                     universe: int) -> np.ndarray:
    """Worst overlap with any of a UE's allocated shifts, per candidate shift."""
    n_sub = profile.size
    phis = np.arange(universe)
    g, o = phis % Z, phis // Z
    worst = np.zeros(universe)
    for p in allocated:
        val = profile[(int(p) // Z - o) % n_sub]
        worst = np.maximum(worst, np.where(g == int(p) % Z, val, 0.0))
    return worst


def allocate_apsp(clusters, ps: PowerSpectrum, n_subcarriers: int, Z: int,
                  gamma: float, set_size: int,
                  seed: int | np.random.Generator | None = None) -> AllocationOutcome:
    """Greedy per-cluster APSP set allocation.

    Within each cluster the lowest-index UE receives random shifts. Every
    further UE takes the lowest-index shifts whose mean worst-case overlap
    with the already served UEs stays within ``gamma``; if fewer than
    ``set_size`` qualify, it takes the shifts with the smallest summed
    worst-case overlap (ties to the lower shift).
    """
    universe = n_subcarriers * Z
    if set_size > universe:
        raise ValueError("set size exceeds the number of phase shifts")
    rng = np.random.default_rng(seed)
    own, intf = _allocation_spectra(ps)
    K = own.shape[0]
    sets = np.full((K, set_size), -1, dtype=np.int64)
    fallbacks = 0
    clusters = tuple(np.sort(np.asarray(c, dtype=np.int64)) for c in clusters)
    covered = np.concatenate(clusters) if clusters else np.array([], dtype=np.int64)
    if np.unique(covered).size != K or covered.size != K:
        raise ValueError("clusters must partition the UEs")
    for members in clusters:
        if members.size == 0:
            continue
        head = int(members[0])
        sets[head] = np.sort(rng.choice(universe, size=set_size, replace=False))
        done = [head]
        for k in members[1:]:
            k = int(k)
            total = np.zeros(universe)
            for kp in done:
                prof = overlap_profile(own[k], intf[kp], n_subcarriers)
                total += _shift_criterion(prof, sets[kp], Z, universe)
            ok = np.flatnonzero(total / len(done) <= gamma)
            if ok.size >= set_size:
                sets[k] = ok[:set_size]
            else:
                fallbacks += 1
                sets[k] = np.sort(np.argsort(total, kind="stable")[:set_size])
            done.append(k)
    plan = PilotPlan(n_subcarriers, Z, sets)
    return AllocationOutcome(plan, clusters, interference_free(plan, ps), fallbacks)


def interference_free(plan: PilotPlan, ps: PowerSpectrum) -> bool:
    """True when no pair of UEs can ever contaminate each other.

    Checks, for every ordered pair and every combination of their shifts in
    the same group, that the shifted interferer spectrum has no common
    support with the squared serving-AP spectrum.
    """
    own, intf = _allocation_spectra(ps)
    K = own.shape[0]
    Z, n_sub = plan.pilot_symbols, plan.num_subcarriers
    for k in range(K):
        for kp in range(K):
            if kp == k:
                continue
            inner = shifted_inner_products(own[k], intf[kp], n_sub)
            for p in plan.sets[k]:
                for pp in plan.sets[kp]:
                    if p % Z != pp % Z:
                        continue
                    if inner[(pp // Z - p // Z) % n_sub] != 0.0:
                        return False
    return True


# --- averaged MSE ------------------------------------------------------------------

class MseModel:
    """Precomputed stacked spectra for evaluating the averaged estimation error."""

    def __init__(self, ps: PowerSpectrum, rho_p: float, Z: int, n_subcarriers: int):
        self.own = PowerSpectrum.stack(ps.masked)            # Υ⁰
        self.own_beta = PowerSpectrum.stack(ps.masked_beta)  # Υ^{β,0}
        self.beta_w = PowerSpectrum.stack(ps.beta_weighted)  # Υ^β
        self.counts = np.asarray(ps.mask).sum(axis=1).astype(float)
        self.rho_p = float(rho_p)
        self.Z = int(Z)
        self.n_subcarriers = int(n_subcarriers)

    @property
    def num_ues(self) -> int:
        return self.own.shape[0]

    def slot_mse(self, active, shifts) -> np.ndarray:
        """Averaged error of every active UE for one shift choice.

        ``shifts`` lists the shifts of the active UEs in the order of ``active``.
        """
        active = np.asarray(active, dtype=np.int64)
        shifts = np.asarray(shifts, dtype=np.int64)
        ub = self.beta_w[active]
        out = np.empty(active.size)
        noise = 1.0 / (self.rho_p * self.Z)
        for i, k in enumerate(active):
            den = interference_power(ub, shifts, i, self.Z, self.n_subcarriers) + noise
            u0 = self.own[k]
            val = np.sum(u0 - u0 * self.own_beta[k] / den)
            out[i] = val / (self.n_subcarriers * self.counts[k])
        return out

    def floor(self) -> np.ndarray:
        """Per-UE interference-free error, the minimum of :meth:`slot_mse`."""
        noise = 1.0 / (self.rho_p * self.Z)
        val = np.sum(self.own - self.own * self.own_beta / (self.beta_w + noise), axis=(1, 2))
        return val / (self.n_subcarriers * self.counts)


def averaged_mse(model: MseModel, active, shifts) -> float:
    """Mean over active UEs of the averaged error for one slot."""
    active = np.asarray(active)
    if active.size == 0:
        return 0.0
    return float(np.mean(model.slot_mse(active, shifts)))


def binomial_pmf(n_active: int, K: int, p_a: float) -> float:
    return math.comb(K, n_active) * p_a ** n_active * (1.0 - p_a) ** (K - n_active)


def enumeration_size(K: int, set_size: int, n_active: int | None = None) -> int:
    if n_active is not None:
        return math.comb(K, n_active) * set_size ** n_active
    return (1 + set_size) ** K - 1


@dataclass(frozen=True)
class MseEstimate:
    value: float
    stderr: float
    trials: int
    exhaustive: bool


def _exhaustive(model: MseModel, sets: np.ndarray, p_a: float,
                n_active: int | None) -> float:
    K = sets.shape[0]
    sizes = [n_active] if n_active is not None else range(1, K + 1)
    total = 0.0
    for ka in sizes:
        acc = 0.0
        count = 0
        for act in itertools.combinations(range(K), ka):
            for shifts in itertools.product(*(sets[k] for k in act)):
                acc += averaged_mse(model, act, shifts)
                count += 1
        mean = acc / count
        total += mean if n_active is not None else binomial_pmf(ka, K, p_a) * mean
    return total


def expected_mse(model: MseModel, sets: np.ndarray, p_a: float, trials: int,
                 seed: int | np.random.Generator | None = None,
                 n_active: int | None = None,
                 exhaustive_limit: int = EXHAUSTIVE_LIMIT) -> MseEstimate:
    """Averaged error over activity patterns and per-slot shift choices.

    With ``n_active`` the number of active UEs is fixed; otherwise each UE is
    active independently with probability ``p_a`` and slots without active
    UEs contribute zero. Small instances are enumerated exactly. The random
    draws do not depend on the set size, so schemes evaluated with the same
    seed see the same activity patterns.
    """
    sets = np.asarray(sets, dtype=np.int64)
    K, Y = sets.shape
    if enumeration_size(K, Y, n_active) <= exhaustive_limit:
        return MseEstimate(_exhaustive(model, sets, p_a, n_active), 0.0, 0, True)
    rng = np.random.default_rng(seed)
    vals = np.empty(trials)
    for t in range(trials):
        if n_active is None:
            active = np.flatnonzero(rng.random(K) < p_a)
        else:
            active = np.sort(rng.permutation(K)[:n_active])
        pick = np.minimum((rng.random(active.size) * Y).astype(np.int64), Y - 1)
        vals[t] = averaged_mse(model, active, sets[active, pick])
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    return MseEstimate(float(vals.mean()), se, trials, False)


def per_ue_mse(model: MseModel, sets: np.ndarray, n_active: int, trials: int,
               seed: int | np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-UE averaged error given that the UE is active, with ``n_active`` active UEs.

    Returns the per-UE mean and the number of trials in which each UE was
    active (UEs never drawn get NaN).
    """
    sets = np.asarray(sets, dtype=np.int64)
    K, Y = sets.shape
    rng = np.random.default_rng(seed)
    acc = np.zeros(K)
    cnt = np.zeros(K, dtype=np.int64)
    for _ in range(trials):
        active = np.sort(rng.permutation(K)[:n_active])
        pick = np.minimum((rng.random(active.size) * Y).astype(np.int64), Y - 1)
        acc[active] += model.slot_mse(active, sets[active, pick])
        cnt[active] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan), cnt


def mse_lower_bound(model: MseModel, p_a: float | None = None) -> float:
    """Interference-free floor of the expected averaged error.

    Without ``p_a`` the value conditional on a fixed number of active UEs is
    returned; with it, the conditional value is weighted by the probability
    of at least one active UE.
    """
    cond = float(np.mean(model.floor()))
    if p_a is None:
        return cond
    K = model.num_ues
    return sum(binomial_pmf(ka, K, p_a) for ka in range(1, K + 1)) * cond


# --- random baselines ------------------------------------------------------------------

def psop_universe(n_subcarriers: int, cp_length: int, Z: int) -> np.ndarray:
    """Shifts whose delay offsets are spaced by the cyclic prefix length."""
    q = np.arange(n_subcarriers // cp_length)
    z = np.arange(Z)
    return np.sort((z[:, None] + Z * cp_length * q[None, :]).ravel())


def rpa_psop(K: int, n_subcarriers: int, cp_length: int, Z: int,
             seed: int | np.random.Generator | None = None) -> PilotPlan:
    rng = np.random.default_rng(seed)
    uni = psop_universe(n_subcarriers, cp_length, Z)
    return PilotPlan(n_subcarriers, Z, uni[rng.integers(0, uni.size, size=K)][:, None])


def rpa_apsp(K: int, n_subcarriers: int, Z: int, set_size: int,
             seed: int | np.random.Generator | None = None) -> PilotPlan:
    rng = np.random.default_rng(seed)
    sets = np.array([np.sort(rng.choice(n_subcarriers * Z, size=set_size, replace=False))
                     for _ in range(K)], dtype=np.int64)
    return PilotPlan(n_subcarriers, Z, sets.reshape(K, set_size))


def proposed_allocation(ps: PowerSpectrum, beta: np.ndarray, n_subcarriers: int, Z: int,
                        n_clusters: int, gamma: float, set_size: int,
                        seed: int | np.random.Generator | None = None) -> AllocationOutcome:
    """Clustering followed by greedy allocation with one seed stream."""
    rng = np.random.default_rng(seed)
    clusters = kmeans_cluster(beta, n_clusters, rng)
    return allocate_apsp(clusters, ps, n_subcarriers, Z, gamma, set_size, rng)
