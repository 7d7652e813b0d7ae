"""Activity detection with hopping patterns at nominal and boosted pilot SNR.

Run: python3 demos/activity_detection.py [seed]
"""

import sys

import numpy as np

from cellfree import activity, allocation
from cellfree.channel import build_power_spectrum
from cellfree.config import SystemConfig
from cellfree.scenario import build_scenario

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = SystemConfig.desk_scale(num_ues=20)
scn = build_scenario(cfg, seed)
ps = build_power_spectrum(scn, cfg)
rng = np.random.default_rng(seed)
Z, n_sub = cfg.pilot_symbols, cfg.num_subcarriers

sets = allocation.proposed_allocation(ps, scn.beta, n_sub, Z, cfg.num_clusters,
                                      cfg.overlap_threshold, cfg.apsp_set_size, rng).sets
patterns = activity.build_patterns(sets, cfg.frame_slots, rng)
active = np.sort(rng.permutation(cfg.num_ues)[:5])
print("active UEs:", active.tolist())

for scale in (1.0, 1e4):
    rho = scn.rho_p * scale
    frames = activity.pilot_frames(ps, patterns, active, rho, Z, n_sub, rng)
    rep = activity.likelihood_detect(frames, patterns, ps, rho, Z, cfg.activation_prob, active)
    tau = activity.calibrate_threshold(ps, patterns, rho, Z, n_sub, trials=50, seed=rng)
    erep = activity.detect_active(rep.statistics, tau, active)
    print(f"rho_p x {scale:g}: likelihood found {rep.detected.tolist()} "
          f"({rep.misses} missed, {rep.false_alarms} false); "
          f"energy detector {erep.misses} missed, {erep.false_alarms} false")
