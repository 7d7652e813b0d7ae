"""Estimation error of the three pilot schemes on one desk-scale deployment.

Run: python3 demos/mse_ordering.py [seed]
"""

import sys

import numpy as np

from cellfree import allocation
from cellfree.channel import build_power_spectrum
from cellfree.config import SystemConfig
from cellfree.scenario import build_scenario

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = SystemConfig.desk_scale()
scn = build_scenario(cfg, seed)
ps = build_power_spectrum(scn, cfg)
print(f"{cfg.num_ues} UEs, {cfg.num_aps} APs x {cfg.antennas_per_ula} antennas, "
      f"{cfg.num_subcarriers} subcarriers, p_a = {cfg.activation_prob}")

n_sub, Z = cfg.num_subcarriers, cfg.pilot_symbols
plans = {
    "psop-rpa": allocation.rpa_psop(cfg.num_ues, n_sub, cfg.cp_length, Z, seed).sets,
    "apsp-rpa": allocation.rpa_apsp(cfg.num_ues, n_sub, Z, cfg.apsp_set_size, seed).sets,
}
out = allocation.proposed_allocation(ps, scn.beta, n_sub, Z, cfg.num_clusters,
                                     cfg.overlap_threshold, cfg.apsp_set_size, seed)
plans["apsp-alloc"] = out.sets
print(f"allocator: {out.fallbacks} UEs needed the fallback rule")

model = allocation.MseModel(ps, scn.rho_p, Z, n_sub)
for name, sets in plans.items():
    est = allocation.expected_mse(model, sets, cfg.activation_prob, 2000,
                                  np.random.default_rng([seed, 3]))
    print(f"  {name:11s} {est.value:.4f} +- {est.stderr:.4f}")
print(f"  {'bound':11s} {allocation.mse_lower_bound(model, cfg.activation_prob):.4f}")
