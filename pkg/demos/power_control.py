"""Max-min power control on one deployment: Dinkelbach trace, bisection check, SE gain.

Run: python3 demos/power_control.py [seed]
"""

import sys

import numpy as np

from cellfree import allocation, link, powerctl
from cellfree.channel import build_power_spectrum, transforms_for
from cellfree.config import SystemConfig
from cellfree.scenario import build_scenario

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = SystemConfig.desk_scale(angle_spread=np.radians(8.0), delay_spread=0.8e-6, num_taps=50)
scn = build_scenario(cfg, seed)
ps = build_power_spectrum(scn, cfg)
rng = np.random.default_rng(seed)

sets = allocation.proposed_allocation(ps, scn.beta, cfg.num_subcarriers, cfg.pilot_symbols,
                                      cfg.num_clusters, cfg.overlap_threshold,
                                      cfg.apsp_set_size, rng).sets
active = np.sort(rng.permutation(cfg.num_ues)[:10])
plan = allocation.PilotPlan(cfg.num_subcarriers, cfg.pilot_symbols, sets)
shifts = plan.draw_shifts(rng)[active]
stats = link.estimate_link_statistics(ps, transforms_for(cfg), active, shifts, scn.rho_p,
                                      scn.rho_u, cfg.pilot_symbols, 0, 1000, rng)

sol = powerctl.dinkelbach(stats, 1e-6)
print("iteration   t_min        w*")
for i, (t, w) in enumerate(sol.trace):
    print(f"{i:9d}   {t:.6f}   {w:.3e}")
print(f"Dinkelbach t* = {sol.t:.6f}, bisection t* = {powerctl.bisection_oracle(stats, 1e-7):.6f}")

varpi = cfg.overhead_factor
one = np.ones(stats.num_active)
for label, eta in (("full power", one), ("max-min", sol.eta)):
    print(f"{label:10s} min SE_lb {link.se_lb(eta, stats, varpi).min():.4f}   "
          f"min SE_genie {link.se_genie(eta, stats, varpi).min():.4f} bit/s/Hz")
print("eta* =", np.array2string(sol.eta, precision=3))
