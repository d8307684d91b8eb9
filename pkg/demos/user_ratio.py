"""How the split of users between the two sides changes the minimum power.

Keeps four users in total and moves them from the transmission side to the
reflection side. With an unequal split every element can lean towards the
side that holds more users, so the gap to the equal split tends to grow as
the population gets lopsided.

    python3 demos/user_ratio.py [trials]
"""
import sys
from dataclasses import replace

import numpy as np

from omnisurface import PowerMinOptions, SystemConfig, sample_channels, solve_with_mode, trial_seed

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 3
base = SystemConfig(n_tx=8, n_elements=32, sinr_target=10.0)
opts = PowerMinOptions(outer_max_iters=30)
print(" k_r k_t      EED W      UED W")
for k_r in range(5):
    eed_w, ued_w = [], []
    for t in range(trials):
        cfg = replace(base, k_r=k_r, k_t=4 - k_r, seed=trial_seed(11, t))
        ch = sample_channels(cfg)
        eed = solve_with_mode("power", ch, cfg, "EED", opts=opts)
        ued = solve_with_mode("power", ch, cfg, "UED", warm=(eed,), opts=opts)
        eed_w.append(eed.objective)
        ued_w.append(ued.objective)
    print(f"{k_r:4d}{4 - k_r:4d} {np.mean(eed_w):10.4f} {np.mean(ued_w):10.4f}")
