"""Solve both problems once on a small system and compare the surface modes.

    python3 demos/quickstart.py
"""
from omnisurface import PowerMinOptions, SystemConfig, sample_channels, solve_with_mode

cfg = SystemConfig(n_tx=8, n_elements=32, k_r=2, k_t=2, seed=7)
channels = sample_channels(cfg)
opts = PowerMinOptions(outer_max_iters=30)

print("minimum power for a 20 dB target on every user")
sd = solve_with_mode("power", channels, cfg, "SD", opts=opts)
eed = solve_with_mode("power", channels, cfg, "EED", warm=(sd,), opts=opts)
ued = solve_with_mode("power", channels, cfg, "UED", warm=(eed,), opts=opts)
for name, rep in (("SD", sd), ("EED", eed), ("UED", ued)):
    print(f"  {name:4s} {rep.objective:10.4f} W  ({rep.status.value}, {rep.iterations} iterations)")

print("sum-rate with the default 5 dBW budget")
irs = solve_with_mode("rate", channels, cfg, "IRS")
eed = solve_with_mode("rate", channels, cfg, "EED")
ued = solve_with_mode("rate", channels, cfg, "UED", warm=(eed,))
for name, rep in (("IRS", irs), ("EED", eed), ("UED", ued)):
    print(f"  {name:4s} {rep.objective:10.4f} bit/s/Hz")
print("energy split chosen by UED:", ued.ios.zeta.round(3))
