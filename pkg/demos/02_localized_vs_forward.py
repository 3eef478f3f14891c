"""
Localized filtering of a rotating plume (desk scale)
====================================================

The reduced second experiment: a Gaussian plume loops through a 3x3 grid of
unit subdomains carried by a time-periodic flow.  Only two subdomains have
sensors.  The forward model starts from the exact initial field and runs open
loop.  The localized filters start from zero and learn the plume from noisy
data, passing information to their neighbours through the inflow interfaces.

Sensorless subdomains can also treat that inflow data as observations.  Their
Riccati matrices are never corrected by data and grow at every
reinitialization, so the gain on those pseudo-observations eventually
explodes; the last column shows the resulting instability.

Run:  python demos/02_localized_vs_forward.py       (a couple of minutes)
"""
import numpy as np

from localfilter import experiment_config, run

cfg = experiment_config(2, desk=True).with_(steps=400)
print(f"{cfg.sx}x{cfg.sy} subdomains of {cfg.ex}x{cfg.ey} elements, sensors on "
      f"subdomains {cfg.observed}, probe at {cfg.probe}")

runs = {"forward": cfg.with_(mode="forward"),
        "localized": cfg.with_(mode="localized", pseudo_obs=False),
        "pseudo-obs": cfg.with_(mode="localized")}
results = {name: run(c) for name, c in runs.items()}
for name, res in results.items():
    print(f"{name:<11} estimation error {res.estimation_error:10.3g}")

# relative spatial error along the run; the filters start from zero, so their
# error begins at 100%
print(f"\n{'step':>5}" + "".join(f"{name:>12}" for name in results))
for k in range(0, cfg.steps + 1, 50):
    print(f"{k:5d}" + "".join(f"{res.records[k].spatial_error:12.3g}"
                              for res in results.values()))

# at the probe, the filter reports a pointwise bound next to its estimate
loc = results["localized"]
est, truth, bound = (loc.series(c) for c in ("probe_est", "probe_truth", "probe_bound"))
inside = np.abs(est - truth) <= bound
print(f"\nprobe: truth within the bound on {inside.mean():.0%} of steps")
print(f"{'step':>5}{'estimate':>10}{'truth':>10}{'bound':>10}")
for k in range(0, cfg.steps + 1, 50):
    print(f"{k:5d}{est[k]:10.3f}{truth[k]:10.3f}{bound[k]:10.3f}")
