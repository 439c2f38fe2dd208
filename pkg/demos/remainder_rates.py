"""Remainder norms of the time-integral transform as the data amplitude grows."""

from npme.config import load_config
from npme.pipeline import build_scenario, remainder_sweep

cfg = load_config(None)
sc = build_scenario(cfg)
sw = remainder_sweep(sc, [1e2, 1e3, 1e4, 1e5])
print("h         |R1|        |R2|        eps")
for r in sw["rows"]:
    print(f"{r['h']:<9.0e} {r['norm_R1']:<11.4e} {r['norm_R2']:<11.4e} {r['epsilon']:.2e}")
rt = sw["rates"]
print(f"slopes: R1 {rt['slope_R1']:.3f} (<= {rt['expected_R1'] + 0.15:.3f}), R2 {rt['slope_R2']:.3f} (<= {rt['expected_R2'] + 0.2:.3f})")
