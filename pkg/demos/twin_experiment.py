"""Twin experiment: synthesize DN records, recover gamma, then rho and q, and report errors."""

import numpy as np

from npme.config import load_config
from npme.pipeline import FAMILIES, build_scenario, invert, measure

cfg = load_config(None)
sc = build_scenario(cfg)
records = measure(sc, threads=4)
print(f"{len(records)} records over h = {cfg.measurement['h_list']} and T0 = {sc.T0_pair}")
r1, r2, _ = invert(sc, records)

x = sc.geom.x
gamma_true = cfg._values(cfg.gamma_field, x)
gamma_hat = FAMILIES[cfg.inversion["family"]].gamma(r1.theta)(x)
i = sc.geom.interior
rho, q = sc.coeffs.rho[i], sc.coeffs.q[i]
print(f"theta = {np.round(r1.theta, 5)}, alpha = {r1.diagnostics['alpha']:.2e}")
print(f"gamma sup error {np.abs(gamma_hat - gamma_true).max() / np.abs(gamma_true).max():.2e}")
print(f"rho   L2 error  {np.linalg.norm(r2.rho_hat - rho) / np.linalg.norm(rho):.2e}")
print(f"q     L2 error  {np.linalg.norm(r2.q_hat - q) / np.linalg.norm(q):.2e}")
