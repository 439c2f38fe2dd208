"""Forward solve with the reference configuration; prints the interior profile at a few times."""

import numpy as np

from npme.config import load_config
from npme.forward import solve_parabolic_limit
from npme.pipeline import build_scenario

cfg = load_config(None)
sc = build_scenario(cfg)
sv = cfg.solver
datum = cfg.forward_datum(sc.geom)
u = solve_parabolic_limit(
    sc.geom, sc.forms, sc.coeffs, sc.law, datum, None, n_steps=int(sv["n_steps"]), T=float(sv["T"]),
    k_min=int(sv["eps_k_min"]), k_max=int(sv["eps_k_max"]), newton=cfg.newton(),
)
i = sc.geom.interior
cols = np.linspace(0, len(u.t) - 1, 5).astype(int)
print("x       " + "  ".join(f"t={u.t[k]:<6.3f}" for k in cols))
for row in range(0, i.size, 4):
    j = i[row]
    print(f"{sc.geom.x[j]:+.3f}  " + "  ".join(f"{u.values[j, k]:.6f}" for k in cols))
print(f"final epsilon {u.meta['epsilon']:.3g}, worst Newton residual {u.meta['max_newton_residual']:.2e}")
