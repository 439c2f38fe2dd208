"""Glue between a configuration and the numerical modules.

Measurements, coefficient extraction and the two recovery stages are run here so
that the command line and the property suite share one code path.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .discretization import AssembledForms, DiscreteGeometry, assemble_stiffness
from .dn_map import DNRecord, add_noise, dn_sweep, linear_dn_reference, sweep_epsilon
from .errors import RankDeficiency
from .forward import CoefficientFields, ExteriorDatum, solve_parabolic
from .inversion import (
    BumpFamily,
    ConstantFamily,
    RecoveryResult,
    decompose,
    leading_order_extract,
    stage1_recover_kernel,
    stage2_recover_coefficients,
    time_factors,
    time_integral_transform,
    verify_remainder_rates,
)
from .kernels import FractionalConductivity, beta_function

__all__ = ["Scenario", "build_scenario", "measure", "extract", "invert", "remainder_sweep", "linear_reference", "FAMILIES"]

FAMILIES = {"bump": BumpFamily, "constant": ConstantFamily}


@dataclass
class Scenario:
    cfg: ExperimentConfig
    geom: DiscreteGeometry
    forms: AssembledForms
    coeffs: CoefficientFields

    @property
    def law(self):
        return self.cfg.law()

    @property
    def T0_pair(self):
        T0 = float(self.cfg.measurement["T0"])
        return [T0, T0 / 2.0]

    @property
    def time_grid(self):
        ms = self.cfg.measurement
        return np.linspace(0.0, float(ms["T0"]), int(ms["n_steps"]) + 1)


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    geom = cfg.build_geometry()
    return Scenario(cfg, geom, assemble_stiffness(geom, cfg.kernel()), cfg.coefficients(geom))


def measure(sc: Scenario, threads: int = 1, noise: float = 0.0, seed: int | None = None, T0_list=None) -> list[DNRecord]:
    """DN records for every configured profile, both ``T0`` values and all tests."""
    cfg, ms = sc.cfg, sc.cfg.measurement
    profiles = cfg.measurement_profiles(sc.geom)
    catalog = cfg.test_catalog(sc.geom)
    T0s = sc.T0_pair if T0_list is None else list(T0_list)

    def one(a):
        return dn_sweep(
            sc.forms,
            sc.coeffs,
            sc.law,
            profiles[a],
            [float(h) for h in ms["h_list"]],
            T0s,
            catalog,
            n_steps=int(ms["n_steps"]),
            eps_min=float(ms["eps_min"]),
            datum_id=f"p{a}",
            newton=cfg.newton(),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(len(profiles))))
    else:
        parts = [one(a) for a in range(len(profiles))]
    records = sorted((r for part in parts for r in part), key=lambda r: (r.datum, r.test, r.T0, r.h))
    if noise > 0:
        records = add_noise(records, noise, cfg.seed if seed is None else seed)
    return records


def extract(sc: Scenario, records: list[DNRecord], tests=None) -> dict:
    """Leading-order and correction coefficients for every (profile, test, T0)."""
    m = sc.law.m
    n_terms = int(sc.cfg.inversion["n_terms"])
    n_prof = len(sc.cfg.profile_fields)
    catalog = sc.cfg.test_catalog(sc.geom) if tests is None else tests
    T0s = sorted({r.T0 for r in records})
    t = sc.time_grid
    out = {"T0": T0s, "tests": catalog.ids, "lead": {}, "correction": {}, "factors": {}, "fit_residual": {}}
    for T0 in T0s:
        fac = time_factors(t, T0, catalog.beta, m)
        lead = np.empty((n_prof, len(catalog.ids)))
        corr = np.empty_like(lead)
        res = np.empty_like(lead)
        for a in range(n_prof):
            for j, tid in enumerate(catalog.ids):
                fit = leading_order_extract(records, f"p{a}", tid, T0, m, fac["c0"], n_terms=n_terms)
                lead[a, j] = fit["value"]
                corr[a, j] = fit["coef"][1]
                res[a, j] = fit["residual"]
        out["lead"][T0], out["correction"][T0], out["factors"][T0], out["fit_residual"][T0] = lead, corr, fac, res
    return out


def linear_reference(sc: Scenario, tests=None) -> np.ndarray:
    """Direct linear DN values ``B_K(V0_a, w_j)`` for the configured profiles."""
    catalog = sc.cfg.test_catalog(sc.geom) if tests is None else tests
    return np.array([[linear_dn_reference(sc.geom, sc.forms, p, w) for w in catalog.profiles] for p in sc.cfg.measurement_profiles(sc.geom)])


def invert(sc: Scenario, records: list[DNRecord]) -> tuple[RecoveryResult, RecoveryResult, dict]:
    """Stage 1 (kernel) on the stage-1 tests, then stage 2 (rho, q) on all tests."""
    cfg, inv = sc.cfg, sc.cfg.inversion
    T0s = sorted({r.T0 for r in records})
    if len(T0s) < 2:
        raise RankDeficiency(f"records carry a single T0 value {T0s}; rho and q cannot be separated")
    ex = extract(sc, records)
    T0_lead = max(T0s)
    ids = ex["tests"]
    stage1_ids = cfg.stage1_catalog(sc.geom).ids
    cols = [ids.index(t) for t in stage1_ids]
    samples = ex["lead"][T0_lead][:, cols]
    profiles = cfg.measurement_profiles(sc.geom)
    s = float(cfg.physics["s"])
    family = FAMILIES[inv["family"]]
    catalog = cfg.test_catalog(sc.geom)
    r1 = stage1_recover_kernel(
        sc.geom,
        s,
        samples,
        profiles,
        catalog.profiles[cols],
        family=family,
        theta_prior=np.asarray(inv["theta_prior"], dtype=float),
        alphas=cfg.alphas("stage1_alphas"),
        rule=inv["rule"],
    )
    forms_hat = assemble_stiffness(sc.geom, FractionalConductivity(s, family.gamma(r1.theta)))
    r2 = stage2_recover_coefficients(
        forms_hat,
        profiles,
        catalog.profiles,
        {T: ex["correction"][T] for T in T0s},
        ex["factors"],
        sc.law.m,
        rho_floor=float(inv["rho_floor"]),
        order=int(inv["stage2_order"]),
        prior_weight=float(inv["stage2_prior_weight"]),
        alphas=cfg.alphas("stage2_alphas"),
        rule=inv["rule"],
    )
    return r1, r2, ex


def remainder_sweep(sc: Scenario, h_list, profile_index: int = 0) -> dict:
    """Transform, decomposition and remainder norms for each amplitude ``h``.

    Norms are ``sqrt(R^T (A_unit + M) R)``, the discrete ``H^s`` norm on the grid.
    Also returns the worst values of the per-run invariants.
    """
    cfg, geom, law = sc.cfg, sc.geom, sc.law
    m = law.m
    ms = cfg.measurement
    beta, T0, n_steps = float(ms["beta"]), float(ms["T0"]), int(ms["n_steps"])
    phi0 = cfg.measurement_profiles(geom)[profile_index]
    G = sc.forms.A_unit + sc.forms.M
    e = geom.exterior
    rows = []
    for h in h_list:
        h = float(h)
        datum = ExteriorDatum(phi0, h, m, "v")
        eps = sweep_epsilon(law, datum, T0, float(ms["eps_min"]))
        run = solve_parabolic(geom, sc.forms, sc.coeffs, law.regularize(eps), datum, n_steps=n_steps, T=T0, newton=cfg.newton())
        tf = time_integral_transform(run, sc.forms, sc.coeffs, law, T0, beta)
        closed = h * beta_function(beta + 1, m + 1) * T0 ** (beta + m + 1) * phi0
        dec = decompose(tf, run.t, sc.forms, sc.coeffs, law, phi0, h)
        v = law.phi(run.values)
        barrier = h * run.t[None, :] ** m * dec.V0[:, None]
        rows.append(
            {
                "h": h,
                "epsilon": eps,
                "norm_R1": float(np.sqrt(dec.R1 @ G @ dec.R1)),
                "norm_R2": float(np.sqrt(dec.R2 @ G @ dec.R2)),
                "exterior_error": float(np.abs(tf.V[e] - closed[e]).max() / np.abs(closed).max()),
                "identity_error": max(dec.identity_errors(tf.V)) / float(np.abs(tf.V).max()),
                "barrier_excess": float((v - barrier).max() / np.abs(barrier).max()),
                "residual_discrete": tf.residual,
                "residual_sources": tf.meta["continuum_residual"],
                "sources_nonnegative": bool(tf.M_cal.min() >= 0 and tf.N_cal.min() >= 0),
            }
        )
    rates = verify_remainder_rates([r["norm_R1"] for r in rows], [r["norm_R2"] for r in rows], [r["h"] for r in rows], m)
    return {"rows": rows, "rates": rates, "T0": T0, "beta": beta, "m": m}
