"""Synthetic DN measurements.

A measurement pairs the flux ``A Phi(u)`` of a forward run with a space-time test
function ``psi(x, t) = h^{-1} (T0 - t)^beta w(x)`` supported in ``W2 x [0, T0]``.
Time integrals use the trapezoid rule on the solver's own grid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .discretization import AssembledForms, DiscreteGeometry
from .errors import BetaInadmissible, GeometryError
from .forward import CoefficientFields, ExteriorDatum, NewtonSettings, SpaceTimeField, solve_elliptic, solve_parabolic
from .nonlinearity import PowerLaw

__all__ = [
    "default_beta",
    "check_beta",
    "TestFunctionCatalog",
    "DNRecord",
    "trapezoid_weights",
    "dn_pairing",
    "dn_pairing_transferred",
    "dn_sweep",
    "sweep_epsilon",
    "linear_dn_reference",
    "add_noise",
]

DEFAULT_EPS_MIN = 2.0**-12


def default_beta(m: float) -> float:
    """``max(2, 1/(m-1) + 3/2)`` rounded to one decimal."""
    return round(max(2.0, 1.0 / (m - 1.0) + 1.5), 1)


def check_beta(beta: float, m: float) -> float:
    if not beta > 1.0:
        raise BetaInadmissible(f"beta={beta} violates beta > 1")
    if not beta > 1.0 / (m - 1.0):
        raise BetaInadmissible(f"beta={beta} violates beta > 1/(m-1) = {1.0 / (m - 1.0):g} for m={m}")
    return float(beta)


def trapezoid_weights(t: np.ndarray, T0: float) -> tuple[int, np.ndarray]:
    """Index of ``T0`` on the grid ``t`` and trapezoid weights on ``t[:k0+1]``."""
    k0 = int(np.rint(T0 / (t[1] - t[0])))
    if k0 < 1 or k0 >= t.size or abs(t[k0] - T0) > 1e-9 * max(1.0, T0):
        raise ValueError(f"T0={T0} is not on the time grid (dt={t[1] - t[0]}, T={t[-1]})")
    w = np.full(k0 + 1, t[1] - t[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return k0, w


@dataclass
class TestFunctionCatalog:
    """Spatial test profiles supported in ``W2`` and the time weight exponent ``beta``."""

    profiles: np.ndarray  # (n_tests, n_nodes)
    beta: float
    ids: list[str] = field(default_factory=list)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        self.profiles = np.atleast_2d(np.asarray(self.profiles, dtype=float))
        if not self.ids:
            self.ids = [f"w{j}" for j in range(self.profiles.shape[0])]

    @classmethod
    def hats(cls, geom: DiscreteGeometry, beta: float, nodes=None):
        """Hat functions on the ``W2`` nodes (all of them by default)."""
        idx = geom.w2 if nodes is None else np.asarray(nodes)
        P = np.zeros((idx.size, geom.n_nodes))
        P[np.arange(idx.size), idx] = 1.0
        return cls(P, beta, [f"hat{int(i)}" for i in idx])

    def check(self, geom: DiscreteGeometry, m: float):
        check_beta(self.beta, m)
        for w in self.profiles:
            if np.setdiff1d(np.flatnonzero(w), geom.w2).size:
                raise GeometryError("test profile is nonzero outside W2")


@dataclass
class DNRecord:
    datum: str
    test: str
    h: float
    T0: float
    pairing: float
    meta: dict = field(default_factory=dict)

    def key(self):
        return (self.datum, self.test, self.h, self.T0)

    def to_dict(self):
        return asdict(self)


def dn_pairing(run: SpaceTimeField, forms: AssembledForms, law: PowerLaw, psi) -> float:
    """``int_0^T B_K(Phi(u), psi) dt`` for a u-tagged run.

    ``psi`` is an array ``(n_nodes, n_times)`` on the run's time grid, or a callable
    ``psi(t) -> nodal field``.
    """
    if run.tag != "u":
        raise ValueError("dn_pairing expects a u-tagged run; use dn_pairing_transferred for v")
    return dn_pairing_transferred(run.transferred(law), forms, psi)


def dn_pairing_transferred(run_v: SpaceTimeField, forms: AssembledForms, psi) -> float:
    """Same pairing for a run already expressed in ``v = Phi(u)``."""
    if run_v.tag != "v":
        raise ValueError("expected a v-tagged run")
    if run_v.values.shape[0] != forms.geom.n_nodes:
        raise GeometryError("run and forms live on different grids")
    P = np.column_stack([psi(tk) for tk in run_v.t]) if callable(psi) else np.asarray(psi, dtype=float)
    flux = np.einsum("it,it->t", P, forms.A @ run_v.values)
    return float(np.trapezoid(flux, run_v.t))


def weighted_flux(run_v: SpaceTimeField, forms: AssembledForms, profiles: np.ndarray, T0: float, beta: float):
    """``int_0^T0 (T0 - t)^beta w_j^T A v(t) dt`` for every profile ``w_j``."""
    k0, w = trapezoid_weights(run_v.t, T0)
    weights = w * (T0 - run_v.t[: k0 + 1]) ** beta
    V = run_v.values[:, : k0 + 1] @ weights
    return profiles @ (forms.A @ V)


def sweep_epsilon(law: PowerLaw, datum: ExteriorDatum, T: float, eps_min: float = DEFAULT_EPS_MIN) -> float:
    """Largest power of two ``<= eps_min`` keeping the solution inside the exact band.

    By the maximum principle ``|u| <= max |u_ext|``; the regularization is exact for
    ``|u| < 1/eps``, so ``eps`` is lowered until ``1/eps`` exceeds twice that bound.
    """
    umax = float(np.max(np.abs(datum.u_values(T, law)))) if T > 0 else 0.0
    eps = float(eps_min)
    while umax * eps > 0.5:
        eps *= 0.5
    return eps


def dn_sweep(
    forms: AssembledForms,
    coeffs: CoefficientFields,
    law: PowerLaw,
    phi0: np.ndarray,
    h_list,
    T0_list,
    catalog: TestFunctionCatalog,
    n_steps: int = 256,
    eps_min: float = DEFAULT_EPS_MIN,
    datum_id: str = "phi0",
    newton: NewtonSettings = NewtonSettings(),
) -> list[DNRecord]:
    """One forward solve per ``h`` up to ``max(T0_list)``; a record per ``(h, T0, w)``.

    The exterior datum is ``Phi(u) = h t^m phi0``. Records hold
    ``h^{-1} int_0^T0 (T0 - t)^beta B_K(v, w) dt``. The regularization parameter is
    ``eps_min`` or smaller, see :func:`sweep_epsilon`. Solver failures produce records
    with ``pairing = nan`` and the error message in ``meta``.
    """
    geom = forms.geom
    catalog.check(geom, law.m)
    T = max(T0_list)
    records = []
    for h in h_list:
        if not h > 1:
            raise ValueError(f"amplitudes must exceed 1, got h={h}")
        datum = ExteriorDatum(phi0, float(h), law.m, "v")
        datum.check_support(geom)
        eps = sweep_epsilon(law, datum, T, eps_min)
        reg = law.regularize(eps)
        meta = {"n_nodes": geom.n_nodes, "n_steps": n_steps, "eps_min": eps, "beta": catalog.beta}
        try:
            run = solve_parabolic(geom, forms, coeffs, reg, datum, n_steps=n_steps, T=T, newton=newton).transferred(law)
        except Exception as exc:  # partial results are allowed, flagged per record
            for T0 in T0_list:
                for tid in catalog.ids:
                    records.append(DNRecord(datum_id, tid, float(h), float(T0), float("nan"), {**meta, "error": str(exc)}))
            continue
        for T0 in T0_list:
            vals = weighted_flux(run, forms, catalog.profiles, T0, catalog.beta) / h
            for tid, val in zip(catalog.ids, vals):
                records.append(DNRecord(datum_id, tid, float(h), float(T0), float(val), dict(meta)))
    return sorted(records, key=lambda r: (r.datum, r.test, r.T0, r.h))


def linear_dn_reference(geom: DiscreteGeometry, forms: AssembledForms, phi0, w) -> float:
    """``B_K(V0, w)`` where ``V0`` is the ``L_K``-harmonic extension of ``phi0``."""
    V0 = solve_elliptic(geom, forms, f=np.asarray(phi0, dtype=float))
    return float(np.asarray(w, dtype=float) @ forms.A @ V0)


def add_noise(records: list[DNRecord], sigma: float, seed: int) -> list[DNRecord]:
    """Additive Gaussian noise on the pairings, reproducible from ``seed``."""
    if sigma <= 0:
        return records
    rng = np.random.default_rng(seed)
    out = []
    for r in records:
        out.append(DNRecord(r.datum, r.test, r.h, r.T0, r.pairing + sigma * rng.standard_normal(), {**r.meta, "noise": sigma}))
    return out
