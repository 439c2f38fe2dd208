"""Time-integral transform, asymptotic decomposition and the two-stage recovery.

For the transferred run ``v = Phi(u)`` with exterior datum ``h t^m phi0`` the weighted
time integral ``V = int_0^T0 (T0 - t)^beta v dt`` solves an elliptic problem with
interior loads coming from ``rho u_t`` and ``q u``. Expanding ``V`` in the amplitude
``h`` gives

    V = h c0 V0 + h^{1/m} V1 + R2,

where ``V0`` is the ``L_K``-harmonic extension of ``phi0`` and ``V1`` solves a
Dirichlet problem whose load is linear in ``(rho, q)``. The DN pairing therefore
reads ``c0 B(V0, w) + h^{1/m - 1} B(V1, w) + ...``: the constant term identifies the
kernel, the ``h^{1/m-1}`` coefficient the coefficients.

All time sums are the discrete counterparts of the integrals, taken with the same
trapezoid weights as the transform, so the decomposition is exact for the discrete
scheme rather than only for its continuum limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize

from .discretization import AssembledForms, DiscreteGeometry, assemble_stiffness
from .dn_map import DNRecord, check_beta, trapezoid_weights
from .errors import RankDeficiency
from .forward import CoefficientFields, SpaceTimeField, solve_elliptic
from .kernels import FractionalConductivity, beta_function
from .nonlinearity import PowerLaw

__all__ = [
    "TransformedField",
    "AsymptoticDecomposition",
    "time_factors",
    "time_integral_transform",
    "decompose",
    "first_correction",
    "fit_h_expansion",
    "default_basis",
    "leading_order_extract",
    "correction_extract",
    "verify_remainder_rates",
    "BumpFamily",
    "ConstantFamily",
    "linear_dn_matrix",
    "stage1_recover_kernel",
    "stage2_design",
    "stage2_recover_coefficients",
    "lcurve_corner",
    "quasi_optimal",
    "RecoveryResult",
]

COND_LIMIT = 1e12


def time_factors(t: np.ndarray, T0: float, beta: float, m: float) -> dict:
    """Time factors of the expansion, discrete and closed form.

    ``c0``     : sum of w_k (T0 - t_k)^beta t_k^m           ~ B(beta+1, m+1) T0^(beta+m+1)
    ``c_rho``  : sum_{k>=1} w_k (T0 - t_k)^beta             ~ T0^(beta+1) / (beta+1)
    ``c_q``    : sum_{k>=1} w_k (T0 - t_k)^beta t_k          ~ T0^(beta+2) / ((beta+1)(beta+2))

    ``c_rho`` and ``c_q`` multiply ``rho V0^{1/m}`` and ``q V0^{1/m}`` in the load of
    ``V1``. The ``*_closed`` entries are the continuum values; ``*_stated`` carry the
    alternative closed forms with an extra factor 2 (and ``beta`` in the ``rho``
    denominator), kept only for comparison in reports.
    """
    k0, w = trapezoid_weights(t, T0)
    tk = t[: k0 + 1]
    wt = w * (T0 - tk) ** beta
    return {
        "c0": float(np.sum(wt * tk**m)),
        "c_rho": float(np.sum(wt[1:])),
        "c_q": float(np.sum(wt[1:] * tk[1:])),
        "c0_closed": beta_function(beta + 1.0, m + 1.0) * T0 ** (beta + m + 1.0),
        "c_rho_closed": T0 ** (beta + 1.0) / (beta + 1.0),
        "c_q_closed": T0 ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0)),
        "c_rho_stated": 2.0 * T0 ** (beta + 1.0) / (beta * (beta + 1.0)),
        "c_q_stated": 2.0 * T0 ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0)),
    }


@dataclass
class TransformedField:
    """``V`` on the full grid plus the interior sources.

    ``M_cal`` and ``N_cal`` are the source densities ``beta rho int (T0-t)^(beta-1) u``
    and ``q int (T0-t)^beta u`` on interior nodes. ``load`` is the discrete interior
    functional for which ``A[I, :] V + load = 0`` holds up to solver tolerance.
    """

    V: np.ndarray
    T0: float
    beta: float
    M_cal: np.ndarray
    N_cal: np.ndarray
    load: np.ndarray
    residual: float
    meta: dict = field(default_factory=dict)


def time_integral_transform(
    run: SpaceTimeField, forms: AssembledForms, coeffs: CoefficientFields, law: PowerLaw, T0: float, beta: float
) -> TransformedField:
    """Weighted time integral of ``v = Phi(u)`` and its interior sources."""
    check_beta(beta, law.m)
    geom = forms.geom
    u_run = run if run.tag == "u" else run.transferred(law)
    v_run = run if run.tag == "v" else run.transferred(law)
    t = run.t
    k0, w = trapezoid_weights(t, T0)
    tk = t[: k0 + 1]
    wt = w * (T0 - tk) ** beta
    V = v_run.values[:, : k0 + 1] @ wt
    i = geom.interior
    u = u_run.values[i, : k0 + 1]
    # continuum-form densities by the same trapezoid rule
    M_cal = beta * coeffs.rho[i] * (u @ (w * (T0 - tk) ** (beta - 1.0)))
    N_cal = coeffs.q[i] * (u @ wt)
    # discrete loads: weighted sum of the implicit-Euler step equations
    dt = t[1] - t[0]
    du = np.diff(u, axis=1) / dt
    load = geom.dx * (coeffs.rho[i] * (du @ wt[1:]) + coeffs.q[i] * (u[:, 1:] @ wt[1:]))
    AV = forms.A[i] @ V
    scale = max(np.linalg.norm(AV), np.finfo(float).tiny)
    residual = float(np.linalg.norm(AV + load) / scale)
    cont_residual = float(np.linalg.norm(AV + geom.dx * (M_cal + N_cal)) / scale)
    return TransformedField(V, float(T0), float(beta), M_cal, N_cal, load, residual, {"continuum_residual": cont_residual})


@dataclass
class AsymptoticDecomposition:
    V0: np.ndarray
    V1: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    c0: float
    factors: dict
    h: float

    def identity_errors(self, V: np.ndarray) -> tuple[float, float]:
        e1 = V - self.h * self.c0 * self.V0 - self.R1
        e2 = V - self.h * self.c0 * self.V0 - self.h ** (1.0 / self.factors["m"]) * self.V1 - self.R2
        return float(np.abs(e1).max()), float(np.abs(e2).max())


def first_correction(forms: AssembledForms, V0: np.ndarray, coeffs: CoefficientFields, factors: dict, m: float) -> np.ndarray:
    """``V1`` with zero exterior values and load ``-(c_rho rho + c_q q) V0^{1/m}``."""
    geom = forms.geom
    i = geom.interior
    load = -geom.dx * np.maximum(V0[i], 0.0) ** (1.0 / m) * (factors["c_rho"] * coeffs.rho[i] + factors["c_q"] * coeffs.q[i])
    return solve_elliptic(geom, forms, F=load)


def decompose(tf: TransformedField, t: np.ndarray, forms: AssembledForms, coeffs: CoefficientFields, law: PowerLaw, phi0, h: float):
    """Exact-by-construction splitting of ``V`` into the two ansatz forms."""
    m = law.m
    factors = {**time_factors(t, tf.T0, tf.beta, m), "m": m}
    V0 = solve_elliptic(forms.geom, forms, f=np.asarray(phi0, dtype=float))
    V1 = first_correction(forms, V0, coeffs, factors, m)
    c0 = factors["c0"]
    R1 = tf.V - h * c0 * V0
    R2 = tf.V - h * c0 * V0 - h ** (1.0 / m) * V1
    return AsymptoticDecomposition(V0, V1, R1, R2, c0, factors, float(h))


def default_basis(m: float, n_terms: int = 4):
    """Basis functions of ``h`` for the pairing fit.

    Terms in order: ``1``, ``h^{1/m-1}``, ``h^{2/m-2} log h``, ``h^{2/m-2}``,
    ``h^{3/m-3}``. The terms after the second model the remainder (a logarithm appears from the
    initial time layer in which the solution is not yet quasi-static).
    """
    a = 1.0 / m - 1.0
    funcs = [
        ("1", lambda h: np.ones_like(h)),
        (f"h^{a:g}", lambda h: h**a),
        (f"h^{2 * a:g} log h", lambda h: h ** (2 * a) * np.log(h)),
        (f"h^{2 * a:g}", lambda h: h ** (2 * a)),
        (f"h^{3 * a:g}", lambda h: h ** (3 * a)),
    ]
    if not 2 <= n_terms <= len(funcs):
        raise ValueError(f"n_terms must be in 2..{len(funcs)}")
    return funcs[:n_terms]


def fit_h_expansion(h, y, basis, weights=None) -> dict:
    """Weighted linear least squares of ``y(h)`` on the given basis.

    Columns are scaled to unit norm before solving; the condition number of the scaled
    design is checked against ``COND_LIMIT``.
    """
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    if h.size < len(basis) or np.unique(h).size < len(basis):
        raise RankDeficiency(f"need at least {len(basis)} distinct amplitudes, got {np.unique(h).size}")
    X = np.column_stack([f(h) for _, f in basis])
    wts = np.ones_like(h) if weights is None else np.asarray(weights, dtype=float)
    Xw, yw = X * wts[:, None], y * wts
    scale = np.linalg.norm(Xw, axis=0)
    cond = np.linalg.cond(Xw / scale)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficiency(f"h-fit design is ill-conditioned (cond={cond:.3e}); spread the amplitudes")
    coef, *_ = np.linalg.lstsq(Xw / scale, yw, rcond=None)
    coef = coef / scale
    resid = y - X @ coef
    return {"coef": coef, "residual": float(np.linalg.norm(resid * wts)), "cond": float(cond), "terms": [n for n, _ in basis]}


def _select(records: Sequence[DNRecord], datum, test, T0):
    rs = [r for r in records if r.datum == datum and r.test == test and np.isclose(r.T0, T0) and np.isfinite(r.pairing)]
    rs.sort(key=lambda r: r.h)
    return np.array([r.h for r in rs]), np.array([r.pairing for r in rs])


def _weights(h, scheme):
    if scheme in (None, "uniform"):
        return None
    if scheme == "inverse_h":
        return 1.0 / h
    raise ValueError(f"unknown weighting {scheme!r}")


def leading_order_extract(records, datum, test, T0, m, c0, n_terms=4, weighting="uniform") -> dict:
    """Constant term of the h-fit divided by ``c0``: an estimate of ``B_K(V0, w)``."""
    h, y = _select(records, datum, test, T0)
    fit = fit_h_expansion(h, y, default_basis(m, n_terms), _weights(h, weighting))
    return {"value": float(fit["coef"][0] / c0), **fit}


def correction_extract(records, datum, test, T0, m, n_terms=4, weighting="uniform") -> dict:
    """Coefficient of ``h^{1/m-1}``: an estimate of ``B_K(V1, w)``."""
    h, y = _select(records, datum, test, T0)
    fit = fit_h_expansion(h, y, default_basis(m, n_terms), _weights(h, weighting))
    return {"value": float(fit["coef"][1]), **fit}


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def verify_remainder_rates(norms_R1, norms_R2, h_list, m: float, tol1=0.15, tol2=0.2) -> dict:
    """Log-log slopes of ``||R1||`` and ``||R2||`` against ``h`` as upper envelopes."""
    h = np.asarray(h_list, dtype=float)
    if h.size < 4 or h.max() / h.min() < 100:
        raise ValueError("need at least 4 amplitudes spanning two decades")
    r1, r2 = np.asarray(norms_R1), np.asarray(norms_R2)
    s1, s2 = loglog_slope(h, r1), loglog_slope(h, r2)
    monotone = bool(np.all(np.diff(r1) > 0) and np.all(np.diff(r2) > 0))
    return {
        "slope_R1": s1,
        "slope_R2": s2,
        "expected_R1": 1.0 / m,
        "expected_R2": 1.0 / m**2,
        "pass_R1": bool(s1 <= 1.0 / m + tol1),
        "pass_R2": bool(s2 <= 1.0 / m**2 + tol2),
        "monotone": monotone,
    }


# ---------------------------------------------------------------- stage 1


class BumpFamily:
    """``gamma(x) = t0 + t1 exp(-t2 (x - t3)^2)`` with ``t0 > 0``, ``t1 > -t0``, ``t2 > 0``."""

    names = ("base", "amplitude", "width", "center")
    n_params = 4
    lower = np.array([0.05, -0.9, 0.1, -2.0])
    upper = np.array([20.0, 20.0, 100.0, 2.0])

    @staticmethod
    def gamma(theta) -> Callable:
        t0, t1, t2, t3 = map(float, theta)
        return lambda x: t0 + t1 * np.exp(-t2 * (np.asarray(x) - t3) ** 2)


class ConstantFamily:
    """``gamma(x) = t0``."""

    names = ("base",)
    n_params = 1
    lower = np.array([0.05])
    upper = np.array([20.0])

    @staticmethod
    def gamma(theta) -> Callable:
        t0 = float(theta[0])
        return lambda x: np.full(np.shape(x), t0)


def linear_dn_matrix(forms: AssembledForms, phi0s: np.ndarray, ws: np.ndarray) -> np.ndarray:
    """``B_K(V0_i, w_j)`` for all profile pairs."""
    geom = forms.geom
    out = np.empty((phi0s.shape[0], ws.shape[0]))
    for a, p in enumerate(phi0s):
        V0 = solve_elliptic(geom, forms, f=p)
        out[a] = ws @ (forms.A @ V0)
    return out


def lcurve_corner(res_norms, reg_norms) -> int:
    """Index of maximum curvature of the log-log L-curve (interior points only)."""
    x = np.log(np.maximum(np.asarray(res_norms), 1e-300))
    y = np.log(np.maximum(np.asarray(reg_norms), 1e-300))
    n = x.size
    if n < 3:
        return 0
    best, kbest = -np.inf, 1
    for k in range(1, n - 1):
        p0, p1, p2 = np.array([x[k - 1], y[k - 1]]), np.array([x[k], y[k]]), np.array([x[k + 1], y[k + 1]])
        a, b, c = np.linalg.norm(p1 - p0), np.linalg.norm(p2 - p1), np.linalg.norm(p2 - p0)
        area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
        curv = 2.0 * area2 / max(a * b * c, 1e-300)  # signed Menger curvature
        if curv > best:
            best, kbest = curv, k
    return kbest


def quasi_optimal(solutions) -> int:
    """Index ``k`` minimizing ``|x_{k+1} - x_k|`` along a geometric parameter grid."""
    if len(solutions) < 2:
        return 0
    steps = [np.linalg.norm(b - a) for a, b in zip(solutions[:-1], solutions[1:])]
    return int(np.argmin(steps))


@dataclass
class RecoveryResult:
    theta: np.ndarray | None = None
    family: str | None = None
    rho_hat: np.ndarray | None = None
    q_hat: np.ndarray | None = None
    x: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        conv = lambda a: None if a is None else np.asarray(a).tolist()
        return {
            "theta": conv(self.theta),
            "family": self.family,
            "x": conv(self.x),
            "rho_hat": conv(self.rho_hat),
            "q_hat": conv(self.q_hat),
            "diagnostics": self.diagnostics,
        }


def stage1_recover_kernel(
    geom: DiscreteGeometry,
    s: float,
    samples: np.ndarray,
    phi0s: np.ndarray,
    ws: np.ndarray,
    family=BumpFamily,
    theta_start=None,
    theta_prior=None,
    alphas=None,
    max_nfev: int = 200,
    rule: str = "quasi",
) -> RecoveryResult:
    """Fit a fractional-conductivity kernel to linear DN samples.

    Minimizes ``|model(theta) - samples|^2 / |samples|^2 + alpha |theta - prior|^2``
    over ``theta`` in ``family``. ``alpha`` is picked over ``alphas`` (10 log-spaced
    values by default) by ``rule``, ``"quasi"`` or ``"lcurve"``; ``alphas=[a]`` fixes it.
    """
    samples = np.asarray(samples, dtype=float)
    scale = np.linalg.norm(samples)
    if scale == 0:
        raise ValueError("all linear DN samples vanish")
    n = family.n_params
    prior = np.ones(n) if theta_prior is None else np.asarray(theta_prior, dtype=float)
    start = prior.copy() if theta_start is None else np.asarray(theta_start, dtype=float)
    alphas = np.logspace(-12, -3, 10) if alphas is None else np.asarray(alphas, dtype=float)

    def model(theta):
        kernel = FractionalConductivity(s, family.gamma(theta))
        forms = assemble_stiffness(geom, kernel)
        return linear_dn_matrix(forms, phi0s, ws)

    def fit(alpha, x0):
        fun = lambda th: np.concatenate([(model(th) - samples).ravel() / scale, np.sqrt(alpha) * (th - prior)])
        sol = optimize.least_squares(fun, x0, bounds=(family.lower, family.upper), x_scale="jac", max_nfev=max_nfev, xtol=1e-12, ftol=1e-14, gtol=1e-14)
        r = float(np.linalg.norm((model(sol.x) - samples).ravel()) / scale)
        return sol, r

    path = []
    x0 = start
    for alpha in sorted(alphas, reverse=True):  # continuation from strong to weak regularization
        sol, r = fit(alpha, x0)
        path.append((alpha, sol, r, float(np.linalg.norm(sol.x - prior))))
        x0 = sol.x
    path.sort(key=lambda p: p[0])
    if rule == "quasi":
        k = quasi_optimal([p[1].x for p in path])
    elif rule == "lcurve":
        k = lcurve_corner([p[2] for p in path], [p[3] for p in path])
    else:
        raise ValueError(f"unknown rule {rule!r}")
    alpha, sol, r, _ = path[k]
    return RecoveryResult(
        theta=sol.x,
        family=family.__name__,
        diagnostics={
            "alpha": float(alpha),
            "relative_residual": r,
            "converged": bool(sol.success),
            "status": int(sol.status),
            "nfev": int(sol.nfev),
            "lcurve": [{"alpha": float(a), "residual": rr, "deviation": d} for a, _, rr, d in path],
        },
    )


# ---------------------------------------------------------------- stage 2


def _interior_green_rows(forms: AssembledForms, ws: np.ndarray) -> np.ndarray:
    """Rows ``z_j`` with ``w_j^T A V = z_j^T F`` whenever ``V`` solves ``A_II V_I = F`` with zero exterior."""
    geom = forms.geom
    i = geom.interior
    rhs = (ws @ forms.A[:, i]).T
    return linalg.cho_solve(linalg.cho_factor(forms.A_II), rhs).T


def stage2_design(forms: AssembledForms, phi0s: np.ndarray, ws: np.ndarray, m: float):
    """Sensitivity ``S[(a, j), k]`` of ``B_K(V1, w_j)`` to ``c_rho rho_k + c_q q_k`` for profile ``a``.

    ``B_K(V1, w_j) = sum_k S[(a, j), k] (c_rho rho_k + c_q q_k)`` over interior nodes.
    """
    geom = forms.geom
    Z = _interior_green_rows(forms, ws)
    rows = []
    for p in phi0s:
        V0 = solve_elliptic(geom, forms, f=p)
        g = -geom.dx * np.maximum(V0[geom.interior], 0.0) ** (1.0 / m)
        if not np.any(g != 0):
            raise RankDeficiency("harmonic extension of the profile vanishes on the domain")
        rows.append(Z * g[None, :])
    return np.vstack(rows)


def _difference_operator(n, order):
    D = np.eye(n)
    for _ in range(order):
        D = np.diff(D, axis=0)
    return D


def stage2_recover_coefficients(
    forms: AssembledForms,
    phi0s: np.ndarray,
    ws: np.ndarray,
    corrections: dict,
    factors: dict,
    m: float,
    rho_floor: float = 0.05,
    rho_prior: float = 1.0,
    q_prior: float = 0.0,
    order: int = 3,
    prior_weight: float = 0.0,
    alphas=None,
    rule: str = "quasi",
) -> RecoveryResult:
    """Recover nodal ``(rho, q)`` on the interior from correction coefficients.

    ``corrections[T0]`` is an array ``(n_profiles, n_tests)`` of ``B_K(V1, w)``
    estimates and ``factors[T0]`` the matching :func:`time_factors` dict. The time
    block ``[[c_rho(T0_a), ...], [c_q(T0_a), ...]]`` must be well conditioned: with a
    single ``T0`` it is rank one and ``rho`` and ``q`` cannot be told apart.

    The data misfit is measured relative to ``|corrections|``. The penalty acts on
    ``order``-th differences of both fields (null space: polynomials of degree
    ``< order``) plus an optional pull (``prior_weight``) towards ``rho_prior``, ``q_prior``;
    ``alpha`` is chosen by ``rule``: ``"quasi"`` (quasi-optimality, the step where the
    solution changes least between neighbouring grid values) or ``"lcurve"``. The result is projected onto
    ``rho >= rho_floor`` and ``q >= 0``.
    """
    T0s = sorted(corrections)
    C = np.array([[factors[T]["c_rho"] for T in T0s], [factors[T]["c_q"] for T in T0s]])
    Cn = C / np.linalg.norm(C, axis=0)
    sv = np.linalg.svd(Cn, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv.size == 2 and sv[-1] > 0 else np.inf
    if len(T0s) < 2 or not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficiency(
            f"rho and q are not separable: time-factor block has condition number {cond:.3e} "
            f"with T0 values {T0s}; add observations at a second, distinct T0"
        )
    S = stage2_design(forms, phi0s, ws, m)
    ni = S.shape[1]
    G = np.vstack([np.hstack([factors[T]["c_rho"] * S, factors[T]["c_q"] * S]) for T in T0s])
    b = np.concatenate([np.asarray(corrections[T], dtype=float).ravel() for T in T0s])
    full_cond = float(np.linalg.cond(G))
    # unknowns are deviations from the prior, columns scaled to unit norm
    x_prior = np.concatenate([np.full(ni, rho_prior), np.full(ni, q_prior)])
    r0 = b - G @ x_prior
    bn = np.linalg.norm(b)
    if bn == 0:
        raise RankDeficiency("all correction coefficients vanish")
    r0 = r0 / bn
    col = np.linalg.norm(G, axis=0) / bn
    col[col == 0] = 1.0
    Gs = G / bn / col
    D = _difference_operator(ni, order)
    Z = np.zeros_like(D)
    Lreg = np.vstack([np.hstack([D, Z]), np.hstack([Z, D]), np.sqrt(prior_weight) * np.eye(2 * ni)]) / col[None, :]
    alphas = np.logspace(-10, 2, 25) if alphas is None else np.asarray(alphas, dtype=float)
    path = []
    for alpha in alphas:
        A_aug = np.vstack([Gs, np.sqrt(alpha) * Lreg])
        y = np.concatenate([r0, np.zeros(Lreg.shape[0])])
        z, *_ = np.linalg.lstsq(A_aug, y, rcond=None)
        dx = z / col
        path.append((float(alpha), dx, float(np.linalg.norm(G @ dx / bn - r0)), float(np.linalg.norm(Lreg @ z))))
    if rule == "quasi":
        k = quasi_optimal([p[1] for p in path])
    elif rule == "lcurve":
        k = lcurve_corner([p[2] for p in path], [p[3] for p in path])
    else:
        raise ValueError(f"unknown rule {rule!r}")
    alpha, dx, res, _ = path[k]
    x = x_prior + dx
    rho_raw, q_raw = x[:ni], x[ni:]
    rho_hat = np.maximum(rho_raw, rho_floor)
    q_hat = np.maximum(q_raw, 0.0)
    return RecoveryResult(
        rho_hat=rho_hat,
        q_hat=q_hat,
        x=forms.geom.x[forms.geom.interior],
        diagnostics={
            "alpha": alpha,
            "relative_residual": res,
            "time_block_condition": cond,
            "design_condition": full_cond,
            "T0": T0s,
            "projection_rho": int(np.sum(rho_raw < rho_floor)),
            "projection_q": int(np.sum(q_raw < 0)),
            "lcurve": [{"alpha": a, "residual": r, "penalty": p} for a, _, r, p in path],
        },
    )
