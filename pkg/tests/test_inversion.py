import numpy as np
import pytest
from scipy.integrate import quad

from npme.discretization import assemble_stiffness, build_geometry
from npme.dn_map import DNRecord, TestFunctionCatalog
from npme.errors import BetaInadmissible, RankDeficiency
from npme.forward import CoefficientFields, ExteriorDatum, SpaceTimeField, solve_elliptic, solve_parabolic
from npme.inversion import (
    BumpFamily,
    ConstantFamily,
    correction_extract,
    decompose,
    default_basis,
    first_correction,
    fit_h_expansion,
    lcurve_corner,
    leading_order_extract,
    linear_dn_matrix,
    quasi_optimal,
    stage1_recover_kernel,
    stage2_design,
    stage2_recover_coefficients,
    time_factors,
    time_integral_transform,
    verify_remainder_rates,
)
from npme.kernels import FractionalConductivity, beta_function
from npme.nonlinearity import PowerLaw
from npme.pipeline import extract, linear_reference, measure

W1 = [(-3.0, -1.25), (1.25, 3.0)]
W2 = [(-3.75, -2.0), (2.0, 3.75)]


@pytest.fixture(scope="module")
def small():
    geom = build_geometry(R=4.0, n_nodes=65, W1=W1, W2=W2)
    forms = assemble_stiffness(geom, FractionalConductivity(0.5, lambda x: 1 + 0.5 * np.exp(-4 * np.asarray(x) ** 2)))
    coeffs = CoefficientFields.from_functions(geom, lambda x: 1 + 0.3 * x**2, lambda x: 0.5 * np.maximum(1 - x**2, 0))
    profs = []
    for c in (-2.475, -1.775, 1.775, 2.475):
        p = np.zeros(geom.n_nodes)
        p[geom.w1] = np.maximum(0.0, 1 - (geom.x[geom.w1] - c) ** 2 / 0.275625) ** 2
        profs.append(p)
    return geom, forms, coeffs, np.array(profs)


@pytest.fixture(scope="module")
def reference_records(reference_scenario):
    return measure(reference_scenario, threads=4)


# ---------------------------------------------------------------- time factors and transform


def test_time_factors_against_quadrature():
    beta, m, T0 = 2.5, 2.0, 1.0
    t = np.linspace(0, 2 * T0, 2049)
    f = time_factors(t, T0, beta, m)
    kw = {"epsabs": 1e-15, "epsrel": 1e-13, "limit": 200}
    c_rho = beta * quad(lambda s: (T0 - s) ** (beta - 1) * s, 0, T0, **kw)[0]
    c_q = quad(lambda s: (T0 - s) ** beta * s, 0, T0, **kw)[0]
    # c_rho multiplies rho and equals beta int (T0-t)^(beta-1) t dt = int (T0-t)^beta dt
    assert f["c_rho_closed"] == pytest.approx(c_rho, rel=1e-9)
    assert f["c_q_closed"] == pytest.approx(c_q, rel=1e-9)
    assert f["c0_closed"] == pytest.approx(quad(lambda s: (T0 - s) ** beta * s**m, 0, T0, **kw)[0], rel=1e-9)
    for k in ("c0", "c_q"):
        assert f[k] == pytest.approx(f[k + "_closed"], rel=1e-4)
    # c_rho follows the implicit-Euler sum (no k = 0 term): first order in dt
    coarse = time_factors(t[::2], T0, beta, m)
    e_fine = abs(f["c_rho"] - f["c_rho_closed"])
    e_coarse = abs(coarse["c_rho"] - coarse["c_rho_closed"])
    assert e_fine / f["c_rho_closed"] < 5e-3
    assert e_coarse / e_fine == pytest.approx(2.0, rel=0.05)
    # the alternative closed forms differ by more than the quadrature error
    assert abs(f["c_q_stated"] / f["c_q_closed"] - 2.0) < 1e-12


def _synthetic_v(geom, g, m, T, n):
    t = np.linspace(0, T, n + 1)
    return SpaceTimeField(np.outer(g, t**m), t, "v")


def test_transform_of_monomial_in_time(small):
    geom, forms, coeffs, profs = small
    m, beta, T0 = 2.0, 2.5, 1.0
    run = _synthetic_v(geom, profs[2], m, T0, 256)
    tf = time_integral_transform(run, forms, coeffs, PowerLaw(m), T0, beta)
    expected = beta_function(beta + 1, m + 1) * T0 ** (beta + m + 1) * profs[2]
    assert np.abs(tf.V - expected).max() <= 1e-6 * np.abs(expected).max()


def test_transform_of_zero(small):
    geom, forms, coeffs, _ = small
    run = _synthetic_v(geom, np.zeros(geom.n_nodes), 2.0, 1.0, 16)
    tf = time_integral_transform(run, forms, coeffs, PowerLaw(2.0), 1.0, 2.5)
    assert not np.any(tf.V) and not np.any(tf.M_cal) and not np.any(tf.N_cal)


def test_transform_rejects_beta(small):
    geom, forms, coeffs, _ = small
    run = _synthetic_v(geom, np.zeros(geom.n_nodes), 2.0, 1.0, 16)
    with pytest.raises(BetaInadmissible):
        time_integral_transform(run, forms, coeffs, PowerLaw(2.0), 1.0, 0.5)


@pytest.fixture(scope="module")
def solved(small):
    geom, forms, coeffs, profs = small
    law = PowerLaw(2.0)
    h, T0 = 1e3, 1.0
    datum = ExteriorDatum(profs[3], h, 2.0, "v")
    run = solve_parabolic(geom, forms, coeffs, law.regularize(2.0**-12), datum, n_steps=256, T=T0)
    tf = time_integral_transform(run, forms, coeffs, law, T0, 2.5)
    dec = decompose(tf, run.t, forms, coeffs, law, profs[3], h)
    coarse = solve_parabolic(geom, forms, coeffs, law.regularize(2.0**-12), datum, n_steps=128, T=T0)
    tf.meta["coarse_residual"] = time_integral_transform(coarse, forms, coeffs, law, T0, 2.5).meta["continuum_residual"]
    return run, tf, dec, h, law


def test_transform_residual_and_signs(solved):
    run, tf, dec, h, law = solved
    assert tf.residual <= 1e-8
    # the source-density form carries the first-order time-stepping error
    assert tf.meta["continuum_residual"] <= 1e-2
    assert tf.meta["coarse_residual"] / tf.meta["continuum_residual"] == pytest.approx(2.0, rel=0.1)
    assert tf.M_cal.min() >= 0 and tf.N_cal.min() >= 0


def test_decomposition_identities_exact(solved):
    run, tf, dec, h, law = solved
    e1, e2 = dec.identity_errors(tf.V)
    scale = np.abs(tf.V).max()
    assert e1 <= 1e-12 * scale and e2 <= 1e-12 * scale


def test_barrier_v_below_v0(small, solved):
    geom = small[0]
    run, tf, dec, h, law = solved
    v = law.phi(run.values)
    barrier = h * run.t[None, :] ** 2 * dec.V0[:, None]
    assert (v - barrier).max() <= 1e-4 * np.abs(barrier).max()


def test_first_correction_sign(small):
    geom, forms, coeffs, profs = small
    f = time_factors(np.linspace(0, 1, 129), 1.0, 2.5, 2.0)
    V0 = solve_elliptic(geom, forms, f=profs[0])
    V1 = first_correction(forms, V0, coeffs, f, 2.0)
    assert V1.max() <= 1e-15 and V1.min() < 0
    # exterior tests see V1 <= 0 through nonpositive off-diagonal couplings
    ws = TestFunctionCatalog.hats(geom, 2.5).profiles
    assert np.all(ws @ forms.A @ V1 >= 0)


def test_stage2_linearity_of_design(small):
    geom, forms, coeffs, profs = small
    f = time_factors(np.linspace(0, 1, 129), 1.0, 2.5, 2.0)
    ws = TestFunctionCatalog.hats(geom, 2.5).profiles
    S = stage2_design(forms, profs, ws, 2.0)
    i = geom.interior
    load = f["c_rho"] * coeffs.rho[i] + f["c_q"] * coeffs.q[i]
    direct = np.array([[w @ forms.A @ first_correction(forms, solve_elliptic(geom, forms, f=p), coeffs, f, 2.0) for w in ws] for p in profs])
    assert np.allclose(S @ load, direct.ravel(), rtol=1e-10, atol=1e-14)
    assert np.allclose(S @ (2 * load), 2 * (S @ load), rtol=1e-14)


# ---------------------------------------------------------------- h-fits


def test_fit_recovers_exact_two_term_model():
    m = 2.0
    h = np.logspace(2, 4, 5)
    y = 0.37 - 1.9 * h ** (1 / m - 1)
    fit = fit_h_expansion(h, y, default_basis(m, 2))
    assert fit["coef"] == pytest.approx([0.37, -1.9], rel=1e-10)
    records = [DNRecord("p0", "w0", float(hh), 1.0, float(yy)) for hh, yy in zip(h, y)]
    lead = leading_order_extract(records, "p0", "w0", 1.0, m, c0=0.5, n_terms=2)
    corr = correction_extract(records, "p0", "w0", 1.0, m, n_terms=2)
    assert lead["value"] == pytest.approx(0.74, rel=1e-10)
    assert corr["value"] == pytest.approx(-1.9, rel=1e-10)


def test_fit_rank_deficiency():
    with pytest.raises(RankDeficiency):
        fit_h_expansion([10.0, 10.0, 10.0], [1.0, 1.0, 1.0], default_basis(2.0, 2))
    with pytest.raises(RankDeficiency):
        fit_h_expansion([10.0, 100.0], [1.0, 2.0], default_basis(2.0, 3))


def test_extra_basis_term_lowers_residual(reference_scenario, reference_records):
    sc = reference_scenario
    c0 = time_factors(sc.time_grid, 4.0, 2.5, 2.0)["c0"]
    res = []
    for n_terms in (2, 3, 4):
        res.append(leading_order_extract(reference_records, "p3", "hat111", 4.0, 2.0, c0, n_terms=n_terms)["residual"])
    assert res[0] > res[1] > res[2]


def test_leading_order_matches_linear_reference(reference_scenario, reference_records):
    ex = extract(reference_scenario, reference_records)
    lin = linear_reference(reference_scenario)
    err = np.abs(ex["lead"][4.0] - lin).max() / np.abs(lin).max()
    assert err <= 0.05


def test_correction_matches_direct_first_correction(reference_scenario, reference_records):
    sc = reference_scenario
    ex = extract(sc, reference_records)
    cat = sc.cfg.test_catalog(sc.geom)
    for T0 in ex["T0"]:
        fac = ex["factors"][T0]
        direct = np.array(
            [
                [w @ sc.forms.A @ first_correction(sc.forms, solve_elliptic(sc.geom, sc.forms, f=p), sc.coeffs, fac, 2.0) for w in cat.profiles]
                for p in sc.cfg.measurement_profiles(sc.geom)
            ]
        )
        assert np.linalg.norm(ex["correction"][T0] - direct) / np.linalg.norm(direct) <= 0.10
        assert np.all(direct >= 0)


def test_remainder_rate_report():
    h = np.logspace(2, 5, 4)
    rep = verify_remainder_rates(h**0.5, h**0.25, h, 2.0)
    assert rep["slope_R1"] == pytest.approx(0.5) and rep["pass_R1"]
    assert rep["slope_R2"] == pytest.approx(0.25) and rep["pass_R2"]
    assert not verify_remainder_rates(h**0.8, h**0.25, h, 2.0)["pass_R1"]
    with pytest.raises(ValueError):
        verify_remainder_rates([1, 2, 3], [1, 2, 3], [10, 20, 30], 2.0)


def test_linear_problem_has_no_h_dependence(small):
    # for a linear law the transform is exactly linear in h, so R1 / h does not depend on h
    geom, forms, coeffs, profs = small
    T0, beta = 1.0, 2.5
    t = np.linspace(0, T0, 65)
    out = []
    for h in (10.0, 1000.0):
        # identity law realized directly: solve rho u_t + A u + q u = 0 with datum h t^2 phi0
        from scipy import linalg

        i, e = geom.interior, geom.exterior
        dt = t[1] - t[0]
        Mr, Mq = geom.dx * coeffs.rho[i], geom.dx * coeffs.q[i]
        J = forms.A_II + np.diag(Mr / dt + Mq)
        u = np.zeros((geom.n_nodes, t.size))
        for k in range(1, t.size):
            ue = h * t[k] ** 2 * profs[1][e]
            u[i, k] = linalg.solve(J, Mr * u[i, k - 1] / dt - forms.A_IE @ ue)
            u[e, k] = ue
        k0 = t.size - 1
        wt = np.full(t.size, dt)
        wt[[0, -1]] *= 0.5
        V = u @ (wt * (T0 - t) ** beta)
        c0 = np.sum(wt * (T0 - t) ** beta * t**2)
        R1 = V - h * c0 * solve_elliptic(geom, forms, f=profs[1])
        out.append(R1 / h)
    assert np.abs(out[0] - out[1]).max() <= 1e-10 * np.abs(out[0]).max()


# ---------------------------------------------------------------- parameter choice rules


def test_quasi_optimal_and_lcurve():
    sols = [np.array([v]) for v in (5.0, 3.0, 2.1, 2.0, 1.5, 0.0)]
    assert quasi_optimal(sols) == 2
    assert quasi_optimal(sols[:1]) == 0
    res = np.array([1e-6, 1e-6, 1.1e-6, 1e-3, 1e-1, 1.0])
    reg = np.array([1e3, 1e1, 1.0, 0.9, 0.8, 0.7])
    assert lcurve_corner(res, reg) == 2


# ---------------------------------------------------------------- stage 1


@pytest.fixture(scope="module")
def stage1_setup():
    geom = build_geometry(R=4.0, n_nodes=65, W1=W1, W2=W2)
    profs, tests = [], []
    for c in (-2.475, -1.775, 1.775, 2.475):
        p = np.zeros(geom.n_nodes)
        p[geom.w1] = np.maximum(0.0, 1 - (geom.x[geom.w1] - c) ** 2 / 0.275625) ** 2
        profs.append(p)
    for c in (-3.5, -2.25, 2.25, 3.5):
        w = np.zeros(geom.n_nodes)
        w[np.argmin(np.abs(geom.x - c))] = 1.0
        tests.append(w)
    theta = np.array([1.0, 0.5, 4.0, 0.0])
    forms = assemble_stiffness(geom, FractionalConductivity(0.5, BumpFamily.gamma(theta)))
    samples = linear_dn_matrix(forms, np.array(profs), np.array(tests))
    return geom, np.array(profs), np.array(tests), theta, samples


def test_stage1_identity(stage1_setup):
    geom, profs, tests, theta, samples = stage1_setup
    r = stage1_recover_kernel(geom, 0.5, samples, profs, tests, theta_start=theta, theta_prior=theta, alphas=[1e-12])
    assert np.allclose(r.theta, theta, rtol=1e-8, atol=1e-8)
    assert r.diagnostics["relative_residual"] <= 1e-10


def test_stage1_twin(stage1_setup):
    geom, profs, tests, theta, samples = stage1_setup
    r = stage1_recover_kernel(geom, 0.5, samples, profs, tests, theta_prior=[1.0, 1.0, 1.0, 0.0])
    x = np.linspace(-4, 4, 401)
    g_true, g_hat = BumpFamily.gamma(theta)(x), BumpFamily.gamma(r.theta)(x)
    assert np.abs(g_hat - g_true).max() / np.abs(g_true).max() <= 0.10


def test_stage1_wrong_family_plateau(stage1_setup):
    geom, profs, tests, theta, samples = stage1_setup
    good = stage1_recover_kernel(geom, 0.5, samples, profs, tests, theta_prior=[1.0, 1.0, 1.0, 0.0], alphas=[1e-12])
    bad = stage1_recover_kernel(geom, 0.5, samples, profs, tests, family=ConstantFamily, theta_prior=[1.0], alphas=[1e-12])
    assert bad.diagnostics["relative_residual"] > 10 * good.diagnostics["relative_residual"]


# ---------------------------------------------------------------- stage 2


def _stage2_data(small, rho, q, T0s=(1.0, 0.5)):
    geom, forms, _, profs = small
    ws = TestFunctionCatalog.hats(geom, 2.5).profiles
    t = np.linspace(0, max(T0s), 129)
    i = geom.interior
    factors = {T: time_factors(t, T, 2.5, 2.0) for T in T0s}
    S = stage2_design(forms, profs, ws, 2.0)
    corr = {T: (S @ (factors[T]["c_rho"] * rho[i] + factors[T]["c_q"] * q[i])).reshape(len(profs), -1) for T in T0s}
    return forms, profs, ws, corr, factors


def test_stage2_exact_constant_truth(small):
    geom = small[0]
    rho, q = np.ones(geom.n_nodes), np.zeros(geom.n_nodes)
    forms, profs, ws, corr, factors = _stage2_data(small, rho, q)
    r = stage2_recover_coefficients(forms, profs, ws, corr, factors, 2.0)
    assert np.abs(r.rho_hat - 1).max() <= 1e-6
    assert np.abs(r.q_hat).max() <= 1e-6


def test_stage2_twin_exact_data(small):
    geom = small[0]
    x = geom.x
    rho, q = 1 + 0.3 * x**2, 0.5 * np.maximum(1 - x**2, 0)
    forms, profs, ws, corr, factors = _stage2_data(small, rho, q)
    r = stage2_recover_coefficients(forms, profs, ws, corr, factors, 2.0)
    i = geom.interior
    assert np.linalg.norm(r.rho_hat - rho[i]) / np.linalg.norm(rho[i]) <= 0.15
    assert np.linalg.norm(r.q_hat - q[i]) / np.linalg.norm(q[i]) <= 0.15


def test_stage2_single_T0_rank_deficient(small):
    geom = small[0]
    forms, profs, ws, corr, factors = _stage2_data(small, np.ones(geom.n_nodes), np.zeros(geom.n_nodes), T0s=(1.0,))
    with pytest.raises(RankDeficiency):
        stage2_recover_coefficients(forms, profs, ws, corr, factors, 2.0)


def test_stage2_zero_profile_rejected(small):
    geom, forms, _, profs = small
    with pytest.raises(RankDeficiency):
        stage2_design(forms, np.zeros((1, geom.n_nodes)), TestFunctionCatalog.hats(geom, 2.5).profiles, 2.0)
