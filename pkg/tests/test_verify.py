import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import linprog

from sasaki import heatkernel as hk
from sasaki import verify as V
from sasaki.polynomial import Polynomial

x, y, z = Polynomial.coordinates(1)
O = np.zeros(3)


# ---------------------------------------------------------------- reports

def test_report_sign_convention():
    r = V.InequalityReport("demo", {}, lhs=1.0, rhs=0.5, tol=0.6)
    assert r.margin == -0.5 and r.passed
    r = V.InequalityReport("demo", {}, lhs=1.0, rhs=0.5, tol=0.4)
    assert not r.passed
    d = r.to_dict()
    assert d["pass"] is False and d["margin"] == -0.5


def test_fit_result_invariant():
    V.FitResult("global", {"A": 1.0, "B": 0.0}, True)
    with pytest.raises(ValueError):
        V.FitResult("global", {"A": -1.0, "B": 1.0}, True)
    V.FitResult("global", {"A": float("inf"), "B": float("inf")}, False)


# ---------------------------------------------------------- HarnackParams

@given(st.integers(1, 4), st.floats(0, 10), st.floats(0.01, 5), st.floats(1.01, 20))
def test_harnack_params_invariants(n, tau, s, ratio):
    hp = V.HarnackParams(n, tau, s, s * ratio)
    for u in np.linspace(hp.s, hp.t, 7):
        assert hp.a(u) >= hp.kappa
        assert hp.b(u) > 0
        assert hp.b(u) / hp.a(u) == pytest.approx(n * hp.kappa / u, rel=1e-13)
    assert hp.int_b_over_a() == pytest.approx(
        quad(lambda u: hp.b(u) / hp.a(u), hp.s, hp.t, epsabs=0, epsrel=1e-13)[0], rel=1e-12)


def test_harnack_params_closed_forms():
    hp = V.HarnackParams(1, 0.8, 0.3, 2.0)
    assert hp.int_a() == pytest.approx(quad(hp.a, hp.s, hp.t, epsrel=1e-14)[0], rel=1e-12)
    assert hp.int_inv_a() == pytest.approx(quad(lambda u: 1 / hp.a(u), hp.s, hp.t, epsrel=1e-14)[0], rel=1e-12)
    # exponent is int a / (4 (t - s)^2), which bounds the sharp one by Cauchy-Schwarz
    assert hp.exponent() == pytest.approx(hp.int_a() / (4 * (hp.t - hp.s) ** 2), rel=1e-14)
    assert hp.exponent_sharp() <= hp.exponent()


def test_harnack_params_guards():
    for args in ((0, 1.0, 0.5, 1.0), (1, -1.0, 0.5, 1.0), (1, 1.0, 1.0, 1.0), (1, 1.0, 0.0, 1.0)):
        with pytest.raises(ValueError):
            V.HarnackParams(*args)


# ----------------------------------------------------------------- checks

def test_check_cd_examples():
    assert V.check_cd(x, [0.2, 0.3, 0.4], 1.0).margin == 1.0
    sharp = V.check_cd(z, O, 1.0)
    assert sharp.margin == 0 and sharp.passed
    r = V.check_cd(z, [2.0, 0.0, 0.0], 1.0)
    assert r.margin == 1.0 and r.provenance["residual"] == "exact"


def test_check_liyau_examples():
    origin = V.check_liyau(1.0, O)
    assert origin.lhs == 0 and origin.rhs > 0 and origin.passed
    r = V.check_liyau(1.0, [1.0, 0.0, 0.0])
    assert r.passed
    assert r.margin == pytest.approx(8.98065294, rel=1e-6)  # regression value
    stress = V.check_liyau(0.05, [0.0, 0.0, 0.5])
    assert stress.passed and stress.margin > 0


def test_check_scaled_liyau():
    assert V.check_scaled_liyau(1.0, [1.0, 0.2, 0.2], 1.0).passed
    for t, q in ((0.4, [0.3, 0.1, 0.5]), (2.0, [1.0, -1.0, 0.2])):
        # tau -> 0 reproduces the gradient half of the Li-Yau estimate
        b = hk.evaluate(t, O, q)
        r0 = V.check_scaled_liyau(t, q, 1e-12, bundle=b)
        assert r0.lhs == pytest.approx(b.grad_norm2, rel=1e-12)
        assert r0.rhs == pytest.approx((4 * b.dt_log + 16 / t), rel=1e-12)
        # tau^2 = n t / 3: lhs weights coincide with the unscaled estimate
        tau = math.sqrt(t / 3)
        r1 = V.check_scaled_liyau(t, q, tau, bundle=b)
        ly = V.check_liyau(t, q, bundle=b)
        assert r1.lhs == pytest.approx(ly.lhs, rel=1e-13)
        assert r1.rhs == pytest.approx(2 * ly.rhs, rel=1e-13)
        assert r1.passed and not r1.notes


def test_check_harnack_examples():
    r = V.check_harnack(1.0, 2.0, O, [0.4, 0.1, 0.2], [0.4, 0.1, 0.2], 1.0)
    assert r.passed
    assert r.rhs - r.lhs == pytest.approx(
        math.log(16 * hk.evaluate(2.0, O, [0.4, 0.1, 0.2]).p / hk.evaluate(1.0, O, [0.4, 0.1, 0.2]).p), rel=1e-10)
    assert "distance taken between the compared points y and z" in r.notes
    r = V.check_harnack(0.5, 1.0, O, [1.0, 0.0, 0.0], [0.0, 1.0, 0.3], 1.0)
    assert r.passed


def test_harnack_margin_shrinks_as_s_approaches_t():
    q = [0.3, 0.0, 0.1]
    margins = [V.check_harnack(1.0 - gap, 1.0, O, q, q, 0.5).margin for gap in (0.1, 0.01, 0.001)]
    assert margins[0] > margins[1] > margins[2] >= 0
    assert margins[2] < 1e-2


def test_check_harnack_needs_positive_tau():
    with pytest.raises(ValueError):
        V.check_harnack(0.5, 1.0, O, O, O, 0.0)


def test_check_global_distance_examples():
    r = V.check_global_distance(O, [3.0, 0.0, 0.0], 1.0, 1.0, 0.0)
    assert r.passed and all(p.margin == pytest.approx(0, abs=1e-9) for p in r.parts)
    r = V.check_global_distance(O, O, 1.0, 1.0, 0.0)
    assert r.passed and r.parts[0].lhs == 0
    v = V.check_global_distance(O, [0.0, 0.0, 1.0], 1.0, 1.0, 2 * math.sqrt(math.pi))
    assert v.parts[0].lhs <= 1.0 + 1e-9  # vertical path costs |z| / tau
    assert v.passed
    assert not V.check_global_distance(O, [0.0, 0.0, 1.0], 1.0, 1.0, 2.0).passed


def test_dilation_identity():
    a, b = np.array([0.1, 0.2, -0.3]), np.array([-0.5, 0.4, 0.6])
    for rep in V.dilation_identity_check(a, b, 2.0, 1.0):
        assert rep.passed
    for rep in V.dilation_identity_check(a, b, 1.0, 1.0):
        assert rep.lhs == 0


# ------------------------------------------------------------------ fits

def _rows(pairs, taus):
    return V.distance_sample(pairs, taus)


def test_fit_horizontal_only():
    rows = _rows(V.horizontal_pairs(), (0.01, 1.0, 100.0))
    fit = V.fit_distance_constants(rows)
    assert fit.feasible
    assert fit.constants["A"] == pytest.approx(1.0) and fit.constants["B"] == 0.0


def test_fit_vertical_family_reaches_limit():
    rows = _rows(V.vertical_pairs(), (0.01, 1.0, 100.0))
    fit = V.fit_distance_constants(rows)
    assert fit.feasible and fit.constants["A"] >= 1.0
    assert fit.constants["B"] == pytest.approx(2 * math.sqrt(math.pi), rel=1e-4)
    assert not V.validate_distance_fit(rows, fit.constants["A"], fit.constants["B"])


def test_lp_matches_linprog(rng):
    m = 60
    a = rng.uniform(0.05, 1.2, m)
    b = rng.uniform(0.0, 0.8, m)
    d = np.ones(m)
    rows = [(k, 1.0, d[k], a[k] ** 1) for k in range(m)]
    # rebuild rows so that d_tau / d = a and sqrt(tau d_tau) / d = b
    rows = []
    for k in range(m):
        dt = a[k]
        tau = b[k] ** 2 / dt
        rows.append((k, tau, 1.0, dt))
    fit = V.fit_distance_constants(rows)
    ref = linprog([1, 1], A_ub=-np.column_stack([a, b]), b_ub=-np.ones(m), bounds=[(1, None), (0, None)])
    assert fit.constants["A"] + fit.constants["B"] == pytest.approx(ref.fun, rel=1e-9)


@given(st.lists(st.tuples(st.floats(0.01, 2), st.floats(0.0, 2)), min_size=1, max_size=25))
def test_lp_solution_feasible_and_optimal(cons):
    a = np.array([c[0] for c in cons])
    b = np.array([c[1] for c in cons])
    rows = [(k, (b[k] ** 2) / a[k], 1.0, a[k]) for k in range(len(cons))]
    fit = V.fit_distance_constants(rows)
    A, B = fit.constants["A"], fit.constants["B"]
    assert A >= 1.0 and B >= 0.0
    assert np.all(A * a + B * b >= 1 - 1e-9)
    ref = linprog([1, 1], A_ub=-np.column_stack([a, b]), b_ub=-np.ones(len(a)), bounds=[(1, None), (0, None)])
    assert A + B <= ref.fun * (1 + 1e-9) + 1e-12


def test_gaussian_fit_trivial_cases():
    rows = V.gaussian_sample([0.5, 1.0, 2.0], [O])
    fit = V.fit_gaussian_constants(rows)
    c1 = fit.sample["c1"]
    # d = 0: p V = c1 / 16 for every t, so C = max(16 / c1, c1 / 16)
    for c in fit.constants["C"].values():
        assert c == pytest.approx(max(16 / c1, c1 / 16), rel=1e-10)
    assert fit.constants["C0"] == pytest.approx(c1 / 4, rel=1e-10)


def test_gaussian_fit_monotone_in_eps(rng):
    targets = np.vstack([O, rng.uniform(-3, 3, (6, 3))])
    rows = V.gaussian_sample([0.2, 1.0, 5.0], targets)
    fit = V.fit_gaussian_constants(rows)
    C = fit.constants["C"]
    assert fit.feasible and C["1"] <= C["0.5"] <= C["0.1"]
    assert all(c >= 1 for c in C.values())
    with pytest.raises(ValueError):
        V.fit_gaussian_constants(rows, eps_list=(0.0,))


# --------------------------------------------------------------- regimes

def test_regime_slopes():
    ra = V.regime_analysis(O, np.array([0.0, 0.0, 1.0]), 1.0)
    assert ra["decades"]["small"]["slope"] == pytest.approx(0.5, abs=0.1)
    assert ra["decades"]["large"]["slope"] == pytest.approx(1.0, abs=0.1)
    rh = V.regime_analysis(O, np.array([1.0, 0.0, 0.0]), 1.0)
    for dec in rh["decades"].values():
        assert dec["slope"] == pytest.approx(1.0, abs=1e-9)
