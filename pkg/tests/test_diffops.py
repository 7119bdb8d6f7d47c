from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sasaki import diffops as D
from sasaki.polynomial import Polynomial, random_polynomial

x, y, z = Polynomial.coordinates(1)
P0 = [0.0, 0.0, 0.0]
small = st.floats(-3, 3, allow_nan=False)


def val(r):
    return r.exact_value if r.scheme == "exact" else r.value


# ---------------------------------------------------------------- examples

def test_gradient_examples():
    assert val(D.horizontal_gradient(x, [0.3, 2.0, -1.0])) == (1, 0)
    g = D.horizontal_gradient(z, [0.5, 2.0, 9.0])
    assert g.exact_value == (Fraction(-1), Fraction(1, 4))
    assert g.scheme == "exact" and g.est_error == 0


def test_sublaplacian_examples():
    assert D.sublaplacian(x * x + y * y, [1.5, -2.0, 3.0]).exact_value == 4
    assert D.sublaplacian(z, [1.0, 1.0, 1.0]).exact_value == 0


def test_reeb_examples():
    assert D.reeb_derivative(z, [1.0, 2.0, 3.0]).exact_value == 1
    assert D.reeb_derivative(x, [1.0, 2.0, 3.0]).exact_value == 0


def test_gamma2_examples():
    for p in ([0.0, 0.0, 0.0], [1.0, -2.0, 0.5]):
        assert D.gamma2(x, p).exact_value == 0
        assert D.gamma2(z, p).exact_value == Fraction(1, 2)
        assert D.gamma2(x * x, p).exact_value == 4


def test_gamma2_T_examples():
    p = [0.7, -0.3, 2.0]
    assert D.gamma2_T(z, p).exact_value == 0
    assert D.gamma2_T(x, p).exact_value == 0
    # T(xz) = x, Delta(xz) = -y (from X X(xz) = -y/2 twice), T Delta(xz) = 0
    assert D.gamma2_T(x * z, p).exact_value == 1


def test_killing_examples(rng):
    assert D.killing_identity_residual(z, [1.0, 2.0, 3.0]).exact_value == 0
    assert D.killing_identity_residual(x * y * z, [1.0, 2.0, 3.0]).exact_value == 0
    f = random_polynomial(1, 4, rng)
    assert D.curvature_forms(f)["killing"].is_zero()


def test_cd_examples():
    for nu in (0.1, 1.0, 10.0):
        assert D.cd_residual(x, [0.3, 0.2, 0.1], nu).exact_value == 1 / Fraction(nu)
        assert D.cd_residual(z, P0, nu).exact_value == 0
        p = [1.0, 3.0, -2.0]
        assert D.cd_residual(z, p, nu).exact_value == Fraction(10) / (4 * Fraction(nu))


def test_cd_rejects_bad_nu():
    for nu in (0.0, -1.0):
        with pytest.raises(ValueError):
            D.cd_residual(z, P0, nu)


def test_coordinate_functions_have_zero_gamma2():
    for f in (x, y):
        assert D.curvature_forms(f)["gamma2"].is_zero()
    assert D.gamma2(3 * x - 2 * y + 1, [1.0, 1.0, 1.0]).exact_value == 0


def test_n2_operators():
    c = Polynomial.coordinates(2)
    z2 = c[4]
    assert D.gamma2(z2, [0.0] * 5).exact_value == 1  # sum over two planes of 1/2
    assert D.cd_residual(z2, [0.0] * 5, 1.0).exact_value == 0
    assert D.sublaplacian(c[0] ** 2 + c[3] ** 2, [1.0] * 5).exact_value == 4


# ------------------------------------------------------- properties (exact)

@st.composite
def polys(draw, n=1, degree=5):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_polynomial(n, degree, np.random.default_rng(seed))


@given(polys(), small, small, small, st.sampled_from([0.1, 1.0, 10.0]))
def test_cd_inequality_nonnegative(f, a, b, c, nu):
    assert D.cd_residual(f, [a, b, c], nu).exact_value >= 0


@given(polys(n=2, degree=4), st.lists(small, min_size=5, max_size=5), st.sampled_from([0.5, 2.0]))
def test_cd_inequality_n2(f, p, nu):
    assert D.cd_residual(f, p, nu).exact_value >= 0


@given(polys(degree=4))
def test_killing_identity_vanishes(f):
    assert D.curvature_forms(f)["killing"].is_zero()


@given(polys(degree=4), small, small, small)
def test_heat_identity_for_gamma(f, a, b, c):
    # Gamma(f) = 1/2 Delta f^2 - f Delta f
    n = 1
    lhs = D.curvature_forms(f * f)["lap"] * Fraction(1, 2) - f * D.curvature_forms(f)["lap"]
    assert lhs == D.curvature_forms(f)["grad2"]


# -------------------------------------------------------- finite differences

def test_callable_matches_exact(rng):
    f = random_polynomial(1, 3, rng)
    field = D.CallableField(f)
    p = [0.3, -0.4, 0.2]
    for op in (D.horizontal_gradient, D.sublaplacian, D.reeb_derivative, D.gamma2, D.gamma2_T):
        exact = np.asarray(op(f, p).value, dtype=float)
        fd = op(field, p)
        assert fd.scheme == "finite-difference"
        scale = max(1.0, float(np.max(np.abs(exact))))
        assert np.max(np.abs(np.asarray(fd.value) - exact)) <= max(1e-4 * scale, 10 * fd.est_error)


def test_fd_convergence_order():
    # quartic terms so the central second difference is not exact
    f = x ** 4 + y ** 4 * z + x * x * z * z
    p = np.array([0.4, 0.1, -0.3])
    exact = float(D.sublaplacian(f, p).value)
    errs = []
    for h in (0.2, 0.1, 0.05, 0.025):
        errs.append(abs(float(D.sublaplacian(D.CallableField(f, h=h), p).value) - exact))
    assert D.fd_order(errs) >= 1.9


def test_fd_cd_residual_carries_error(rng):
    f = random_polynomial(1, 3, rng)
    field = D.CallableField(lambda q: f(q))
    r = D.cd_residual(field, [0.2, 0.1, 0.0], 1.0)
    exact = float(D.cd_residual(f, [0.2, 0.1, 0.0], 1.0).value)
    assert r.est_error > 0
    assert abs(r.value - exact) <= max(1e-3 * max(1, abs(exact)), 10 * r.est_error)


def test_step_underflow():
    field = D.CallableField(lambda q: q[0], h=1e-18)
    with pytest.raises(D.StepUnderflow):
        D.horizontal_gradient(field, [1.0, 0.0, 0.0])


def test_operator_result_invariant():
    with pytest.raises(ValueError):
        D.OperatorResult(1.0, "exact", -1.0)


def test_rejects_wrong_field_type():
    with pytest.raises(TypeError):
        D.sublaplacian(lambda q: 0.0, P0)


def test_frame_commutator_is_reeb(rng):
    f = lambda q: np.sin(q[0]) * q[1] + np.cos(q[2]) + q[0] * q[2] ** 2
    df_dz = lambda q: -np.sin(q[2]) + 2 * q[0] * q[2]
    p = rng.uniform(-1, 1, 3)
    errs = [abs(D.frame_commutator_fd(f, p, 0, h) - df_dz(p)) for h in (0.08, 0.04, 0.02, 0.01)]
    assert errs[-1] < 1e-3
    assert D.fd_order(errs) >= 1.9
