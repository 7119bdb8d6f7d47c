import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sasaki import heatkernel as hk
from sasaki.model_space import ModelSpace

H1 = ModelSpace(1)
O = H1.origin


def test_on_diagonal_closed_form():
    # p_t(0) = 1/(8 pi^2 t^2) Int s/sinh s ds = 1/(16 t^2)
    for t in (0.05, 1.0, 7.0):
        b = hk.evaluate(t, O, O)
        assert b.p == pytest.approx(1 / (16 * t * t), rel=1e-12)
        assert b.dt_log == pytest.approx(-2 / t, rel=1e-12)
        assert b.reeb_log == 0 and np.all(b.grad_log == 0)


def test_z_marginal_is_gaussian():
    # integrating out z leaves the planar heat kernel exp(-r^2/4t)/(4 pi t)
    t, r = 0.7, 1.3
    u, w = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(-12, 12, 25)
    z = np.concatenate([0.5 * (b - a) * u + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wz = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    pts = np.column_stack([np.full_like(z, r), np.zeros_like(z), z])
    got = np.sum(wz * hk.density(t, pts))
    assert got == pytest.approx(math.exp(-r * r / (4 * t)) / (4 * math.pi * t), rel=1e-9)


def test_rejects_nonpositive_time():
    for t in (0.0, -1.0):
        with pytest.raises(ValueError):
            hk.evaluate(t, O, O)
        with pytest.raises(ValueError):
            hk.density(t, [O])


def test_normalisation():
    assert hk.total_mass(1.0) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=15)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 3))
def test_symmetries(a, b, c, t):
    p = hk.evaluate(t, O, [a, b, c])
    flipped = hk.evaluate(t, O, [a, b, -c])
    assert flipped.log_p == pytest.approx(p.log_p, abs=1e-12)
    ang = 0.7
    rotated = [a * math.cos(ang) - b * math.sin(ang), a * math.sin(ang) + b * math.cos(ang), c]
    assert hk.evaluate(t, O, rotated).log_p == pytest.approx(p.log_p, abs=1e-12)
    assert p.p > 0


@settings(max_examples=15)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 2))
def test_parabolic_scaling(a, b, c, t):
    assert hk.scaling_residual(t, [a, b, c], 2.0) <= 1e-8


def test_left_invariance(rng):
    x, q = rng.uniform(-1, 1, (2, 3))
    a = hk.evaluate(0.8, x, H1.multiply(x, q))
    b = hk.evaluate(0.8, O, q)
    assert a.log_p == pytest.approx(b.log_p, abs=1e-12)


def test_density_matches_evaluate(rng):
    q = rng.uniform(-2, 2, (20, 3))
    d = hk.density(0.6, q)
    ref = np.array([hk.evaluate(0.6, O, v).p for v in q])
    np.testing.assert_allclose(d, ref, rtol=1e-9)


def test_heat_equation_examples():
    assert hk.heat_equation_residual(1.0, [1.0, 0.0, 0.0]) <= 1e-5
    assert hk.heat_equation_residual(0.1, [0.05, 0.0, 0.02]) <= 1e-4


def test_heat_equation_residual_order():
    y = [0.6, 0.2, 0.3]
    errs = [hk.heat_equation_residual(1.0, y, h=h) for h in (0.08, 0.04, 0.02)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_bundle_identity_and_fd_derivatives():
    t, q = 0.7, np.array([0.5, -0.3, 0.4])
    b = hk.evaluate(t, O, q)
    assert b.laplacian_log == pytest.approx(b.dt_log - b.grad_norm2, rel=1e-14)
    errs = []
    for h in (2e-3, 1e-3):
        fd = []
        for e in np.eye(3) * h:
            fd.append((hk.evaluate(t, O, H1.multiply(q, e)).log_p - hk.evaluate(t, O, H1.multiply(q, -e)).log_p) / (2 * h))
        ft = (hk.evaluate(t + h, O, q).log_p - hk.evaluate(t - h, O, q).log_p) / (2 * h)
        errs.append(np.abs(np.r_[fd, ft] - np.r_[b.grad_log, b.reeb_log, b.dt_log]))
    assert np.max(errs[1]) < 1e-5
    assert np.all(errs[0] / np.maximum(errs[1], 1e-300) > 3.0)  # O(h^2)


def test_stress_point_small_time():
    b = hk.evaluate(0.05, O, [0.0, 0.0, 0.5])
    assert 0 < b.p < 1e-10
    assert b.quad_error < 1e-9


# ------------------------------------------------------------- Monte Carlo

def test_mc_guard_and_determinism():
    with pytest.raises(ValueError):
        hk.mc_estimate(1.0, ((-1, 1), (-1, 1), (-1, 1)), paths=100)
    cell = ((-0.5, 0.5), (-0.5, 0.5), (-0.5, 0.5))
    a = hk.mc_estimate(1.0, cell, paths=20_000, seed=5, steps=256)
    b = hk.mc_estimate(1.0, cell, paths=20_000, seed=5, steps=256)
    assert a == b and a.stderr > 0 and a.density >= 0


def test_mc_block_seeding_is_prefix_stable():
    # paths are generated per block, so a longer run extends a shorter one
    short = hk.simulate_endpoints(1.0, 10_240, 9, 128)
    long = hk.simulate_endpoints(1.0, 20_480, 9, 128)
    np.testing.assert_array_equal(short, long[:10_240])


def test_mc_huge_cell_and_symmetry():
    huge = ((-50, 50), (-50, 50), (-200, 200))
    est = hk.mc_estimate(1.0, huge, paths=20_000, steps=256)
    assert est.density * 100 * 100 * 400 == pytest.approx(1.0)
    up = hk.mc_estimate(1.0, ((-1, 1), (-1, 1), (0.2, 1.0)), paths=100_000, steps=512)
    down = hk.mc_estimate(1.0, ((-1, 1), (-1, 1), (-1.0, -0.2)), paths=100_000, steps=512)
    assert abs(up.density - down.density) <= 3 * math.hypot(up.stderr, down.stderr)


def test_mc_matches_quadrature_at_origin_cell():
    cell = ((-0.25, 0.25), (-0.25, 0.25), (-0.25, 0.25))
    est = hk.mc_estimate(1.0, cell)
    assert abs(est.density - hk.cell_average(1.0, cell)) <= 3 * est.stderr


def test_mc_step_halving_bias():
    cell = ((0.0, 1.0), (0.0, 1.0), (0.0, 0.5))
    coarse = hk.mc_estimate(1.0, cell, paths=100_000, seed=11, steps=1024)
    fine = hk.mc_estimate(1.0, cell, paths=100_000, seed=11, steps=2048)
    assert abs(coarse.density - fine.density) <= 3 * math.hypot(coarse.stderr, fine.stderr)


# ------------------------------------------------------------- ball volume

def test_ball_volume_at_scale():
    v1 = hk.ball_volume_at_scale(O, 1.0)
    assert hk.ball_volume_at_scale(O, 4.0) == pytest.approx(16 * v1, rel=1e-14)
    assert hk.ball_volume_at_scale([3.0, -1.0, 2.0], 1.0) == v1
    c_a, e_a = hk.unit_ball_volume(200_000, 1)
    c_b, e_b = hk.unit_ball_volume(200_000, 2)
    assert abs(c_a - c_b) <= 3 * math.hypot(e_a, e_b)


def test_validation_gate_passes():
    gate = hk.validation_gate()
    assert gate["pass"], gate


# ----------------------------------------------------------- semigroup law

def _gl(lo, hi, panels, order=8):
    u, w = np.polynomial.legendre.leggauss(order)
    e = np.linspace(lo, hi, panels + 1)
    half, mid = 0.5 * np.diff(e), 0.5 * (e[1:] + e[:-1])
    return (mid[:, None] + half[:, None] * u).ravel(), (half[:, None] * w).ravel()


def _z_axis(centres, c, top, per):
    # sinh-clustered nodes around each plane where one of the two kernels is thin
    centres = sorted(centres)
    cuts = [-top] + [0.5 * (a + b) for a, b in zip(centres, centres[1:])] + [top]
    zs, ws = [], []
    for k, m in enumerate(centres):
        u, wu = _gl(math.asinh((cuts[k] - m) / c), math.asinh((cuts[k + 1] - m) / c), per // 8)
        zs.append(m + c * np.sinh(u))
        ws.append(wu * c * np.cosh(u))
    return np.concatenate(zs), np.concatenate(ws)


def chapman_kolmogorov(t, s, y, nr=32, nphi=24, per=40):
    """``Int p_t(0, w) p_s(w, y) dmu(w)`` in polar coordinates around the origin."""
    big = max(t, s)
    rho, wr = _gl(0.0, math.sqrt(160 * big), nr // 8)
    phi = np.arange(nphi) * 2 * math.pi / nphi
    z, wz = _z_axis({0.0, float(y[2])}, 0.1 * min(t, s), 16 * big + 4 + abs(y[2]), per)
    R, P, Z = np.meshgrid(rho, phi, z, indexing="ij")
    W = np.column_stack([(R * np.cos(P)).ravel(), (R * np.sin(P)).ravel(), Z.ravel()])
    w = np.einsum("i,j,k->ijk", wr * rho, np.full(nphi, 2 * math.pi / nphi), wz).ravel()
    # w^{-1} y with the group law written out for a batch of w
    q = np.column_stack([y[0] - W[:, 0], y[1] - W[:, 1],
                         y[2] - W[:, 2] - 0.5 * (W[:, 0] * y[1] - W[:, 1] * y[0])])
    return float(np.sum(w * hk.density(t, W) * hk.density(s, q)))


@pytest.mark.parametrize("t,s", [(0.5, 0.5), (1.0, 1.0)])
def test_semigroup_property(t, s):
    for y in ([0, 0, 0], [1, 0, 0], [0, 0, 1], [0.5, -0.5, 0.3], [1.5, 1, -1]):
        y = np.array(y, dtype=float)
        ref = hk.evaluate(t + s, O, y).p
        assert chapman_kolmogorov(t, s, y) == pytest.approx(ref, rel=1e-4)
