import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from fracsphere.sphere_basis import (PoleError, SpectralCoefficients, SpherePoint, analyze,
                                     assoc_legendre_table, make_grid, random_points, scalar_sh,
                                     synthesize, tensor_kernels, to_cartesian, vsh, vsh_degree)
from oracles import kernel_sum_over_orders, scalar_sh_scipy, vsh_finite_difference


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(20240611)


def test_sphere_point_cartesian():
    p = SpherePoint(0.9, 2.0)
    x = p.cartesian
    assert np.linalg.norm(x) == pytest.approx(1.0, abs=1e-14)
    q = SpherePoint.from_cartesian(x)
    assert (q.theta, q.phi) == pytest.approx((0.9, 2.0), abs=1e-14)
    with pytest.raises(ValueError):
        SpherePoint(-0.1, 0.0)


def test_scalar_sh_examples():
    assert scalar_sh(0, 0, 1.1, 0.3) == pytest.approx(1 / math.sqrt(4 * math.pi))
    assert scalar_sh(1, 0, 0.0, 0.0) == pytest.approx(math.sqrt(3 / (4 * math.pi)))
    with pytest.raises(IndexError):
        scalar_sh(2, 3, 0.5, 0.5)


@pytest.mark.parametrize("ell", [0, 1, 2, 5, 12])
def test_scalar_sh_against_scipy(ell, rng):
    th, ph = random_points(20, rng)
    for m in range(-ell, ell + 1):
        assert_allclose(scalar_sh(ell, m, th, ph), scalar_sh_scipy(ell, m, th, ph), atol=1e-13)


def test_scalar_sh_conjugation_symmetry(rng):
    th, ph = random_points(10, rng)
    for ell in range(1, 6):
        for m in range(1, ell + 1):
            assert_allclose(np.conj(scalar_sh(ell, m, th, ph)), (-1) ** m * scalar_sh(ell, -m, th, ph),
                            atol=1e-14)


def test_scalar_sh_orthonormal_on_grid():
    L = 8
    g = make_grid(L)
    Y = np.array([scalar_sh(ell, m, g.theta, g.phi) for ell in range(L + 1) for m in range(-ell, ell + 1)])
    gram = (Y * g.weights) @ np.conj(Y).T
    assert_allclose(gram, np.eye(len(Y)), atol=1e-10)
    assert np.sum(g.weights * np.abs(scalar_sh(2, 1, g.theta, g.phi)) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_associated_legendre_stable_high_degree():
    P = assoc_legendre_table(600, np.array([0.3, 1.2, 2.9]))
    assert np.all(np.isfinite(P))
    # sum_m |Y_lm|^2 = (2l+1)/(4 pi)
    s = P[600, 0] ** 2 + 2 * np.sum(P[600, 1:] ** 2, axis=0)
    assert_allclose(s, 1201 / (4 * np.pi), rtol=1e-10)


def test_vsh_examples():
    y, z = vsh(1, 0, math.pi / 2, 0.0)
    c = math.sqrt(3 / (8 * math.pi))
    assert_allclose(z, [0, 0, c], atol=1e-14)
    assert_allclose(y, [0, -c, 0], atol=1e-14)


@pytest.mark.parametrize("ell,m", [(1, 0), (1, 1), (2, -1), (3, 2), (5, -4), (8, 8)])
def test_vsh_against_finite_differences(ell, m, rng):
    th, ph = random_points(4, rng)
    for a, b in zip(th, ph):
        y, z = vsh(ell, m, a, b)
        yo, zo = vsh_finite_difference(ell, m, a, b)
        assert_allclose(z, zo, atol=1e-8)
        assert_allclose(y, yo, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(ell=st.integers(1, 15), data=st.data(),
       theta=st.floats(1e-3, math.pi - 1e-3), phi=st.floats(0, 2 * math.pi))
def test_vsh_tangent(ell, data, theta, phi):
    m = data.draw(st.integers(-ell, ell))
    x = to_cartesian(theta, phi)
    y, z = vsh(ell, m, theta, phi)
    assert abs(x @ y) < 1e-12 and abs(x @ z) < 1e-12
    # y = x cross z, so the bilinear product z . y vanishes
    assert abs(np.dot(z, y)) < 1e-12


def test_vsh_pole_limits():
    # degree 1 has a well-defined limit at the poles
    for th in (0.0, math.pi):
        ys, zs = vsh_degree(1, np.array([th]), np.array([0.3]))
        d, c = kernel_sum_over_orders(vsh_degree, 1, th, 0.3, th, 0.3)
        assert_allclose(np.trace(d[0]).real, 3 / (4 * math.pi), atol=1e-12)
        x = to_cartesian(th, 0.3)
        assert np.max(np.abs(np.einsum("mnk,k->mn", zs, x))) < 1e-14
    with pytest.raises(PoleError):
        vsh(2, 1, 0.0, 0.0)


def test_vsh_orthonormal_on_grid():
    L = 6
    g = make_grid(L + 1)
    basis = []
    for ell in range(1, L + 1):
        ys, zs = vsh_degree(ell, g.theta, g.phi)
        basis += list(ys) + list(zs)
    B = np.array(basis)
    gram = np.einsum("anj,bnj,n->ab", B, np.conj(B), g.weights)
    assert_allclose(gram, np.eye(len(B)), atol=1e-10)


@pytest.mark.parametrize("ell", range(1, 11))
def test_addition_theorem(ell, rng):
    thx, phx = random_points(50, rng)
    thy, phy = random_points(50, rng)
    d_ref, c_ref = kernel_sum_over_orders(vsh_degree, ell, thx, phx, thy, phy)
    dlg, clg = tensor_kernels(ell, to_cartesian(thx, phx), to_cartesian(thy, phy))
    assert np.max(np.abs(dlg - d_ref)) <= 1e-8
    assert np.max(np.abs(clg - c_ref)) <= 1e-8


def test_tensor_kernel_example():
    ez, ex = np.array([0.0, 0, 1]), np.array([1.0, 0, 0])
    dlg, _ = tensor_kernels(1, ez, ex)
    d_ref, _ = kernel_sum_over_orders(vsh_degree, 1, 0.0, 0.0, math.pi / 2, 0.0)
    assert_allclose(dlg, d_ref[0], atol=1e-14)
    expected = np.zeros((3, 3))
    expected[0, 2] = -3 / (8 * math.pi)
    assert_allclose(dlg, expected, atol=1e-14)


@pytest.mark.parametrize("ell", [1, 2, 7, 20])
def test_kernel_trace_on_diagonal(ell, rng):
    x = to_cartesian(*random_points(10, rng))
    dlg, clg = tensor_kernels(ell, x, x)
    c = (2 * ell + 1) / (4 * math.pi)
    assert_allclose(np.trace(dlg, axis1=1, axis2=2), c, atol=1e-8)
    assert_allclose(np.trace(clg, axis1=1, axis2=2), c, atol=1e-8)


def test_kernel_trace_depends_only_on_inner_product(rng):
    R = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    x = to_cartesian(*random_points(5, rng))
    y = to_cartesian(*random_points(5, rng))
    for ell in (1, 3, 6):
        a = np.trace(tensor_kernels(ell, x, y)[0], axis1=1, axis2=2)
        b = np.trace(tensor_kernels(ell, x @ R.T, y @ R.T)[0], axis1=1, axis2=2)
        assert_allclose(a, b, atol=1e-8)


def test_grid_weights_and_exactness():
    g = make_grid(10)
    assert g.degree == 21
    assert g.weights.sum() == pytest.approx(4 * math.pi, abs=1e-10)
    assert np.sum(g.weights * scalar_sh(0, 0, g.theta, g.phi)).real == pytest.approx(math.sqrt(4 * math.pi))
    # a degree-21 polynomial integrates exactly: int z^20 = 4 pi / 21
    z = np.cos(g.theta)
    assert np.sum(g.weights * z ** 20) == pytest.approx(4 * math.pi / 21, rel=1e-12)
    assert np.min(np.abs(np.sin(g.theta))) > 0


def _random_coeffs(L, rng):
    c = SpectralCoefficients.zeros(L)
    mask = SpectralCoefficients.mask(L)
    n = int(mask.sum())
    c.div_free[mask] = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    c.curl_free[mask] = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return c


def test_delta_roundtrip():
    L = 4
    c = SpectralCoefficients.zeros(L)
    c.set(2, 1, 1.0, "div")
    g = make_grid(L + 1)
    back = analyze(synthesize(c, g.theta, g.phi).values, g, L)
    assert back.get(2, 1, "div") == pytest.approx(1.0, abs=1e-12)
    back.set(2, 1, 0.0, "div")
    assert np.max(np.abs(back.div_free)) < 1e-10 and np.max(np.abs(back.curl_free)) < 1e-10


def test_parseval_example():
    L = 3
    c = SpectralCoefficients.zeros(L)
    c.set(1, 0, 1.0, "div")
    c.set(2, -1, 2j, "curl")
    g = make_grid(L + 1)
    f = synthesize(c, g.theta, g.phi)
    assert np.sum(g.weights * np.sum(np.abs(f.values) ** 2, axis=1)) == pytest.approx(5.0, rel=1e-12)
    assert float(c.norm2()) == pytest.approx(5.0)


@pytest.mark.parametrize("L", [1, 5, 16, 32])
def test_roundtrip_and_parseval_random(L, rng):
    c = _random_coeffs(L, rng)
    g = make_grid(L + 1)
    f = synthesize(c, g.theta, g.phi)
    assert f.max_normal_component() <= 1e-10
    back = analyze(f.values, g, L)
    assert np.max(np.abs(back.div_free - c.div_free)) < 1e-8
    assert np.max(np.abs(back.curl_free - c.curl_free)) < 1e-8
    quad = np.sum(g.weights * np.sum(np.abs(f.values) ** 2, axis=1))
    assert quad == pytest.approx(float(c.norm2()), rel=1e-8)


def test_analyze_rejects_coarse_grid(rng):
    g = make_grid(4)
    with pytest.raises(ValueError):
        analyze(np.zeros((g.size, 3)), g, 4)


def test_batched_synthesis_matches_loop(rng):
    L = 4
    cs = [_random_coeffs(L, rng) for _ in range(3)]
    batch = SpectralCoefficients(L, np.stack([c.div_free for c in cs]), np.stack([c.curl_free for c in cs]))
    th, ph = random_points(7, rng)
    vals = synthesize(batch, th, ph).values
    for k, c in enumerate(cs):
        assert_allclose(vals[k], synthesize(c, th, ph).values, atol=1e-13)


def test_truncate_and_norm(rng):
    c = _random_coeffs(6, rng)
    norms = [float(c.truncate(k).norm2()) for k in range(1, 7)]
    assert np.all(np.diff(norms) >= 0)
    assert float(c.truncate(6).norm2()) == float(c.norm2())
    t1 = c.truncate(1)
    assert np.all(t1.div_free[2:] == 0) and np.any(t1.div_free[1] != 0)
    with pytest.raises(ValueError):
        c.truncate(7)
    with pytest.raises(IndexError):
        c.set(0, 0, 1.0)


def test_coefficient_json_roundtrip(rng):
    c = _random_coeffs(3, rng)
    back = SpectralCoefficients.from_json(c.to_json(seed=3))
    assert_allclose(back.div_free, c.div_free)
    assert_allclose(back.curl_free, c.curl_free)


def test_field_csv(rng):
    c = _random_coeffs(2, rng)
    g = make_grid(3)
    buf = io.StringIO()
    synthesize(c, g.theta, g.phi).to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "theta,phi,re_x,im_x,re_y,im_y,re_z,im_z"
    assert len(lines) == g.size + 1
    assert len(lines[1].split(",")) == 8
