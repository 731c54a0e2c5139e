import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fracsphere.rng import RngStream, mode_stream
from fracsphere.specfun import ml_kernel, ml_kernel_integral
from fracsphere.stochastic import (FbmError, FbmPath, fbm_covariance, graded_grid, integral_variance,
                                   rs_integral, sample_complex_fbm, sample_real_fbm, uniform_grid)
from oracles import exp_kernel_fbm_variance, ito_exponential_variance


def zscore(samples, target):
    samples = np.asarray(samples)
    return abs(samples.mean() - target) / (samples.std(ddof=1) / math.sqrt(samples.size))


def test_covariance_formula():
    assert fbm_covariance([1.0], 0.7)[0, 0] == pytest.approx(1.0)
    R = fbm_covariance([2.0, 1.0], 0.75)
    assert R[0, 1] == pytest.approx(math.sqrt(2), rel=1e-14)
    assert fbm_covariance([1.0], 0.7, sigma2=3.0)[0, 0] == pytest.approx(3.0)


def test_path_starts_at_zero_and_shapes():
    t = uniform_grid(2.0, 50)
    p = sample_real_fbm(0.7, 2.0, t, RngStream(1, (5,)), size=3)
    assert p.values.shape == (3, 51)
    assert np.all(p.values[:, 0] == 0)
    assert not p.is_complex
    with pytest.raises(ValueError):
        FbmPath(0.7, 1.0, t, np.zeros(10))


@pytest.mark.parametrize("H", [0.5, 0.75])
@pytest.mark.parametrize("grid", ["uniform", "graded"])
def test_exact_covariance_law(H, grid):
    times = uniform_grid(1.0, 8) if grid == "uniform" else graded_grid(1.0, 8, 0.6)
    n = 40000
    p = sample_real_fbm(H, 1.5, times, RngStream(3, (int(H * 100), len(grid))), size=n)
    X = p.values[:, 1:]
    emp = X.T @ X / n
    R = fbm_covariance(times[1:], H, 1.5)
    se = np.sqrt((R ** 2 + np.outer(np.diag(R), np.diag(R))) / n)
    assert np.max(np.abs(emp - R) / se) < 4.5


def test_brownian_increments_uncorrelated():
    p = sample_real_fbm(0.5, 1.0, uniform_grid(1.0, 64), RngStream(11), size=10000)
    d = np.diff(p.values, axis=1)
    corr = np.mean(d[:, 10] * d[:, 11]) / np.mean(d[:, 10] ** 2)
    assert abs(corr) < 3 / math.sqrt(10000)


@pytest.mark.parametrize("H", [0.6, 0.8])
def test_increment_variance_law(H):
    times = uniform_grid(1.0, 128)
    p = sample_real_fbm(H, 0.7, times, RngStream(12, (int(H * 10),)), size=10000)
    d = (p.values[:, 100] - p.values[:, 37]) ** 2
    assert zscore(d, 0.7 * (times[100] - times[37]) ** (2 * H)) < 3.5


def test_complex_fbm_moments():
    n = 20000
    p = sample_complex_fbm(0.7, 2.0, uniform_grid(1.0, 16), RngStream(13), size=n)
    assert p.is_complex and p.sigma2 == pytest.approx(1.0)
    b1 = p.values[:, -1]
    assert zscore(np.abs(b1) ** 2, 2.0) < 3.5
    assert zscore((b1 ** 2).real, 0.0) < 3.5 and zscore((b1 ** 2).imag, 0.0) < 3.5
    assert zscore(b1.real * b1.imag, 0.0) < 3.5


def test_complex_fbm_graded_grid():
    p = sample_complex_fbm(0.8, 1.0, graded_grid(1.0, 32, 0.7), RngStream(14), size=20000)
    assert zscore(np.abs(p.values[:, -1]) ** 2, 1.0) < 3.5


def test_stream_reproducibility():
    t = uniform_grid(1.0, 32)
    a = sample_complex_fbm(0.7, 1.0, t, mode_stream(5, "noise", "div", 3, 0), size=4)
    sample_real_fbm(0.7, 1.0, t, mode_stream(5, "noise", "curl", 3, 0), size=100)
    b = sample_complex_fbm(0.7, 1.0, t, mode_stream(5, "noise", "div", 3, 0), size=4)
    c = sample_complex_fbm(0.7, 1.0, t, mode_stream(5, "noise", "div", 4, 0), size=4)
    assert np.array_equal(a.values, b.values)
    assert not np.allclose(a.values, c.values)


@pytest.mark.parametrize("H", [0.3, 1.0])
def test_invalid_hurst(H):
    with pytest.raises(ValueError):
        sample_real_fbm(H, 1.0, uniform_grid(1.0, 4), RngStream(0))


def test_invalid_grid():
    with pytest.raises(ValueError):
        sample_real_fbm(0.7, 1.0, np.array([0.0, 0.5, 0.5, 1.0]), RngStream(0))
    with pytest.raises(ValueError):
        sample_real_fbm(0.7, 0.0, uniform_grid(1.0, 4), RngStream(0))


def test_degenerate_grid_reports_factorization_failure():
    times = np.array([0.0, 1.0, 1.0 + 1e-15])
    with pytest.raises(FbmError):
        sample_real_fbm(0.99, 1.0, times, RngStream(0))


def test_rs_integral_constant_kernel_is_endpoint():
    p = sample_complex_fbm(0.7, 1.0, graded_grid(1.3, 40, 0.5), RngStream(2), size=5)
    v = rs_integral(lambda s: np.ones_like(s), p)
    assert np.array_equal(v, p.values[:, -1])


def test_rs_integral_left_point_sum():
    p = sample_real_fbm(0.6, 1.0, uniform_grid(1.0, 20), RngStream(4))
    g = lambda s: np.exp(-s)  # noqa: E731
    direct = np.sum(g(p.times[:-1]) * np.diff(p.values))
    assert rs_integral(g, p) == pytest.approx(direct, rel=1e-12)


def test_rs_integral_rejects_nonfinite_kernel():
    p = sample_real_fbm(0.6, 1.0, uniform_grid(1.0, 20), RngStream(4))
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        rs_integral(lambda s: s ** -0.5, p)


def test_rs_integral_variance_constant_kernel():
    p = sample_real_fbm(0.8, 1.0, uniform_grid(2.0, 64), RngStream(6), size=10000)
    v = rs_integral(lambda s: np.ones_like(s), p)
    assert zscore(v ** 2, 2.0 ** 1.6) < 3.5


def test_rs_integral_ito_isometry():
    p = sample_real_fbm(0.5, 1.0, uniform_grid(1.0, 512), RngStream(7), size=10000)
    v = rs_integral(lambda s: np.exp(-s), p)
    assert zscore(v ** 2, (1 - math.exp(-2)) / 2) < 3.5


def test_rs_integral_mesh_refinement_h_half():
    # exact law: the left-point sum is Gaussian with variance sum g_k^2 dt_k,
    # so the discretization bias can be checked without Monte Carlo
    target = (1 - math.exp(-2)) / 2
    errs = []
    for n in (32, 64, 128, 256):
        s = uniform_grid(1.0, n)
        errs.append(abs(np.sum(np.exp(-2 * s[:-1]) * np.diff(s)) - target))
    assert all(b <= 0.55 * a for a, b in zip(errs, errs[1:]))


def test_integral_variance_examples():
    assert integral_variance(lambda u: np.ones_like(u), 0.0, 2.0, 0.75) == pytest.approx(2 ** 1.5, rel=1e-10)
    assert integral_variance(lambda u: np.exp(-u), 0.0, 1.0, 0.5) == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-13)
    assert integral_variance(lambda u: np.exp(-u), 0.4, 0.4, 0.7) == 0.0


@pytest.mark.parametrize("H,t", [(0.75, 1.0), (0.6, 1.0), (0.55, 1.0), (0.9, 2.0)])
def test_integral_variance_against_reduced_oracle(H, t):
    got = integral_variance(lambda u: np.exp(-u), 0.0, t, H)
    assert got == pytest.approx(exp_kernel_fbm_variance(H, t), rel=1e-8)
    finer = integral_variance(lambda u: np.exp(-u), 0.0, t, H, order=32, panels=8, geometric=20)
    assert finer == pytest.approx(got, rel=1e-6)


@pytest.mark.parametrize("beta,H,lam", [(0.8, 0.7, 2.0), (0.6, 0.9, 30.0), (0.6, 0.5, 5.0), (1.0, 0.7, 1e3)])
def test_integral_variance_singular_kernel_self_convergence(beta, H, lam):
    g = lambda u: ml_kernel(beta, lam, u)  # noqa: E731
    kw = dict(endpoint_exponent=beta - 1, scale=lam ** (-1 / beta))
    a = integral_variance(g, 0.0, 1.0, H, **kw)
    b = integral_variance(g, 0.0, 1.0, H, order=32, panels=8, **kw)
    assert a > 0
    assert b == pytest.approx(a, rel=1e-6)


def test_integral_variance_interval_closed_form():
    z = 3.0
    got = integral_variance(lambda u: np.exp(-z * u), 0.3, 1.1, 0.5)
    assert got == pytest.approx(ito_exponential_variance(z, 0.3, 1.1), rel=1e-12)


def test_integral_variance_kernel_family():
    lams = np.array([0.5, 4.0, 60.0])
    fam = lambda u: ml_kernel(0.8, lams.reshape((-1,) + (1,) * np.ndim(u)), u)  # noqa: E731
    got = integral_variance(fam, 0.5, 1.5, 0.7)
    ref = [integral_variance(lambda u, lam=lam: ml_kernel(0.8, lam, u), 0.5, 1.5, 0.7) for lam in lams]
    assert_allclose(got, ref, rtol=1e-13)


def test_integral_variance_divergent():
    with pytest.raises(ArithmeticError):
        integral_variance(lambda u: u ** -0.6, 0.0, 1.0, 0.55, endpoint_exponent=-0.6)


def test_rs_integral_with_exact_cell_averages_matches_integral_variance():
    beta, lam, H = 0.7, 2.0, 0.75
    times = graded_grid(1.0, 256, beta)
    p = sample_real_fbm(H, 1.0, times, RngStream(8), size=8000)
    v = rs_integral(None, p, antiderivative=lambda s: ml_kernel_integral(beta, lam, s))
    ref = integral_variance(lambda u: ml_kernel(beta, lam, u), 0.0, 1.0, H, endpoint_exponent=beta - 1)
    assert zscore(v ** 2, ref) < 3.5


def test_path_csv():
    p = sample_complex_fbm(0.7, 1.0, uniform_grid(1.0, 4), RngStream(9))
    buf = io.StringIO()
    p.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,re,im" and len(lines) == 6
    assert lines[1] == "0.0,0.0,0.0"
