"""Quick invariant suite behind ``fracsphere validate``."""
from __future__ import annotations

import math

import numpy as np

from . import covariance, model, sphere_basis as sb, specfun, stochastic, studies
from .rng import RngStream


def _check(name, ok, **detail):
    return {"name": name, "passed": bool(ok), **{k: (float(v) if isinstance(v, (np.floating, float)) else v)
                                                 for k, v in detail.items()}}


def check_addition_theorem(seed, lmax=10, n_pairs=50):
    rng = RngStream(seed, (99, 0)).generator()
    (thx, phx), (thy, phy) = sb.random_points(n_pairs, rng), sb.random_points(n_pairs, rng)
    x, y = sb.to_cartesian(thx, phx), sb.to_cartesian(thy, phy)
    worst = 0.0
    for ell in range(1, lmax + 1):
        yx, zx = sb.vsh_degree(ell, thx, phx)
        yy, zy = sb.vsh_degree(ell, thy, phy)
        dsum = np.einsum("mni,mnj->nij", yx, np.conj(yy))
        csum = np.einsum("mni,mnj->nij", zx, np.conj(zy))
        dlg, clg = sb.tensor_kernels(ell, x, y)
        worst = max(worst, np.abs(dsum - dlg).max(), np.abs(csum - clg).max())
    return _check("addition_theorem", worst <= 1e-8, max_error=worst)


def check_kernel_trace(seed, lmax=20, n=10):
    rng = RngStream(seed, (99, 1)).generator()
    x = sb.to_cartesian(*sb.random_points(n, rng))
    worst = 0.0
    for ell in range(1, lmax + 1):
        dlg, clg = sb.tensor_kernels(ell, x, x)
        target = (2 * ell + 1) / (4 * np.pi)
        worst = max(worst, np.abs(np.trace(dlg, axis1=-2, axis2=-1) - target).max(),
                    np.abs(np.trace(clg, axis1=-2, axis2=-1) - target).max())
    return _check("kernel_trace", worst <= 1e-8, max_error=worst)


def check_transforms(seed, L=16):
    rng = RngStream(seed, (99, 2)).generator()
    c = sb.SpectralCoefficients.zeros(L)
    mask = sb.SpectralCoefficients.mask(L)
    for arr in (c.div_free, c.curl_free):
        arr[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
    grid = sb.make_grid(L + 1)
    f = sb.synthesize(c, grid.theta, grid.phi)
    back = sb.analyze(f.values, grid, L)
    err = max(np.abs(back.div_free - c.div_free).max(), np.abs(back.curl_free - c.curl_free).max())
    quad = float(np.sum(grid.weights * np.sum(np.abs(f.values) ** 2, axis=-1)))
    pars = abs(quad - float(c.norm2())) / float(c.norm2())
    return _check("transforms", err <= 1e-8 and pars <= 1e-8 and f.max_normal_component() <= 1e-10,
                  roundtrip_error=err, parseval_rel_error=pars, tangency=f.max_normal_component())


def check_mittag_leffler():
    z = np.linspace(-20, 5, 251)
    e_exp = np.max(np.abs(specfun.mittag_leffler(1.0, 1.0, z) / np.exp(z) - 1))
    w = np.linspace(0.05, 100, 400)
    w = w[np.abs(np.sin(np.sqrt(w))) > 1e-3]
    e_sin = np.max(np.abs(specfun.mittag_leffler(2.0, 2.0, -w) * np.sqrt(w) / np.sin(np.sqrt(w)) - 1))
    mono = True
    zz = np.linspace(0, 50, 501)
    for beta in (0.5, 0.8, 1.0):
        v = specfun.mittag_leffler(beta, 1.0, -zz)
        mono &= bool(np.all(v > 0) and np.all(v <= 1) and np.all(np.diff(v) <= 0))
    return _check("mittag_leffler", e_exp <= 1e-10 and e_sin <= 1e-8 and mono,
                  exp_rel_error=e_exp, sinc_rel_error=e_sin, monotone=mono)


def check_fbm(seed, n_paths=4000):
    times = stochastic.uniform_grid(1.0, 64)
    ok, worst = True, 0.0
    for k, H in enumerate((0.5, 0.7, 0.9)):
        p = stochastic.sample_real_fbm(H, 1.0, times, RngStream(seed, (99, 3, k)), size=n_paths)
        d = (p.values[:, 48] - p.values[:, 16]) ** 2
        target = (times[48] - times[16]) ** (2 * H)
        z = abs(d.mean() - target) / (d.std(ddof=1) / math.sqrt(n_paths))
        worst = max(worst, z)
        ok &= z <= 4
    return _check("fbm_increment_law", ok, max_z_score=worst)


def check_estar(params):
    z = np.array([0.3, 1.0, 7.0])
    closed = (1 - np.exp(-2 * z)) / (2 * z)
    e1 = np.max(np.abs(covariance.estar(1.0, z, 1.0, 0.5) / closed - 1))
    detail = {"closed_form_rel_error": e1}
    ok = e1 <= 1e-6
    if params.beta + params.hurst > 1:
        es = covariance.estar(1.0, z, params.beta, params.hurst)
        iv = np.array([stochastic.integral_variance(
            lambda u, zz=zz: specfun.ml_kernel(params.beta, zz, u), 0.0, 1.0, params.hurst,
            endpoint_exponent=params.beta - 1) for zz in z])
        e2 = float(np.max(np.abs(iv / es - 1)))
        detail["double_integral_rel_error"] = e2
        ok &= e2 <= 1e-6
    return _check("estar", ok, **detail)


def check_covariance(params, spectra, t, seed):
    rng = RngStream(seed, (99, 4)).generator()
    pts = sb.to_cartesian(*sb.random_points(10, rng))
    w = covariance.mode_weights(params, spectra, t)
    C = covariance.covariance_matrix(params, spectra, t, pts, pts, weights=w)
    Cyx = covariance.covariance_matrix(params, spectra, t, pts[::-1], pts, weights=w)
    Cxy = covariance.covariance_matrix(params, spectra, t, pts, pts[::-1], weights=w)
    herm = float(np.abs(Cxy - np.conj(np.swapaxes(Cyx, -1, -2))).max())
    min_eig = float(np.linalg.eigvalsh(C).min())
    tr = np.trace(C, axis1=-2, axis2=-1).real
    target = covariance.variance_trace(params, spectra, t)
    tr_err = float(np.abs(tr - target).max() / max(target, 1e-300))
    return _check("covariance_tensor", herm <= 1e-10 and min_eig >= -1e-10 and tr_err <= 1e-8,
                  hermitian_error=herm, min_eigenvalue=min_eig, trace_rel_error=tr_err)


def check_truncation(params, spectra, t):
    if spectra.nu is None:
        return _check("truncation_rate", True, skipped="explicit spectra")
    fit, _, s = studies.truncation_rate_study(params, spectra, t, L_ref=2048)
    return _check("truncation_rate", s["within_bound"] and s["matches_sharp_rate"],
                  slope=fit.slope, bound_slope=s["bound_slope"], sharp_slope=s["sharp_slope"])


def check_cauchy(params, spectra, seed):
    init = model.sample_initial(params, spectra, seed)
    ts = np.linspace(0, 3, 16)
    norms = [float(model.sample_cauchy(params, spectra, t, initial=init).norm2()) for t in ts]
    u0 = model.sample_cauchy(params, spectra, 0.0, initial=init)
    same = np.array_equal(u0.div_free, init.div_free) and np.array_equal(u0.curl_free, init.curl_free)
    return _check("cauchy_contraction", same and bool(np.all(np.diff(norms) <= 0)), identity_at_zero=same)


def check_determinism(params, spectra, t, seed):
    a = model.sample_combined(params, spectra, t, seed, n_replicates=3, workers=1)
    b = model.sample_combined(params, spectra, t, seed, n_replicates=3, workers=2)
    c = model.sample_combined(params, spectra, t, seed, n_replicates=1, start=2)
    same = (np.array_equal(a.div_free, b.div_free) and np.array_equal(a.curl_free, b.curl_free)
            and np.array_equal(a.div_free[2:], c.div_free))
    return _check("determinism", same)


def run_validation(params, spectra, t, seed):
    checks = [
        check_addition_theorem(seed),
        check_kernel_trace(seed),
        check_transforms(seed),
        check_mittag_leffler(),
        check_fbm(seed),
        check_estar(params),
        check_cauchy(params, spectra, seed),
    ]
    rep = model.check_admissibility(params, spectra)
    checks.append(_check("admissibility", rep.ok, messages=rep.messages))
    if rep.ok:
        checks += [
            check_covariance(params, spectra, t, seed),
            check_truncation(params, spectra, t),
            check_determinism(params, spectra, t, seed),
        ]
    return checks
