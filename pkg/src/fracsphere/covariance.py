"""Second-order structure of the solution: E* and the covariance tensor."""
from __future__ import annotations

import numpy as np
from scipy.special import gamma as gamma_fn

from .specfun import mittag_leffler
from .sphere_basis import tensor_kernels, to_cartesian
from .stochastic import _gauss_panels

__all__ = [
    "DivergentVarianceError",
    "estar",
    "mode_weights",
    "covariance_matrix",
    "variance_trace",
]


class DivergentVarianceError(ArithmeticError):
    """beta + H <= 1: the stochastic integral has infinite variance."""


def _check(beta, hurst):
    if not 0 < beta <= 1:
        raise ValueError(f"beta={beta} outside (0, 1]")
    if not 0.5 <= hurst < 1:
        raise ValueError(f"Hurst index {hurst} outside [1/2, 1)")
    if beta + hurst <= 1:
        raise DivergentVarianceError(
            f"beta + H = {beta + hurst} <= 1: u^(2beta+2H-3) is not integrable at 0")


def estar(t, z, beta, hurst, order=16, panels=4):
    """E*_{beta,H}(t, z) = Gamma(2H+1) int_0^t u^{2b+2H-3} E_{b,b}(-u^b z) E_{b,b+2H-1}(-u^b z) du.

    Vectorized over ``z``.  With p = 2beta+2H-2 the substitution
    u = t w^{1/p} turns the weight u^{p-1} du into t^p/p dw; geometric panels
    towards w = 0 resolve the decay of the integrand for large ``t^beta z``.
    ``order``/``panels`` set the Gauss-Legendre mesh (doubling either is the
    self-convergence check).
    """
    _check(beta, hurst)
    if t < 0:
        raise ValueError("negative time")
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z < 0):
        raise ValueError("spectral value must be nonnegative")
    out = np.zeros(z.shape)
    if t == 0:
        return float(out[0]) if scalar else out
    p = 2 * beta + 2 * hurst - 2
    b2 = beta + 2 * hurst - 1
    pref = gamma_fn(2 * hurst + 1) * t ** p / p
    x = t ** beta * z
    # one quadrature mesh per decade of t^beta z, fixed by the decade alone so
    # a value does not depend on which other arguments share the call
    decade = np.floor(np.log10(np.maximum(x, 1.0))).astype(int)
    for d in np.unique(decade):
        sel = decade == d
        geometric = 8 + int(np.ceil(p / beta * (d + 1) * np.log2(10.0)))
        w, wt = _gauss_panels(0.0, 1.0, panels, order, geometric)
        arg = -(x[sel][:, None] * w[None, :] ** (beta / p))
        flat = arg.ravel()
        f = mittag_leffler(beta, beta, flat) * mittag_leffler(beta, b2, flat)
        out[sel] = pref * (f.reshape(arg.shape) @ wt)
    return float(out[0]) if scalar else out


def mode_weights(params, spectra, t):
    """Per-degree variances of the two families at time t (index 0 unused).

    div[l] = sig_hat2[l] E_{b,1}(-t0^b psi_l)^2 + A1[l] E*(t, psi_l), curl
    likewise with sig_tilde2 and A2.
    """
    L = spectra.L
    psi = params.psi_values(L)
    decay = np.zeros(L + 1)
    decay[1:] = mittag_leffler(params.beta, 1.0, -(params.t0 ** params.beta) * psi[1:])
    es = np.zeros(L + 1)
    if t > 0 and (np.any(spectra.A1) or np.any(spectra.A2)):
        es[1:] = estar(t, psi[1:], params.beta, params.hurst)
    div = spectra.sig_hat2 * decay ** 2 + spectra.A1 * es
    curl = spectra.sig_tilde2 * decay ** 2 + spectra.A2 * es
    div[0] = curl[0] = 0.0
    return div, curl


def _as_cartesian(p):
    if hasattr(p, "cartesian"):
        return np.asarray(p.cartesian, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.shape[-1] == 2:
        return to_cartesian(p[..., 0], p[..., 1])
    return p


def covariance_matrix(params, spectra, t, x, y, weights=None):
    """Cov(X(t,x), X(t,y)) = E[X(t,x) conj(X(t,y))^T] as a 3x3 complex matrix.

    ``x``, ``y``: SpherePoint, unit 3-vectors, or arrays of them.
    """
    xc, yc = _as_cartesian(x), _as_cartesian(y)
    div, curl = mode_weights(params, spectra, t) if weights is None else weights
    out = np.zeros(np.broadcast_shapes(xc.shape, yc.shape)[:-1] + (3, 3), dtype=complex)
    for ell in range(1, spectra.L + 1):
        if div[ell] == 0 and curl[ell] == 0:
            continue
        dlg, clg = tensor_kernels(ell, xc, yc)
        out += div[ell] * dlg + curl[ell] * clg
    return out


def variance_trace(params, spectra, t):
    """E|X(t,x)|^2, which does not depend on x."""
    div, curl = mode_weights(params, spectra, t)
    ell = np.arange(spectra.L + 1)
    return float(np.sum((2 * ell + 1) / (4 * np.pi) * (div + curl)))
