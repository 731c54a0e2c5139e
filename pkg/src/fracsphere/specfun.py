"""Scalar special functions: Mittag-Leffler functions and Legendre polynomials.

The two-parameter Mittag-Leffler function is evaluated by its Taylor series
near the origin and elsewhere by numerical inversion of its Laplace transform

    L[t^{b-1} E_{a,b}(z t^a)](s) = s^{a-b} / (s^a - z)

along an optimal parabolic contour (trapezoidal rule), plus the residues of
any poles of the transform lying to the right of the contour.  The contour
parameters follow the error analysis of R. Garrappa, SIAM J. Numer. Anal.
53 (2015), which gives close to machine precision for real arguments.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import rgamma

__all__ = [
    "MittagLefflerError",
    "mittag_leffler",
    "ml_kernel",
    "ml_kernel_integral",
    "legendre",
    "legendre_derivs",
]

Z_MAX = 5.0
SERIES_RADIUS = 1.0

_LOG_EPS = math.log(np.finfo(float).eps)
_LOG_TOL = math.log(1e-15)


class MittagLefflerError(ArithmeticError):
    """Raised when a Mittag-Leffler evaluation cannot meet its tolerance."""


def _series(a, b, z):
    # |z| <= 1: terms decay at least like 1/Gamma(ak+b); stop once negligible
    z = np.asarray(z, dtype=float)
    total = np.zeros_like(z)
    comp = np.zeros_like(z)
    power = np.ones_like(z)
    k = 0
    while True:
        term = power * rgamma(a * k + b)
        # Kahan summation
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if k > 5 and np.all(np.abs(term) <= 1e-18 * np.maximum(np.abs(total), 1e-300)):
            break
        k += 1
        if k > 2000:
            raise MittagLefflerError("Taylor series failed to converge")
        power = power * z
    return total


def _optimal_param_rb(t, phi_j, phi_j1, pj, qj, log_tol):
    fac = 1.01
    f_max = math.exp(log_tol - _LOG_EPS)
    sq_phi_j = math.sqrt(phi_j)
    threshold = 2.0 * math.sqrt((log_tol - _LOG_EPS) / t)
    sq_phi_j1 = min(math.sqrt(phi_j1), threshold - sq_phi_j)

    adm = False
    f_bar = 1.0
    if pj < 1e-14 and qj < 1e-14:
        sq_bar_j, sq_bar_j1 = sq_phi_j, sq_phi_j1
        adm = True
    elif pj < 1e-14:
        sq_bar_j = sq_phi_j
        f_min = fac * (sq_phi_j / (sq_phi_j1 - sq_phi_j)) ** qj if sq_phi_j > 0 else fac
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fq = f_bar ** (-1.0 / qj)
            sq_bar_j1 = (2.0 * sq_phi_j1 - fq * sq_phi_j) / (2.0 + fq)
            adm = True
    elif qj < 1e-14:
        sq_bar_j1 = sq_phi_j1
        f_min = fac * (sq_phi_j1 / (sq_phi_j1 - sq_phi_j)) ** pj
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1.0 / pj)
            sq_bar_j = (2.0 * sq_phi_j + fp * sq_phi_j1) / (2.0 - fp)
            adm = True
    else:
        f_min = fac * (sq_phi_j + sq_phi_j1) / (sq_phi_j1 - sq_phi_j) ** max(pj, qj)
        if f_min < f_max:
            f_min = max(f_min, 1.5)
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1.0 / pj)
            fq = f_bar ** (-1.0 / qj)
            w = -phi_j1 * t / log_tol
            den = 2.0 + w - (1.0 + w) * fp + fq
            sq_bar_j = ((2.0 + w + fq) * sq_phi_j + fp * sq_phi_j1) / den
            sq_bar_j1 = (-(1.0 + w) * fq * sq_phi_j + (2.0 + w - (1.0 + w) * fp) * sq_phi_j1) / den
            adm = True
    if not adm:
        return 0.0, 0.0, math.inf
    log_tol = log_tol - math.log(f_bar)
    w = -sq_bar_j1 ** 2 * t / log_tol
    mu = (((1.0 + w) * sq_bar_j + sq_bar_j1) / (2.0 + w)) ** 2
    h = -2.0 * math.pi / log_tol * (sq_bar_j1 - sq_bar_j) / ((1.0 + w) * sq_bar_j + sq_bar_j1)
    n = math.ceil(math.sqrt(1.0 - log_tol / t / mu) / h)
    return mu, h, n


def _optimal_param_ru(t, phi_j, pj, log_tol):
    sq_phi_j = math.sqrt(phi_j)
    phibar = phi_j * 1.01 if phi_j > 0 else 0.01
    sq_phibar = math.sqrt(phibar)
    f_min, f_max, f_tar = 1.0, 10.0, 5.0
    for _ in range(200):
        phi_t = phibar * t
        log_eps_phi_t = log_tol / phi_t
        n = math.ceil(phi_t / math.pi * (1.0 - 1.5 * log_eps_phi_t + math.sqrt(1.0 - 2.0 * log_eps_phi_t)))
        big_a = math.pi * n / phi_t
        sq_mu = sq_phibar * abs(4.0 - big_a) / abs(7.0 - math.sqrt(1.0 + 12.0 * big_a))
        fbar = ((sq_phibar - sq_phi_j) / sq_mu) ** (-pj)
        if pj < 1e-14 or f_min < fbar < f_max:
            break
        sq_phibar = f_tar ** (-1.0 / pj) * sq_mu + sq_phi_j
        phibar = sq_phibar ** 2
    mu = sq_mu ** 2
    h = (-3.0 * big_a - 2.0 + 2.0 * math.sqrt(1.0 + 12.0 * big_a)) / (4.0 - big_a) / n

    threshold = (log_tol - _LOG_EPS) / t
    if mu > threshold:
        q = 0.0 if abs(pj) < 1e-14 else f_tar ** (-1.0 / pj) * math.sqrt(mu)
        phibar = (q + math.sqrt(phi_j)) ** 2
        if phibar < threshold:
            w = math.sqrt(_LOG_EPS / (_LOG_EPS - log_tol))
            u = math.sqrt(-phibar * t / _LOG_EPS)
            mu = threshold
            n = math.ceil(w * log_tol / 2.0 / math.pi / (u * w - 1.0))
            h = w / n
        else:
            n, h = math.inf, 0.0
    return mu, h, n


@lru_cache(maxsize=4096)
def _contour(a, b, z):
    """Contour parameters (mu, h, N) and the residue poles for E_{a,b}(z)."""
    theta = math.atan2(0.0, z)
    kmin = math.ceil(-a / 2.0 - theta / (2.0 * math.pi))
    kmax = math.floor(a / 2.0 - theta / (2.0 * math.pi))
    poles = [abs(z) ** (1.0 / a) * complex(math.cos((theta + 2 * k * math.pi) / a),
                                           math.sin((theta + 2 * k * math.pi) / a))
             for k in range(kmin, kmax + 1)]
    phis = [(s.real + abs(s)) / 2.0 for s in poles]
    order = sorted(range(len(poles)), key=lambda i: phis[i])
    poles = [poles[i] for i in order if phis[i] > 1e-15]
    phis = [phis[i] for i in order if phis[i] > 1e-15]

    s_star = [0j] + poles
    phi_star = [0.0] + phis + [math.inf]
    nsing = len(s_star)
    p = [max(0.0, -2.0 * (a - b + 1.0))] + [1.0] * (nsing - 1)
    q = [1.0] * (nsing - 1) + [math.inf]

    log_tol = _LOG_TOL
    admissible = [j for j in range(nsing)
                  if phi_star[j] < (log_tol - _LOG_EPS) and phi_star[j] < phi_star[j + 1]]
    while True:
        best = None
        for j in admissible:
            if j < nsing - 1:
                mu, h, n = _optimal_param_rb(1.0, phi_star[j], phi_star[j + 1], p[j], q[j], log_tol)
            else:
                mu, h, n = _optimal_param_ru(1.0, phi_star[j], p[j], log_tol)
            if best is None or n < best[2]:
                best = (mu, h, n, j)
        if best is not None and best[2] <= 200:
            break
        log_tol += math.log(10.0)
        if log_tol > math.log(1e-10):
            raise MittagLefflerError(f"no admissible contour for E_{{{a},{b}}}({z})")
    mu, h, n, j = best
    return mu, h, int(n), tuple(s_star[j + 1:])


@lru_cache(maxsize=256)
def _contour_nodes(mu, h, n):
    u = h * np.arange(-n, n + 1)
    s = mu * (1j * u + 1.0) ** 2
    ds = -2.0 * mu * u + 2j * mu
    return s, np.exp(s) * ds


def _lt_inversion(a, b, z):
    """E_{a,b}(z) for an array of z sharing one contour."""
    mu, h, n, residue_poles = _contour(a, b, float(z[0]))
    s, weight = _contour_nodes(mu, h, n)
    sa = s ** a
    num = s ** (a - b) * weight
    vals = (num[None, :] / (sa[None, :] - z[:, None])).sum(axis=1) * h / (2j * math.pi)
    with np.errstate(over="ignore", invalid="ignore"):
        for pole in residue_poles:
            vals = vals + pole ** (1.0 - b) * np.exp(pole) / a
    return vals.real


def mittag_leffler(a, b, z):
    """Two-parameter Mittag-Leffler function E_{a,b}(z) for real z.

    Parameters
    ----------
    a, b : float
        Indices with ``0 < a <= 2`` and ``b > 0``.
    z : float or array_like
        Real argument(s), ``z <= 5``.

    Returns
    -------
    float or ndarray
        ``sum_k z**k / Gamma(a*k + b)``.
    """
    a = float(a)
    b = float(b)
    if not a > 0 or not b > 0:
        raise ValueError(f"Mittag-Leffler indices must be positive, got a={a}, b={b}")
    if a > 2:
        raise ValueError(f"index a={a} outside the supported range (0, 2]")
    zarr = np.asarray(z, dtype=float)
    scalar = zarr.ndim == 0
    zarr = np.atleast_1d(zarr)
    if np.any(zarr > Z_MAX):
        raise ValueError(f"argument exceeds z_max={Z_MAX}")
    if not np.all(np.isfinite(zarr)):
        raise ValueError("non-finite Mittag-Leffler argument")

    out = np.empty_like(zarr)
    if a == 1.0 and b == 1.0:
        out = np.exp(zarr)
    else:
        near = np.abs(zarr) <= SERIES_RADIUS
        if near.any():
            out[near] = _series(a, b, zarr[near])
        far = ~near
        if far.any():
            zf = zarr[far]
            if a <= 1.0:
                # no poles right of the contour: parameters are shared by all z < 0
                neg = zf < 0
                res = np.empty_like(zf)
                if neg.any():
                    res[neg] = _lt_shared(a, b, zf[neg])
                for i in np.flatnonzero(~neg):
                    res[i] = _lt_inversion(a, b, zf[i:i + 1])[0]
            else:
                res = np.array([_lt_inversion(a, b, zf[i:i + 1])[0] for i in range(zf.size)])
            out[far] = res
        if a <= 1.0 and b >= a:
            # completely monotone on the negative axis; clip contour round-off
            out = np.where(zarr <= 0, np.maximum(out, 0.0), out)
    if not np.all(np.isfinite(out)):
        raise MittagLefflerError(f"E_{{{a},{b}}} overflows double precision on this argument range")
    return float(out[0]) if scalar else out


def _lt_shared(a, b, z):
    mu, h, n, poles = _contour(a, b, -2.0 * SERIES_RADIUS)
    if poles:
        raise MittagLefflerError("unexpected pole for a <= 1 on the negative axis")
    s, weight = _contour_nodes(mu, h, n)
    sa = s ** a
    num = s ** (a - b) * weight
    out = np.empty(z.size)
    chunk = 4096
    for lo in range(0, z.size, chunk):
        zz = z[lo:lo + chunk]
        out[lo:lo + chunk] = ((num[None, :] / (sa[None, :] - zz[:, None])).sum(axis=1)
                              * h / (2j * math.pi)).real
    return out


def ml_kernel(beta, lam, t):
    """Green's function t**(beta-1) * E_{beta,beta}(-lam * t**beta) of the
    time-fractional relaxation equation.  ``t`` must be positive."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("ml_kernel is singular or undefined for t <= 0")
    if beta == 1.0:
        out = np.exp(-lam * t)
    else:
        out = t ** (beta - 1.0) * mittag_leffler(beta, beta, -lam * t ** beta)
    return float(out) if out.ndim == 0 else out


def ml_kernel_integral(beta, lam, t):
    """Antiderivative of :func:`ml_kernel` vanishing at 0,
    ``t**beta * E_{beta,beta+1}(-lam * t**beta)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("negative time")
    out = t ** beta * mittag_leffler(beta, beta + 1.0, -lam * t ** beta)
    return float(out) if out.ndim == 0 else out


def _check_unit(t):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-14):
        raise ValueError("Legendre argument outside [-1, 1]")
    return np.clip(t, -1.0, 1.0)


def legendre(ell, t):
    """Legendre polynomial P_ell(t) by the three-term recurrence."""
    return legendre_derivs(ell, t)[0]


def legendre_derivs(ell, t):
    """Return (P_ell, P_ell', P_ell'') at t in [-1, 1].

    Derivatives come from differentiating the three-term recurrence, which
    stays finite at t = +-1 (unlike the closed forms with 1 - t**2 divisors).
    """
    if ell < 0:
        raise ValueError("degree must be nonnegative")
    t = _check_unit(t)
    p0, d0, s0 = np.ones_like(t), np.zeros_like(t), np.zeros_like(t)
    if ell == 0:
        return _unwrap(p0, d0, s0)
    p1, d1, s1 = t.copy(), np.ones_like(t), np.zeros_like(t)
    for n in range(1, ell):
        # (n+1) P_{n+1} = (2n+1) t P_n - n P_{n-1}
        p2 = ((2 * n + 1) * t * p1 - n * p0) / (n + 1)
        d2 = ((2 * n + 1) * (p1 + t * d1) - n * d0) / (n + 1)
        s2 = ((2 * n + 1) * (2 * d1 + t * s1) - n * s0) / (n + 1)
        p0, d0, s0, p1, d1, s1 = p1, d1, s1, p2, d2, s2
    return _unwrap(p1, d1, s1)


def _unwrap(*arrs):
    if arrs[0].ndim == 0:
        return tuple(float(a) for a in arrs)
    return arrs
