"""Rate studies: truncation error decay, Chebyshev tail bounds, temporal increments."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import mode_weights
from .model import AdmissibilityError, BLOCK, PowerSpectra, sample_combined
from .specfun import ml_kernel
from .sphere_basis import SpherePoint, synthesize
from .stochastic import integral_variance

__all__ = [
    "RateFit",
    "rate_fit",
    "truncation_tail_norm",
    "truncation_rate_study",
    "chebyshev_tail_check",
    "increment_norm",
    "increment_bound_study",
    "gap_sweep",
]


@dataclass
class RateFit:
    """Least-squares line through (log x, log y)."""

    xs: np.ndarray
    ys: np.ndarray
    slope: float
    intercept: float
    residual: float
    slope_stderr: float

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "slope_stderr": self.slope_stderr}


def rate_fit(xs, ys) -> RateFit:
    """Ordinary least squares of log y on log x."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size or x.size < 3:
        raise ValueError("rate fit needs at least 3 (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("rate fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("degenerate abscissae")
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - A @ coef
    rss = float(res @ res)
    n = lx.size
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    se = math.sqrt(rss / (n - 2) / sxx) if n > 2 else float("nan")
    return RateFit(lx, ly, float(coef[0]), float(coef[1]), rss, se)


def _degree_terms(params, spectra, t):
    div, curl = mode_weights(params, spectra, t)
    ell = np.arange(spectra.L + 1)
    return (2 * ell + 1) * (div + curl)


def truncation_tail_norm(params, spectra, t, L_prime):
    """sqrt( sum_{l > L'} (2l+1) (div_l + curl_l) ), the exact L2(Omega x S^2)
    distance between the solution and its truncation at degree L'.

    ``L_prime`` may be a sequence; the weights are then computed once.
    """
    Ls = np.atleast_1d(np.asarray(L_prime))
    if np.any(Ls < 1) or np.any(Ls > spectra.L):
        raise ValueError(f"truncation degree outside [1, {spectra.L}]")
    terms = _degree_terms(params, spectra, t)
    tails = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    out = np.sqrt(tails[Ls.astype(int) + 1])
    return float(out[0]) if np.ndim(L_prime) == 0 else out


def sharp_truncation_slope(params, nu):
    """Asymptotic slope of the tail norm for A_l ~ l^-nu.

    E*(t, z) ~ z^(-2(beta+H-1)/beta) for large z and psi_l ~ l^(alpha+gamma),
    which adds decay on top of the generic -(nu-2)/2.
    """
    extra = (params.alpha + params.gamma) * (params.beta + params.hurst - 1) / params.beta
    return -(nu - 2) / 2 - extra


def truncation_rate_study(params, spectra, t, L_list=(8, 16, 32, 64, 128), L_ref=None, tol=0.15):
    """Fit the decay of the exact tail norm against the truncation degree.

    Parametric spectra are re-instantiated at ``L_ref`` (default
    max(4096, 32 max L)) so that the finite reference sum approximates the
    infinite series.  Returns (fit, table rows, summary dict).
    """
    L_list = sorted(int(v) for v in L_list)
    if len(L_list) < 3:
        raise ValueError("truncation rate study needs at least 3 truncation degrees")
    nu = spectra.nu
    if nu is None:
        raise ValueError("truncation rate study needs parametric spectra")
    if L_ref is None:
        L_ref = max(4096, 32 * L_list[-1])
    ref = spectra.with_L(L_ref) if spectra.L != L_ref else spectra
    tails = truncation_tail_norm(params, ref, t, L_list)
    fit = rate_fit(L_list, tails)
    bound = -(nu - 2) / 2
    sharp = sharp_truncation_slope(params, nu)
    summary = {
        "nu": nu,
        "tau": max(2.0 / params.beta * (1 - params.beta - params.hurst), 0.0),
        "L_ref": L_ref,
        "slope": fit.slope,
        "slope_stderr": fit.slope_stderr,
        "bound_slope": bound,
        "sharp_slope": sharp,
        "tolerance": tol,
        "within_bound": fit.slope <= bound + tol,
        "matches_bound_rate": abs(fit.slope - bound) <= tol,
        "matches_sharp_rate": abs(fit.slope - sharp) <= tol,
    }
    rows = [{"L": L, "tail_norm": float(v)} for L, v in zip(L_list, tails)]
    return fit, rows, summary


def _tail_only(spectra, L_prime):
    keep = np.arange(spectra.L + 1) > L_prime
    return PowerSpectra(spectra.L, spectra.A1 * keep, spectra.A2 * keep, spectra.sig_hat2 * keep,
                        spectra.sig_tilde2 * keep, None, spectra.nu, dict(spectra.source))


def chebyshev_tail_check(params, spectra, t, L_prime, eps, n_mc, master_seed, point=None, workers=1):
    """Empirical P(|X(t,x) - X_L'(t,x)| >= eps) against the Chebyshev bound
    Var/eps^2, with Var = sum_{l > L'} (2l+1)/(4 pi) (div_l + curl_l)."""
    if not 1 <= L_prime < spectra.L:
        raise ValueError(f"need 1 <= L' < L = {spectra.L}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = point if point is not None else SpherePoint(1.0, 0.5)
    tail = _tail_only(spectra, L_prime)
    ell = np.arange(spectra.L + 1)
    div, curl = mode_weights(params, tail, t)
    variance = float(np.sum((2 * ell + 1) / (4 * np.pi) * (div + curl)))
    hits = 0
    sumsq = 0.0
    for start in range(0, n_mc, BLOCK):
        n = min(BLOCK, n_mc - start)
        c = sample_combined(params, tail, t, master_seed, n_replicates=n, start=start, workers=workers)
        v = synthesize(c, x.theta, x.phi).values[:, 0, :]
        mag2 = np.sum(np.abs(v) ** 2, axis=-1)
        hits += int(np.sum(mag2 >= eps * eps))
        sumsq += float(mag2.sum())
    freq = hits / n_mc
    se = math.sqrt(freq * (1 - freq) / n_mc)
    bound = variance / eps ** 2
    return {
        "L_prime": L_prime, "L": spectra.L, "eps": eps, "n_mc": n_mc, "t": t,
        "tail_variance": variance, "empirical_mean_square": sumsq / n_mc,
        "frequency": freq, "stderr": se, "bound": bound,
        "passed": freq <= bound + 3 * se,
    }


def _kernel_family(beta, psis):
    def g(u):
        u = np.asarray(u, dtype=float)
        return ml_kernel(beta, psis.reshape((-1,) + (1,) * u.ndim), u)
    return g


def increment_variances(params, spectra, t, tau):
    """V_l = Var int_tau^t s^(beta-1) E_{beta,beta}(-s^beta psi_l) dB_s, l = 0..L (V_0 = 0)."""
    if not 0 <= tau <= t:
        raise ValueError("need 0 <= tau <= t")
    if params.beta + params.hurst <= 1:
        raise AdmissibilityError(f"increment variance needs beta > 1 - H "
                                 f"(beta={params.beta}, H={params.hurst})")
    out = np.zeros(spectra.L + 1)
    if tau == t:
        return out
    psis = params.psi_values(spectra.L)[1:]
    e = params.beta - 1.0 if tau == 0 else 0.0
    scale = float(psis.max()) ** (-1.0 / params.beta) if psis.max() > 0 else None
    out[1:] = integral_variance(_kernel_family(params.beta, psis), tau, t, params.hurst,
                                endpoint_exponent=e, scale=scale)
    return out


def increment_norm(params, spectra, t, tau):
    """||X(t) - X(tau)|| in L2(Omega x S^2) from exact per-mode variances."""
    V = increment_variances(params, spectra, t, tau)
    ell = np.arange(spectra.L + 1)
    return math.sqrt(float(np.sum((2 * ell + 1) * (spectra.A1 + spectra.A2) * V)))


def gap_sweep(total, gaps=(0.1, 0.01, 0.001)):
    """Pairs (t, tau) with t + tau = total and t - tau = gap."""
    return [((total + g) / 2, (total - g) / 2) for g in gaps]


def increment_bound_study(params, spectra, pairs=None, factor=4.0, slope_tol=0.1):
    """Tabulate increment norms against the two normalizations
    |t-tau|^(2H)/(t+tau)^(2(1-beta)) and |t-tau|^(2H)/(t+tau)^4.

    With pairs at a common t + tau the bounded-ratio check (max/min <= factor)
    and the small-gap exponent fit (slope of log norm^2 vs log gap ~ 2H) are
    reported.
    """
    if pairs is None:
        pairs = gap_sweep(2.0)
    H, beta = params.hurst, params.beta
    rows = []
    for t, tau in pairs:
        n2 = increment_norm(params, spectra, t, tau) ** 2
        gap, tot = t - tau, t + tau
        rows.append({
            "t": t, "tau": tau, "gap": gap, "sum": tot, "norm2": n2,
            "ratio_power": n2 * tot ** (2 * (1 - beta)) / gap ** (2 * H),
            "ratio_quartic": n2 * tot ** 4 / gap ** (2 * H),
        })
    summary = {"hurst": H, "beta": beta, "factor": factor, "expected_slope": 2 * H,
               "slope_tolerance": slope_tol}
    ratios = np.array([r["ratio_power"] for r in rows])
    summary["finite_positive"] = bool(np.all(np.isfinite(ratios)) and np.all(ratios > 0))
    sums = {round(r["sum"], 12) for r in rows}
    if len(sums) == 1 and len(rows) >= 3:
        fit = rate_fit([r["gap"] for r in rows], [r["norm2"] for r in rows])
        variation = float(ratios.max() / ratios.min())
        tot = rows[0]["sum"]
        summary.update({
            "sum": tot,
            "slope": fit.slope,
            "slope_ok": abs(fit.slope - 2 * H) <= slope_tol,
            "ratio_variation": variation,
            "bounded_ok": variation <= factor,
            # the quartic normalization gives the smaller bound once t + tau > 1
            "quartic_bound_smaller": bool(tot > 1 and beta < 1 and tot ** 4 > tot ** (2 * (1 - beta))),
        })
        summary["passed"] = summary["slope_ok"] and summary["bounded_ok"] and summary["finite_positive"]
    return rows, summary
