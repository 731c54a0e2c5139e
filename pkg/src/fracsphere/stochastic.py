"""Fractional Brownian motion and integrals of deterministic kernels against it."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .rng import RngStream

__all__ = [
    "FbmPath",
    "FbmError",
    "fbm_covariance",
    "uniform_grid",
    "graded_grid",
    "sample_real_fbm",
    "sample_complex_fbm",
    "rs_integral",
    "integral_variance",
]


class FbmError(ArithmeticError):
    """Covariance factorization failed (degenerate Hurst index / grid)."""


@dataclass
class FbmPath:
    """Sampled fBm trajectory; ``values[..., k]`` is B(times[k]).

    ``sigma2`` is the variance at t=1 of each real component.
    """

    hurst: float
    sigma2: float
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[-1] != self.times.size:
            raise ValueError("path length does not match its time grid")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def to_csv(self, path_or_buf, header=""):
        vals = self.values.reshape(-1, self.times.size)[0]
        lines = [header] if header else []
        lines.append("t,re,im")
        for t, v in zip(self.times, vals):
            lines.append(f"{float(t)!r},{float(np.real(v))!r},{float(np.imag(v))!r}")
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def _check_hurst(H):
    if not 0.5 <= H < 1.0:
        raise ValueError(f"Hurst index {H} outside [1/2, 1)")


def fbm_covariance(times, H, sigma2=1.0):
    """R(t, s) = sigma2/2 (t^{2H} + s^{2H} - |t - s|^{2H})."""
    t = np.asarray(times, dtype=float)
    a = t[:, None] ** (2 * H)
    b = t[None, :] ** (2 * H)
    return 0.5 * sigma2 * (a + b - np.abs(t[:, None] - t[None, :]) ** (2 * H))


def uniform_grid(t, n):
    return np.linspace(0.0, t, n + 1)


def graded_grid(t, n, beta):
    """Nodes t (k/n)^{1/beta}, clustered at 0 for beta < 1."""
    return t * (np.arange(n + 1) / n) ** (1.0 / beta)


def _is_uniform(times):
    d = np.diff(times)
    return d.size > 0 and np.allclose(d, d[0], rtol=1e-12, atol=0.0)


@lru_cache(maxsize=32)
def _circulant_sqrt(n, H):
    k = np.arange(n + 1, dtype=float)
    gam = 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-8 * lam.max():
        raise FbmError(f"circulant embedding not nonnegative for H={H}, n={n}")
    return np.sqrt(np.clip(lam, 0.0, None) / row.size)


@lru_cache(maxsize=32)
def _cholesky_factor(times_key, H):
    times = np.frombuffer(times_key)
    cov = fbm_covariance(times[1:], H)
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise FbmError(f"fBm covariance not positive definite (H={H}, n={times.size - 1})") from exc


def _standard_fbm(H, times, gen, size, pair=False):
    """Unit-variance fBm draws of shape size + (len(times),).

    With ``pair`` two independent batches are returned; on uniform grids
    they are the real and imaginary parts of one circulant embedding.
    """
    n = times.size - 1
    shape = size + (n + 1,)
    if n == 0:
        return (np.zeros(shape), np.zeros(shape)) if pair else np.zeros(shape)
    if H == 0.5:
        incr = gen.standard_normal(((2,) if pair else ()) + size + (n,)) * np.sqrt(np.diff(times))
    elif _is_uniform(times):
        root = _circulant_sqrt(n, H)
        z = gen.standard_normal(size + (2, 2 * n))
        w = np.fft.fft(root * (z[..., 0, :] + 1j * z[..., 1, :]), axis=-1)[..., :n]
        w *= (times[1] - times[0]) ** H
        incr = np.stack([w.real, w.imag]) if pair else w.real
    else:
        chol = _cholesky_factor(np.ascontiguousarray(times, dtype=float).tobytes(), H)
        vals = gen.standard_normal(((2,) if pair else ()) + size + (n,)) @ chol.T
        out = np.zeros(vals.shape[:-1] + (n + 1,))
        out[..., 1:] = vals
        return (out[0], out[1]) if pair else out
    out = np.zeros(incr.shape[:-1] + (n + 1,))
    np.cumsum(incr, axis=-1, out=out[..., 1:])
    return (out[0], out[1]) if pair else out


def _prepare(H, sigma2, times):
    _check_hurst(H)
    if not sigma2 > 0:
        raise ValueError("variance must be positive")
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must start at 0 and be strictly increasing")
    return times


def sample_real_fbm(H, sigma2, times, stream: RngStream, size=None) -> FbmPath:
    """Exact-law real fBm on ``times``: independent increments at H = 1/2,
    circulant embedding on uniform grids, Cholesky otherwise.  ``size``
    requests a batch of independent paths."""
    times = _prepare(H, sigma2, times)
    shape = () if size is None else tuple(np.atleast_1d(size))
    gen = stream.generator()
    vals = np.sqrt(sigma2) * _standard_fbm(H, times, gen, shape)
    return FbmPath(H, sigma2, times, vals)


def sample_complex_fbm(H, sigma2_total, times, stream: RngStream, size=None) -> FbmPath:
    """B = B1 + i B2 with independent components of variance sigma2_total/2 at
    t=1, so that E|B(1)|^2 = sigma2_total."""
    times = _prepare(H, sigma2_total, times)
    shape = () if size is None else tuple(np.atleast_1d(size))
    gen = stream.generator()
    re, im = _standard_fbm(H, times, gen, shape, pair=True)
    scale = np.sqrt(sigma2_total / 2.0)
    return FbmPath(H, sigma2_total / 2.0, times, scale * (re + 1j * im))


def kernel_weights(g, times, antiderivative=None):
    """Per-cell kernel values for the Riemann-Stieltjes sum.

    Left-point values ``g(s_k)`` by default; with an antiderivative the exact
    cell averages, which stay finite when g is singular at the left end.
    """
    times = np.asarray(times, dtype=float)
    if antiderivative is not None:
        G = np.asarray(antiderivative(times), dtype=float)
        w = np.diff(G) / np.diff(times)
    else:
        w = np.asarray(g(times[:-1]), dtype=float) * np.ones(times.size - 1)
    if not np.all(np.isfinite(w)):
        raise ValueError("kernel is not finite at a grid node")
    return w


def rs_integral(g, path: FbmPath, antiderivative=None):
    """Riemann-Stieltjes sum  sum_k g_k (B(s_{k+1}) - B(s_k))  over the whole path.

    Evaluated by summation by parts, so constant kernels reproduce
    B(t) - B(0) exactly.
    """
    w = kernel_weights(g, path.times, antiderivative)
    B = path.values
    # sum_k w_k (B_{k+1} - B_k) = w_{n-1} B_n - w_0 B_0 - sum_{k=1}^{n-1} (w_k - w_{k-1}) B_k
    dw = np.diff(w)
    total = w[-1] * B[..., -1] - w[0] * B[..., 0]
    if dw.size:
        total = total - B[..., 1:-1] @ dw
    return total


def _gauss_panels(lo, hi, n_panels, order, geometric=0):
    """Composite Gauss-Legendre rule on [lo, hi]; ``geometric`` extra panels
    halve in size towards ``lo``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = list(np.linspace(0.0, 1.0, n_panels + 1))
    if geometric:
        first = edges[1]
        edges = [0.0] + [first * 0.5 ** k for k in range(geometric, 0, -1)] + edges[1:]
    edges = np.asarray(edges)
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (b - a)[:, None] * (x[None, :] + 1) + a[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * w[None, :]).ravel()
    return lo + (hi - lo) * nodes, (hi - lo) * weights


def integral_variance(g, t1, t2, H, endpoint_exponent=0.0, scale=None, order=16, panels=4, geometric=10):
    """Variance of int_{t1}^{t2} g dB for unit-variance fBm B.

    For H > 1/2 this is H(2H-1) times the double integral of
    g(u) g(v) |u-v|^{2H-2}, computed as 2H(2H-1) int g(u) int_{t1}^{u}
    g(v) (u-v)^{2H-2} dv du with the diagonal singularity removed by
    (u-v) = r^{1/(2H-1)}.  For H = 1/2 it is int g^2.

    ``endpoint_exponent`` e declares g(u) ~ (u - t1)^e near t1 (e = beta-1
    for the Mittag-Leffler kernel at t1 = 0); the outer variable is then
    graded so the integrand is bounded.  ``scale`` is the length over which
    g varies near t1, if much shorter than the interval; extra geometric
    panels are added to resolve it.  ``g`` must accept arrays; a kernel
    whose output carries extra leading axes (a family of kernels) gives an
    array of variances.
    """
    _check_hurst(H)
    if not t2 >= t1:
        raise ValueError("interval must satisfy t1 <= t2")
    e = float(endpoint_exponent)
    if e != 0.0 and not 2 * e + 2 * H > 0:
        raise ArithmeticError(f"variance diverges: kernel exponent {e} with H={H}")
    D = t2 - t1
    if D == 0:
        return 0.0
    k_out = 1.0 / (2 * e + 2 * H)
    if scale is not None and 0 < scale < D:
        geometric = max(geometric, int(np.ceil(np.log2(D / scale) / k_out)) + 6)
    s, ws = _gauss_panels(0.0, 1.0, panels, order, geometric)
    u = t1 + D * s ** k_out
    wu = ws * D * k_out * s ** (k_out - 1.0)
    gu = np.asarray(g(u), dtype=float)
    if H == 0.5:
        val = np.sum(wu * gu ** 2, axis=-1)
    else:
        p = 2 * H - 1
        q = 1.0 / p
        k_in = 1.0 / (1.0 + e)
        # left half of [t1, u]: graded towards t1
        half = 0.5 * (u - t1)
        vA = t1 + half[:, None] * s[None, :] ** k_in
        wA = half[:, None] * (ws * k_in * s ** (k_in - 1.0))[None, :]
        kA = np.asarray(g(vA), dtype=float) * (u[:, None] - vA) ** (2 * H - 2)
        inner = np.sum(wA * kA, axis=-1)
        # right half: (u - v) = half r^q turns (u-v)^{2H-2} dv into half^p q dr
        vB = u[:, None] - half[:, None] * s[None, :] ** q
        kB = np.asarray(g(vB), dtype=float)
        inner = inner + half ** p * q * np.sum(ws * kB, axis=-1)
        val = 2 * H * p * np.sum(wu * gu * inner, axis=-1)
    if not np.all(np.isfinite(val)):
        raise ArithmeticError("integral variance quadrature did not converge")
    return float(val) if np.ndim(val) == 0 else val
