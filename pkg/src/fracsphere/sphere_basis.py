"""Scalar and vector spherical harmonics on the unit sphere.

Conventions: complex orthonormal harmonics with the Condon-Shortley phase,
``Y_{l,-m} = (-1)^m conj(Y_{lm})``.  For ``l >= 1`` the divergence-free and
curl-free vector harmonics are

    y_lm = curl* Y_lm / sqrt(l(l+1)),    z_lm = grad* Y_lm / sqrt(l(l+1)),

with ``grad* = P_x grad`` and ``curl* = Q_x grad = x cross grad``.  Tensor
products are ``a (x) b = a conj(b)^T`` and the inner product of tangent fields
conjugates its second argument.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .specfun import legendre_derivs

__all__ = [
    "SpherePoint",
    "SphereGrid",
    "SpectralCoefficients",
    "TangentFieldSample",
    "PoleError",
    "to_cartesian",
    "assoc_legendre_table",
    "scalar_sh",
    "vsh",
    "vsh_degree",
    "tensor_kernels",
    "projector",
    "cross_matrix",
    "make_grid",
    "analyze",
    "synthesize",
    "random_points",
]

POLE_EPS = 1e-8


class PoleError(ValueError):
    """The spherical frame is singular at the requested point."""


@dataclass(frozen=True)
class SpherePoint:
    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"colatitude {self.theta} outside [0, pi]")

    @property
    def cartesian(self) -> np.ndarray:
        return to_cartesian(self.theta, self.phi)

    @classmethod
    def from_cartesian(cls, x) -> "SpherePoint":
        x = np.asarray(x, dtype=float)
        x = x / np.linalg.norm(x)
        theta = float(np.arccos(np.clip(x[2], -1.0, 1.0)))
        phi = float(np.arctan2(x[1], x[0]) % (2 * np.pi))
        return cls(theta, phi)


def to_cartesian(theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def random_points(n, rng):
    """n points uniformly distributed on the sphere, as (theta, phi) arrays."""
    theta = np.arccos(rng.uniform(-1.0, 1.0, size=n))
    phi = rng.uniform(0.0, 2 * np.pi, size=n)
    return theta, phi


def _frame(theta, phi):
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return e_theta, e_phi


def assoc_legendre_table(lmax, theta):
    """Fully normalized associated Legendre functions with Condon-Shortley phase.

    Returns ``P[l, m, ...]`` for ``0 <= m <= l <= lmax`` such that
    ``Y_lm(theta, phi) = P[l, m] * exp(i m phi)``.  Upward recurrence in l at
    fixed m; stable well beyond l = 1000.
    """
    theta = np.asarray(theta, dtype=float)
    x, s = np.cos(theta), np.sin(theta)
    P = np.zeros((lmax + 1, lmax + 1) + theta.shape)
    P[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, lmax + 1):
        P[m, m] = -np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, lmax):
        P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * P[m, m]
        for ell in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
            b = np.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))
            P[ell, m] = a * (x * P[ell - 1, m] - b * P[ell - 2, m])
    return P


def scalar_sh(ell, m, theta, phi):
    """Orthonormal complex spherical harmonic Y_{ell m}(theta, phi)."""
    if ell < 0 or abs(m) > ell:
        raise IndexError(f"invalid harmonic index (l={ell}, m={m})")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    P = assoc_legendre_table(ell, theta)
    val = P[ell, abs(m)] * np.exp(1j * abs(m) * phi)
    if m < 0:
        val = (-1) ** m * np.conj(val)
    return val


def _ell1_gradients():
    # Y_1m = a_m . x, so grad Y_1m = a_m everywhere (used at the poles)
    c0 = np.sqrt(3.0 / (4.0 * np.pi))
    c1 = np.sqrt(3.0 / (8.0 * np.pi))
    return {
        -1: c1 * np.array([1.0, -1j, 0.0]),
        0: c0 * np.array([0.0, 0.0, 1.0], dtype=complex),
        1: -c1 * np.array([1.0, 1j, 0.0]),
    }


def vsh_degree(ell, theta, phi, P=None):
    """All vector harmonics of degree ell at the given points.

    Returns ``(y, z)`` with shape ``(2*ell+1, npts, 3)``, rows ordered
    m = -ell..ell.  ``P`` may be a precomputed :func:`assoc_legendre_table`
    of degree >= ell for the same colatitudes.
    """
    if ell < 1:
        raise IndexError("vector harmonics start at degree 1")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if P is None or P.shape[0] <= ell:
        P = assoc_legendre_table(ell, theta)
    st = np.sin(theta)
    polar = st < POLE_EPS
    if polar.any() and ell != 1:
        raise PoleError(f"degree {ell} vector harmonics are not evaluated at the poles")
    safe_st = np.where(polar, 1.0, st)
    e_theta, e_phi = _frame(theta, phi)
    x = to_cartesian(theta, phi)
    sq = np.sqrt(ell * (ell + 1.0))

    ys = np.empty((2 * ell + 1, theta.size, 3), dtype=complex)
    zs = np.empty_like(ys)
    for m in range(0, ell + 1):
        Plm = P[ell, m]
        lo = P[ell, m - 1] if m >= 1 else -P[ell, 1]
        hi = P[ell, m + 1] if m + 1 <= ell else 0.0
        dP = 0.5 * (-np.sqrt((ell + m) * (ell - m + 1.0)) * lo + np.sqrt((ell - m) * (ell + m + 1.0)) * hi)
        eim = np.exp(1j * m * phi)
        dY = (dP * eim)[:, None]
        mY = (1j * m * Plm / safe_st * eim)[:, None]
        z = (e_theta * dY + e_phi * mY) / sq
        if polar.any():
            a = _ell1_gradients()[m]
            xp = x[polar]
            z[polar] = (a[None, :] - xp * (xp @ a)[:, None]) / sq
        y = np.cross(x, z)
        zs[ell + m], ys[ell + m] = z, y
        if m > 0:
            sign = (-1) ** m
            zs[ell - m] = sign * np.conj(z)
            ys[ell - m] = sign * np.conj(y)
    return ys, zs


def vsh(ell, m, theta, phi):
    """Divergence-free and curl-free vector harmonics ``(y_lm, z_lm)``."""
    if ell < 1 or abs(m) > ell:
        raise IndexError(f"invalid vector harmonic index (l={ell}, m={m})")
    scalar = np.ndim(theta) == 0
    ys, zs = vsh_degree(ell, theta, phi)
    y, z = ys[ell + m], zs[ell + m]
    if scalar:
        return y[0], z[0]
    return y, z


def projector(x):
    """Tangential projector P_x = I - x x^T (batched over leading axes)."""
    x = np.asarray(x, dtype=float)
    return np.eye(3) - x[..., :, None] * x[..., None, :]


def cross_matrix(x):
    """Q_x with Q_x v = x cross v."""
    x = np.asarray(x, dtype=float)
    Q = np.zeros(x.shape[:-1] + (3, 3))
    Q[..., 0, 1], Q[..., 0, 2] = -x[..., 2], x[..., 1]
    Q[..., 1, 0], Q[..., 1, 2] = x[..., 2], -x[..., 0]
    Q[..., 2, 0], Q[..., 2, 1] = -x[..., 1], x[..., 0]
    return Q


def tensor_kernels(ell, x, y):
    """Divergence-free and curl-free Legendre tensor kernels of degree ell.

    ``x`` and ``y`` are unit vectors (shape ``(3,)`` or ``(n, 3)``).  Uses
    ``d_x d_y^T P(x.y) = P''(x.y) y x^T + P'(x.y) I`` sandwiched between the
    curl (Q) or gradient (P) projectors.
    """
    if ell < 1:
        raise IndexError("tensor kernels start at degree 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
    _, d1, d2 = legendre_derivs(ell, t)
    d1 = np.asarray(d1)[..., None, None]
    d2 = np.asarray(d2)[..., None, None]
    core = d2 * (y[..., :, None] * x[..., None, :]) + d1 * np.eye(3)
    c = (2 * ell + 1) / (4 * np.pi * ell * (ell + 1))
    Qx, Qy = cross_matrix(x), cross_matrix(y)
    Px, Py = projector(x), projector(y)
    dlg = c * Qx @ core @ np.swapaxes(Qy, -1, -2)
    clg = c * Px @ core @ np.swapaxes(Py, -1, -2)
    return dlg.astype(complex), clg.astype(complex)


@dataclass(frozen=True)
class SphereGrid:
    """Gauss-Legendre x uniform-longitude product grid."""

    L: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray

    @property
    def degree(self) -> int:
        return 2 * self.L + 1

    @property
    def size(self) -> int:
        return self.theta.size

    @property
    def points(self) -> np.ndarray:
        return to_cartesian(self.theta, self.phi)


def make_grid(L) -> SphereGrid:
    """Product grid integrating spherical polynomials of degree <= 2L+1 exactly."""
    if L < 1:
        raise ValueError("grid band-limit must be >= 1")
    nodes, w = np.polynomial.legendre.leggauss(L + 1)
    nphi = 2 * L + 2
    phis = 2 * np.pi * np.arange(nphi) / nphi
    theta = np.repeat(np.arccos(nodes), nphi)
    phi = np.tile(phis, L + 1)
    weights = np.repeat(w, nphi) * (2 * np.pi / nphi)
    return SphereGrid(L, theta, phi, weights)


@dataclass
class SpectralCoefficients:
    """Divergence-free / curl-free coefficients, ``arr[..., l, l + m]``.

    Leading axes (if any) index independent realizations.  Row l=0 and the
    entries with |m| > l are structurally zero.
    """

    L: int
    div_free: np.ndarray
    curl_free: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (self.L + 1, 2 * self.L + 1)
        if self.L < 1:
            raise ValueError("truncation degree must be >= 1")
        self.div_free = np.asarray(self.div_free, dtype=complex)
        self.curl_free = np.asarray(self.curl_free, dtype=complex)
        for a in (self.div_free, self.curl_free):
            if a.shape[-2:] != shape:
                raise ValueError(f"coefficient array shape {a.shape} does not match L={self.L}")

    @classmethod
    def zeros(cls, L, batch=()) -> "SpectralCoefficients":
        shape = tuple(batch) + (L + 1, 2 * L + 1)
        return cls(L, np.zeros(shape, complex), np.zeros(shape, complex))

    @staticmethod
    def mask(L) -> np.ndarray:
        ell = np.arange(L + 1)[:, None]
        m = np.arange(-L, L + 1)[None, :]
        return (ell >= 1) & (np.abs(m) <= ell)

    def get(self, ell, m, family="div"):
        arr = self.div_free if family == "div" else self.curl_free
        return arr[..., ell, self.L + m]

    def set(self, ell, m, value, family="div"):
        if not 1 <= ell <= self.L or abs(m) > ell:
            raise IndexError(f"invalid coefficient index (l={ell}, m={m})")
        arr = self.div_free if family == "div" else self.curl_free
        arr[..., ell, self.L + m] = value

    def norm2(self):
        """Squared L2 norm of the field (Parseval)."""
        return (np.abs(self.div_free) ** 2 + np.abs(self.curl_free) ** 2).sum(axis=(-1, -2))

    def truncate(self, L_new) -> "SpectralCoefficients":
        """Zero all degrees above L_new (array size is kept)."""
        if not 1 <= L_new <= self.L:
            raise ValueError(f"truncation degree {L_new} outside [1, {self.L}]")
        div, curl = self.div_free.copy(), self.curl_free.copy()
        div[..., L_new + 1:, :] = 0.0
        curl[..., L_new + 1:, :] = 0.0
        return SpectralCoefficients(self.L, div, curl, dict(self.meta))

    def scale_degrees(self, div_factor, curl_factor=None) -> "SpectralCoefficients":
        """Multiply every degree-l coefficient by ``factor[l]``."""
        if curl_factor is None:
            curl_factor = div_factor
        fd = np.asarray(div_factor, dtype=float)[:, None]
        fc = np.asarray(curl_factor, dtype=float)[:, None]
        return SpectralCoefficients(self.L, self.div_free * fd, self.curl_free * fc, dict(self.meta))

    def __add__(self, other):
        if other.L != self.L:
            raise ValueError("cannot add coefficients with different L")
        return SpectralCoefficients(self.L, self.div_free + other.div_free,
                                    self.curl_free + other.curl_free, dict(self.meta))

    def to_records(self):
        """Flat list of ``{l, m, family, re, im}`` (first realization only)."""
        div = self.div_free.reshape((-1,) + self.div_free.shape[-2:])[0]
        curl = self.curl_free.reshape((-1,) + self.curl_free.shape[-2:])[0]
        out = []
        for ell in range(1, self.L + 1):
            for m in range(-ell, ell + 1):
                for fam, arr in (("div", div), ("curl", curl)):
                    v = arr[ell, self.L + m]
                    out.append({"l": ell, "m": m, "family": fam, "re": float(v.real), "im": float(v.imag)})
        return out

    def to_json(self, **extra) -> str:
        payload = dict(extra)
        payload.update({"L": self.L, "meta": self.meta, "coefficients": self.to_records()})
        return json.dumps(payload, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "SpectralCoefficients":
        data = json.loads(text)
        c = cls.zeros(int(data["L"]))
        for r in data["coefficients"]:
            c.set(r["l"], r["m"], complex(r["re"], r["im"]), r["family"])
        c.meta = data.get("meta", {})
        return c


@dataclass
class TangentFieldSample:
    theta: np.ndarray
    phi: np.ndarray
    values: np.ndarray
    time: float = 0.0

    @property
    def points(self) -> np.ndarray:
        return to_cartesian(self.theta, self.phi)

    def max_normal_component(self) -> float:
        return float(np.max(np.abs(np.einsum("...nk,nk->...n", self.values, self.points)), initial=0.0))

    def to_csv(self, path_or_buf, header=""):
        """Rows: theta, phi, then Re/Im of the three Cartesian components."""
        vals = self.values.reshape((-1,) + self.values.shape[-2:])[0]
        lines = [header] if header else []
        lines.append("theta,phi,re_x,im_x,re_y,im_y,re_z,im_z")
        for th, ph, v in zip(self.theta, self.phi, vals):
            nums = [th, ph] + [c for comp in v for c in (comp.real, comp.imag)]
            lines.append(",".join(repr(float(n)) for n in nums))
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def analyze(field_values, grid: SphereGrid, L) -> SpectralCoefficients:
    """Project a tangent field sampled on ``grid`` onto vector harmonics up to L.

    ``field_values`` has shape ``(..., grid.size, 3)``.  Exact for fields of
    band-limit L when ``grid.L >= L + 1``.
    """
    if grid.L < L + 1:
        raise ValueError(f"grid band-limit {grid.L} cannot resolve degree {L} (need >= {L + 1})")
    f = np.asarray(field_values, dtype=complex)
    if f.shape[-2:] != (grid.size, 3):
        raise ValueError("field values do not match the grid")
    out = SpectralCoefficients.zeros(L, f.shape[:-2])
    P = assoc_legendre_table(L, grid.theta)
    fw = f * grid.weights[:, None]
    for ell in range(1, L + 1):
        ys, zs = vsh_degree(ell, grid.theta, grid.phi, P)
        out.div_free[..., ell, L - ell:L + ell + 1] = np.einsum("...nk,mnk->...m", fw, np.conj(ys))
        out.curl_free[..., ell, L - ell:L + ell + 1] = np.einsum("...nk,mnk->...m", fw, np.conj(zs))
    return out


def synthesize(coeffs: SpectralCoefficients, theta, phi, time=0.0) -> TangentFieldSample:
    """Evaluate the expansion at the points (theta, phi)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    L = coeffs.L
    batch = coeffs.div_free.shape[:-2]
    vals = np.zeros(batch + (theta.size, 3), dtype=complex)
    P = assoc_legendre_table(L, theta)
    for ell in range(1, L + 1):
        cd = coeffs.div_free[..., ell, L - ell:L + ell + 1]
        cc = coeffs.curl_free[..., ell, L - ell:L + ell + 1]
        if not (np.any(cd) or np.any(cc)):
            continue
        ys, zs = vsh_degree(ell, theta, phi, P)
        vals += np.einsum("...m,mnk->...nk", cd, ys) + np.einsum("...m,mnk->...nk", cc, zs)
    return TangentFieldSample(theta, phi, vals, time)
