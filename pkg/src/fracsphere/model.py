"""The fractional SPDE for tangent fields: parameters, spectra and samplers."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .covariance import DivergentVarianceError, estar
from .rng import mode_stream
from .specfun import ml_kernel_integral, mittag_leffler
from .sphere_basis import SpectralCoefficients, SphereGrid, TangentFieldSample, synthesize
from .stochastic import graded_grid, rs_integral, sample_complex_fbm

__all__ = [
    "ConfigError",
    "AdmissibilityError",
    "ModelParams",
    "PowerSpectra",
    "AdmissibilityReport",
    "psi",
    "tau_exponent",
    "check_admissibility",
    "standard_draws",
    "sample_initial",
    "sample_solution_exact_time",
    "pathwise_coefficients",
    "sample_solution_pathwise",
    "sample_cauchy",
    "sample_combined",
    "truncate",
]

BLOCK = 256          # replicates per random stream
PATH_BLOCK = 16      # replicates per stream in the pathwise sampler
N_STEPS = 512        # graded mesh size for the pathwise integral


class ConfigError(ValueError):
    """Parameters or spectra violate a structural constraint."""


class AdmissibilityError(ValueError):
    """The requested solution does not exist (infinite variance)."""


def psi(lam, params):
    """Symbol lam^(alpha/2) (1+lam)^(gamma/2) of the fractional diffusion operator."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("eigenvalue must be nonnegative")
    out = lam ** (params.alpha / 2) * (1.0 + lam) ** (params.gamma / 2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    gamma: float
    beta: float
    hurst: float
    t0: float = 0.0

    def __post_init__(self):
        checks = [
            (0 < self.alpha <= 2, "alpha in (0, 2]"),
            (0 <= self.alpha + self.gamma <= 2, "alpha + gamma in [0, 2]"),
            (0 < self.beta <= 1, "beta in (0, 1]"),
            (0.5 <= self.hurst < 1, "hurst in [1/2, 1)"),
            (self.t0 >= 0, "t0 >= 0"),
        ]
        for ok, name in checks:
            if not ok:
                raise ConfigError(f"constraint violated: {name} ({self})")

    def psi_values(self, L):
        """psi(l(l+1)) for l = 0..L."""
        ell = np.arange(L + 1, dtype=float)
        return psi(ell * (ell + 1), self)

    @property
    def tau(self):
        return tau_exponent(self)

    def to_dict(self):
        return {"alpha": self.alpha, "gamma": self.gamma, "beta": self.beta,
                "hurst": self.hurst, "t0": self.t0}


def tau_exponent(params) -> float:
    """tau = max{(2/beta)(1 - beta - H), 0}."""
    return max(2.0 / params.beta * (1.0 - params.beta - params.hurst), 0.0)


def _degree_array(values, L, name):
    a = np.asarray(values, dtype=float)
    if a.shape != (L,):
        raise ConfigError(f"{name} must list {L} values (degrees 1..L), got shape {a.shape}")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} entries must be finite and >= 0")
    return np.concatenate([[0.0], a])


@dataclass
class PowerSpectra:
    """Per-degree variances, arrays indexed by l = 0..L (entry 0 unused).

    ``c``/``nu`` are set when the noise spectra follow A_l = c l^-nu.
    """

    L: int
    A1: np.ndarray
    A2: np.ndarray
    sig_hat2: np.ndarray
    sig_tilde2: np.ndarray
    c: float | None = None
    nu: float | None = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ConfigError("truncation degree L must be an integer >= 1")
        self.L = int(self.L)
        for name in ("A1", "A2", "sig_hat2", "sig_tilde2"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (self.L + 1,):
                raise ConfigError(f"{name} must have L+1 entries")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ConfigError(f"{name} entries must be finite and >= 0")
            a = a.copy()
            a[0] = 0.0
            setattr(self, name, a)

    @classmethod
    def power_law(cls, L, c=1.0, nu=4.0, c_curl=None, init_c=0.0, init_nu=None, init_c_curl=None):
        ell = np.arange(L + 1, dtype=float)
        ell[0] = 1.0
        base = ell ** -float(nu)
        ibase = ell ** -float(nu if init_nu is None else init_nu)
        c_curl = c if c_curl is None else c_curl
        init_c_curl = init_c if init_c_curl is None else init_c_curl
        src = {"family": "power", "c": c, "nu": nu, "c_curl": c_curl,
               "init_c": init_c, "init_nu": nu if init_nu is None else init_nu,
               "init_c_curl": init_c_curl}
        return cls(L, c * base, c_curl * base, init_c * ibase, init_c_curl * ibase,
                   c=float(c) if c == c_curl else None, nu=float(nu), source=src)

    @classmethod
    def from_config(cls, cfg, L):
        """Build from ``{"family": "power", "c", "nu", ...}`` or explicit arrays
        ``{"A1": [...], "A2": [...], "sig_hat2": [...], "sig_tilde2": [...]}``
        listing degrees 1..L."""
        if not isinstance(cfg, dict):
            raise ConfigError("spectra must be a JSON object")
        if cfg.get("family") == "power":
            allowed = {"family", "c", "nu", "c_curl", "init_c", "init_nu", "init_c_curl"}
            unknown = set(cfg) - allowed
            if unknown:
                raise ConfigError(f"unknown spectra keys: {sorted(unknown)}")
            try:
                kw = {k: float(v) for k, v in cfg.items() if k != "family"}
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"non-numeric spectra parameter: {exc}") from exc
            if any(kw.get(k, 0.0) < 0 for k in ("c", "c_curl", "init_c", "init_c_curl")):
                raise ConfigError("spectral amplitudes must be >= 0")
            return cls.power_law(L, **kw)
        if "family" in cfg:
            raise ConfigError(f"unknown spectra family {cfg['family']!r}")
        zeros = [0.0] * L
        arrays = {k: _degree_array(cfg.get(k, zeros), L, k)
                  for k in ("A1", "A2", "sig_hat2", "sig_tilde2")}
        return cls(L, source={k: list(map(float, v[1:])) for k, v in arrays.items()}, **arrays)

    def with_L(self, L):
        """Same spectra at another truncation degree (parametric families only)."""
        s = self.source
        if s.get("family") != "power":
            raise ConfigError("only parametric spectra can be re-truncated")
        return PowerSpectra.power_law(L, s["c"], s["nu"], s["c_curl"], s["init_c"],
                                      s["init_nu"], s["init_c_curl"])

    def scaled(self, noise=1.0, initial=1.0):
        return PowerSpectra(self.L, noise * self.A1, noise * self.A2, initial * self.sig_hat2,
                            initial * self.sig_tilde2, None, self.nu, dict(self.source))


@dataclass
class AdmissibilityReport:
    tau: float
    finite_variance: bool
    summable: bool | None
    basis: str
    partial_sum: float
    nu: float | None
    required_nu: float | None
    effective_nu: float | None
    messages: list

    @property
    def ok(self) -> bool:
        return self.finite_variance and self.summable is not False

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("tau", "finite_variance", "summable", "basis", "partial_sum", "nu",
                 "required_nu", "effective_nu", "messages")} | {"ok": self.ok}


def check_admissibility(params, spectra) -> AdmissibilityReport:
    """Decide whether sum (2l+1) psi(l(l+1))^tau (A1 + A2) converges.

    For A_l = c l^-nu the terms behave like l^(1 + tau(alpha+gamma) - nu),
    so the series converges iff nu > 2 + tau(alpha+gamma).  Explicit spectra
    only admit the finite partial sum.  beta + H <= 1 is flagged separately:
    the per-mode variance of the stochastic integral is infinite there.
    """
    tau = tau_exponent(params)
    ell = np.arange(spectra.L + 1)
    terms = (2 * ell + 1) * params.psi_values(spectra.L) ** tau * (spectra.A1 + spectra.A2)
    partial = float(terms.sum())
    msgs = []
    finite = params.beta + params.hurst > 1
    if not finite and (np.any(spectra.A1) or np.any(spectra.A2)):
        msgs.append(f"beta + H = {params.beta + params.hurst:g} <= 1: the noise integral "
                    "has infinite variance for every mode")
    elif not finite:
        finite = True
    nu = spectra.nu
    if nu is not None:
        growth = tau * (params.alpha + params.gamma)
        required = 2.0 + growth
        summable = nu > required
        basis = "parametric"
        effective = nu - growth
        if not summable:
            msgs.append(f"nu = {nu:g} must exceed {required:g} for summability")
    else:
        summable, basis, required, effective = None, "finite-L only", None, None
        msgs.append(f"explicit spectra: partial sum to L={spectra.L} is {partial:.6g}")
    return AdmissibilityReport(tau, finite, summable, basis, partial, nu, required, effective, msgs)


def _require_admissible(params, spectra):
    rep = check_admissibility(params, spectra)
    if not rep.ok:
        raise AdmissibilityError("; ".join(rep.messages))
    return rep


def standard_draws(master_seed, stage, family, ell, n, start=0):
    """Complex normals with E|xi|^2 = 1, shape (n, 2l+1), for replicates
    start..start+n-1.  Replicate r always gets the same value."""
    out = np.empty((n, 2 * ell + 1), dtype=complex)
    r = start
    while r < start + n:
        b, off = divmod(r, BLOCK)
        take = min(BLOCK - off, start + n - r)
        g = mode_stream(master_seed, stage, family, ell, b).generator()
        z = g.standard_normal((BLOCK, 2, 2 * ell + 1)) * np.sqrt(0.5)
        out[r - start:r - start + take] = z[off:off + take, 0] + 1j * z[off:off + take, 1]
        r += take
    return out


def _map_degrees(fn, L, workers):
    degrees = range(1, L + 1)
    if workers is None or workers <= 1:
        return [fn(ell) for ell in degrees]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, degrees))


def _assemble(L, rows, n_replicates, meta):
    batch = () if n_replicates is None else (n_replicates,)
    out = SpectralCoefficients.zeros(L, batch)
    for ell, (d, c) in enumerate(rows, start=1):
        if n_replicates is None:
            d, c = d[0], c[0]
        out.div_free[..., ell, L - ell:L + ell + 1] = d
        out.curl_free[..., ell, L - ell:L + ell + 1] = c
    out.meta = meta
    return out


def _gaussian_coefficients(stage, var_div, var_curl, L, master_seed, n_replicates, start, workers, meta):
    n = 1 if n_replicates is None else int(n_replicates)

    def one(ell):
        rows = []
        for fam, var in (("div", var_div[ell]), ("curl", var_curl[ell])):
            if var == 0:
                rows.append(np.zeros((n, 2 * ell + 1), complex))
            else:
                rows.append(np.sqrt(var) * standard_draws(master_seed, stage, fam, ell, n, start))
        return rows

    return _assemble(L, _map_degrees(one, L, workers), n_replicates, meta)


def noise_variances(params, spectra, t):
    """A_l E*(t, psi_l) for both families (index 0 unused)."""
    es = np.zeros(spectra.L + 1)
    if t > 0 and (np.any(spectra.A1) or np.any(spectra.A2)):
        try:
            es[1:] = estar(t, params.psi_values(spectra.L)[1:], params.beta, params.hurst)
        except DivergentVarianceError as exc:
            raise AdmissibilityError(str(exc)) from exc
    return spectra.A1 * es, spectra.A2 * es


def sample_solution_exact_time(params, spectra, t, master_seed, n_replicates=None, start=0, workers=1):
    """Exact single-time law of the noise-driven solution.

    Every coefficient is an independent centred complex Gaussian with
    E|X_lm|^2 = A_l E*(t, psi_l).  ``n_replicates`` adds a leading batch axis.
    """
    if t < 0:
        raise ValueError("negative time")
    _require_admissible(params, spectra)
    vd, vc = noise_variances(params, spectra, t)
    meta = {"sampler": "exact_time", "t": t, "seed": master_seed}
    return _gaussian_coefficients("noise", vd, vc, spectra.L, master_seed, n_replicates, start, workers, meta)


def pathwise_coefficients(params, spectra, t, master_seed, n_replicates=None, start=0,
                          n_steps=N_STEPS, workers=1):
    """Noise-driven solution coefficients from simulated fBm paths.

    For every (l, m, family) the kernel s^(beta-1) E_{beta,beta}(-s^beta psi_l)
    is integrated against its own complex fBm of variance A_l on the mesh
    s_k = t (k/N)^(1/beta); cell averages of the kernel are exact.
    """
    if not t > 0:
        raise ValueError("pathwise sampling needs t > 0")
    _require_admissible(params, spectra)
    L, beta, H = spectra.L, params.beta, params.hurst
    psis = params.psi_values(L)
    times = graded_grid(t, n_steps, beta)
    n = 1 if n_replicates is None else int(n_replicates)

    def one(ell):
        anti = lambda s, z=psis[ell]: ml_kernel_integral(beta, z, s)  # noqa: E731
        rows = []
        for fam, var in (("div", spectra.A1[ell]), ("curl", spectra.A2[ell])):
            vals = np.zeros((n, 2 * ell + 1), complex)
            if var > 0:
                b0, b1 = start // PATH_BLOCK, (start + n - 1) // PATH_BLOCK
                chunks = []
                for b in range(b0, b1 + 1):
                    path = sample_complex_fbm(H, var, times, mode_stream(master_seed, "path", fam, ell, b),
                                              size=(PATH_BLOCK, 2 * ell + 1))
                    chunks.append(rs_integral(None, path, antiderivative=anti))
                allv = np.concatenate(chunks)
                off = start - b0 * PATH_BLOCK
                vals = allv[off:off + n]
            rows.append(vals)
        return rows

    meta = {"sampler": "pathwise", "t": t, "seed": master_seed, "n_steps": n_steps}
    return _assemble(L, _map_degrees(one, L, workers), n_replicates, meta)


def sample_solution_pathwise(params, spectra, t, grid, master_seed, n_steps=N_STEPS, workers=1) -> TangentFieldSample:
    """One realization of X(t, .) on the nodes of ``grid``."""
    coeffs = pathwise_coefficients(params, spectra, t, master_seed, n_steps=n_steps, workers=workers)
    theta, phi = (grid.theta, grid.phi) if isinstance(grid, SphereGrid) else grid
    return synthesize(coeffs, theta, phi, time=t)


def sample_initial(params, spectra, master_seed, n_replicates=None, start=0, workers=1):
    """Initial field with independent coefficients of variance sig_hat2 / sig_tilde2."""
    meta = {"sampler": "initial", "seed": master_seed}
    return _gaussian_coefficients("initial", spectra.sig_hat2, spectra.sig_tilde2, spectra.L,
                                  master_seed, n_replicates, start, workers, meta)


def relaxation(params, L, t):
    """E_{beta,1}(-t^beta psi_l) for l = 0..L; identically 1 at t = 0."""
    if t < 0:
        raise ValueError("negative time")
    if t == 0:
        return np.ones(L + 1)
    return mittag_leffler(params.beta, 1.0, -(t ** params.beta) * params.psi_values(L))


def sample_cauchy(params, spectra, t, master_seed=None, initial=None, n_replicates=None, start=0, workers=1):
    """Solution of the homogeneous Cauchy problem: every degree-l coefficient
    of the initial field is multiplied by E_{beta,1}(-t^beta psi_l)."""
    if initial is None:
        if master_seed is None:
            raise ValueError("need a seed or initial coefficients")
        initial = sample_initial(params, spectra, master_seed, n_replicates, start, workers)
    out = initial.scale_degrees(relaxation(params, initial.L, t))
    out.meta = dict(initial.meta, sampler="cauchy", t=t)
    return out


def sample_combined(params, spectra, t, master_seed, n_replicates=None, start=0, workers=1):
    """Initial field relaxed to t0 plus the noise integral up to t."""
    init = sample_cauchy(params, spectra, params.t0, master_seed, n_replicates=n_replicates,
                         start=start, workers=workers)
    noise = sample_solution_exact_time(params, spectra, t, master_seed, n_replicates, start, workers)
    out = init + noise
    out.meta = {"sampler": "combined", "t": t, "t0": params.t0, "seed": master_seed}
    return out


def truncate(coeffs, L_new):
    return coeffs.truncate(L_new)


def load_config(source):
    """Parse a run configuration (path, JSON text or dict) into
    ``(ModelParams, PowerSpectra, raw_dict)``."""
    if isinstance(source, dict):
        raw = dict(source)
    else:
        try:
            text = source if str(source).lstrip().startswith("{") else open(source, encoding="utf-8").read()
            raw = json.loads(text)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        params = ModelParams(*(float(raw[k]) for k in ("alpha", "gamma", "beta", "hurst")),
                             t0=float(raw.get("t0", 0.0)))
        L = raw["L"]
        if not isinstance(L, int) or isinstance(L, bool):
            raise ConfigError("L must be an integer")
        spectra = PowerSpectra.from_config(raw["spectra"], L)
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return params, spectra, raw
