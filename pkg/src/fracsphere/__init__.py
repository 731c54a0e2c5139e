"""Spectral simulation and verification of fractional stochastic PDEs for
random tangent vector fields on the unit sphere."""

__version__ = "0.1.0"

from .specfun import mittag_leffler, ml_kernel, legendre, legendre_derivs  # noqa: E402
from .sphere_basis import (SpherePoint, SpectralCoefficients, TangentFieldSample,  # noqa: E402
                           make_grid, analyze, synthesize, vsh, scalar_sh, tensor_kernels)
from .stochastic import FbmPath, sample_real_fbm, sample_complex_fbm, rs_integral, integral_variance  # noqa: E402
from .covariance import estar, covariance_matrix, variance_trace  # noqa: E402
from .model import (ModelParams, PowerSpectra, psi, tau_exponent, check_admissibility,  # noqa: E402
                    sample_solution_pathwise, sample_solution_exact_time, sample_cauchy,
                    sample_combined, truncate)
from .rng import RngStream  # noqa: E402
