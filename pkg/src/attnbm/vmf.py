"""Model-C Boltzmann machine with identity F: the von Mises-Fisher distribution.

The energy ``E_C(v) = -eta^T v / |v|`` with ``eta = sum_mu xi_mu`` depends
on the direction of ``v`` only, so the distribution lives on the unit
sphere ``S^{d-1}``: density ``C_d(kappa) exp(kappa m^T u)`` with mean
direction ``m = eta / |eta|`` and concentration ``kappa = beta |eta|``.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._io import text_output
from ._validation import check_memory, check_rng, check_visible

__all__ = [
    "VmfParams",
    "energy_c",
    "bessel_i",
    "bessel_ie",
    "log_bessel_i",
    "log_normalizer",
    "vmf_log_density",
    "vmf_sample",
    "mean_resultant_length",
    "write_samples_csv",
]


@dataclass(frozen=True)
class VmfParams:
    """``eta`` (length N) and inverse temperature ``beta``."""

    eta: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        eta = check_visible(self.eta, allow_batch=False).copy()
        eta.flags.writeable = False
        if eta.shape[0] < 2:
            raise ValueError("the sphere needs dimension d >= 2")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def from_memory(cls, xi, beta=1.0):
        """``eta_i = sum_mu xi_{mu i}``."""
        return cls(check_memory(xi).sum(axis=0), beta)

    @property
    def dim(self):
        return self.eta.shape[0]

    @property
    def kappa(self):
        return self.beta * float(np.linalg.norm(self.eta))

    @property
    def mean_direction(self):
        norm = np.linalg.norm(self.eta)
        if norm == 0:
            return None
        return self.eta / norm


def energy_c(v, xi):
    """``-eta^T v / |v|``; invariant under positive rescaling of ``v``."""
    xi = check_memory(xi)
    v = check_visible(v, xi.shape[1], allow_batch=False)
    norm = float(np.linalg.norm(v))
    if norm == 0:
        raise ValueError("energy_c is undefined at v = 0")
    return -float(xi.sum(axis=0) @ v) / norm


# -- modified Bessel function of the first kind ------------------------------

_SERIES_MAX_X = 30.0


def _log_series(nu, x):
    """log I_nu(x) from the power series, summed in the log domain.

    Terms ``(x/2)^(2k+nu) / (k! Gamma(k+nu+1))`` are all positive, so the
    sum is accurate for any x; the loop stops once terms are past the
    peak and below exp(-40) of it.
    """
    if x == 0.0:
        return 0.0 if nu == 0 else -math.inf
    half = math.log(0.5 * x)
    log_t = nu * half - math.lgamma(nu + 1.0)
    terms = [log_t]
    peak = log_t
    k = 0
    q = 0.25 * x * x
    while True:
        k += 1
        ratio = q / (k * (k + nu))
        log_t += math.log(ratio)
        terms.append(log_t)
        peak = max(peak, log_t)
        if ratio < 1.0 and log_t < peak - 40.0:
            break
    t = np.array(terms)
    m = t.max()
    return float(m + math.log(np.sum(np.exp(t - m))))


def _log_hankel(nu, x):
    """log I_nu(x) by the large-argument expansion; None if it does not reach 1e-16."""
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    prev = math.inf
    for k in range(1, 60):
        term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(term) > prev:
            return None
        total += term
        prev = abs(term)
        if abs(term) < 1e-17 * abs(total):
            return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)
    return None


def log_bessel_i(nu, x):
    """``log I_nu(x)`` for ``nu >= 0``, ``x >= 0``.

    Power series for ``x <= 30``; the asymptotic large-argument expansion
    above that when it converges to double precision, otherwise the
    log-domain series.
    """
    nu = float(nu)
    x = float(x)
    if nu < 0 or x < 0:
        raise ValueError(f"need nu >= 0 and x >= 0, got nu={nu}, x={x}")
    if x > _SERIES_MAX_X:
        val = _log_hankel(nu, x)
        if val is not None:
            return val
    return _log_series(nu, x)


def bessel_i(nu, x):
    """Modified Bessel function ``I_nu(x)``; overflows to inf for very large ``x``."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_bessel_i(nu, x)))


def bessel_ie(nu, x):
    """Exponentially scaled ``exp(-x) I_nu(x)``, finite for all ``x``."""
    return float(np.exp(log_bessel_i(nu, x) - float(x)))


def log_normalizer(d, kappa):
    """``log C_d(kappa)``; at ``kappa = 0`` the uniform density on ``S^{d-1}``."""
    if kappa == 0:
        # 1 / area(S^{d-1}) = Gamma(d/2) / (2 pi^{d/2})
        return float(gammaln(0.5 * d) - math.log(2.0) - 0.5 * d * math.log(math.pi))
    nu = 0.5 * d - 1.0
    return nu * math.log(kappa) - 0.5 * d * math.log(2.0 * math.pi) - log_bessel_i(nu, kappa)


def vmf_log_density(u, params):
    """Log density on the unit sphere, for a point (d,) or batch (n, d)."""
    u = check_visible(u, params.dim)
    norms = np.linalg.norm(u, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("vmf_log_density expects unit vectors")
    kappa = params.kappa
    log_c = log_normalizer(params.dim, kappa)
    if kappa == 0:
        out = np.full(norms.shape, log_c)
    else:
        out = kappa * (u @ params.mean_direction) + log_c
    return float(out) if np.ndim(out) == 0 else out


def mean_resultant_length(d, kappa):
    """``A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa)``."""
    if kappa == 0:
        return 0.0
    return math.exp(log_bessel_i(0.5 * d, kappa) - log_bessel_i(0.5 * d - 1.0, kappa))


def _sample_cosines(kappa, d, n, rng):
    """Rejection sampler for ``w = m^T u`` (Wood's scheme)."""
    dm1 = d - 1.0
    b = dm1 / (math.sqrt(4.0 * kappa * kappa + dm1 * dm1) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dm1 * math.log(1.0 - x0 * x0)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        z = rng.beta(0.5 * dm1, 0.5 * dm1, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(m)
        ok = kappa * w + dm1 * np.log(1.0 - x0 * w) - c >= np.log(u)
        take = w[ok][: n - filled]
        out[filled:filled + take.size] = take
        filled += take.size
    return out


def vmf_sample(params, rng, n):
    """Draw ``n`` unit vectors, shape (n, d); uniform on the sphere when ``kappa = 0``."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = check_rng(rng)
    d = params.dim
    kappa = params.kappa
    if kappa == 0:
        g = rng.standard_normal((n, d))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    m = params.mean_direction
    w = _sample_cosines(kappa, d, n, rng)
    # tangent directions: Gaussian draws projected orthogonal to m
    g = rng.standard_normal((n, d))
    g -= np.outer(g @ m, m)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    out = w[:, None] * m[None, :] + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * g
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def write_samples_csv(path, samples):
    """Header ``u0,...,u{d-1}`` then one sample per row."""
    with text_output(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"u{i}" for i in range(samples.shape[1])])
        for row in samples:
            w.writerow([repr(float(x)) for x in row])
