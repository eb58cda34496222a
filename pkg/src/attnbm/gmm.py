"""Gaussian-mixture view of the AttnBM and its relation to the G-B RBM.

At integer beta the AttnBM density is an isotropic Gaussian mixture with
one component per lexicographic tuple of memories, attention weights
``softmax(|S_t|^2 / (2 beta))``, means ``S_t / beta`` and variance ``1/beta``.
"""

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from ._io import text_output
from ._validation import check_memory, check_rng, check_visible
from .energy import DEFAULT_TUPLE_BUDGET, _require_integer, log_sum_exp, softmax, tuple_sums
from .exceptions import BudgetExceededError, FormatError

__all__ = [
    "GaussianMixture",
    "to_gmm",
    "gmm_log_density",
    "gmm_density",
    "sample",
    "expand_beta",
    "TruncationGap",
    "gb_truncation_gap",
    "write_mixture",
    "read_mixture",
]


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic mixture with a shared variance.

    Attributes
    ----------
    weights : ndarray of shape (M,)
    means : ndarray of shape (M, N)
    variance : float
    """

    weights: np.ndarray
    means: np.ndarray
    variance: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64)).copy()
        if w.ndim != 1 or mu.shape[0] != w.shape[0]:
            raise ValueError(f"{w.shape[0]} weights for {mu.shape[0]} means")
        # exact zeros are tolerated: attention weights can underflow
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if not np.all(np.isfinite(mu)):
            raise ValueError("mixture means must be finite")
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        w.flags.writeable = False
        mu.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def n_components(self):
        return self.weights.shape[0]

    @property
    def n_features(self):
        return self.means.shape[1]

    def mean(self):
        return self.weights @ self.means


def to_gmm(model, budget=DEFAULT_TUPLE_BUDGET):
    """Mixture representation of an integer-beta AttnBM.

    Components follow the lexicographic order of memory tuples.
    """
    k = _require_integer(model)
    xi = model.xi
    if k == 1:
        return GaussianMixture(softmax(0.5 * np.sum(xi * xi, axis=1)), xi, 1.0)
    _, sums = tuple_sums(xi, k, budget)
    return GaussianMixture(softmax(np.sum(sums * sums, axis=1) / (2.0 * k)), sums / k, 1.0 / k)


def gmm_log_density(g, v):
    """Log density of the mixture at a point (N,) or batch (n, N)."""
    v = check_visible(v, g.n_features)
    vv = np.atleast_2d(v)
    sq = np.sum((vv[:, None, :] - g.means[None, :, :]) ** 2, axis=2)
    with np.errstate(divide="ignore"):
        terms = np.log(g.weights)[None, :] - sq / (2.0 * g.variance)
    out = log_sum_exp(terms, axis=1) - 0.5 * g.n_features * math.log(2.0 * math.pi * g.variance)
    return float(out[0]) if v.ndim == 1 else out


def gmm_density(g, v):
    """Mixture density; evaluated in the log domain and exponentiated."""
    return np.exp(gmm_log_density(g, v))


def sample(g, rng, n):
    """Ancestral samples: pick a component by weight, add isotropic noise.

    Returns
    -------
    samples : ndarray of shape (n, N)
    labels : ndarray of shape (n,)
        Component index of each sample.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = check_rng(rng)
    labels = rng.choice(g.n_components, size=n, p=g.weights)
    noise = rng.standard_normal((n, g.n_features)) * math.sqrt(g.variance)
    return g.means[labels] + noise, labels


def expand_beta(model, budget=DEFAULT_TUPLE_BUDGET):
    """Rewrite an integer-beta AttnBM as a beta = 1 model on rescaled inputs.

    Returns ``(xi_prime, scale)`` with one row ``S_t / sqrt(beta)`` per
    lexicographic tuple and ``scale = sqrt(beta)``, such that

        p[Xi, beta](v) = beta**(N/2) * p[xi_prime, 1](scale * v).
    """
    k = _require_integer(model)
    if k == 1:
        return model.xi.copy(), 1.0
    _, sums = tuple_sums(model.xi, k, budget)
    scale = math.sqrt(k)
    return sums / scale, scale


TruncationGap = namedtuple("TruncationGap", ["attn_unnorm", "gb_unnorm", "higher_order"])

_SUBSET_LIMIT = 2**20


def gb_truncation_gap(w, v):
    """Split the G-B RBM marginal numerator into its AttnBM part and the rest.

    With unit visible variance the G-B RBM numerator is
    ``prod_mu (1 + exp(w_mu v)) exp(-|v|^2 / 2)``. Expanding the product,
    the empty and singleton subsets give the AttnBM numerator with memories
    ``{0, w_1, ..., w_Nh}``; every subset of size >= 2 goes to
    ``higher_order``, which is summed explicitly.
    """
    w = check_memory(w)
    v = check_visible(v, w.shape[1], allow_batch=False)
    n_h = w.shape[0]
    if 2**n_h > _SUBSET_LIMIT:
        raise BudgetExceededError(f"2**{n_h} subsets exceeds the limit of {_SUBSET_LIMIT}")
    a = w @ v
    gauss = math.exp(-0.5 * float(v @ v))
    gb = float(np.prod(1.0 + np.exp(a))) * gauss
    attn = (1.0 + float(np.sum(np.exp(a)))) * gauss
    # subsets as bit masks; keep those with at least two members
    masks = np.arange(2**n_h)
    bits = (masks[:, None] >> np.arange(n_h)[None, :]) & 1
    multi = bits[bits.sum(axis=1) >= 2]
    higher = float(np.sum(np.exp(multi @ a))) * gauss if multi.size else 0.0
    return TruncationGap(attn, gb, higher)


def write_mixture(path, g):
    """Plain text: header ``M N variance`` then ``weight mean_1 ... mean_N`` per line."""
    fmt = "{:.17g}"
    with text_output(path) as fh:
        fh.write(f"{g.n_components} {g.n_features} {fmt.format(g.variance)}\n")
        for w, mu in zip(g.weights, g.means):
            fh.write(" ".join(fmt.format(x) for x in (w, *mu)) + "\n")


def read_mixture(path):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or len(lines[0]) != 3:
        raise FormatError("mixture header must read 'M N variance'")
    try:
        m, n, var = int(lines[0][0]), int(lines[0][1]), float(lines[0][2])
        rows = np.array([[float(x) for x in ln] for ln in lines[1:]])
    except ValueError as exc:
        raise FormatError(f"malformed mixture file: {exc}") from None
    if rows.shape != (m, n + 1):
        raise FormatError(f"expected {m} rows of {n + 1} numbers, got shape {rows.shape}")
    return GaussianMixture(rows[:, 0], rows[:, 1:], var)

