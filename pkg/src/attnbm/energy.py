"""Energy, exact log-partition function and likelihood gradients of the AttnBM.

The attentional Boltzmann machine is the Gibbs distribution

    p(v) = exp(-beta * E(v)) / Z,    E(v) = 0.5 * |v|^2 - logsumexp(Xi v)

over continuous visible units ``v`` in R^N, with memory matrix ``Xi`` of
shape (p, N). For positive integer ``beta`` the partition function is a
finite sum over the p**beta tuples of memory rows; for real ``beta > 1``
only an upper bound is available.

Every routine works in float64 and evaluates log-domain sums with a
max-shifted log-sum-exp.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_batch, check_integer_beta, check_memory, check_visible
from .exceptions import BudgetExceededError, FormatError, UnsupportedBetaError

__all__ = [
    "DEFAULT_TUPLE_BUDGET",
    "AttnBMModel",
    "log_sum_exp",
    "softmax",
    "energy_b",
    "enumerate_tuples",
    "tuple_sums",
    "log_partition",
    "log_likelihood",
    "grad_energy_b",
    "grad_log_partition",
    "grad_nll",
    "mean_nll",
    "jensen_log_partition_bound",
    "model_to_bytes",
    "model_from_bytes",
    "save_model",
    "load_model",
]

DEFAULT_TUPLE_BUDGET = 10**7

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class AttnBMModel:
    """Memory matrix plus inverse temperature.

    Parameters
    ----------
    xi : array-like of shape (p, N)
        Memory matrix; row ``mu`` is the stored pattern ``xi_mu``.
    beta : float, default=1.0
        Inverse temperature, strictly positive.
    beta_kind : {"integer", "real"}, optional
        Whether exact integer-beta routines apply. Inferred from ``beta``
        when omitted. ``"integer"`` requires ``beta`` to be a positive
        integer exactly.
    """

    xi: np.ndarray
    beta: float = 1.0
    beta_kind: str = field(default=None)

    def __post_init__(self):
        xi = check_memory(self.xi).copy()
        xi.flags.writeable = False
        object.__setattr__(self, "xi", xi)
        beta = float(self.beta)
        if not (beta > 0 and math.isfinite(beta)):
            raise ValueError(f"beta must be positive and finite, got {self.beta!r}")
        k = check_integer_beta(beta)
        kind = self.beta_kind
        if kind is None:
            kind = "integer" if k is not None else "real"
        if kind not in ("integer", "real"):
            raise ValueError(f"beta_kind must be 'integer' or 'real', got {kind!r}")
        if kind == "integer" and k is None:
            raise ValueError(f"beta_kind='integer' requires a positive integer beta, got {beta}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta_kind", kind)

    @property
    def n_memories(self):
        return self.xi.shape[0]

    @property
    def n_features(self):
        return self.xi.shape[1]

    @property
    def integer_beta(self):
        """``beta`` as an int when the model is integer-kind, else None."""
        return int(self.beta) if self.beta_kind == "integer" else None

    def with_xi(self, xi):
        return AttnBMModel(xi, self.beta, self.beta_kind)


def log_sum_exp(x, axis=None):
    """Numerically stable ``log(sum(exp(x)))`` along ``axis``.

    Uses the max-shift ``m + log(sum(exp(x - m)))`` so that large entries
    never overflow.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(x, axis=-1):
    """Softmax along ``axis`` with max-shift; invariant to additive constants."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of an empty array")
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def energy_b(v, xi):
    """Model-B energy ``0.5 |v|^2 - logsumexp(Xi v)``.

    ``v`` may be a single state (N,) or a batch (n, N); the result is a
    float or an array of shape (n,) respectively.
    """
    xi = check_memory(xi)
    v = check_visible(v, xi.shape[1])
    h = v @ xi.T
    e = 0.5 * np.sum(v * v, axis=-1) - log_sum_exp(h, axis=-1)
    return float(e) if np.ndim(e) == 0 else e


def enumerate_tuples(p, k, budget=DEFAULT_TUPLE_BUDGET):
    """All index tuples ``(mu_1, ..., mu_k)`` in lexicographic order, shape (p**k, k)."""
    n = p**k
    if n > budget:
        raise BudgetExceededError(
            f"{p}**{k} = {n} tuples exceeds the enumeration budget of {budget}")
    return np.indices((p,) * k).reshape(k, -1).T


def tuple_sums(xi, k, budget=DEFAULT_TUPLE_BUDGET):
    """Row sums ``sum_j xi[mu_j]`` over all lexicographic k-tuples.

    Returns
    -------
    idx : ndarray of shape (p**k, k)
    sums : ndarray of shape (p**k, N)
    """
    xi = check_memory(xi)
    idx = enumerate_tuples(xi.shape[0], k, budget)
    sums = np.zeros((idx.shape[0], xi.shape[1]))
    for j in range(k):
        sums += xi[idx[:, j]]
    return idx, sums


def _require_integer(model):
    k = model.integer_beta
    if k is None:
        raise UnsupportedBetaError(
            f"exact routines need an integer beta, got beta={model.beta} "
            f"({model.beta_kind}); use jensen_log_partition_bound for real beta")
    return k


def log_partition(model, budget=DEFAULT_TUPLE_BUDGET):
    """Exact ``log Z`` for integer beta.

    ``log Z = (N/2) log(2 pi / beta) + logsumexp_t(|S_t|^2 / (2 beta))``
    where ``S_t`` runs over the sums of all p**beta tuples of memories.

    Raises
    ------
    UnsupportedBetaError
        If the model has a real-kind beta.
    BudgetExceededError
        If p**beta exceeds ``budget``.
    """
    return _log_partition(model.xi, _require_integer(model), budget)


def log_likelihood(v, model, budget=DEFAULT_TUPLE_BUDGET):
    """``-beta * E(v) - log Z`` for a state (N,) or batch (n, N)."""
    return -model.beta * energy_b(v, model.xi) - log_partition(model, budget)


def grad_energy_b(v, xi):
    """Gradient of the energy with respect to ``Xi``: ``-softmax(Xi v)_mu * v_i``."""
    xi = check_memory(xi)
    v = check_visible(v, xi.shape[1], allow_batch=False)
    return -np.outer(softmax(xi @ v), v)


def grad_log_partition(model, budget=DEFAULT_TUPLE_BUDGET):
    """Exact gradient of ``log Z`` with respect to ``Xi`` for integer beta.

    For beta = 1 this is ``xi_mu * softmax(|xi_mu|^2 / 2)``. For integer
    beta >= 2 each tuple ``t`` contributes its attention weight times
    ``S_t / beta`` to every memory it contains, once per occurrence.
    """
    return _grad_log_partition(model.xi, _require_integer(model), budget)


def grad_nll(batch, model, budget=DEFAULT_TUPLE_BUDGET):
    """Exact gradient of the mean negative log-likelihood of ``batch``.

    ``beta * mean_n grad_energy_b(v_n) + grad_log_partition``; no sampling
    is involved in the negative phase.
    """
    k = _require_integer(model)
    batch = check_batch(batch, model.n_features)
    return _grad_nll(batch, model.xi, k, budget)


def mean_nll(batch, model, budget=DEFAULT_TUPLE_BUDGET):
    """Mean negative log-likelihood of a batch."""
    batch = check_batch(batch, model.n_features)
    return float(-np.mean(log_likelihood(batch, model, budget)))


def jensen_log_partition_bound(model):
    """Upper bound on ``log Z`` for beta > 1 from Jensen's inequality.

    ``(beta - 1) log p + (N/2) log(2 pi / beta) + logsumexp(beta |xi_mu|^2 / 2)``,
    i.e. the beta = 1 log-partition of ``sqrt(beta) Xi`` up to a constant.
    """
    beta = model.beta
    if beta <= 1.0:
        raise ValueError(f"the Jensen bound requires beta > 1, got {beta}")
    xi = model.xi
    p, n = xi.shape
    return ((beta - 1.0) * math.log(p) + 0.5 * n * math.log(2.0 * math.pi / beta)
            + log_sum_exp(0.5 * beta * np.sum(xi * xi, axis=1)))


# -- array-level kernels (no validation; used by the training loops) ---------

def _log_partition(xi, k, budget=DEFAULT_TUPLE_BUDGET):
    n = xi.shape[1]
    if k == 1:
        return 0.5 * n * _LOG_2PI + log_sum_exp(0.5 * np.sum(xi * xi, axis=1))
    _, sums = tuple_sums(xi, k, budget)
    return 0.5 * n * math.log(2.0 * math.pi / k) + log_sum_exp(np.sum(sums * sums, axis=1) / (2.0 * k))


def _grad_log_partition(xi, k, budget=DEFAULT_TUPLE_BUDGET):
    if k == 1:
        return xi * softmax(0.5 * np.sum(xi * xi, axis=1))[:, None]
    idx, sums = tuple_sums(xi, k, budget)
    weights = softmax(np.sum(sums * sums, axis=1) / (2.0 * k))
    weighted = weights[:, None] * sums / k
    grad = np.zeros_like(xi)
    # a memory appearing twice in a tuple collects the tuple's term twice
    for j in range(k):
        np.add.at(grad, idx[:, j], weighted)
    return grad


def _grad_nll(batch, xi, k, budget=DEFAULT_TUPLE_BUDGET):
    attn = softmax(batch @ xi.T, axis=1)
    positive = -(attn.T @ batch) / batch.shape[0]
    return k * positive + _grad_log_partition(xi, k, budget)


def _mean_nll(batch, xi, k, budget=DEFAULT_TUPLE_BUDGET):
    h = batch @ xi.T
    energy = 0.5 * np.sum(batch * batch, axis=1) - log_sum_exp(h, axis=1)
    return float(k * np.mean(energy) + _log_partition(xi, k, budget))


# -- binary container -------------------------------------------------------

_MAGIC = b"ABM1"
_HEADER = struct.Struct("<4sIIdB")


def model_to_bytes(model):
    """Serialize as ``ABM1 | u32 p | u32 N | f64 beta | u8 kind | p*N f64`` (little-endian)."""
    p, n = model.xi.shape
    kind = 0 if model.beta_kind == "integer" else 1
    header = _HEADER.pack(_MAGIC, p, n, model.beta, kind)
    return header + np.ascontiguousarray(model.xi, dtype="<f8").tobytes()


def model_from_bytes(buf):
    if len(buf) < _HEADER.size:
        raise FormatError("truncated ABM1 header", offset=len(buf))
    magic, p, n, beta, kind = _HEADER.unpack_from(buf, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", offset=0)
    if kind not in (0, 1):
        raise FormatError(f"unknown beta kind {kind}", offset=_HEADER.size - 1)
    need = _HEADER.size + 8 * p * n
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, got {len(buf)}", offset=len(buf))
    xi = np.frombuffer(buf, dtype="<f8", count=p * n, offset=_HEADER.size).reshape(p, n)
    return AttnBMModel(xi.astype(np.float64), beta, "integer" if kind == 0 else "real")


def save_model(path, model):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
