"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np
from sklearn.utils import check_array, check_random_state

__all__ = [
    "check_memory",
    "check_visible",
    "check_batch",
    "check_integer_beta",
    "check_rng",
]


def check_memory(xi):
    """Validate a memory matrix and return it as a float64 array of shape (p, N)."""
    xi = check_array(xi, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                     ensure_min_samples=1, ensure_min_features=1)
    return xi


def check_visible(v, n_features=None, allow_batch=True):
    """Validate a visible state (N,) or, if allowed, a batch (n, N).

    Returns the validated float64 array without changing its rank.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in ((1, 2) if allow_batch else (1,)):
        raise ValueError(f"visible state must be 1-d{' or 2-d' if allow_batch else ''}, "
                         f"got shape {v.shape}")
    if v.shape[-1] == 0:
        raise ValueError("visible state is empty")
    if not np.all(np.isfinite(v)):
        raise ValueError("visible state contains non-finite entries")
    if n_features is not None and v.shape[-1] != n_features:
        raise ValueError(f"dimension mismatch: visible state has {v.shape[-1]} "
                         f"coordinates, memory matrix has {n_features} columns")
    return v


def check_batch(batch, n_features=None):
    """Validate a nonempty batch of visible states, always returning shape (n, N)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[0] == 0:
        raise ValueError("batch is empty")
    return check_visible(batch, n_features)


def check_integer_beta(beta):
    """Return ``beta`` as a Python int if it is a positive integer, else None."""
    if isinstance(beta, numbers.Integral):
        return int(beta) if beta >= 1 else None
    if isinstance(beta, numbers.Real) and float(beta).is_integer() and beta >= 1:
        return int(beta)
    return None


def check_rng(rng):
    """Turn a seed, ``None``, or generator into a ``numpy.random.Generator``.

    Legacy ``RandomState`` instances (the sklearn convention) are wrapped by
    drawing a seed from them.
    """
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.RandomState):
        return np.random.default_rng(rng.randint(0, 2**31 - 1))
    if rng is None or isinstance(rng, numbers.Integral):
        return np.random.default_rng(rng)
    return np.random.default_rng(check_random_state(rng).randint(0, 2**31 - 1))
