"""Deterministic model-B dynamics: the attention update and energy descent."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_memory, check_visible
from .energy import energy_b, softmax

__all__ = ["RetrievalResult", "update_step", "retrieve"]


@dataclass(frozen=True)
class RetrievalResult:
    """Outcome of iterating the update rule.

    Attributes
    ----------
    final_state : ndarray of shape (N,)
    iterations : int
        Number of update steps applied.
    energy_trace : ndarray of shape (iterations + 1,)
        Energy of the initial state followed by the energy after each step.
    converged : bool
        Whether the step size fell below the tolerance before ``max_iters``.
    """

    final_state: np.ndarray
    iterations: int
    energy_trace: np.ndarray
    converged: bool


def update_step(v, xi):
    """One attention update ``Xi^T softmax(Xi v)``.

    Accepts a single state (N,) or a batch (n, N). The output is a convex
    combination of memory rows.
    """
    xi = check_memory(xi)
    v = check_visible(v, xi.shape[1])
    return softmax(v @ xi.T, axis=-1) @ xi


def retrieve(v0, xi, max_iters=100, tol=1e-8):
    """Iterate :func:`update_step` until successive states are within ``tol``.

    Non-convergence is reported through ``converged=False`` rather than raised.
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be at least 1, got {max_iters}")
    xi = check_memory(xi)
    v = check_visible(v0, xi.shape[1], allow_batch=False)
    trace = [energy_b(v, xi)]
    converged = False
    it = 0
    while it < max_iters:
        nxt = update_step(v, xi)
        it += 1
        step = float(np.linalg.norm(nxt - v))
        v = nxt
        trace.append(energy_b(v, xi))
        if step < tol:
            converged = True
            break
    return RetrievalResult(v, it, np.array(trace), converged)
