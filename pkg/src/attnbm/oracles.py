"""Independent numerical oracles: adaptive quadrature and finite differences.

These routines never call the closed forms they are used to check. The
quadrature side integrates ``exp(-beta * E)`` directly with scipy's
adaptive cubature over a box wide enough that the truncated mass is far
below double precision.
"""

import math

import numpy as np
from scipy.integrate import cubature

__all__ = [
    "integrate_box",
    "box_radius",
    "quad_log_partition",
    "quad_normalization",
    "central_difference",
    "sphere_integral",
    "dae_loss_reference",
]


def integrate_box(f, lo, hi, rtol=1e-10, atol=0.0):
    """Adaptive cubature of a vectorized integrand ``f(points) -> values`` over a box."""
    lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
    res = cubature(f, lo, hi, rtol=rtol, atol=atol, max_subdivisions=200000)
    if res.status != "converged":
        raise RuntimeError(f"cubature did not converge: error estimate {res.error}")
    return float(res.estimate), float(res.error)


def box_radius(xi, beta, n_sigma=12.0):
    """Half-width of a box around 0 containing every mixture mean plus ``n_sigma`` std."""
    xi = np.asarray(xi, dtype=np.float64)
    return float(np.max(np.linalg.norm(xi, axis=1))) + n_sigma / math.sqrt(beta)


def _neg_beta_energy(xi, beta):
    def fn(v):
        h = v @ xi.T
        m = h.max(axis=1, keepdims=True)
        lse = np.log(np.exp(h - m).sum(axis=1)) + m[:, 0]
        return -beta * (0.5 * np.sum(v * v, axis=1) - lse)
    return fn


def quad_log_partition(xi, beta, rtol=1e-10):
    """``log of the integral of exp(-beta E_B)`` by adaptive cubature.

    Works for any real ``beta > 0``; no closed form is used.
    """
    xi = np.asarray(xi, dtype=np.float64)
    n = xi.shape[1]
    neg = _neg_beta_energy(xi, beta)
    anchors = np.vstack([np.zeros((1, n)), xi])
    shift = float(np.max(neg(anchors)))
    r = box_radius(xi, beta)
    total, _ = integrate_box(lambda v: np.exp(neg(v) - shift), [-r] * n, [r] * n, rtol=rtol)
    return math.log(total) + shift


def quad_normalization(log_density, n, radius, rtol=1e-10):
    """Integral of ``exp(log_density(points))`` over the cube ``[-radius, radius]^n``."""
    total, _ = integrate_box(lambda v: np.exp(log_density(v)), [-radius] * n, [radius] * n, rtol=rtol)
    return total


def central_difference(fn, x, h=1e-5):
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        g[i] = (up - down) / (2.0 * h)
    return grad


def sphere_integral(f, rtol=1e-10):
    """Integral of ``f(u)`` over the unit sphere ``S^2`` in spherical coordinates.

    ``f`` maps an (n, 3) array of unit vectors to (n,) values.
    """
    def integrand(x):
        theta, phi = x[:, 0], x[:, 1]
        st = np.sin(theta)
        u = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=1)
        return f(u) * st
    total, _ = integrate_box(integrand, [0.0, 0.0], [math.pi, 2.0 * math.pi], rtol=rtol)
    return total


def dae_loss_reference(xi, clean, noisy):
    """Softmax denoising-autoencoder loss written as explicit scalar loops.

    For every sample: attention weights over the memories from the noisy
    input, the weighted read-out, and its squared distance to the clean
    input. Averaged over samples.
    """
    xi = [list(map(float, row)) for row in np.asarray(xi)]
    total = 0.0
    for v, vt in zip(np.asarray(clean).tolist(), np.asarray(noisy).tolist()):
        logits = [sum(a * b for a, b in zip(row, vt)) for row in xi]
        top = max(logits)
        e = [math.exp(z - top) for z in logits]
        z = math.fsum(e)
        out = [math.fsum(e[m] * xi[m][i] for m in range(len(xi))) / z for i in range(len(v))]
        total += math.fsum((o - c) ** 2 for o, c in zip(out, v))
    return total / len(clean)
