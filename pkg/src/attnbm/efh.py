"""Model-A Boltzmann machine as an Exponential Family Harmonium.

With additive Lagrangians ``L_h = sum F(h_mu)`` and ``L_v = sum G(v_i)``
the joint energy is

    E_A(v, h) = sum_i (v_i g(v_i) - G(v_i)) + sum_mu (h_mu f(h_mu) - F(h_mu))
                - sum_{mu,i} f(h_mu) xi_{mu i} g(v_i)

and ``exp(-beta E_A)`` is an EFH with sufficient statistics
``r = (g(v), G(v) - v g(v))``, ``s = (f(h), F(h) - h f(h))``. Both
conditionals factorize over units, so block Gibbs sampling and CD-k only
need one-dimensional densities, which are discretized on finite grids.
"""

import math
import struct
import time
import warnings
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._validation import check_batch, check_memory, check_rng, check_visible
from .exceptions import FormatError, GridWarning, TrainingDivergedError
from .training import TrainConfig, TrainReport

__all__ = [
    "Lagrangian",
    "LagrangianPair",
    "hidden_preset",
    "visible_preset",
    "EfhSpec",
    "GridDomain",
    "energy_a",
    "to_efh",
    "conditional_density_1d",
    "hidden_conditional_means",
    "gibbs_step",
    "auto_grids",
    "cd_gradient",
    "cd_k",
    "efh_to_bytes",
    "efh_from_bytes",
]


@dataclass(frozen=True)
class Lagrangian:
    """A scalar Lagrangian summand ``fn`` with its derivative ``deriv``."""

    name: str
    fn: object
    deriv: object

    def legendre(self, x):
        """``x * deriv(x) - fn(x)``, the per-unit energy term."""
        x = np.asarray(x, dtype=np.float64)
        return x * self.deriv(x) - self.fn(x)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _identity(x):
    return np.asarray(x, dtype=np.float64)


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=np.float64))


def _half_square(x):
    return 0.5 * np.square(x)


def _power(x, n):
    return np.power(x, n) / n


def _power_deriv(x, n):
    return np.power(x, n - 1)


def hidden_preset(name):
    """Hidden-layer Lagrangian ``F``: identity, square, power_<n> (n >= 2) or softplus."""
    if name == "identity":
        return Lagrangian(name, _identity, _ones)
    if name == "square":
        return Lagrangian(name, _half_square, _identity)
    if name == "softplus":
        return Lagrangian(name, _softplus, _sigmoid)
    if name.startswith("power_"):
        n = int(name.split("_", 1)[1])
        if n < 2:
            raise ValueError(f"power preset needs n >= 2, got {n}")
        return Lagrangian(name, partial(_power, n=n), partial(_power_deriv, n=n))
    raise ValueError(f"unknown hidden Lagrangian preset {name!r}")


def visible_preset(name):
    """Visible-layer Lagrangian ``G``: abs (derivative sign, sign(0) = 0) or square."""
    if name == "abs":
        return Lagrangian(name, np.abs, np.sign)
    if name == "square":
        return Lagrangian(name, _half_square, _identity)
    raise ValueError(f"unknown visible Lagrangian preset {name!r}")


@dataclass(frozen=True)
class LagrangianPair:
    F: Lagrangian
    G: Lagrangian

    @classmethod
    def from_names(cls, hidden, visible):
        return cls(hidden_preset(hidden), visible_preset(visible))


def energy_a(v, h, xi, lag):
    """Joint model-A energy for additive Lagrangians."""
    xi = check_memory(xi)
    v = check_visible(v, xi.shape[1], allow_batch=False)
    h = check_visible(h, allow_batch=False)
    if h.shape[0] != xi.shape[0]:
        raise ValueError(f"h has {h.shape[0]} units, memory matrix has {xi.shape[0]} rows")
    coupling = lag.F.deriv(h) @ xi @ lag.G.deriv(v)
    return float(np.sum(lag.G.legendre(v)) + np.sum(lag.F.legendre(h)) - coupling)


@dataclass(frozen=True)
class EfhSpec:
    """EFH parameters and statistics induced by ``(F, G, Xi, beta)``.

    Attributes
    ----------
    theta : ndarray of shape (N, 2)
        Visible natural parameters.
    lam : ndarray of shape (p, 2)
        Hidden natural parameters.
    J : ndarray of shape (N, 2, p, 2)
        Coupling ``J[i, a, j, b]``; only the ``a = b = 0`` block is nonzero.
    lag : LagrangianPair
    """

    theta: np.ndarray
    lam: np.ndarray
    J: np.ndarray
    lag: LagrangianPair

    @property
    def n_visible(self):
        return self.theta.shape[0]

    @property
    def n_hidden(self):
        return self.lam.shape[0]

    def r(self, v):
        """Visible statistics, shape (..., N, 2)."""
        v = np.asarray(v, dtype=np.float64)
        return np.stack([self.lag.G.deriv(v), -self.lag.G.legendre(v)], axis=-1)

    def s(self, h):
        """Hidden statistics, shape (..., p, 2)."""
        h = np.asarray(h, dtype=np.float64)
        return np.stack([self.lag.F.deriv(h), -self.lag.F.legendre(h)], axis=-1)

    def log_density(self, v, h):
        """Unnormalized EFH log-density ``theta.r + lam.s + r.J.s``."""
        r, s = self.r(v), self.s(h)
        return float(np.sum(self.theta * r) + np.sum(self.lam * s)
                     + np.einsum("ia,iajb,jb->", r, self.J, s))

    def coupling_matrix(self):
        """The (p, N) block ``J[:, 0, :, 0].T``, equal to ``beta * Xi``."""
        return self.J[:, 0, :, 0].T


def to_efh(xi, lag, beta):
    """EFH parameterization of ``exp(-beta * E_A)``."""
    xi = check_memory(xi)
    p, n = xi.shape
    theta = np.zeros((n, 2))
    lam = np.zeros((p, 2))
    theta[:, 1] = beta
    lam[:, 1] = beta
    J = np.zeros((n, 2, p, 2))
    J[:, 0, :, 0] = beta * xi.T
    return EfhSpec(theta, lam, J, lag)


@dataclass(frozen=True)
class GridDomain:
    """``K`` equally spaced points on ``[lo, hi]`` with trapezoidal weights."""

    lo: float = -8.0
    hi: float = 8.0
    K: int = 64

    def __post_init__(self):
        if self.K < 2 or not self.lo < self.hi:
            raise ValueError(f"need K >= 2 and lo < hi, got {self}")

    @property
    def points(self):
        return np.linspace(self.lo, self.hi, self.K)

    @property
    def weights(self):
        w = np.full(self.K, (self.hi - self.lo) / (self.K - 1))
        w[[0, -1]] *= 0.5
        return w

    def widened(self, factor=2.0):
        mid, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo) * factor
        return GridDomain(mid - half, mid + half, self.K)


_BOUNDARY_TOL = 1e-8


def _grid_probs(logits, grid, unit_label="unit"):
    """Normalize ``exp(logits)`` on the grid (last axis) by trapezoidal weights."""
    logits = logits - np.max(logits, axis=-1, keepdims=True)
    dens = np.exp(logits)
    edge = np.maximum(dens[..., 0], dens[..., -1])
    if np.any(edge > _BOUNDARY_TOL):
        warnings.warn(
            f"{unit_label}: conditional density at the grid boundary is "
            f"{float(np.max(edge)):.3g} of its maximum; try {grid.widened()}",
            GridWarning, stacklevel=3)
    mass = dens * grid.weights
    return mass / np.sum(mass, axis=-1, keepdims=True)


def _hidden_field(spec, v):
    """Natural parameters of every hidden conditional, shape (..., p, 2)."""
    r = spec.r(v)
    return spec.lam + np.einsum("...ia,iajb->...jb", r, spec.J)


def _visible_field(spec, h):
    s = spec.s(h)
    return spec.theta + np.einsum("...jb,iajb->...ia", s, spec.J)


def conditional_density_1d(unit, other_state, spec, grid):
    """Discretized one-dimensional conditional of a single unit.

    Parameters
    ----------
    unit : tuple
        ``("hidden", j)`` or ``("visible", i)``.
    other_state : array-like
        State of the opposite layer.
    spec : EfhSpec
    grid : GridDomain

    Returns
    -------
    ndarray of shape (grid.K,)
        Probability masses on ``grid.points`` (trapezoid-weighted, sums to 1).
    """
    layer, idx = unit
    x = grid.points
    if layer == "hidden":
        nat = _hidden_field(spec, np.asarray(other_state, dtype=np.float64))[idx]
        stats = spec.s(x[:, None])[:, 0, :]
    elif layer == "visible":
        nat = _visible_field(spec, np.asarray(other_state, dtype=np.float64))[idx]
        stats = spec.r(x[:, None])[:, 0, :]
    else:
        raise ValueError(f"unit layer must be 'hidden' or 'visible', got {layer!r}")
    return _grid_probs(stats @ nat, grid, f"{layer} unit {idx}")


def _layer_probs(spec, other, grid, layer):
    """Conditional masses for every unit of a layer, batched: (n, units, K)."""
    x = grid.points
    if layer == "hidden":
        nat = _hidden_field(spec, other)
        stats = spec.s(x[:, None])[:, 0, :]
    else:
        nat = _visible_field(spec, other)
        stats = spec.r(x[:, None])[:, 0, :]
    return _grid_probs(np.einsum("...ub,kb->...uk", nat, stats), grid, f"{layer} layer")


def _inverse_cdf(probs, grid, rng):
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,))
    idx = np.minimum(np.sum(cdf < u, axis=-1), grid.K - 1)
    return grid.points[idx]


def hidden_conditional_means(spec, v, grid, fn=None):
    """``E[fn(h_j) | v]`` on the grid for every hidden unit; ``fn`` defaults to ``f``."""
    fn = spec.lag.F.deriv if fn is None else fn
    probs = _layer_probs(spec, np.asarray(v, dtype=np.float64), grid, "hidden")
    return probs @ fn(grid.points)


def gibbs_step(state, spec, grids, rng):
    """One block-Gibbs sweep: all hidden units given ``v``, then all visible given the new ``h``.

    ``state`` is ``(v, h)`` with single states or batches of chains;
    ``grids`` is ``(hidden_grid, visible_grid)``.
    """
    v, _ = state
    hgrid, vgrid = grids
    rng = check_rng(rng)
    h = _inverse_cdf(_layer_probs(spec, np.asarray(v, dtype=np.float64), hgrid, "hidden"), hgrid, rng)
    v = _inverse_cdf(_layer_probs(spec, h, vgrid, "visible"), vgrid, rng)
    return v, h


def _grid_ok(fn):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GridWarning)
        out = fn()
    return not any(issubclass(w.category, GridWarning) for w in caught), out


def auto_grids(spec, data, grid=None, max_widenings=4):
    """Widen a starting grid until the data conditionals pass the boundary check.

    The hidden grid is widened until ``p(h | v)`` is negligible at its ends
    for every data vector; the visible grid likewise for ``p(v | h)`` at
    the conditional-mean hidden states. Gives up silently after
    ``max_widenings`` doublings; later sampling then warns as usual.
    """
    grid = grid or GridDomain()
    data = check_batch(data, spec.n_visible)
    hgrid = grid
    for _ in range(max_widenings):
        ok, _ = _grid_ok(lambda: _layer_probs(spec, data, hgrid, "hidden"))
        if ok:
            break
        hgrid = hgrid.widened()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridWarning)
        h = hidden_conditional_means(spec, data, hgrid, fn=_identity)
    vgrid = grid
    for _ in range(max_widenings):
        ok, _ = _grid_ok(lambda: _layer_probs(spec, h, vgrid, "visible"))
        if ok:
            break
        vgrid = vgrid.widened()
    return hgrid, vgrid


def cd_gradient(batch, xi, lag, beta, k, grids, rng):
    """CD-k estimate of the mean log-likelihood gradient with respect to ``Xi``.

    ``beta * (<f(h) g(v)>_data - <f(h) g(v)>_k)``: the data phase uses
    the exact grid expectation of ``f(h)`` given each data vector; the
    model phase runs ``k`` block-Gibbs sweeps from the data and again
    averages ``f(h)`` exactly given the final visible state.
    """
    batch = check_batch(batch, xi.shape[1])
    spec = to_efh(xi, lag, beta)
    hgrid, _ = grids
    rng = check_rng(rng)
    g = lag.G.deriv
    pos = hidden_conditional_means(spec, batch, hgrid).T @ g(batch)
    v = batch
    h = None
    for _ in range(k):
        v, h = gibbs_step((v, h), spec, grids, rng)
    neg = hidden_conditional_means(spec, v, hgrid).T @ g(v)
    return beta * (pos - neg) / batch.shape[0]


def cd_k(data, xi, lag, beta, k, cfg, grids=None):
    """Train model-A memories by CD-k with the shared minibatch loop.

    Without explicit ``grids`` the default grid is widened by
    :func:`auto_grids` at the initial memories.

    The per-epoch objective is the mean squared difference between the
    data and its ``k``-step reconstruction; NLL is intractable here.
    """
    data = check_batch(data)
    xi = check_memory(xi).copy()
    if max(xi.shape) > 8:
        raise ValueError(f"cd_k is meant for tiny models (N, p <= 8), got {xi.shape}")
    if grids is None:
        grids = auto_grids(to_efh(xi, lag, beta), data)
    if max(g.K for g in grids) > 128:
        raise ValueError("grid size K must not exceed 128")
    if isinstance(cfg, dict):
        cfg = TrainConfig.from_mapping(cfg)
    rng = np.random.default_rng(cfg.seed)
    velocity = np.zeros_like(xi)
    report = TrainReport()
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(data.shape[0])
        for start in range(0, data.shape[0], cfg.batch_size):
            batch = data[order[start:start + cfg.batch_size]]
            ascent = cd_gradient(batch, xi, lag, beta, k, grids, rng)
            step = -ascent + (cfg.weight_decay * xi if cfg.weight_decay else 0.0)
            velocity = cfg.momentum * velocity - cfg.learning_rate * step
            xi = xi + velocity
        spec = to_efh(xi, lag, beta)
        v, h = data, None
        for _ in range(k):
            v, h = gibbs_step((v, h), spec, grids, rng)
        value = float(np.mean(np.sum((data - v) ** 2, axis=1)))
        if not math.isfinite(value) or not np.all(np.isfinite(xi)):
            raise TrainingDivergedError(f"CD training diverged at epoch {epoch}")
        report.objectives.append(value)
        report.seconds.append(time.perf_counter() - t0)
    report.xi = xi
    return report


# -- binary container ---------------------------------------------------------

_EFH_MAGIC = b"EFH1"


def efh_to_bytes(spec):
    """``EFH1 | u32 p | u32 N | u8-len F name | u8-len G name | theta | lam | J`` (little-endian f64)."""
    f_name = spec.lag.F.name.encode()
    g_name = spec.lag.G.name.encode()
    head = struct.pack("<4sII", _EFH_MAGIC, spec.n_hidden, spec.n_visible)
    head += struct.pack("<B", len(f_name)) + f_name + struct.pack("<B", len(g_name)) + g_name
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in (spec.theta, spec.lam, spec.J))
    return head + body


def efh_from_bytes(buf):
    if len(buf) < 12 or buf[:4] != _EFH_MAGIC:
        raise FormatError("missing EFH1 magic", offset=0)
    p, n = struct.unpack_from("<II", buf, 4)
    off = 12
    names = []
    for _ in range(2):
        ln = buf[off]
        names.append(buf[off + 1:off + 1 + ln].decode())
        off += 1 + ln
    sizes = [(n, 2), (p, 2), (n, 2, p, 2)]
    arrays = []
    for shape in sizes:
        count = int(np.prod(shape))
        if len(buf) < off + 8 * count:
            raise FormatError("truncated EFH1 payload", offset=len(buf))
        arrays.append(np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape).copy())
        off += 8 * count
    return EfhSpec(*arrays, LagrangianPair.from_names(*names))
