"""Missing-pixel reconstruction from the model's conditional distribution.

Splitting ``v = [v_o; v_m]`` into observed and missing coordinates, the
beta = 1 conditional ``p(v_m | v_o)`` is again a unit-variance Gaussian
mixture with means ``xi_{mu,m}`` and weights
``softmax(xi_{mu,o}^T v_o + |xi_{mu,m}|^2 / 2)``. Integer beta > 1 is
reduced to this case with :func:`~attnbm.gmm.expand_beta`.
"""

import csv
from dataclasses import dataclass

import numpy as np

from ._io import text_output
from ._validation import check_batch, check_rng
from .energy import AttnBMModel, _require_integer, softmax
from .gmm import GaussianMixture, expand_beta, to_gmm
from .hopfield import retrieve
from .training import TrainConfig, init_memory, sgd_mle

__all__ = [
    "PartialObservation",
    "conditional_mixture",
    "impute_mean",
    "reassemble",
    "corrupt",
    "mse",
    "SweepRow",
    "mse_vs_samplesize_sweep",
    "write_sweep_csv",
]


@dataclass(frozen=True)
class PartialObservation:
    """A boolean mask (True = observed) and the observed values in mask order."""

    mask: np.ndarray
    v_o: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool).copy()
        v_o = np.asarray(self.v_o, dtype=np.float64).copy()
        if mask.ndim != 1 or v_o.ndim != 1:
            raise ValueError("mask and v_o must be 1-d")
        if v_o.shape[0] != int(mask.sum()):
            raise ValueError(f"{v_o.shape[0]} observed values for {int(mask.sum())} observed coordinates")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "v_o", v_o)

    @classmethod
    def from_vector(cls, v, mask):
        v = np.asarray(v, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        return cls(mask, v[mask])


def _conditional_weights(model, obs):
    """Mixture weights, missing-coordinate rows of the beta = 1 memories, and scale."""
    _require_integer(model)
    mask = obs.mask
    if mask.shape[0] != model.n_features:
        raise ValueError(f"mask has length {mask.shape[0]}, model has N={model.n_features}")
    if mask.all() or not mask.any():
        raise ValueError("mask must have at least one observed and one missing coordinate")
    # p[Xi, beta](v) is proportional to p[Xi', 1](scale * v)
    xi, scale = expand_beta(model)
    xi_o, xi_m = xi[:, mask], xi[:, ~mask]
    logits = xi_o @ (scale * obs.v_o) + 0.5 * np.sum(xi_m * xi_m, axis=1)
    return softmax(logits), xi_m, scale


def conditional_mixture(model, obs):
    """``p(v_m | v_o)`` as a :class:`GaussianMixture` over the missing coordinates.

    Components have variance ``1 / beta``.
    """
    w, xi_m, scale = _conditional_weights(model, obs)
    return GaussianMixture(w, xi_m / scale, 1.0 / scale**2)


def impute_mean(model, obs):
    """Conditional mean of the missing coordinates."""
    w, xi_m, scale = _conditional_weights(model, obs)
    return (w @ xi_m) / scale


def reassemble(obs, v_m):
    """Full-length vector with observed values and ``v_m`` in the missing slots."""
    v_m = np.asarray(v_m, dtype=np.float64)
    if v_m.shape[0] != int((~obs.mask).sum()):
        raise ValueError("v_m length does not match the number of missing coordinates")
    out = np.empty(obs.mask.shape[0])
    out[obs.mask] = obs.v_o
    out[~obs.mask] = v_m
    return out


def corrupt(v, drop_prob, rng):
    """Zero each coordinate independently with probability ``drop_prob``.

    Returns the corrupted copy and the mask of surviving coordinates.
    """
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError(f"drop_prob must lie in [0, 1], got {drop_prob}")
    v = np.asarray(v, dtype=np.float64)
    mask = check_rng(rng).random(v.shape) >= drop_prob
    return np.where(mask, v, 0.0), mask


def mse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


@dataclass(frozen=True)
class SweepRow:
    P: int
    mse_conditional: float
    mse_hopfield: float


def _reconstruct_pair(model, v, drop_prob, rng, hopfield_iters=1):
    """Conditional-mean and Hopfield reconstructions of one corrupted sample.

    The Hopfield reconstruction runs at most ``hopfield_iters`` updates
    from the corrupted vector; the default is a single update.
    """
    corrupted, mask = corrupt(v, drop_prob, rng)
    if mask.all():
        cond = corrupted
    elif not mask.any():
        # nothing observed: fall back to the unconditional mixture mean
        cond = to_gmm(model).mean()
    else:
        obs = PartialObservation.from_vector(corrupted, mask)
        cond = reassemble(obs, impute_mean(model, obs))
    return cond, retrieve(corrupted, model.xi, max_iters=hopfield_iters).final_state, corrupted


def mse_vs_samplesize_sweep(dataset, sizes, cfg, n_hidden=100, drop_prob=0.8,
                            n_eval=50, init_std=0.01, seeds=(0,), hopfield_iters=1):
    """Reconstruction error as a function of the training-set size.

    For each ``P`` the first ``P`` rows of ``dataset`` train a fresh model
    by exact SGD; up to ``n_eval`` training samples are corrupted and
    reconstructed by the conditional mean and by Hopfield retrieval
    (``hopfield_iters`` updates, one by default). Errors are averaged over
    samples and over ``seeds``.
    """
    data = check_batch(dataset)
    rows = []
    for P in sizes:
        if not 1 <= P <= data.shape[0]:
            raise ValueError(f"sample size {P} outside [1, {data.shape[0]}]")
        cond_err, hop_err = [], []
        for seed in seeds:
            rng = np.random.default_rng([seed, P])
            train = data[:P]
            run_cfg = TrainConfig(**{**cfg.__dict__, "seed": int(seed)})
            init = init_memory(n_hidden, data.shape[1], rng, std=init_std)
            model = AttnBMModel(sgd_mle(train, init, run_cfg).xi, 1)
            picks = rng.choice(P, size=min(n_eval, P), replace=False)
            for i in picks:
                cond, hop, _ = _reconstruct_pair(model, train[i], drop_prob, rng, hopfield_iters)
                cond_err.append(mse(train[i], cond))
                hop_err.append(mse(train[i], hop))
        rows.append(SweepRow(int(P), float(np.mean(cond_err)), float(np.mean(hop_err))))
    return rows


def write_sweep_csv(path, rows):
    with text_output(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["P", "mse_conditional", "mse_hopfield"])
        for r in rows:
            w.writerow([r.P, repr(r.mse_conditional), repr(r.mse_hopfield)])

