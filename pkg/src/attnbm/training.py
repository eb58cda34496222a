"""Training loops: exact maximum likelihood and denoising score matching.

Both loops share one shape: a seeded shuffle per epoch, minibatches
drawn without replacement, a plain (optionally momentum / weight-decay)
gradient step, and the full-data objective recorded after each epoch.
"""

import csv
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from ._io import text_output
from ._validation import check_batch, check_memory, check_rng
from .energy import DEFAULT_TUPLE_BUDGET, _grad_nll, _mean_nll, softmax
from .exceptions import TrainingDivergedError

__all__ = [
    "TrainConfig",
    "TrainReport",
    "init_memory",
    "sgd_mle",
    "dsm_objective",
    "dsm_grad",
    "train_dsm",
    "parse_config",
    "load_config",
]

_OBJECTIVES = ("mle", "dsm")


@dataclass
class TrainConfig:
    """Hyperparameters of a training run.

    ``objective`` is ``"mle"`` (exact likelihood) or ``"dsm"`` (denoising
    score matching with Gaussian corruption of std ``noise_std``).
    """

    learning_rate: float = 0.01
    batch_size: int = 5
    epochs: int = 10
    momentum: float = 0.0
    weight_decay: float = 0.0
    seed: int = 0
    objective: str = "mle"
    noise_std: float = 1.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.objective not in _OBJECTIVES:
            raise ValueError(f"objective must be one of {_OBJECTIVES}, got {self.objective!r}")
        if not self.noise_std > 0:
            raise ValueError(f"noise_std must be positive, got {self.noise_std}")

    @classmethod
    def from_mapping(cls, mapping):
        """Build from string-valued ``key=value`` pairs, ignoring unknown keys."""
        kwargs = {}
        for f in fields(cls):
            if f.name in mapping:
                raw = mapping[f.name]
                kwargs[f.name] = f.type(raw) if f.type is not int else int(float(raw))
        return cls(**kwargs)


@dataclass
class TrainReport:
    """Per-epoch objective values, final memories and wall-clock times."""

    objectives: list = field(default_factory=list)
    xi: np.ndarray = None
    seconds: list = field(default_factory=list)

    def to_csv(self, path, include_time=True):
        """Write ``epoch,objective[,seconds]`` rows to a path or open text file."""
        with text_output(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "objective", "seconds"] if include_time else ["epoch", "objective"])
            for i, obj in enumerate(self.objectives):
                row = [i + 1, repr(float(obj))]
                if include_time:
                    row.append(f"{self.seconds[i]:.6f}")
                w.writerow(row)


def init_memory(n_memories, n_features, rng=None, std=0.01):
    """I.i.d. normal memories with a small standard deviation."""
    return check_rng(rng).standard_normal((n_memories, n_features)) * std


def _check_finite(value, epoch, cfg):
    if not math.isfinite(value):
        raise TrainingDivergedError(
            f"objective became {value} at epoch {epoch} "
            f"(learning_rate={cfg.learning_rate} is probably too large)")


def _run(data, init, cfg, step_grad, objective):
    data = check_batch(data)
    xi = check_memory(init).copy()
    if xi.shape[1] != data.shape[1]:
        raise ValueError(f"init has {xi.shape[1]} columns, data has {data.shape[1]}")
    rng = np.random.default_rng(cfg.seed)
    velocity = np.zeros_like(xi)
    report = TrainReport()
    n = data.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        # overflow shows up as a non-finite objective, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, cfg.batch_size):
                batch = data[order[start:start + cfg.batch_size]]
                g = step_grad(batch, xi, rng)
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * xi
                velocity = cfg.momentum * velocity - cfg.learning_rate * g
                xi = xi + velocity
            value = objective(data, xi)
        _check_finite(value, epoch, cfg)
        report.objectives.append(value)
        report.seconds.append(time.perf_counter() - t0)
    report.xi = xi
    return report


def sgd_mle(data, init, cfg, beta=1, budget=DEFAULT_TUPLE_BUDGET):
    """Exact SGD on the mean negative log-likelihood.

    Each step follows ``-grad_nll`` of the minibatch, whose negative phase
    is the closed-form gradient of ``log Z``; the reported objective is the
    full-data mean NLL after each epoch.

    Parameters
    ----------
    data : array-like of shape (P, N)
    init : array-like of shape (p, N)
        Initial memory matrix.
    cfg : TrainConfig
    beta : int, default=1
        Positive integer inverse temperature.

    Returns
    -------
    TrainReport
    """
    k = int(beta)
    if k != beta or k < 1:
        raise ValueError(f"sgd_mle needs a positive integer beta, got {beta}")
    return _run(
        data, init, cfg,
        lambda batch, xi, rng: _grad_nll(batch, xi, k, budget),
        lambda d, xi: _mean_nll(d, xi, k, budget),
    )


# -- denoising score matching -------------------------------------------------

def _dsm_loss_grad(xi, clean, noisy, want_grad=True):
    s = softmax(noisy @ xi.T, axis=1)             # (n, p)
    r = s @ xi - clean                             # (n, N)
    loss = float(np.mean(np.sum(r * r, axis=1)))
    if not want_grad:
        return loss, None
    xr = r @ xi.T                                  # (n, p): (Xi r)_mu
    back = s * (xr - np.sum(s * xr, axis=1, keepdims=True))  # (diag(s) - s s^T) Xi r
    grad = 2.0 * (s.T @ r + back.T @ noisy) / clean.shape[0]
    return loss, grad


def _corrupt(clean, noise_std, rng):
    return clean + noise_std * rng.standard_normal(clean.shape)


def dsm_objective(xi, clean_batch, noise_std, rng):
    """Denoising score-matching loss ``mean |Xi^T softmax(Xi v~) - v|^2``.

    ``v~ = v + noise_std * eps`` with standard normal ``eps`` drawn from
    ``rng``; the same seed gives the same corruption as :func:`dsm_grad`.
    """
    xi = check_memory(xi)
    clean = check_batch(clean_batch, xi.shape[1])
    noisy = _corrupt(clean, noise_std, check_rng(rng))
    return _dsm_loss_grad(xi, clean, noisy, want_grad=False)[0]


def dsm_grad(xi, clean_batch, noise_std, rng):
    """Exact gradient of :func:`dsm_objective` under the same noise draw.

    With ``s = softmax(Xi v~)`` and residual ``r = Xi^T s - v`` each sample
    contributes ``2 (s r^T + (diag(s) - s s^T) Xi r v~^T)``.
    """
    xi = check_memory(xi)
    clean = check_batch(clean_batch, xi.shape[1])
    noisy = _corrupt(clean, noise_std, check_rng(rng))
    return _dsm_loss_grad(xi, clean, noisy)[1]


def train_dsm(data, init, cfg):
    """Gradient descent on the DSM loss with fresh noise for every minibatch.

    The per-epoch objective uses one fixed corruption of the full data set
    (derived from ``cfg.seed``) so that epochs are comparable.
    """
    data = check_batch(data)
    eval_noisy = _corrupt(data, cfg.noise_std, np.random.default_rng([cfg.seed, 1]))

    def step_grad(batch, xi, rng):
        return _dsm_loss_grad(xi, batch, _corrupt(batch, cfg.noise_std, rng))[1]

    return _run(data, init, cfg, step_grad,
                lambda d, xi: _dsm_loss_grad(xi, d, eval_noisy, want_grad=False)[0])


# -- key=value config files -------------------------------------------------

def parse_config(text):
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
