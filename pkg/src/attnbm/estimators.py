"""scikit-learn estimators wrapping the functional API."""

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import check_rng
from .data import ZcaTransform, apply_zca, fit_zca
from .efh import GridDomain, LagrangianPair, cd_k, hidden_conditional_means, to_efh
from .energy import AttnBMModel, log_likelihood, softmax
from .gmm import sample as gmm_sample
from .gmm import to_gmm
from .hopfield import update_step
from .reconstruction import PartialObservation, impute_mean, reassemble
from .training import TrainConfig, init_memory, sgd_mle, train_dsm

__all__ = ["AttentionalBoltzmannMachine", "ModelABoltzmannMachine", "ZCAWhitening"]


class AttentionalBoltzmannMachine(DensityMixin, TransformerMixin, BaseEstimator):
    """Attentional Boltzmann machine trained by exact likelihood or DSM.

    Parameters
    ----------
    n_components : int, default=100
        Number of memories (hidden units) ``p``.
    beta : int, default=1
        Positive integer inverse temperature. DSM training uses ``beta = 1``.
    objective : {"mle", "dsm"}, default="mle"
        Exact maximum likelihood or denoising score matching.
    learning_rate : float, default=0.01
    batch_size : int, default=5
    n_epochs : int, default=10
    momentum : float, default=0.0
    weight_decay : float, default=0.0
    noise_std : float, default=1.0
        Corruption level for ``objective="dsm"``.
    init_std : float, default=0.01
        Standard deviation of the normal initial memories.
    random_state : int, RandomState instance or None, default=None

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
        Learned memory matrix.
    model_ : AttnBMModel
    objective_curve_ : list of float
        Training objective after every epoch.
    n_features_in_ : int
    """

    def __init__(self, n_components=100, beta=1, objective="mle", learning_rate=0.01,
                 batch_size=5, n_epochs=10, momentum=0.0, weight_decay=0.0,
                 noise_std=1.0, init_std=0.01, random_state=None):
        self.n_components = n_components
        self.beta = beta
        self.objective = objective
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.noise_std = noise_std
        self.init_std = init_std
        self.random_state = random_state

    def _config(self, seed):
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           epochs=self.n_epochs, momentum=self.momentum,
                           weight_decay=self.weight_decay, seed=seed,
                           objective=self.objective, noise_std=self.noise_std)

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        rng = check_rng(self.random_state)
        init = init_memory(self.n_components, X.shape[1], rng, std=self.init_std)
        cfg = self._config(int(rng.integers(2**31 - 1)))
        if cfg.objective == "mle":
            report = sgd_mle(X, init, cfg, beta=self.beta)
        else:
            if self.beta != 1:
                raise ValueError("DSM training is defined for beta = 1")
            report = train_dsm(X, init, cfg)
        self.report_ = report
        self.components_ = report.xi
        self.model_ = AttnBMModel(report.xi, self.beta)
        self.objective_curve_ = list(report.objectives)
        return self

    def score_samples(self, X):
        """Exact log-likelihood of each sample."""
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return np.atleast_1d(log_likelihood(X, self.model_))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def transform(self, X):
        """Attention weights ``softmax(Xi v)`` of every sample, shape (n, n_components)."""
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return softmax(X @ self.components_.T, axis=1)

    def to_gmm(self):
        check_is_fitted(self)
        return to_gmm(self.model_)

    def sample(self, n_samples=1, random_state=None):
        """Draw samples from the fitted density."""
        return gmm_sample(self.to_gmm(), check_rng(random_state), n_samples)[0]

    def retrieve(self, X, n_steps=1):
        """Apply ``n_steps`` attention updates to each row of ``X``."""
        check_is_fitted(self)
        V = validate_data(self, X, dtype=np.float64, reset=False)
        for _ in range(n_steps):
            V = update_step(V, self.components_)
        return V

    def impute(self, X, mask):
        """Fill unobserved entries (``mask == False``) with the conditional mean.

        Defined for positive integer ``beta``. Rows with no missing entry are returned
        unchanged.
        """
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != X.shape:
            raise ValueError(f"mask shape {mask.shape} does not match X {X.shape}")
        out = X.copy()
        for n, (row, m) in enumerate(zip(X, mask)):
            if m.all():
                continue
            if not m.any():
                out[n] = self.to_gmm().mean()
                continue
            obs = PartialObservation.from_vector(row, m)
            out[n] = reassemble(obs, impute_mean(self.model_, obs))
        return out


class ModelABoltzmannMachine(TransformerMixin, BaseEstimator):
    """Model-A (EFH) Boltzmann machine trained by CD-k on gridded conditionals.

    Intended for tiny models: at most 8 visible and 8 hidden units.

    Parameters
    ----------
    n_components : int, default=2
    hidden : str, default="square"
        Hidden Lagrangian preset (identity, square, power_<n>, softplus).
    visible : {"square", "abs"}, default="square"
    beta : float, default=1.0
    k : int, default=1
        Gibbs sweeps per CD estimate.
    learning_rate, batch_size, n_epochs : see :class:`AttentionalBoltzmannMachine`
    grid_size : int, default=64
    grid_radius : float, default=8.0
    init_std : float, default=0.01
    random_state : int or None
    """

    def __init__(self, n_components=2, hidden="square", visible="square", beta=1.0, k=1,
                 learning_rate=0.01, batch_size=5, n_epochs=10, grid_size=64,
                 grid_radius=8.0, init_std=0.01, random_state=None):
        self.n_components = n_components
        self.hidden = hidden
        self.visible = visible
        self.beta = beta
        self.k = k
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.grid_size = grid_size
        self.grid_radius = grid_radius
        self.init_std = init_std
        self.random_state = random_state

    def _grids(self):
        g = GridDomain(-self.grid_radius, self.grid_radius, self.grid_size)
        return g, g

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        rng = check_rng(self.random_state)
        lag = LagrangianPair.from_names(self.hidden, self.visible)
        init = init_memory(self.n_components, X.shape[1], rng, std=self.init_std)
        cfg = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                          epochs=self.n_epochs, seed=int(rng.integers(2**31 - 1)))
        report = cd_k(X, init, lag, self.beta, self.k, cfg, grids=self._grids())
        self.report_ = report
        self.components_ = report.xi
        self.lagrangians_ = lag
        return self

    def transform(self, X):
        """Conditional hidden activations ``E[f(h_j) | v]``."""
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        spec = to_efh(self.components_, self.lagrangians_, self.beta)
        return hidden_conditional_means(spec, X, self._grids()[0])


class ZCAWhitening(TransformerMixin, BaseEstimator):
    """ZCA whitening ``(x - mean) U (Lambda + epsilon I)^(-1/2) U^T``.

    Parameters
    ----------
    epsilon : float, default=1e-5
        Eigenvalue regularizer.
    """

    def __init__(self, epsilon=1e-5):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        self.transform_ = fit_zca(X, self.epsilon)
        self.mean_ = self.transform_.mean
        self.whitening_ = self.transform_.matrix
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return apply_zca(self.transform_, X)

    def inverse_transform(self, X):
        check_is_fitted(self)
        return np.asarray(X, dtype=np.float64) @ np.linalg.inv(self.whitening_) + self.mean_

    @classmethod
    def from_transform(cls, t):
        """Wrap an existing :class:`ZcaTransform` as a fitted estimator."""
        if not isinstance(t, ZcaTransform):
            raise TypeError("expected a ZcaTransform")
        est = cls(t.epsilon)
        est.transform_ = t
        est.mean_ = t.mean
        est.whitening_ = t.matrix
        est.n_features_in_ = t.mean.shape[0]
        return est
