"""Scikit-learn style wrappers around the forecasting and inpainting routines.

Inputs are graph sequences rather than feature matrices, so these estimators
follow the fit/predict/transform conventions and ``get_params`` but are not
meant for sklearn pipelines or cross-validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from . import baselines, koopman, lcrecon
from .layers import GraphBatch
from .validation import check_horizon, check_mask, check_sequence

__all__ = [
    "GraphKoopmanForecaster",
    "LatentConsistencyImputer",
    "SmoothnessImputer",
    "NearestNeighborImputer",
    "GcnImputer",
    "NotFittedError",
]


class GraphKoopmanForecaster(BaseEstimator):
    """Forecast graph signals by advancing pooled graph embeddings with a learned Koopman matrix.

    Parameters mirror ``GkaeConfig`` and ``TrainConfig``; ``random_state``
    seeds both initialization and training.
    """

    def __init__(self, embed_dim=8, koopman_dim=8, hidden_dim=16, koopman_layers=6,
                 decoder_hidden=32, koopman_init="identity", epochs=200,
                 linearity_length=50, learning_rate=1e-2, detach_koopman_input=True,
                 random_state=0):
        self.embed_dim = embed_dim
        self.koopman_dim = koopman_dim
        self.hidden_dim = hidden_dim
        self.koopman_layers = koopman_layers
        self.decoder_hidden = decoder_hidden
        self.koopman_init = koopman_init
        self.epochs = epochs
        self.linearity_length = linearity_length
        self.learning_rate = learning_rate
        self.detach_koopman_input = detach_koopman_input
        self.random_state = random_state

    def _configs(self, n_nodes):
        seed = int(self.random_state)
        model_cfg = koopman.GkaeConfig(
            n_nodes=n_nodes,
            embed_dim=self.embed_dim,
            koopman_dim=self.koopman_dim,
            hidden_dim=self.hidden_dim,
            koopman_layers=self.koopman_layers,
            decoder_hidden=self.decoder_hidden,
            koopman_init=self.koopman_init,
            seed=seed,
        )
        train_cfg = koopman.TrainConfig(
            epochs=self.epochs,
            linearity_length=self.linearity_length,
            learning_rate=self.learning_rate,
            seed=seed,
            detach_koopman_input=self.detach_koopman_input,
        )
        return model_cfg, train_cfg

    def fit(self, seq, y=None, callback=None):
        """Train on a fully observed sequence (the training window)."""
        seq = check_sequence(seq, min_length=2)
        model_cfg, train_cfg = self._configs(seq.n_nodes)
        self.model_, self.loss_history_ = koopman.train_gkae(seq, train_cfg, model_cfg, callback)
        self.n_nodes_ = seq.n_nodes
        return self

    @classmethod
    def from_model(cls, model: koopman.GkaeModel):
        """Wrap an already trained model, for example one read with ``load_model``."""
        c = model.config
        est = cls(embed_dim=c.embed_dim, koopman_dim=c.koopman_dim, hidden_dim=c.hidden_dim,
                  koopman_layers=c.koopman_layers, decoder_hidden=c.decoder_hidden,
                  koopman_init=c.koopman_init, random_state=c.seed)
        est.model_ = model
        est.loss_history_ = []
        est.n_nodes_ = c.n_nodes
        return est

    def predict(self, seq_prefix, horizon=20):
        """Signals for ``horizon`` steps after the last snapshot, as ``N x horizon``."""
        check_is_fitted(self, "model_")
        return koopman.predict_sequence(self.model_, seq_prefix, check_horizon(horizon))

    def transform(self, seq):
        """Graph embeddings, one row per snapshot."""
        check_is_fitted(self, "model_")
        seq = check_sequence(seq)
        batch = GraphBatch.from_snapshots(seq.snapshots)
        return koopman.encode_graphs(self.model_, batch, seq.signals).value

    def koopman_eigenvalues(self):
        check_is_fitted(self, "model_")
        return np.linalg.eigvals(self.model_.K.value)


class _TransductiveImputer(BaseEstimator):
    """Imputers fit on one sequence and mask and return estimates for that same data.

    ``seq`` carries the graph structure and the signal values; entries the
    mask hides are never read.
    """

    def fit(self, seq, mask):
        seq = check_sequence(seq)
        mask = check_mask(mask, (seq.n_nodes, len(seq)))
        self.estimate_ = self._impute(seq, mask)
        self.mask_ = mask
        return self

    def transform(self, seq=None):
        check_is_fitted(self, "estimate_")
        return self.estimate_.copy()

    def fit_transform(self, seq, mask):
        return self.fit(seq, mask).transform()

    def _impute(self, seq, mask):
        raise NotImplementedError


class LatentConsistencyImputer(_TransductiveImputer):
    """Inpainting by matching a trained GKAE's embeddings and decoder output.

    ``forecaster`` is a fitted ``GraphKoopmanForecaster`` or a bare
    ``GkaeModel``; it is read but never modified.
    """

    def __init__(self, forecaster=None, embed_dim=8, decoder_hidden=32, beta1=1.0, beta2=1e-2,
                 epochs=200, learning_rate=1e-2, random_state=0):
        self.forecaster = forecaster
        self.embed_dim = embed_dim
        self.decoder_hidden = decoder_hidden
        self.beta1 = beta1
        self.beta2 = beta2
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _teacher(self):
        if isinstance(self.forecaster, koopman.GkaeModel):
            return self.forecaster
        if self.forecaster is None:
            raise ValueError("a trained forecaster is required")
        check_is_fitted(self.forecaster, "model_")
        return self.forecaster.model_

    def _impute(self, seq, mask):
        teacher = self._teacher()
        cfg = lcrecon.LcConfig(
            n_nodes=seq.n_nodes,
            embed_dim=self.embed_dim,
            decoder_hidden=self.decoder_hidden,
            beta1=self.beta1,
            beta2=self.beta2,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=int(self.random_state),
        )
        masked = lcrecon.apply_mask(seq, mask)
        self.model_ = lcrecon.LcModel(cfg)
        self.loss_history_ = lcrecon.train_lc(self.model_, teacher, masked, mask)
        return lcrecon.reconstruct(self.model_, masked)


class SmoothnessImputer(_TransductiveImputer):
    """Temporal graph smoothness (``method="tgs"``) or its Sobolev form (``"tgss"``)."""

    def __init__(self, method="tgs", gamma=10.0, max_outer=500, max_backtrack=40, grad_tol=1e-6,
                 sobolev_epsilon=0.1, sobolev_beta=1):
        self.method = method
        self.gamma = gamma
        self.max_outer = max_outer
        self.max_backtrack = max_backtrack
        self.grad_tol = grad_tol
        self.sobolev_epsilon = sobolev_epsilon
        self.sobolev_beta = sobolev_beta

    def _impute(self, seq, mask):
        common = dict(gamma=self.gamma, max_outer=self.max_outer,
                      max_backtrack=self.max_backtrack, grad_tol=self.grad_tol)
        Y = seq.signals * mask.J
        if self.method == "tgs":
            X, info = baselines.tgs_reconstruct(seq, Y, mask, baselines.TgsConfig(**common),
                                                tau=mask.tau, return_info=True)
        elif self.method == "tgss":
            cfg = baselines.TgssConfig(sobolev_epsilon=self.sobolev_epsilon,
                                       sobolev_beta=self.sobolev_beta, **common)
            X, info = baselines.tgss_reconstruct(seq, Y, mask, cfg, tau=mask.tau, return_info=True)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.converged_ = info.converged
        self.n_iter_ = info.iterations
        return X


class NearestNeighborImputer(_TransductiveImputer):
    """Copy each hidden entry from the nearest observed node by hop count."""

    def __init__(self, coords=None):
        self.coords = coords

    def _impute(self, seq, mask):
        return baselines.nni_reconstruct(seq, seq.signals * mask.J, mask, self.coords)


class GcnImputer(_TransductiveImputer):
    """Graph-convolution autoencoder fit to the observed entries."""

    def __init__(self, epochs=500, learning_rate=1e-2, random_state=0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _impute(self, seq, mask):
        X, self.loss_history_ = baselines.gcnae_reconstruct(
            seq, seq.signals * mask.J, mask, epochs=self.epochs, lr=self.learning_rate,
            seed=int(self.random_state), return_history=True)
        return X
