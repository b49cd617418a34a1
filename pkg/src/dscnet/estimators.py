"""scikit-learn compatible front ends.

:class:`ConvAutoEncoder` is the pre-training stage on its own (a transformer
from images to latent codes); :class:`DeepSubspaceClustering` runs the whole
pipeline and exposes ``labels_`` like any sklearn clusterer.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import diffcore
from ._validation import check_images, check_n_clusters
from .affinity import affinity_lowrank, affinity_plain, threshold_columns
from .exceptions import ConfigError
from .model import ModelConfig, decoder_name
from .spectral import spectral_cluster
from .training import TrainSchedule, encode, finetune, pretrain

AFFINITIES = ("lowrank", "plain")


def cluster_coefficients(C, n_clusters, affinity="lowrank", subspace_dim=4, alpha=1.0, rho=1.0, seed=0, restarts=20):
    """Coefficient matrix -> (affinity, labels)."""
    if affinity not in AFFINITIES:
        raise ConfigError(f"affinity must be one of {AFFINITIES}, got {affinity!r}")
    C = threshold_columns(C, rho)
    if affinity == "lowrank":
        A = affinity_lowrank(C, n_clusters, subspace_dim, alpha)
    else:
        A = affinity_plain(C)
    return A, spectral_cluster(A, n_clusters, seed=seed, restarts=restarts)


class ConvAutoEncoder(TransformerMixin, BaseEstimator):
    """Stride-2 convolutional auto-encoder trained full-batch with Adam.

    Parameters
    ----------
    kernels, channels : sequence of int
        Encoder layer kernel sizes and channel counts; the decoder mirrors them.
    epochs : int
    learning_rate : float
    early_stop_patience : int or None
    image_shape : (int, int), optional
        Needed when ``X`` is passed as flat rows.
    random_state : int

    Attributes
    ----------
    config_ : ModelConfig
    params_ : ModelParams
    log_ : TrainLog
    """

    def __init__(
        self,
        kernels=(3,),
        channels=(15,),
        epochs=1000,
        learning_rate=1e-3,
        early_stop_patience=50,
        image_shape=None,
        random_state=0,
    ):
        self.kernels = kernels
        self.channels = channels
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.early_stop_patience = early_stop_patience
        self.image_shape = image_shape
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_images(X, self.image_shape)
        self.config_ = ModelConfig.from_layers(self.kernels, self.channels, X.shape[2:], max(2, X.shape[0]))
        schedule = TrainSchedule(
            stage="pretrain",
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            early_stop_patience=self.early_stop_patience,
            seed=self.random_state,
        )
        self.params_, self.log_ = pretrain(X, self.config_, schedule)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return encode(X if np.ndim(X) != 2 else check_images(X, self.config_.input_hw), self.config_, self.params_)

    def inverse_transform(self, Z):
        """Decode latent rows back to ``(N, 1, H, W)`` images."""
        check_is_fitted(self, "params_")
        cfg = self.config_
        h = np.asarray(Z, dtype=np.float64).reshape(-1, *cfg.latent_shape)
        chain = cfg.spatial_chain
        n_layers = len(cfg.encoder_layers)
        for j in range(n_layers):
            h = diffcore.convT2d_s2(
                h,
                self.params_[decoder_name(j, "weight")],
                self.params_[decoder_name(j, "bias")],
                chain[n_layers - 1 - j],
            )
            if j < n_layers - 1:
                h = diffcore.relu(h)
        return h


class DeepSubspaceClustering(ClusterMixin, BaseEstimator):
    """Deep subspace clustering network.

    Pre-trains a convolutional auto-encoder, fine-tunes it jointly with an
    ``N x N`` self-expressive layer, turns the learned coefficients into an
    affinity and clusters it spectrally.

    Parameters
    ----------
    n_clusters : int
    kernels, channels : sequence of int
        Encoder architecture.
    regularizer : {"L1", "L2"}
        Norm on the coefficient matrix.
    zero_diag : bool or None
        Constrain ``diag(C) = 0``; ``None`` enables it for L1 only.
    lambda1, lambda2 : float
        Weights of the coefficient norm and of the self-expression residual.
    learning_rate : float
    pretrain_epochs, finetune_epochs : int
    early_stop_patience : int or None
        Applied to pre-training only.
    affinity : {"lowrank", "plain"}
    subspace_dim : int
        Assumed subspace dimension for the low-rank affinity.
    alpha : float
        Elementwise power applied by the low-rank affinity.
    rho : float
        Column threshold applied to the coefficients (1 disables it).
    n_init : int
        k-means restarts.
    image_shape : (int, int), optional
    random_state : int

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
    coef_ : ndarray of shape (n_samples, n_samples)
    affinity_matrix_ : ndarray of shape (n_samples, n_samples)
    latent_ : ndarray
        Encoder output after fine-tuning.
    config_, pretrained_params_, params_, pretrain_log_, finetune_log_
    """

    def __init__(
        self,
        n_clusters=2,
        kernels=(3,),
        channels=(15,),
        regularizer="L2",
        zero_diag=None,
        lambda1=1.0,
        lambda2=1.0,
        learning_rate=1e-3,
        pretrain_epochs=1000,
        finetune_epochs=100,
        early_stop_patience=50,
        affinity="lowrank",
        subspace_dim=4,
        alpha=1.0,
        rho=1.0,
        n_init=20,
        image_shape=None,
        random_state=0,
    ):
        self.n_clusters = n_clusters
        self.kernels = kernels
        self.channels = channels
        self.regularizer = regularizer
        self.zero_diag = zero_diag
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.learning_rate = learning_rate
        self.pretrain_epochs = pretrain_epochs
        self.finetune_epochs = finetune_epochs
        self.early_stop_patience = early_stop_patience
        self.affinity = affinity
        self.subspace_dim = subspace_dim
        self.alpha = alpha
        self.rho = rho
        self.n_init = n_init
        self.image_shape = image_shape
        self.random_state = random_state

    def _config(self, X):
        return ModelConfig.from_layers(
            self.kernels,
            self.channels,
            X.shape[2:],
            X.shape[0],
            regularizer=self.regularizer,
            zero_diag=self.zero_diag,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
        )

    def fit(self, X, y=None, pretrained_params=None):
        """Train on ``X`` and cluster it.

        ``pretrained_params`` skips pre-training and starts fine-tuning from
        the given auto-encoder weights.
        """
        X = check_images(X, self.image_shape)
        check_n_clusters(self.n_clusters, X.shape[0])
        seed = int(self.random_state)
        self.config_ = self._config(X)
        if pretrained_params is None:
            schedule = TrainSchedule(
                stage="pretrain",
                epochs=self.pretrain_epochs,
                learning_rate=self.learning_rate,
                early_stop_patience=self.early_stop_patience,
                seed=seed,
            )
            self.pretrained_params_, self.pretrain_log_ = pretrain(X, self.config_, schedule)
        else:
            self.pretrained_params_, self.pretrain_log_ = pretrained_params.autoencoder(), None
        schedule = TrainSchedule(
            stage="finetune", epochs=self.finetune_epochs, learning_rate=self.learning_rate, seed=seed
        )
        self.params_, self.finetune_log_ = finetune(X, self.pretrained_params_, self.config_, schedule)
        self.coef_ = self.params_.C.copy()
        self.latent_ = encode(X, self.config_, self.params_)
        self.affinity_matrix_, self.labels_ = cluster_coefficients(
            self.coef_,
            self.n_clusters,
            affinity=self.affinity,
            subspace_dim=self.subspace_dim,
            alpha=self.alpha,
            rho=self.rho,
            seed=seed,
            restarts=self.n_init,
        )
        return self
