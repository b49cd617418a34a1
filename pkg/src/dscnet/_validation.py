"""Input checks shared by the estimators, training loops and CLI."""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import ConfigError, ShapeError

INTENSITY_TOL = 1e-9


def check_images(X, image_shape=None, require_unit_range=True):
    """Coerce ``X`` to a float64 ``(N, 1, H, W)`` batch.

    Accepts ``(N, H, W)``, ``(N, 1, H, W)`` or flat ``(N, H*W)`` input; the
    last form needs ``image_shape``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        if image_shape is None:
            raise ShapeError("flat input needs image_shape=(H, W)")
        X = check_array(X, dtype=np.float64)
        h, w = image_shape
        if X.shape[1] != h * w:
            raise ShapeError(f"rows have {X.shape[1]} features, image_shape {h}x{w} needs {h * w}")
        X = X.reshape(-1, 1, h, w)
    elif X.ndim == 3:
        X = X[:, None]
    elif X.ndim != 4 or X.shape[1] != 1:
        raise ShapeError(f"expected grayscale images (N, 1, H, W), got shape {X.shape}")
    if image_shape is not None and tuple(X.shape[2:]) != tuple(image_shape):
        raise ShapeError(f"images are {X.shape[2:]}, expected {tuple(image_shape)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains NaN or infinity")
    if require_unit_range and (X.min() < -INTENSITY_TOL or X.max() > 1 + INTENSITY_TOL):
        raise ValueError("image intensities must lie in [0, 1]")
    return np.ascontiguousarray(X)


def check_square(M, name="matrix"):
    M = check_array(M, dtype=np.float64)
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {M.shape}")
    return M


def check_n_clusters(K, n_samples, minimum=2):
    if not isinstance(K, numbers.Integral) or K < minimum:
        raise ConfigError(f"number of clusters must be an integer >= {minimum}, got {K!r}")
    if K > n_samples:
        raise ConfigError(f"number of clusters {K} exceeds number of samples {n_samples}")
    return int(K)


def check_labels(labels, name="labels"):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {labels.shape}")
    return labels
