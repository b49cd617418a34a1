"""Two-stage training: auto-encoder pre-training, then full-batch fine-tuning.

Both stages run Adam on the whole dataset as a single, fixed batch, so a run
is a deterministic function of (seed, config, schedule, data).
"""

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_images
from .diffcore import backward
from .exceptions import ConfigError, NumericalError
from .model import ModelParams, attach_loss, forward, init_coefficients, init_params, loss

logger = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "total", "recon", "reg", "selfexpr", "seconds")

# Fine-tuning epochs and (lambda1, lambda2) used for the reference benchmarks.
FINETUNE_EPOCHS = {
    "orl": {"L1": 1500, "L2": 700},
    "coil20": {"L1": 30, "L2": 40},
    "coil100": {"L1": 100, "L2": 120},
}
DATASET_LAMBDAS = {"orl": (1.0, 0.2), "coil20": (1.0, 30.0), "coil100": (1.0, 30.0)}


def yaleb_finetune_epochs(n_clusters, regularizer):
    """Epoch rule for ``n_clusters`` Extended Yale B subjects."""
    if regularizer == "L1":
        return 160 + 20 * n_clusters
    if regularizer == "L2":
        return 50 + 25 * n_clusters
    raise ConfigError(f"unknown regularizer {regularizer!r}")


def yaleb_lambdas(n_clusters):
    return 1.0, 10.0 ** (n_clusters / 10.0 - 3.0)


@dataclass
class TrainSchedule:
    """Optimiser settings for one training stage.

    ``lambda1``/``lambda2`` override the model config when given. Early
    stopping triggers when the loss improved by less than ``early_stop_tol``
    (relative) over the last ``early_stop_patience`` epochs; ``None``
    disables it.
    """

    stage: str = "finetune"
    epochs: int = 1000
    learning_rate: float = 1e-3
    lambda1: float | None = None
    lambda2: float | None = None
    n_clusters: int | None = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    early_stop_patience: int | None = None
    early_stop_tol: float = 1e-6

    def __post_init__(self):
        if self.stage not in ("pretrain", "finetune"):
            raise ConfigError(f"stage must be 'pretrain' or 'finetune', got {self.stage!r}")
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")

    @classmethod
    def pretrain_default(cls, **kwargs):
        kwargs.setdefault("epochs", 1000)
        kwargs.setdefault("early_stop_patience", 50)
        return cls(stage="pretrain", **kwargs)

    @classmethod
    def yaleb(cls, n_clusters, regularizer="L2", **kwargs):
        l1, l2 = yaleb_lambdas(n_clusters)
        return cls(
            stage="finetune",
            epochs=yaleb_finetune_epochs(n_clusters, regularizer),
            lambda1=l1,
            lambda2=l2,
            n_clusters=n_clusters,
            **kwargs,
        )

    @classmethod
    def for_dataset(cls, name, regularizer="L2", **kwargs):
        l1, l2 = DATASET_LAMBDAS[name]
        return cls(
            stage="finetune", epochs=FINETUNE_EPOCHS[name][regularizer], lambda1=l1, lambda2=l2, **kwargs
        )

    def apply_to(self, config):
        changes = {}
        if self.lambda1 is not None:
            changes["lambda1"] = float(self.lambda1)
        if self.lambda2 is not None:
            changes["lambda2"] = float(self.lambda2)
        return config.replace(**changes) if changes else config


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, epoch, total, parts, seconds):
        self.records.append(dict(epoch=epoch, total=total, **parts, seconds=seconds))

    @property
    def losses(self):
        return np.array([r["total"] for r in self.records])

    def __len__(self):
        return len(self.records)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
            writer.writeheader()
            for rec in self.records:
                writer.writerow({k: repr(rec[k]) if isinstance(rec[k], float) else rec[k] for k in LOG_FIELDS})

    @classmethod
    def from_csv(cls, path):
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.records.append({k: int(row[k]) if k == "epoch" else float(row[k]) for k in LOG_FIELDS})
        return log


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update of every tensor named in ``grads``.

    ``params`` (a mapping of arrays) and ``state`` are updated in place and
    returned.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        params[name] = params[name] - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def _check_finite(total, parts, epoch, stage):
    if not np.isfinite(total):
        raise NumericalError(
            f"{stage} diverged at epoch {epoch}: total={total!r}, "
            + ", ".join(f"{k}={v!r}" for k, v in parts.items())
        )


def _stalled(losses, patience, tol):
    if patience is None or len(losses) <= patience:
        return False
    before, now = losses[-patience - 1], losses[-1]
    return (before - now) <= tol * abs(before)


def _project_diag(params, config):
    if config.enforce_zero_diag and params.has_self_expressive:
        np.fill_diagonal(params.C, 0.0)


def _run(X, config, params, schedule, trainable, stage, **forward_kw):
    log = TrainLog()
    opt = AdamState()
    losses = []
    for epoch in range(1, int(schedule.epochs) + 1):
        t0 = time.perf_counter()
        state = forward(config, params, X, trainable=trainable, **forward_kw)
        total_node = attach_loss(state, config)
        total, parts = loss(state, params, config)
        _check_finite(total, parts, epoch, stage)
        grads = backward(state.graph, total_node)
        adam_step(params, grads, opt, schedule.learning_rate, schedule.beta1, schedule.beta2, schedule.eps)
        _project_diag(params, config)
        log.append(epoch, total, parts, time.perf_counter() - t0)
        losses.append(total)
        logger.debug("%s epoch %d loss %.6g", stage, epoch, total)
        if _stalled(losses, schedule.early_stop_patience, schedule.early_stop_tol):
            logger.info("%s stopped early at epoch %d", stage, epoch)
            break
    return params, log


def pretrain(X, config, schedule, params=None):
    """Train the plain auto-encoder on ``0.5 ||X - X_hat||_F^2``.

    Parameters
    ----------
    X : array-like, shape (N, 1, H, W)
        Intensities in [0, 1].
    config : ModelConfig
    schedule : TrainSchedule
    params : ModelParams, optional
        Starting point; freshly initialised from ``schedule.seed`` otherwise.

    Returns
    -------
    params : ModelParams
        Encoder and decoder tensors only.
    log : TrainLog
    """
    X = check_images(X, config.input_hw)
    params = init_params(config, schedule.seed, self_expressive=False) if params is None else params.autoencoder()
    return _run(X, config, params, schedule, None, "pretrain", self_expressive=False)


def finetune(X, pretrained, config, schedule, train_autoencoder=True, bypass_self_expression=False, C_init=None):
    """Jointly train encoder, self-expressive layer and decoder.

    The decoder consumes ``C @ Z`` unless ``bypass_self_expression`` is set.
    With ``train_autoencoder=False`` only ``C`` is updated.

    Returns
    -------
    params : ModelParams
        Includes the learned coefficient matrix as ``params.C``.
    log : TrainLog
    """
    config = schedule.apply_to(config)
    X = check_images(X, config.input_hw)
    params = pretrained.autoencoder()
    expected = init_params(config, 0, self_expressive=False)
    for name, value in expected.items():
        if name not in params or params[name].shape != value.shape:
            raise ConfigError(f"pretrained parameter {name!r} missing or shaped differently from config")
    if C_init is None:
        params[ModelParams.C_NAME] = init_coefficients(config, np.random.default_rng(schedule.seed))
    else:
        params[ModelParams.C_NAME] = np.array(C_init, dtype=np.float64)
    _project_diag(params, config)
    trainable = None if train_autoencoder else {ModelParams.C_NAME}
    return _run(X, config, params, schedule, trainable, "finetune", bypass=bypass_self_expression)


def encode(X, config, params):
    """Latent codes ``Z`` (one row per sample) of a trained auto-encoder."""
    X = check_images(X, config.input_hw, require_unit_range=False)
    return forward(config, params, X, self_expressive=False, trainable=set()).Z
