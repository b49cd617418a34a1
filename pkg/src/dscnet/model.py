"""Convolutional auto-encoder with a self-expressive layer.

The network maps a batch of ``N`` images through stride-2 convolutions, flattens
each sample to a latent row ``z_i`` (channel-major, then row-major over space),
multiplies the stacked codes by the ``N x N`` coefficient matrix ``C`` and
decodes the result with mirrored transposed convolutions.

Rows are samples throughout, so the self-expressive layer computes ``C @ Z``:
entry ``C[i, j]`` is the weight of sample ``j`` in the reconstruction of
sample ``i``'s code.
"""

import io
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .diffcore import Graph, ceil_chain
from .exceptions import ConfigError, FormatError, ShapeError

ALLOWED_KERNELS = (1, 3, 5, 7)
REGULARIZERS = ("L1", "L2")
C_INIT_SCALE = 1e-8
CHECKPOINT_MAGIC = b"DSCNET1\n"


@dataclass(frozen=True)
class LayerSpec:
    kernel_size: int
    channels: int

    def __post_init__(self):
        if self.kernel_size not in ALLOWED_KERNELS:
            raise ConfigError(f"kernel size must be one of {ALLOWED_KERNELS}, got {self.kernel_size}")
        if int(self.channels) < 1:
            raise ConfigError(f"channel count must be >= 1, got {self.channels}")


@dataclass(frozen=True)
class ModelConfig:
    """Declarative description of a subspace clustering network.

    ``zero_diag=None`` means "constrain diag(C) to zero for the L1 regularizer
    only", which is the default behaviour for both network variants.
    """

    encoder_layers: tuple
    input_hw: tuple
    dataset_size: int
    regularizer: str = "L2"
    zero_diag: bool | None = None
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        layers = tuple(
            layer if isinstance(layer, LayerSpec) else LayerSpec(*layer) for layer in self.encoder_layers
        )
        object.__setattr__(self, "encoder_layers", layers)
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        if not layers:
            raise ConfigError("at least one encoder layer is required")
        if len(self.input_hw) != 2 or min(self.input_hw) < 1:
            raise ConfigError(f"input_hw must be two positive ints, got {self.input_hw}")
        if int(self.dataset_size) < 2:
            raise ConfigError(f"dataset_size must be >= 2, got {self.dataset_size}")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be nonnegative")

    @classmethod
    def from_layers(cls, kernels, channels, input_hw, dataset_size, **kwargs):
        if len(kernels) != len(channels):
            raise ConfigError("kernels and channels must have the same length")
        layers = tuple(LayerSpec(int(k), int(c)) for k, c in zip(kernels, channels))
        return cls(layers, tuple(input_hw), int(dataset_size), **kwargs)

    @property
    def enforce_zero_diag(self):
        if self.zero_diag is None:
            return self.regularizer == "L1"
        return bool(self.zero_diag)

    @property
    def kernels(self):
        return [layer.kernel_size for layer in self.encoder_layers]

    @property
    def channels(self):
        return [layer.channels for layer in self.encoder_layers]

    @property
    def spatial_chain(self):
        """Encoder input sizes per layer followed by the latent size, as (H, W) pairs."""
        n = len(self.encoder_layers)
        return list(zip(ceil_chain(self.input_hw[0], n), ceil_chain(self.input_hw[1], n)))

    @property
    def latent_shape(self):
        h, w = self.spatial_chain[-1]
        return self.channels[-1], h, w

    @property
    def latent_dim(self):
        c, h, w = self.latent_shape
        return c * h * w

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return ModelConfig.from_dict(data)

    def to_dict(self):
        data = asdict(self)
        data["kernels"] = self.kernels
        data["channels"] = self.channels
        del data["encoder_layers"]
        data["input_hw"] = list(self.input_hw)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        return cls.from_layers(
            data.pop("kernels"),
            data.pop("channels"),
            data.pop("input_hw"),
            data.pop("dataset_size"),
            **{k: data[k] for k in ("regularizer", "zero_diag", "lambda1", "lambda2") if k in data},
        )


# Architectures of the four reference benchmarks.
PRESETS = {
    "yaleb": dict(kernels=[5, 3, 3], channels=[10, 20, 30], input_hw=[42, 42], dataset_size=2432),
    "orl": dict(
        kernels=[5, 3, 3], channels=[5, 3, 3], input_hw=[32, 32], dataset_size=400, lambda1=1.0, lambda2=0.2
    ),
    "coil20": dict(kernels=[3], channels=[15], input_hw=[32, 32], dataset_size=1440, lambda1=1.0, lambda2=30.0),
    "coil100": dict(kernels=[5], channels=[50], input_hw=[32, 32], dataset_size=7200, lambda1=1.0, lambda2=30.0),
}


def preset(name, **overrides):
    """Return the :class:`ModelConfig` of a named benchmark architecture."""
    try:
        data = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    data.update(overrides)
    return ModelConfig.from_dict(data)


def count_params(config):
    """Per-layer trainable parameter counts (weights plus biases).

    Encoder layer ``i`` holds ``k_i^2 n_{i-1} n_i + n_i`` parameters with
    ``n_0 = 1``; its mirrored decoder layer maps ``n_i`` back to ``n_{i-1}``
    channels and therefore carries ``n_{i-1}`` biases.
    """
    chans = [1] + config.channels
    encoder = [k * k * chans[i] * chans[i + 1] + chans[i + 1] for i, k in enumerate(config.kernels)]
    decoder = [k * k * chans[i] * chans[i + 1] + chans[i] for i, k in enumerate(config.kernels)][::-1]
    self_expressive = int(config.dataset_size) ** 2
    return {
        "encoder": encoder,
        "self_expressive": self_expressive,
        "decoder": decoder,
        "autoencoder_total": sum(encoder) + sum(decoder),
        "total": sum(encoder) + sum(decoder) + self_expressive,
    }


@dataclass
class ModelParams:
    """Named parameter tensors; ``"self_expressive.C"`` is absent after pre-training."""

    tensors: dict = field(default_factory=dict)

    C_NAME = "self_expressive.C"

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    @property
    def has_self_expressive(self):
        return self.C_NAME in self.tensors

    @property
    def C(self):
        return self.tensors[self.C_NAME]

    def autoencoder(self):
        return ModelParams({k: v.copy() for k, v in self.tensors.items() if k != self.C_NAME})


def encoder_name(i, part):
    return f"encoder.{i}.{part}"


def decoder_name(j, part):
    return f"decoder.{j}.{part}"


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def init_params(config, seed=0, self_expressive=True):
    """Initial weights: He-uniform kernels, zero biases, near-zero ``C``."""
    rng = np.random.default_rng(seed)
    chans = [1] + config.channels
    params = ModelParams()
    for i, k in enumerate(config.kernels):
        cin, cout = chans[i], chans[i + 1]
        params[encoder_name(i, "weight")] = _he_uniform(rng, (cout, cin, k, k), cin * k * k)
        params[encoder_name(i, "bias")] = np.zeros(cout)
    n_layers = len(config.kernels)
    for j in range(n_layers):
        i = n_layers - 1 - j
        k, cin, cout = config.kernels[i], chans[i + 1], chans[i]
        params[decoder_name(j, "weight")] = _he_uniform(rng, (cin, cout, k, k), cin * k * k)
        params[decoder_name(j, "bias")] = np.zeros(cout)
    if self_expressive:
        params[ModelParams.C_NAME] = init_coefficients(config, rng)
    return params


def init_coefficients(config, rng):
    n = int(config.dataset_size)
    c = rng.uniform(-C_INIT_SCALE, C_INIT_SCALE, size=(n, n))
    if config.enforce_zero_diag:
        np.fill_diagonal(c, 0.0)
    return c


@dataclass
class ForwardState:
    """Graph and node ids of one forward pass.

    ``zc`` is ``None`` when the self-expressive layer is not part of the pass.
    """

    graph: Graph
    x: int
    z: int
    zc: int
    x_hat: int
    shapes: list
    loss_nodes: dict = None

    @property
    def Z(self):
        return self.graph.value(self.z)

    @property
    def ZC(self):
        return None if self.zc is None else self.graph.value(self.zc)

    @property
    def X(self):
        return self.graph.value(self.x)

    @property
    def X_hat(self):
        return self.graph.value(self.x_hat)


def forward(config, params, X, self_expressive=True, bypass=False, trainable=None):
    """Evaluate the network on the full batch ``X`` and record the graph.

    Parameters
    ----------
    config : ModelConfig
    params : ModelParams
    X : ndarray, shape (N, 1, H, W)
    self_expressive : bool
        Insert the ``C @ Z`` layer. Requires ``params`` to contain ``C``.
    bypass : bool
        Feed ``Z`` rather than ``C @ Z`` to the decoder (the self-expression
        term still sees ``C``). Used to isolate the coefficient problem.
    trainable : set of str, optional
        Parameter names registered for differentiation; others enter the
        graph as constants. Defaults to every tensor in ``params``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if X.ndim != 4 or X.shape[1] != 1 or tuple(X.shape[2:]) != config.input_hw:
        raise ShapeError(f"expected input of shape (N, 1, {config.input_hw[0]}, {config.input_hw[1]}), got {X.shape}")
    if self_expressive and n != config.dataset_size:
        raise ShapeError(f"batch has {n} samples but the self-expressive layer expects {config.dataset_size}")

    graph = Graph()
    names = set(params) if trainable is None else set(trainable)

    def bind(name):
        value = params[name]
        return graph.parameter(name, value) if name in names else graph.constant(value)

    x = graph.constant(X)
    h = x
    shapes = []
    for i in range(len(config.encoder_layers)):
        shapes.append(tuple(graph.value(h).shape[2:]))
        h = graph.relu(graph.conv2d_s2(h, bind(encoder_name(i, "weight")), bind(encoder_name(i, "bias"))))
    latent_shape = graph.value(h).shape[1:]
    z = graph.reshape(h, (n, -1))

    zc = None
    dec_in = z
    if self_expressive:
        if not params.has_self_expressive:
            raise ConfigError("params do not contain a self-expressive layer")
        zc = graph.matmul(bind(ModelParams.C_NAME), z)
        if not bypass:
            dec_in = zc

    h = graph.reshape(dec_in, (n, *latent_shape))
    n_layers = len(config.encoder_layers)
    for j in range(n_layers):
        target = shapes[n_layers - 1 - j]
        h = graph.convT2d_s2(h, bind(decoder_name(j, "weight")), bind(decoder_name(j, "bias")), target)
        if j < n_layers - 1:
            h = graph.relu(h)
    return ForwardState(graph, x, z, zc, h, shapes)


def attach_loss(state, config):
    """Append the loss terms to ``state.graph``; returns the total node id.

    ``recon = 0.5 ||X - X_hat||_F^2``; with a self-expressive layer also
    ``reg = lambda1 ||C||`` (entrywise L1, or squared Frobenius for L2) and
    ``selfexpr = 0.5 lambda2 ||Z - C Z||_F^2``.
    """
    if state.loss_nodes is not None:
        return state.loss_nodes["total"]
    g = state.graph
    recon = g.scale(g.frobenius_sq(g.sub(state.x_hat, state.x)), 0.5)
    nodes = {"recon": recon}
    total = recon
    if state.zc is not None:
        c_node = g.nodes[state.zc].inputs[0]
        norm = g.l1_sum(c_node) if config.regularizer == "L1" else g.frobenius_sq(c_node)
        nodes["reg"] = g.scale(norm, config.lambda1)
        nodes["selfexpr"] = g.scale(g.frobenius_sq(g.sub(state.z, state.zc)), 0.5 * config.lambda2)
        total = g.add(g.add(recon, nodes["reg"]), nodes["selfexpr"])
    nodes["total"] = total
    state.loss_nodes = nodes
    return total


def loss(state, params, config):
    """Loss value and its parts ``{"recon", "reg", "selfexpr"}`` for a forward pass.

    ``params`` is accepted for symmetry with :func:`forward`; the values are
    read from the recorded graph.
    """
    attach_loss(state, config)
    value = {k: float(state.graph.value(nid)) for k, nid in state.loss_nodes.items()}
    parts = {k: value.get(k, 0.0) for k in ("recon", "reg", "selfexpr")}
    return value["total"], parts


def build(config, seed=0, X=None):
    """Initialise parameters and wire the full network.

    When ``X`` is omitted the graph is evaluated on an all-zero batch, which
    is enough to inspect shapes.
    """
    params = init_params(config, seed)
    if X is None:
        X = np.zeros((config.dataset_size, 1, *config.input_hw))
    state = forward(config, params, X)
    return state.graph, params, state


def save_checkpoint(path, config, params):
    """Write ``config`` and ``params`` in the DSCNET1 binary container."""
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(params.tensors)))
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Read a DSCNET1 file; returns ``(config, params)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(path, "truncated checkpoint")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(len(CHECKPOINT_MAGIC))) != CHECKPOINT_MAGIC:
        raise FormatError(path, "not a DSCNET1 checkpoint")
    (blob_len,) = struct.unpack("<Q", take(8))
    try:
        config = ModelConfig.from_dict(json.loads(bytes(take(blob_len)).decode("utf-8")))
    except (ValueError, KeyError) as exc:
        raise FormatError(path, f"bad config block: {exc}") from exc
    (count,) = struct.unpack("<I", take(4))
    params = ModelParams()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(data):
        raise FormatError(path, "trailing bytes after last tensor")
    return config, params
