"""Network topology, initialization, forward pass and binary model files.

A network has ``M`` branches. Branch ``m`` maps its input through
``transform_depth`` sigmoid layers to a ``transform_dim`` representation; the
fusion layer sums the linear maps of all branches, and the output layer emits
one sigmoid score per category::

    a_F   = sigmoid(sum_m W_E[m] @ a_E[m] + b_E)
    y_hat = sigmoid(W_out.T @ a_F + b_out)

Transformation layers absorb their bias as the last column of the weight
matrix (a constant-one input dimension). The fusion and output biases are kept
separately so they never enter the relation matrices.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import FormatError, InvalidInputError, ShapeError

MODEL_MAGIC = b"RDNM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    input_dims: tuple
    num_categories: int
    transform_dim: int = 256
    fusion_dim: int = 512
    transform_depth: int = 1

    def __post_init__(self):
        dims = tuple(int(d) for d in self.input_dims)
        object.__setattr__(self, "input_dims", dims)
        if len(dims) < 1 or min(dims) < 1:
            raise InvalidInputError(f"input_dims must be non-empty and positive, got {dims}")
        for name in ("num_categories", "transform_dim", "fusion_dim", "transform_depth"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(getattr(self, name)))

    @property
    def num_modalities(self):
        return len(self.input_dims)

    def layer_shapes(self, m):
        """Shapes of the transformation matrices of branch ``m`` (bias column included)."""
        shapes = []
        d_in = self.input_dims[m]
        for _ in range(self.transform_depth):
            shapes.append((self.transform_dim, d_in + 1))
            d_in = self.transform_dim
        return shapes


@dataclass
class RdnnModel:
    """All weights of a fusion network.

    Attributes
    ----------
    transform_weights : list of list of ndarray
        ``transform_weights[m][l]`` has shape ``(D_out, D_in + 1)``.
    fusion_weights : list of ndarray
        One ``(fusion_dim, transform_dim)`` matrix per modality.
    fusion_bias : ndarray, shape (fusion_dim,)
    output_weights : ndarray, shape (fusion_dim, num_categories)
        Column ``c`` is the weight vector of category ``c``.
    output_bias : ndarray, shape (num_categories,)
    """

    config: NetworkConfig
    transform_weights: list
    fusion_weights: list
    fusion_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: np.ndarray

    def __post_init__(self):
        cfg = self.config
        if len(self.transform_weights) != cfg.num_modalities or len(self.fusion_weights) != cfg.num_modalities:
            raise ShapeError("number of branches does not match config.num_modalities")
        for m in range(cfg.num_modalities):
            got = [w.shape for w in self.transform_weights[m]]
            if got != cfg.layer_shapes(m):
                raise ShapeError(f"branch {m}: transform shapes {got} != {cfg.layer_shapes(m)}")
            if self.fusion_weights[m].shape != (cfg.fusion_dim, cfg.transform_dim):
                raise ShapeError(f"branch {m}: fusion weights have shape {self.fusion_weights[m].shape}")
        if self.fusion_bias.shape != (cfg.fusion_dim,):
            raise ShapeError("fusion bias shape mismatch")
        if self.output_weights.shape != (cfg.fusion_dim, cfg.num_categories):
            raise ShapeError(f"output weights have shape {self.output_weights.shape}")
        if self.output_bias.shape != (cfg.num_categories,):
            raise ShapeError("output bias shape mismatch")

    def matrices(self):
        """Every parameter array in a fixed canonical order.

        The order is: branch transforms (modality-major), fusion weights,
        fusion bias, output weights, output bias. Serialization, gradient sets
        and parameter counting all rely on it.
        """
        out = [w for branch in self.transform_weights for w in branch]
        out.extend(self.fusion_weights)
        out.extend([self.fusion_bias, self.output_weights, self.output_bias])
        return out

    @property
    def n_parameters(self):
        return sum(a.size for a in self.matrices())

    def copy(self):
        return RdnnModel(
            config=self.config,
            transform_weights=[[w.copy() for w in branch] for branch in self.transform_weights],
            fusion_weights=[w.copy() for w in self.fusion_weights],
            fusion_bias=self.fusion_bias.copy(),
            output_weights=self.output_weights.copy(),
            output_bias=self.output_bias.copy(),
        )

    @classmethod
    def from_matrices(cls, config, arrays):
        """Inverse of :meth:`matrices`."""
        arrays = list(arrays)
        pos = 0
        transforms = []
        for m in range(config.num_modalities):
            transforms.append(arrays[pos:pos + config.transform_depth])
            pos += config.transform_depth
        fusion = arrays[pos:pos + config.num_modalities]
        pos += config.num_modalities
        if len(arrays) != pos + 3:
            raise ShapeError(f"expected {pos + 3} arrays, got {len(arrays)}")
        return cls(config, transforms, fusion, *arrays[pos:pos + 3])


@dataclass
class Activations:
    """Forward-pass intermediates for a batch of ``B`` samples.

    ``transform[m]`` lists the outputs of every layer of branch ``m``, starting
    with the raw input, so ``transform[m][-1]`` is the mid-level representation
    a_E^m. Pre-activations are kept for backpropagation.
    """

    transform: list
    transform_pre: list
    fusion_pre: np.ndarray
    fused: np.ndarray
    output_pre: np.ndarray
    output: np.ndarray = field(repr=False)


def sigmoid(x):
    return expit(np.asarray(x, dtype=np.float64))


def _with_ones(a):
    return np.hstack([a, np.ones((a.shape[0], 1))])


def check_features(config, features):
    """Validate per-modality inputs and promote single samples to batches of one."""
    if len(features) != config.num_modalities:
        raise ShapeError(f"expected {config.num_modalities} modalities, got {len(features)}")
    out = []
    n = None
    for m, x in enumerate(features):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != config.input_dims[m]:
            raise ShapeError(f"modality {m}: expected {config.input_dims[m]} features, got shape {x.shape}")
        if n is not None and x.shape[0] != n:
            raise ShapeError("modalities disagree on the number of samples")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError(f"modality {m} has non-finite entries")
        n = x.shape[0]
        out.append(x)
    return out


def forward(model, features):
    """Run the network on ``features`` (one array per modality).

    Each array may be a single vector or a ``(B, D_m)`` batch; the returned
    activations are always batched.
    """
    cfg = model.config
    features = check_features(cfg, features)
    transform, transform_pre = [], []
    z_fusion = model.fusion_bias[None, :]
    for m, x in enumerate(features):
        layers, pres = [x], []
        a = x
        for w in model.transform_weights[m]:
            z = _with_ones(a) @ w.T
            a = expit(z)
            pres.append(z)
            layers.append(a)
        transform.append(layers)
        transform_pre.append(pres)
        z_fusion = z_fusion + a @ model.fusion_weights[m].T
    fused = expit(z_fusion)
    z_out = fused @ model.output_weights + model.output_bias
    return Activations(transform, transform_pre, z_fusion, fused, z_out, expit(z_out))


def predict_scores(model, features):
    """Category scores, shape ``(B, C)``."""
    return forward(model, features).output


def init_model(config, seed):
    """Glorot-uniform weights, zero biases, deterministic in ``seed``.

    Each weight matrix is drawn from ``U[-r, r]`` with
    ``r = sqrt(6 / (fan_in + fan_out))``; absorbed bias columns start at zero.
    """
    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-r, r, size=(fan_out, fan_in))

    transforms = []
    for m in range(config.num_modalities):
        branch = []
        for rows, cols in config.layer_shapes(m):
            w = np.zeros((rows, cols))
            w[:, :-1] = glorot(rows, cols - 1)
            branch.append(w)
        transforms.append(branch)
    fusion = [glorot(config.fusion_dim, config.transform_dim) for _ in range(config.num_modalities)]
    out = glorot(config.num_categories, config.fusion_dim).T.copy()
    return RdnnModel(
        config=config,
        transform_weights=transforms,
        fusion_weights=fusion,
        fusion_bias=np.zeros(config.fusion_dim),
        output_weights=out,
        output_bias=np.zeros(config.num_categories),
    )


# -- binary model files -------------------------------------------------------

def _pack_config(cfg):
    fields = [cfg.num_modalities, *cfg.input_dims, cfg.transform_dim, cfg.fusion_dim,
              cfg.num_categories, cfg.transform_depth]
    return struct.pack(f"<{len(fields)}I", *fields)


def model_to_bytes(model):
    parts = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION), _pack_config(model.config)]
    for a in model.matrices():
        a2 = a.reshape(a.shape[0], -1) if a.ndim == 2 else a.reshape(-1, 1)
        parts.append(struct.pack("<II", *a2.shape))
        parts.append(np.ascontiguousarray(a2, dtype="<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(buf):
    view = memoryview(buf)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError(f"truncated model file while reading {what}", pos)
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MODEL_MAGIC:
        raise FormatError("bad magic, not an RDNM model file", 0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model format version {version}", 4)
    (n_mod,) = struct.unpack("<I", take(4, "config"))
    vals = struct.unpack(f"<{n_mod + 4}I", take(4 * (n_mod + 4), "config"))
    try:
        cfg = NetworkConfig(input_dims=vals[:n_mod], transform_dim=vals[n_mod], fusion_dim=vals[n_mod + 1],
                            num_categories=vals[n_mod + 2], transform_depth=vals[n_mod + 3])
    except InvalidInputError as exc:
        raise FormatError(f"invalid network config: {exc}", 8) from exc
    template = parameter_shapes(cfg)
    arrays = []
    for shape in template:
        start = pos
        rows, cols = struct.unpack("<II", take(8, "matrix header"))
        expect = shape if len(shape) == 2 else (shape[0], 1)
        if (rows, cols) != expect:
            raise FormatError(f"matrix shape {(rows, cols)} does not match config {expect}", start)
        data = np.frombuffer(take(8 * rows * cols, "matrix payload"), dtype="<f8").astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise FormatError("non-finite weight", start)
        arrays.append(data.reshape(shape))
    if pos != len(view):
        raise FormatError("trailing bytes after last matrix", pos)
    return RdnnModel.from_matrices(cfg, arrays)


def parameter_shapes(cfg):
    shapes = [s for m in range(cfg.num_modalities) for s in cfg.layer_shapes(m)]
    shapes += [(cfg.fusion_dim, cfg.transform_dim)] * cfg.num_modalities
    shapes += [(cfg.fusion_dim,), (cfg.fusion_dim, cfg.num_categories), (cfg.num_categories,)]
    return shapes


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
