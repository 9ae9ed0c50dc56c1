"""Alternating training: mini-batch gradient steps on the weights, then
closed-form updates of the feature and class relation matrices once per epoch.

The minimized objective is::

    mean loss + (lambda1/2) sum ||W||_F^2
              + (lambda2/2) tr(W_E Psi^-1 W_E^T)
              + (lambda3/2) tr(W_out Omega^-1 W_out^T)

with ``Psi`` and ``Omega`` symmetric PSD and of unit trace. The weight-decay
sum covers every weight matrix, including the bias columns absorbed into the
transformation layers, but not the separately stored fusion and output biases.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from .exceptions import DivergenceError, InvalidInputError, ShapeError
from .model import NetworkConfig, RdnnModel, _with_ones, check_features, forward, init_model, predict_scores
from .relations import (
    fusion_penalty_gradient,
    initial_relation,
    stack_fusion_weights,
    trace_penalty,
    trace_penalty_gradient,
    update_class_relation,
    update_feature_relation,
)

logger = logging.getLogger(__name__)

MODES = ("rdnn", "rdnn-f", "rdnn-c", "dnn")
LOSSES = ("bce", "squared")
DIVERGENCE_LIMIT = 1e12


@dataclass
class TrainConfig:
    """Optimizer settings.

    ``mode`` zeroes the penalties it excludes: ``rdnn-f`` keeps only the
    feature relation (``lambda3 = 0``), ``rdnn-c`` only the class relation
    (``lambda2 = 0``) and ``dnn`` neither.
    """

    learning_rate: float = 0.7
    lambda1: float = 3e-5
    lambda2: float = 3e-5
    lambda3: float = 3e-5
    batch_size: int = 70
    epochs: int = 10
    eps: float = 1e-6
    seed: int = 0
    loss: str = "bce"
    mode: str = "rdnn"

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.loss not in LOSSES:
            raise InvalidInputError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if not self.learning_rate > 0 or not self.eps > 0:
            raise InvalidInputError("learning_rate and eps must be positive")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise InvalidInputError("regularization weights must be nonnegative")
        if int(self.batch_size) < 1 or int(self.epochs) < 1:
            raise InvalidInputError("batch_size and epochs must be positive integers")
        self.batch_size = int(self.batch_size)
        self.epochs = int(self.epochs)
        if self.mode in ("rdnn-c", "dnn"):
            self.lambda2 = 0.0
        if self.mode in ("rdnn-f", "dnn"):
            self.lambda3 = 0.0

    def to_dict(self):
        return asdict(self)


class GradientSet(RdnnModel):
    """Gradients laid out exactly like the model they belong to."""


@dataclass
class TrainReport:
    objective: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    weight_decay: list = field(default_factory=list)
    feature_penalty: list = field(default_factory=list)
    class_penalty: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    initial: dict = field(default_factory=dict)
    psi: np.ndarray = None
    omega: np.ndarray = None
    config: dict = field(default_factory=dict)

    def record(self, terms, seconds):
        for key in ("objective", "loss", "weight_decay", "feature_penalty", "class_penalty"):
            getattr(self, key).append(terms[key])
        self.epoch_seconds.append(seconds)

    def to_dict(self, include_timing=False):
        """JSON-ready dict. Wall-clock times are left out unless requested so
        that reports of identical runs compare equal byte for byte."""
        out = {
            "config": self.config,
            "seed": self.config.get("seed"),
            "initial": self.initial,
            "epochs": [
                {
                    "epoch": i + 1,
                    "objective": self.objective[i],
                    "loss": self.loss[i],
                    "weight_decay": self.weight_decay[i],
                    "feature_penalty": self.feature_penalty[i],
                    "class_penalty": self.class_penalty[i],
                }
                for i in range(len(self.objective))
            ],
            "psi": None if self.psi is None else self.psi.tolist(),
            "omega": None if self.omega is None else self.omega.tolist(),
        }
        if include_timing:
            out["epoch_seconds"] = list(self.epoch_seconds)
        return out


def loss_and_output_delta(y_hat, y, loss="bce"):
    """Per-sample loss and its gradient w.r.t. the output pre-activation.

    Parameters
    ----------
    y_hat : array_like, shape (C,) or (B, C)
        Sigmoid outputs, strictly inside (0, 1).
    y : array_like
        Binary targets of the same shape.
    loss : {"bce", "squared"}

    Returns
    -------
    loss : float or ndarray
        Summed over categories; one value per row for batched input.
    delta : ndarray
        Same shape as ``y_hat``.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if loss == "bce":
        value = -np.sum(y * np.log(y_hat) + (1 - y) * np.log1p(-y_hat), axis=-1)
    elif loss == "squared":
        value = 0.5 * np.sum((y_hat - y) ** 2, axis=-1)
    else:
        raise InvalidInputError(f"unknown loss {loss!r}")
    return value, _output_delta(y_hat, y, loss)


def _output_delta(y_hat, y, loss):
    if loss == "bce":
        return y_hat - y
    return (y_hat - y) * y_hat * (1 - y_hat)


def _loss_from_logits(z, y, loss):
    """Per-sample loss computed from pre-activations, stable for saturated units."""
    if loss == "bce":
        return np.sum(np.logaddexp(0.0, z) - y * z, axis=1)
    return 0.5 * np.sum((expit(z) - y) ** 2, axis=1)


def _check_labels(labels, n, c):
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim == 1:
        labels = labels[None, :]
    if labels.shape != (n, c):
        raise ShapeError(f"labels have shape {labels.shape}, expected {(n, c)}")
    return labels


def objective_terms(model, features, labels, psi, omega, cfg):
    """Evaluate every term of the training objective on a data set.

    The loss term is the mean over samples, matching the scale of the
    mini-batch gradients.
    """
    acts = forward(model, features)
    labels = _check_labels(labels, acts.output.shape[0], model.config.num_categories)
    loss = float(np.mean(_loss_from_logits(acts.output_pre, labels, cfg.loss)))
    decay = 0.5 * cfg.lambda1 * _sum_sq_weights(model)
    feat = 0.5 * cfg.lambda2 * trace_penalty(stack_fusion_weights(model), psi, cfg.eps) if cfg.lambda2 else 0.0
    cls = 0.5 * cfg.lambda3 * trace_penalty(model.output_weights, omega, cfg.eps) if cfg.lambda3 else 0.0
    return {
        "objective": loss + decay + feat + cls,
        "loss": loss,
        "weight_decay": decay,
        "feature_penalty": feat,
        "class_penalty": cls,
    }


def _sum_sq_weights(model):
    mats = [w for branch in model.transform_weights for w in branch]
    mats += list(model.fusion_weights) + [model.output_weights]
    return float(sum(np.sum(w * w) for w in mats))


def backprop(model, features, labels, psi, omega, cfg):
    """Gradient of the batch objective with respect to every parameter.

    The data term is averaged over the batch; regularization gradients are
    added in full.
    """
    cfg_net = model.config
    acts = forward(model, features)
    b = acts.output.shape[0]
    labels = _check_labels(labels, b, cfg_net.num_categories)

    delta = _output_delta(acts.output, labels, cfg.loss) / b

    g_out = acts.fused.T @ delta
    g_out_bias = delta.sum(axis=0)
    delta_f = (delta @ model.output_weights.T) * acts.fused * (1 - acts.fused)
    g_fusion_bias = delta_f.sum(axis=0)

    g_fusion, g_transform = [], []
    for m in range(cfg_net.num_modalities):
        layers = acts.transform[m]
        g_fusion.append(delta_f.T @ layers[-1])
        d = (delta_f @ model.fusion_weights[m]) * layers[-1] * (1 - layers[-1])
        grads = [None] * cfg_net.transform_depth
        for l in range(cfg_net.transform_depth - 1, -1, -1):
            w = model.transform_weights[m][l]
            grads[l] = d.T @ _with_ones(layers[l])
            if l > 0:
                a = layers[l]
                d = (d @ w[:, :-1]) * a * (1 - a)
        g_transform.append(grads)

    if cfg.lambda1:
        for m in range(cfg_net.num_modalities):
            for l, w in enumerate(model.transform_weights[m]):
                g_transform[m][l] = g_transform[m][l] + cfg.lambda1 * w
            g_fusion[m] = g_fusion[m] + cfg.lambda1 * model.fusion_weights[m]
        g_out = g_out + cfg.lambda1 * model.output_weights
    if cfg.lambda2:
        reg = fusion_penalty_gradient(model, psi, cfg.eps, cfg.lambda2)
        g_fusion = [g + r for g, r in zip(g_fusion, reg)]
    if cfg.lambda3:
        g_out = g_out + trace_penalty_gradient(model.output_weights, omega, cfg.eps, cfg.lambda3)

    return GradientSet(cfg_net, g_transform, g_fusion, g_fusion_bias, g_out, g_out_bias)


def apply_gradients(model, grads, learning_rate):
    """In-place step ``W <- W - learning_rate * G`` for every parameter."""
    for w, g in zip(model.matrices(), grads.matrices()):
        w -= learning_rate * g


def train(model, features, labels, cfg, update_relations=None, callback=None):
    """Train ``model`` on a data set.

    Parameters
    ----------
    model : RdnnModel
        Starting point; it is copied, never modified.
    features : list of ndarray
        One ``(N, D_m)`` array per modality.
    labels : ndarray, shape (N, C)
    cfg : TrainConfig
    update_relations : bool, optional
        Force relation updates on or off. By default a relation is updated
        only when its penalty weight is positive.
    callback : callable, optional
        Called as ``callback(epoch, model, psi, omega, terms)`` after every
        epoch; ``terms`` is the dict from :func:`objective_terms`.

    Returns
    -------
    model, psi, omega, report
    """
    net = model.config
    features = check_features(net, features)
    n = features[0].shape[0]
    if n == 0:
        raise InvalidInputError("training set is empty")
    labels = _check_labels(labels, n, net.num_categories)

    model = model.copy()
    psi = initial_relation(net.num_modalities)
    omega = initial_relation(net.num_categories)
    update_psi = bool(cfg.lambda2) if update_relations is None else update_relations
    update_omega = bool(cfg.lambda3) if update_relations is None else update_relations

    report = TrainReport(config=cfg.to_dict())
    report.initial = objective_terms(model, features, labels, psi, omega, cfg)
    rng = np.random.default_rng(cfg.seed)

    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            grads = backprop(model, [x[idx] for x in features], labels[idx], psi, omega, cfg)
            apply_gradients(model, grads, cfg.learning_rate)
        with np.errstate(all="ignore"):
            finite = all(np.all(np.isfinite(w)) for w in model.matrices())
        if not finite:
            raise DivergenceError(epoch, float("nan"))
        if update_psi:
            psi = update_feature_relation(stack_fusion_weights(model))
        if update_omega:
            omega = update_class_relation(model.output_weights)
        terms = objective_terms(model, features, labels, psi, omega, cfg)
        value = terms["objective"]
        if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
            raise DivergenceError(epoch, value)
        report.record(terms, time.perf_counter() - start)
        if callback is not None:
            callback(epoch, model, psi, omega, terms)
        logger.debug("epoch %d objective %.6g loss %.6g", epoch, value, terms["loss"])

    report.psi, report.omega = psi, omega
    return model, psi, omega, report


# -- fusion baselines ---------------------------------------------------------

@dataclass(frozen=True)
class FusionPlan:
    """How modalities are routed into one or more networks.

    ``groups[i]`` lists the modality indices feeding network ``i``. With
    ``concatenate`` set, a group's modalities are joined into a single input
    vector; otherwise each stays a separate branch. Scores of several
    networks are averaged with equal weights.
    """

    kind: str
    configs: tuple
    groups: tuple
    concatenate: bool

    def inputs(self, features, i):
        xs = [features[m] for m in self.groups[i]]
        return [np.hstack(xs)] if self.concatenate else xs

    def combine(self, score_tables):
        return np.mean(np.stack(score_tables), axis=0)


def build_baseline(kind, config):
    """Plan for the fused network (``"rdnn"``) or a fusion baseline.

    ``"nn-ef"`` concatenates every modality into one single-branch network;
    ``"nn-lf"`` trains one single-branch network per modality and averages
    their scores.
    """
    m_all = tuple(range(config.num_modalities))
    if kind == "rdnn":
        return FusionPlan(kind, (config,), (m_all,), False)
    if kind == "nn-ef":
        cfg = replace(config, input_dims=(sum(config.input_dims),))
        return FusionPlan(kind, (cfg,), (m_all,), True)
    if kind == "nn-lf":
        cfgs = tuple(replace(config, input_dims=(d,)) for d in config.input_dims)
        return FusionPlan(kind, cfgs, tuple((m,) for m in m_all), False)
    raise InvalidInputError(f"unknown baseline {kind!r}")


def train_plan(plan, features, labels, cfg, init_seed=0):
    """Train every network of ``plan``; returns a list of ``(model, psi, omega, report)``."""
    if plan.kind != "rdnn" and cfg.mode != "dnn":
        cfg = replace(cfg, mode="dnn")
    runs = []
    for i, net in enumerate(plan.configs):
        model = init_model(net, init_seed + i)
        runs.append(train(model, plan.inputs(features, i), labels, cfg))
    return runs


def predict_plan(plan, models, features):
    return plan.combine([predict_scores(mdl, plan.inputs(features, i)) for i, mdl in enumerate(models)])


def network_config_for(features, num_categories, **kw):
    """NetworkConfig matching a list of per-modality arrays."""
    return NetworkConfig(input_dims=tuple(np.shape(x)[1] for x in features), num_categories=num_categories, **kw)
