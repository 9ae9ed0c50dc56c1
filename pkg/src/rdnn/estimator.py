"""scikit-learn compatible estimators.

``X`` is either a list with one ``(n_samples, n_features_m)`` array per
modality, or a single 2-D array together with ``modality_dims`` giving the
width of each modality's block of columns. ``Y`` is an
``(n_samples, n_categories)`` 0/1 indicator matrix (a 1-D vector is treated
as a single category).

>>> clf = RDNNClassifier(transform_dim=16, fusion_dim=16, epochs=5)
>>> clf.fit([X_visual, X_audio], Y).predict_proba([X_visual, X_audio])  # doctest: +SKIP
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .metrics import mean_average_precision
from .model import NetworkConfig
from .training import TrainConfig, build_baseline, predict_plan, train_plan

# offsets deriving subsystem seeds from one random_state
INIT_SEED_OFFSET = 0
SHUFFLE_SEED_OFFSET = 1


def split_modalities(X, modality_dims=None):
    """Normalize ``X`` into a list of validated 2-D float arrays."""
    if isinstance(X, (list, tuple)):
        xs = [check_array(x, dtype=np.float64) for x in X]
        if modality_dims is not None and tuple(x.shape[1] for x in xs) != tuple(modality_dims):
            raise ValueError(f"modality widths {[x.shape[1] for x in xs]} do not match modality_dims {modality_dims}")
    else:
        X = check_array(X, dtype=np.float64)
        dims = (X.shape[1],) if modality_dims is None else tuple(modality_dims)
        if sum(dims) != X.shape[1]:
            raise ValueError(f"modality_dims {dims} sum to {sum(dims)}, but X has {X.shape[1]} columns")
        xs = np.split(X, np.cumsum(dims)[:-1], axis=1)
    if len({x.shape[0] for x in xs}) != 1:
        raise ValueError("all modalities must have the same number of samples")
    return xs


def _check_targets(Y, n):
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    Y = check_array(Y, dtype=np.float64)
    if Y.shape[0] != n:
        raise ValueError(f"Y has {Y.shape[0]} rows, X has {n}")
    if not np.all((Y == 0) | (Y == 1)):
        raise ValueError("Y must be a 0/1 indicator matrix")
    return Y


class _FusionBase(ClassifierMixin, BaseEstimator):
    _kind = "rdnn"
    _mode = None

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            lambda1=self.lambda1,
            lambda2=getattr(self, "lambda2", 0.0),
            lambda3=getattr(self, "lambda3", 0.0),
            batch_size=self.batch_size,
            epochs=self.epochs,
            eps=getattr(self, "eps", 1e-6),
            seed=self.random_state + SHUFFLE_SEED_OFFSET,
            loss=self.loss,
            mode=self._mode or self.mode,
        )

    def fit(self, X, Y):
        xs = split_modalities(X, self.modality_dims)
        Y = _check_targets(Y, xs[0].shape[0])
        net = NetworkConfig(
            input_dims=tuple(x.shape[1] for x in xs),
            num_categories=Y.shape[1],
            transform_dim=self.transform_dim,
            fusion_dim=self.fusion_dim,
            transform_depth=self.transform_depth,
        )
        self.plan_ = build_baseline(self._kind, net)
        runs = train_plan(self.plan_, xs, Y, self._train_config(), init_seed=self.random_state + INIT_SEED_OFFSET)
        self.models_ = [r[0] for r in runs]
        self.reports_ = [r[3] for r in runs]
        self.input_dims_ = net.input_dims
        self.n_categories_ = Y.shape[1]
        self.classes_ = np.arange(Y.shape[1])
        return self

    def decision_function(self, X):
        """Per-category scores in (0, 1), shape ``(n_samples, n_categories)``."""
        check_is_fitted(self, "models_")
        xs = split_modalities(X, self.modality_dims)
        if tuple(x.shape[1] for x in xs) != self.input_dims_:
            raise ValueError(f"expected modality widths {self.input_dims_}, got {[x.shape[1] for x in xs]}")
        return predict_plan(self.plan_, self.models_, xs)

    predict_proba = decision_function

    def predict(self, X):
        return (self.decision_function(X) >= 0.5).astype(int)

    def score(self, X, Y, sample_weight=None):
        """Mean average precision of the category rankings.

        Unlike the subset accuracy of :class:`~sklearn.base.ClassifierMixin`,
        this is the ranking metric the model is meant to be judged by.
        """
        xs = split_modalities(X, self.modality_dims)
        Y = _check_targets(Y, xs[0].shape[0])
        return mean_average_precision(self.decision_function(xs), Y)[1]

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.target_tags.multi_output = True
        tags.classifier_tags.multi_label = True
        return tags


class RDNNClassifier(_FusionBase):
    """Multi-branch fusion network with learned feature and class relations.

    Parameters
    ----------
    transform_dim, fusion_dim : int
        Width of each branch's mid-level representation and of the fusion layer.
    transform_depth : int
        Sigmoid layers per branch before fusion.
    learning_rate : float
    lambda1 : float
        Weight decay.
    lambda2, lambda3 : float
        Weights of the feature-relation and class-relation trace penalties.
    batch_size, epochs : int
    eps : float
        Ridge added to relation matrices before inversion.
    loss : {"bce", "squared"}
    mode : {"rdnn", "rdnn-f", "rdnn-c", "dnn"}
        Which relation penalties are active.
    modality_dims : sequence of int, optional
        Column widths when ``X`` is passed as one 2-D array.
    random_state : int

    Attributes
    ----------
    model_ : RdnnModel
    psi_ : ndarray, shape (n_modalities, n_modalities)
    omega_ : ndarray, shape (n_categories, n_categories)
    report_ : TrainReport
    """

    def __init__(self, transform_dim=256, fusion_dim=512, transform_depth=1, learning_rate=0.7,
                 lambda1=3e-5, lambda2=3e-5, lambda3=3e-5, batch_size=70, epochs=10, eps=1e-6,
                 loss="bce", mode="rdnn", modality_dims=None, random_state=0):
        self.transform_dim = transform_dim
        self.fusion_dim = fusion_dim
        self.transform_depth = transform_depth
        self.learning_rate = learning_rate
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.batch_size = batch_size
        self.epochs = epochs
        self.eps = eps
        self.loss = loss
        self.mode = mode
        self.modality_dims = modality_dims
        self.random_state = random_state

    def fit(self, X, Y):
        super().fit(X, Y)
        self.model_ = self.models_[0]
        self.report_ = self.reports_[0]
        self.psi_ = self.report_.psi
        self.omega_ = self.report_.omega
        return self


class _SingleBranchBaseline(_FusionBase):
    _mode = "dnn"

    def __init__(self, transform_dim=256, fusion_dim=512, transform_depth=1, learning_rate=0.7,
                 lambda1=3e-5, batch_size=70, epochs=10, loss="bce", modality_dims=None, random_state=0):
        self.transform_dim = transform_dim
        self.fusion_dim = fusion_dim
        self.transform_depth = transform_depth
        self.learning_rate = learning_rate
        self.lambda1 = lambda1
        self.batch_size = batch_size
        self.epochs = epochs
        self.loss = loss
        self.modality_dims = modality_dims
        self.random_state = random_state


class EarlyFusionClassifier(_SingleBranchBaseline):
    """All modalities concatenated into one unregularized single-branch network."""

    _kind = "nn-ef"


class LateFusionClassifier(_SingleBranchBaseline):
    """One unregularized network per modality; scores averaged with equal weights."""

    _kind = "nn-lf"
