"""Relation matrices and their trace-norm penalties.

The fusion weights of all branches are vectorized column-major and stacked
side by side into a ``P x M`` matrix (``P = fusion_dim * transform_dim``).
A relation matrix ``R`` (``Psi`` over modalities, ``Omega`` over categories)
enters the objective through ``tr(W R^-1 W^T)``. For fixed ``W`` the
minimizer over symmetric PSD, unit-trace ``R`` is::

    R = (W^T W)^(1/2) / tr((W^T W)^(1/2))

and the minimum equals the squared trace norm of ``W``.
"""

import numpy as np

from .exceptions import DegenerateWeightsError, ShapeError
from .linalg import normalized_trace, psd_sqrt, regularized_inverse

DEFAULT_EPS = 1e-6


def stack_fusion_weights(model):
    """Stack ``vec(W_E^m)`` (column-major) as columns of a ``P x M`` matrix."""
    return np.column_stack([w.ravel(order="F") for w in model.fusion_weights])


def unstack_fusion_weights(stacked, fusion_dim, transform_dim):
    """Split a ``P x M`` matrix back into ``M`` matrices of shape ``(fusion_dim, transform_dim)``."""
    stacked = np.asarray(stacked)
    if stacked.shape[0] != fusion_dim * transform_dim:
        raise ShapeError(f"stacked rows {stacked.shape[0]} != {fusion_dim} * {transform_dim}")
    return [stacked[:, m].reshape((fusion_dim, transform_dim), order="F") for m in range(stacked.shape[1])]


def optimal_relation(w):
    """Closed-form unit-trace PSD minimizer of ``tr(w R^-1 w^T)``."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {w.shape}")
    if not np.any(w):
        raise DegenerateWeightsError("all-zero weights: the relation matrix is undefined")
    return normalized_trace(psd_sqrt(w.T @ w))


def update_feature_relation(stacked):
    """Optimal ``Psi`` (M x M) for stacked fusion weights."""
    return optimal_relation(stacked)


def update_class_relation(output_weights):
    """Optimal ``Omega`` (C x C) for output weights of shape ``(fusion_dim, C)``."""
    return optimal_relation(output_weights)


def _check_pair(w, rel):
    w = np.asarray(w, dtype=np.float64)
    rel = np.asarray(rel, dtype=np.float64)
    if w.ndim != 2 or rel.shape != (w.shape[1], w.shape[1]):
        raise ShapeError(f"relation of shape {rel.shape} does not match weights of shape {w.shape}")
    return w, rel


def trace_penalty(w, rel, eps=DEFAULT_EPS):
    """``tr(w (rel + eps I)^-1 w^T)``."""
    w, rel = _check_pair(w, rel)
    inv = regularized_inverse(rel, eps)
    # tr(A B A^T) = sum((A B) * A)
    return float(max(np.sum((w @ inv) * w), 0.0))


def trace_penalty_gradient(w, rel, eps=DEFAULT_EPS, lam=1.0):
    """Gradient of ``(lam / 2) * trace_penalty(w, rel, eps)`` with ``rel`` held fixed."""
    w, rel = _check_pair(w, rel)
    return lam * (w @ regularized_inverse(rel, eps))


def fusion_penalty_gradient(model, psi, eps=DEFAULT_EPS, lam=1.0):
    """Per-branch gradients of the fusion-layer penalty, each ``(fusion_dim, transform_dim)``."""
    cfg = model.config
    g = trace_penalty_gradient(stack_fusion_weights(model), psi, eps, lam)
    return unstack_fusion_weights(g, cfg.fusion_dim, cfg.transform_dim)


def initial_relation(n):
    """Uniform starting relation ``I / n``."""
    return np.eye(n) / n


def is_valid_relation(rel, sym_tol=1e-10, psd_tol=1e-8, trace_tol=1e-9):
    rel = np.asarray(rel)
    if np.max(np.abs(rel - rel.T)) > sym_tol:
        return False
    if np.linalg.eigvalsh((rel + rel.T) / 2)[0] < -psd_tol:
        return False
    return abs(np.trace(rel) - 1.0) <= trace_tol


def save_relation(rel, path):
    """Plain-text dump: one row per line, 17 significant digits."""
    np.savetxt(path, np.atleast_2d(rel), fmt="%.17g", delimiter=" ")


def load_relation(path):
    return np.atleast_2d(np.loadtxt(path, dtype=np.float64, ndmin=2))
