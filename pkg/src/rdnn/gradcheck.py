"""Analytic-versus-numerical gradient comparison on tiny networks."""

import numpy as np

from .model import NetworkConfig, init_model
from .relations import update_class_relation, update_feature_relation, stack_fusion_weights
from .training import TrainConfig, backprop, objective_terms

STEP = 1e-5
TOLERANCE = 1e-5
# entries whose analytic and numeric values are both below this are compared absolutely
ABS_FLOOR = 1e-6

PATTERNS = ((0.0, 0.0), (3e-5, 0.0), (0.0, 3e-5), (3e-5, 3e-5))


def relative_error(analytic, numeric, floor=ABS_FLOOR):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numerical_gradients(model, features, labels, psi, omega, cfg, h=STEP):
    """Central differences of the batch objective for every parameter."""
    grads = []
    for w in model.matrices():
        g = np.zeros_like(w)
        flat, gflat = w.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = objective_terms(model, features, labels, psi, omega, cfg)["objective"]
            flat[i] = old - h
            down = objective_terms(model, features, labels, psi, omega, cfg)["objective"]
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def check_gradients(model, features, labels, psi, omega, cfg, h=STEP):
    """Largest relative error between backprop and central differences."""
    analytic = backprop(model, features, labels, psi, omega, cfg).matrices()
    numeric = numerical_gradients(model, features, labels, psi, omega, cfg, h)
    return max(float(np.max(relative_error(a, n))) for a, n in zip(analytic, numeric))


def tiny_problem(seed=0, n_samples=1, input_dims=(3, 2), transform_dim=2, fusion_dim=2,
                 num_categories=2, transform_depth=1):
    """A random network of a few dozen parameters with matching data.

    Relation matrices are taken at their closed-form optimum for the random
    weights, so they are generic rather than scaled identities.
    """
    rng = np.random.default_rng(seed)
    cfg = NetworkConfig(input_dims=input_dims, num_categories=num_categories, transform_dim=transform_dim,
                        fusion_dim=fusion_dim, transform_depth=transform_depth)
    model = init_model(cfg, seed)
    # nonzero biases so every parameter carries gradient signal
    for w in model.matrices():
        w += 0.1 * rng.standard_normal(w.shape)
    features = [rng.standard_normal((n_samples, d)) for d in input_dims]
    labels = (rng.random((n_samples, num_categories)) < 0.5).astype(float)
    psi = update_feature_relation(stack_fusion_weights(model))
    omega = update_class_relation(model.output_weights)
    return model, features, labels, psi, omega


def run_gradcheck(seed=0, patterns=PATTERNS, lambda1=3e-5, loss="bce", **problem):
    """Max relative gradient error for each ``(lambda2, lambda3)`` pattern."""
    model, features, labels, psi, omega = tiny_problem(seed, **problem)
    out = {}
    for lam2, lam3 in patterns:
        cfg = TrainConfig(lambda1=lambda1, lambda2=lam2, lambda3=lam3, loss=loss, seed=seed)
        out[(lam2, lam3)] = check_gradients(model, features, labels, psi, omega, cfg)
    return out
