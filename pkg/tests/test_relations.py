import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdnn.exceptions import DegenerateWeightsError, ShapeError
from rdnn.linalg import psd_sqrt
from rdnn.model import NetworkConfig, init_model
from rdnn.relations import (
    fusion_penalty_gradient,
    is_valid_relation,
    load_relation,
    optimal_relation,
    save_relation,
    stack_fusion_weights,
    trace_penalty,
    trace_penalty_gradient,
    unstack_fusion_weights,
    update_class_relation,
    update_feature_relation,
)

EPS = 1e-6


def random_feasible(rng, n):
    """Random symmetric PSD matrix of unit trace with a random rank."""
    g = rng.standard_normal((n, rng.integers(1, n + 1)))
    r = g @ g.T
    return r / np.trace(r)


def test_stack_single_modality():
    cfg = NetworkConfig(input_dims=(3,), num_categories=2, transform_dim=2, fusion_dim=3)
    m = init_model(cfg, 0)
    stacked = stack_fusion_weights(m)
    assert stacked.shape == (6, 1)
    np.testing.assert_array_equal(stacked[:, 0], m.fusion_weights[0].ravel(order="F"))


def test_stack_scalar_case():
    cfg = NetworkConfig(input_dims=(2, 2), num_categories=1, transform_dim=1, fusion_dim=1)
    m = init_model(cfg, 0)
    m.fusion_weights[0][...] = 0.3
    m.fusion_weights[1][...] = -1.7
    np.testing.assert_array_equal(stack_fusion_weights(m), [[0.3, -1.7]])


def test_stack_round_trip(small_model):
    cfg = small_model.config
    back = unstack_fusion_weights(stack_fusion_weights(small_model), cfg.fusion_dim, cfg.transform_dim)
    for a, b in zip(small_model.fusion_weights, back):
        assert a.tobytes() == b.tobytes()


def test_stack_excludes_bias(small_model):
    cfg = small_model.config
    assert stack_fusion_weights(small_model).shape == (cfg.fusion_dim * cfg.transform_dim, cfg.num_modalities)


def test_orthogonal_equal_norm_columns_give_uniform_relation(rng):
    q, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    np.testing.assert_allclose(update_feature_relation(2.5 * q), np.eye(3) / 3, atol=1e-12)
    q, _ = np.linalg.qr(rng.standard_normal((8, 4)))
    np.testing.assert_allclose(update_class_relation(0.3 * q), np.eye(4) / 4, atol=1e-12)


def test_identical_columns_give_rank_one_relation(rng):
    v = rng.standard_normal(7)
    v /= np.linalg.norm(v)
    w = np.column_stack([v, v])
    np.testing.assert_allclose(update_feature_relation(w), np.full((2, 2), 0.5), atol=1e-12)
    np.testing.assert_allclose(update_class_relation(w), np.full((2, 2), 0.5), atol=1e-12)


def test_zero_weights_are_degenerate():
    with pytest.raises(DegenerateWeightsError):
        update_feature_relation(np.zeros((4, 2)))
    with pytest.raises(DegenerateWeightsError):
        update_class_relation(np.zeros((4, 3)))


@pytest.mark.parametrize("p, m", [(10, 3), (8, 4)])
def test_closed_form_beats_random_candidates(p, m):
    rng = np.random.default_rng(p * 31 + m)
    w = rng.standard_normal((p, m))
    best = trace_penalty(w, optimal_relation(w), EPS)
    values = [trace_penalty(w, random_feasible(rng, m), EPS) for _ in range(1000)]
    assert best <= min(values) + 1e-9


def test_relation_invariants_after_update(rng):
    for _ in range(20):
        w = rng.standard_normal((rng.integers(1, 20), rng.integers(1, 6)))
        assert is_valid_relation(optimal_relation(w))


def test_relation_depends_only_on_inner_products(rng):
    w = rng.standard_normal((12, 3))
    perm = rng.permutation(12)
    np.testing.assert_allclose(optimal_relation(w[perm]), optimal_relation(w), atol=1e-14)


def test_relation_permutation_equivariance(rng):
    w = rng.standard_normal((9, 4))
    perm = rng.permutation(4)
    np.testing.assert_allclose(optimal_relation(w[:, perm]), optimal_relation(w)[np.ix_(perm, perm)], atol=1e-13)


def test_relation_orthogonal_rotation(rng):
    w = rng.standard_normal((9, 3))
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    s = psd_sqrt(q.T @ w.T @ w @ q)
    np.testing.assert_allclose(optimal_relation(w @ q), s / np.trace(s), atol=1e-13)


def test_trace_penalty_scaled_identity(rng):
    w = rng.standard_normal((5, 3))
    value = trace_penalty(w, np.eye(3) / 3, EPS)
    assert value == pytest.approx(3 * np.sum(w ** 2), rel=10 * EPS)


def test_trace_penalty_zero():
    assert trace_penalty(np.zeros((4, 2)), np.eye(2) / 2) == 0.0


def test_trace_penalty_brute_force(rng):
    w = rng.standard_normal((4, 3))
    rel = random_feasible(rng, 3)
    inv = np.linalg.inv(rel + EPS * np.eye(3))
    brute = sum(w[i, j] * inv[j, k] * w[i, k] for i in range(4) for j in range(3) for k in range(3))
    assert trace_penalty(w, rel, EPS) == pytest.approx(brute, rel=1e-9)


def test_trace_penalty_shape_mismatch():
    with pytest.raises(ShapeError):
        trace_penalty(np.zeros((4, 2)), np.eye(3))


def test_penalty_at_optimum_is_squared_trace_norm(rng):
    # tr(W R*^-1 W^T) = ||W||_*^2 for the closed-form R*
    for _ in range(10):
        w = rng.standard_normal((12, 3))
        nuclear = np.trace(psd_sqrt(w.T @ w))
        penalty = trace_penalty(w, optimal_relation(w), EPS)
        assert abs(penalty - nuclear ** 2) <= 10 * EPS * penalty


def test_gradient_scaled_identity(rng):
    w = rng.standard_normal((5, 3))
    np.testing.assert_allclose(trace_penalty_gradient(w, np.eye(3) / 3, EPS, 0.2), 0.2 * 3 * w, rtol=10 * EPS)


def test_gradient_zero():
    assert not np.any(trace_penalty_gradient(np.zeros((3, 2)), np.eye(2) / 2, EPS, 1.0))


def test_gradient_matches_finite_differences(rng):
    w = rng.standard_normal((6, 3))
    rel = random_feasible(rng, 3) + 0.1 * np.eye(3)
    rel /= np.trace(rel)
    lam, h = 0.7, 1e-5
    analytic = trace_penalty_gradient(w, rel, EPS, lam)
    numeric = np.zeros_like(w)
    for idx in np.ndindex(*w.shape):
        up, down = w.copy(), w.copy()
        up[idx] += h
        down[idx] -= h
        numeric[idx] = lam / 2 * (trace_penalty(up, rel, EPS) - trace_penalty(down, rel, EPS)) / (2 * h)
    rel_err = np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1e-8)
    assert rel_err.max() < 1e-6


def test_fusion_gradient_unstacks_per_modality(small_model):
    m = small_model.config.num_modalities
    grads = fusion_penalty_gradient(small_model, np.eye(m) / m, EPS, 0.5)
    for g, w in zip(grads, small_model.fusion_weights):
        np.testing.assert_allclose(g, 0.5 * m * w, rtol=10 * EPS)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_relation_is_scale_invariant(seed, scale):
    w = np.random.default_rng(seed).standard_normal((7, 3))
    np.testing.assert_allclose(optimal_relation(scale * w), optimal_relation(w), atol=1e-12)


def test_relation_dump_round_trip(tmp_path, rng):
    rel = optimal_relation(rng.standard_normal((5, 4)))
    save_relation(rel, tmp_path / "r.txt")
    lines = (tmp_path / "r.txt").read_text().splitlines()
    assert len(lines) == 4 and all(len(l.split(" ")) == 4 for l in lines)
    np.testing.assert_array_equal(load_relation(tmp_path / "r.txt"), rel)


def test_relation_dump_one_by_one(tmp_path):
    save_relation(np.eye(1), tmp_path / "r.txt")
    assert load_relation(tmp_path / "r.txt").shape == (1, 1)
