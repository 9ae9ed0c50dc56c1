"""Category grouping from a learned class relation matrix."""

from dataclasses import dataclass

import numpy as np
from scipy.special import comb
from sklearn.cluster import KMeans

from .exceptions import InvalidInputError, ShapeError
from .linalg import sym_eigen

ISOLATED_DEGREE = 1e-12


@dataclass(frozen=True)
class GroupAssignment:
    labels: tuple
    k: int

    def __post_init__(self):
        labels = tuple(int(v) for v in self.labels)
        object.__setattr__(self, "labels", labels)
        if any(v < 0 or v >= self.k for v in labels):
            raise InvalidInputError(f"group labels must lie in [0, {self.k})")

    @property
    def members(self):
        return [[i for i, g in enumerate(self.labels) if g == j] for j in range(self.k)]


def _canonical(labels):
    # renumber groups by first appearance so equal partitions compare equal
    mapping = {}
    return [mapping.setdefault(v, len(mapping)) for v in labels]


def spectral_embedding(omega, k):
    """Row-normalized bottom-``k`` eigenvectors of the normalized Laplacian of ``|omega|``."""
    a = np.abs(np.asarray(omega, dtype=np.float64))
    np.fill_diagonal(a, 0.0)
    deg = a.sum(axis=1)
    deg[deg <= 0] = ISOLATED_DEGREE
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(a.shape[0]) - d_inv_sqrt[:, None] * a * d_inv_sqrt[None, :]
    _, vecs = sym_eigen(lap)
    emb = vecs[:, :k]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    return np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)


def spectral_cluster(omega, k, seed=0):
    """Partition categories into ``k`` groups by normalized spectral clustering.

    k-means runs 10 seeded k-means++ restarts and keeps the lowest inertia.
    Groups are numbered in order of first appearance.
    """
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ShapeError(f"omega must be square, got shape {omega.shape}")
    c = omega.shape[0]
    if not 1 <= k <= c:
        raise InvalidInputError(f"k must be in [1, {c}], got {k}")
    emb = spectral_embedding(omega, k)
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed).fit(emb)
    return GroupAssignment(tuple(_canonical(km.labels_)), k)


def adjusted_rand_index(a, b):
    """Chance-corrected pair-counting agreement between two partitions."""
    la = np.asarray(getattr(a, "labels", a))
    lb = np.asarray(getattr(b, "labels", b))
    if la.shape != lb.shape:
        raise ShapeError(f"partitions cover {la.size} and {lb.size} items")
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    expected = sum_a * sum_b / comb(la.size, 2) if la.size > 1 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all singletons or one block)
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def group_report(omega, assignment, category_names=None):
    """Group members plus mean ``|omega|`` inside and across groups (off-diagonal only)."""
    omega = np.abs(np.asarray(omega, dtype=np.float64))
    c = omega.shape[0]
    names = list(category_names) if category_names is not None else [f"cat_{i}" for i in range(c)]
    lab = np.asarray(assignment.labels)
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(c, dtype=bool)
    within = omega[same & off]
    between = omega[~same]
    return {
        "k": assignment.k,
        "groups": {str(g): [names[i] for i in members] for g, members in enumerate(assignment.members)},
        "labels": list(assignment.labels),
        "within_mean_abs": float(within.mean()) if within.size else None,
        "between_mean_abs": float(between.mean()) if between.size else None,
    }
