"""Synthetic multimodal data with planted category groups.

Every sample has a latent vector ``z ~ N(0, I_d)``. Categories in group ``g``
share a centroid direction ``u_g``; category ``c`` uses
``w_c = u_{g(c)} + spread * delta_c`` and is positive when ``z . w_c``
exceeds its empirical ``(1 - p)`` quantile. Modality ``m`` observes
``B_m z + noise``. With ``complementary`` set, ``B_m`` only reads a
contiguous block of latent coordinates, so no single modality sees
everything the labels depend on.
"""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import Dataset, write_dataset
from .exceptions import InvalidInputError


@dataclass(frozen=True)
class SynthSpec:
    n_samples: int = 2000
    n_categories: int = 12
    n_groups: int = 3
    latent_dim: int = 12
    modality_dims: tuple = (16, 16)
    noise_sigma: float = 0.3
    group_spread: float = 0.1
    positive_rate: float = 0.2
    complementary: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modality_dims", tuple(int(d) for d in self.modality_dims))
        if min(self.n_samples, self.n_categories, self.n_groups, self.latent_dim) < 1:
            raise InvalidInputError("sizes must be positive")
        if not self.modality_dims or min(self.modality_dims) < 1:
            raise InvalidInputError("modality_dims must be non-empty and positive")
        if self.n_groups > self.n_categories:
            raise InvalidInputError("n_groups cannot exceed n_categories")
        if self.complementary and len(self.modality_dims) > self.latent_dim:
            raise InvalidInputError("complementary modalities need latent_dim >= number of modalities")
        if not 0 < self.positive_rate < 1:
            raise InvalidInputError("positive_rate must lie in (0, 1)")
        if self.noise_sigma < 0 or self.group_spread < 0:
            raise InvalidInputError("noise_sigma and group_spread must be nonnegative")

    @property
    def n_modalities(self):
        return len(self.modality_dims)


@dataclass
class SynthTruth:
    groups: np.ndarray
    centroids: np.ndarray
    directions: np.ndarray
    projections: list = field(default_factory=list)


def generate(spec, return_truth=False):
    """Draw a data set from ``spec``.

    Returns
    -------
    dataset : Dataset
    groups : ndarray of int, shape (C,)
        Planted group of each category (round-robin assignment).
    truth : SynthTruth
        Only when ``return_truth`` is set.
    """
    rng = np.random.default_rng(spec.seed)
    n, d, c, k = spec.n_samples, spec.latent_dim, spec.n_categories, spec.n_groups
    z = rng.standard_normal((n, d))
    centroids = rng.standard_normal((k, d))
    groups = np.arange(c) % k
    directions = centroids[groups] + spec.group_spread * rng.standard_normal((c, d))

    scores = z @ directions.T
    thresholds = np.quantile(scores, 1.0 - spec.positive_rate, axis=0)
    labels = (scores > thresholds).astype(np.int8)

    blocks = np.array_split(np.arange(d), spec.n_modalities)
    features, projections = [], []
    for m, dim in enumerate(spec.modality_dims):
        b = rng.standard_normal((dim, d)) / np.sqrt(d)
        if spec.complementary:
            mask = np.zeros(d, dtype=bool)
            mask[blocks[m]] = True
            b[:, ~mask] = 0.0
        projections.append(b)
        features.append(z @ b.T + spec.noise_sigma * rng.standard_normal((n, dim)))

    width = len(str(n - 1))
    dataset = Dataset(
        ids=[f"s{i:0{width}d}" for i in range(n)],
        features=features,
        labels=labels,
        category_names=[f"cat_{i}" for i in range(c)],
        modality_names=[f"mod_{m}" for m in range(spec.n_modalities)],
    )
    if return_truth:
        return dataset, groups, SynthTruth(groups, centroids, directions, projections)
    return dataset, groups


def write_synth(directory, spec):
    """Generate ``spec`` and write it in the standard file formats.

    Besides the data set files this writes ``groups.json`` (category name to
    planted group) and ``synth_spec.json``.
    """
    dataset, groups = generate(spec)
    manifest = write_dataset(directory, dataset)
    with open(os.path.join(directory, "groups.json"), "w", encoding="utf-8") as fh:
        json.dump({name: int(g) for name, g in zip(dataset.category_names, groups)}, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(directory, "synth_spec.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(spec), fh, indent=2)
        fh.write("\n")
    return manifest
