"""Feature/label files, manifests, RootSIFT normalization and splitting.

Feature file layout (all little-endian)::

    b"RDNF" | version u32 (=1) | N u32 | D u32 | N*D float64, row-major

Sample ids live in a UTF-8 sidecar, one per line, in row order. Labels are a
CSV with header ``id,<category>,...`` and 0/1 cells. A JSON manifest ties the
pieces together::

    {"modalities": [{"name": "visual", "features": "visual.rdnf",
                     "ids": "visual.ids", "rootsift": false}, ...],
     "labels": "labels.csv"}

Relative paths are resolved against the manifest's directory; ``ids``
defaults to the feature path with ``.ids`` appended.
"""

import csv
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, InvalidInputError

FEATURE_MAGIC = b"RDNF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    features: tuple
    labels: np.ndarray


@dataclass
class Dataset:
    """Column-oriented multimodal data set.

    ``features[m]`` is an ``(N, D_m)`` array; ``labels`` is ``(N, C)`` with
    0/1 entries. Row ``i`` of every array belongs to ``ids[i]``.
    """

    ids: list
    features: list
    labels: np.ndarray
    category_names: list
    modality_names: list

    def __post_init__(self):
        n = len(self.ids)
        if len(set(self.ids)) != n:
            raise InvalidInputError("sample ids are not unique")
        if not self.features:
            raise InvalidInputError("a data set needs at least one modality")
        self.features = [np.asarray(x, dtype=np.float64) for x in self.features]
        self.labels = np.asarray(self.labels, dtype=np.int8)
        for m, x in enumerate(self.features):
            if x.ndim != 2 or x.shape[0] != n:
                raise InvalidInputError(f"modality {m} has shape {x.shape}, expected {n} rows")
            if not np.all(np.isfinite(x)):
                raise InvalidInputError(f"modality {m} has non-finite entries")
        if self.labels.shape != (n, len(self.category_names)):
            raise InvalidInputError(f"labels have shape {self.labels.shape}")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise InvalidInputError("labels must be 0 or 1")
        if len(self.modality_names) != len(self.features):
            raise InvalidInputError("one name per modality required")

    def __len__(self):
        return len(self.ids)

    @property
    def num_modalities(self):
        return len(self.features)

    @property
    def num_categories(self):
        return len(self.category_names)

    @property
    def input_dims(self):
        return tuple(x.shape[1] for x in self.features)

    def sample(self, i):
        return LabeledSample(self.ids[i], tuple(x[i] for x in self.features), self.labels[i])

    def __iter__(self):
        return (self.sample(i) for i in range(len(self)))

    def subset(self, index):
        index = np.asarray(index, dtype=np.intp)
        return Dataset(
            ids=[self.ids[i] for i in index],
            features=[x[index] for x in self.features],
            labels=self.labels[index],
            category_names=list(self.category_names),
            modality_names=list(self.modality_names),
        )


# -- feature files ------------------------------------------------------------

def write_modality(path, ids, matrix, ids_path=None):
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise InvalidInputError("matrix rows must match the number of ids")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, *matrix.shape))
        fh.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())
    with open(ids_path or f"{path}.ids", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{i}\n" for i in ids)


def load_modality(path, ids_path=None):
    """Read a feature file and its id sidecar.

    Returns
    -------
    ids : list of str
    matrix : ndarray, shape (N, D)
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header", len(buf))
    magic, version, n, d = _HEADER.unpack_from(buf)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", 0)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", 4)
    expected = _HEADER.size + 8 * n * d
    if len(buf) < expected:
        raise FormatError(f"{path}: truncated payload, expected {expected} bytes, got {len(buf)}", len(buf))
    if len(buf) > expected:
        raise FormatError(f"{path}: {len(buf) - expected} trailing bytes", expected)
    matrix = np.frombuffer(buf, dtype="<f8", count=n * d, offset=_HEADER.size).astype(np.float64).reshape(n, d)
    bad = np.flatnonzero(~np.isfinite(matrix.ravel()))
    if bad.size:
        raise FormatError(f"{path}: non-finite value", _HEADER.size + 8 * int(bad[0]))

    with open(ids_path or f"{path}.ids", encoding="utf-8") as fh:
        ids = [line.rstrip("\r\n") for line in fh]
    if ids and ids[-1] == "":
        ids.pop()
    if len(ids) != n:
        raise FormatError(f"{path}: {len(ids)} ids for {n} rows")
    return ids, matrix


# -- labels and manifests ------------------------------------------------------

def write_labels(path, ids, labels, category_names):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *category_names])
        for i, row in zip(ids, np.asarray(labels)):
            w.writerow([i, *(int(v) for v in row)])


def load_labels(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "id":
        raise FormatError(f"{path}: header must start with 'id'")
    names = rows[0][1:]
    ids, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names) + 1 or any(v not in ("0", "1") for v in row[1:]):
            raise FormatError(f"{path}: line {lineno} is not a binary row of {len(names)} cells")
        ids.append(row[0])
        values.append([int(v) for v in row[1:]])
    return ids, np.asarray(values, dtype=np.int8).reshape(len(ids), len(names)), names


def _resolve(base, p):
    return p if os.path.isabs(p) else os.path.join(base, p)


def load_manifest(path):
    """Load every modality listed in a manifest, aligned to the label file order."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    try:
        mods = spec["modalities"]
        label_path = _resolve(base, spec["labels"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: manifest needs 'modalities' and 'labels'") from exc
    ids, labels, categories = load_labels(label_path)
    features, names = [], []
    for entry in mods:
        fpath = _resolve(base, entry["features"])
        ipath = _resolve(base, entry["ids"]) if entry.get("ids") else None
        mids, matrix = load_modality(fpath, ipath)
        row_of = {sid: r for r, sid in enumerate(mids)}
        missing = [sid for sid in ids if sid not in row_of]
        if missing:
            raise FormatError(f"{fpath}: {len(missing)} labeled samples lack this modality, e.g. {missing[0]!r}")
        matrix = matrix[[row_of[sid] for sid in ids]]
        if entry.get("rootsift"):
            matrix = rootsift_normalize(matrix)
        features.append(matrix)
        names.append(entry.get("name", f"modality_{len(names)}"))
    return Dataset(ids, features, labels, categories, names)


def write_dataset(directory, dataset, rootsift=None):
    """Write a data set as feature files, a label CSV and ``manifest.json``."""
    os.makedirs(directory, exist_ok=True)
    rootsift = rootsift or {}
    entries = []
    for name, x in zip(dataset.modality_names, dataset.features):
        fname = f"{name}.rdnf"
        write_modality(os.path.join(directory, fname), dataset.ids, x)
        entries.append({"name": name, "features": fname, "ids": f"{fname}.ids",
                        "rootsift": bool(rootsift.get(name, False))})
    write_labels(os.path.join(directory, "labels.csv"), dataset.ids, dataset.labels, dataset.category_names)
    manifest = {"modalities": entries, "labels": "labels.csv"}
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


# -- preprocessing -------------------------------------------------------------

def rootsift_normalize(v):
    """L1-normalize nonnegative histograms, then take the elementwise square root.

    Works on a single vector or row-wise on a matrix. All-zero rows stay zero.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise InvalidInputError("RootSIFT needs nonnegative entries")
    total = v.sum(axis=-1, keepdims=True)
    scaled = np.divide(v, total, out=np.zeros_like(v), where=total > 0)
    return np.sqrt(scaled)


def split(dataset, fraction=0.5, seed=0):
    """Seeded random split into ``(train, test)``; ``fraction`` goes to train.

    The train side gets ``round(fraction * N)`` samples.
    """
    n = len(dataset)
    if not 0 < fraction < 1:
        raise InvalidInputError(f"fraction must lie in (0, 1), got {fraction}")
    n_train = int(round(fraction * n))
    if n_train == 0 or n_train == n:
        raise InvalidInputError(f"fraction {fraction} leaves one side of an {n}-sample split empty")
    order = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(order[:n_train])), dataset.subset(np.sort(order[n_train:]))
