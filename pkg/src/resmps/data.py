"""IDX (MNIST-style) ingestion, splitting, batching and feature down-sampling."""

import gzip
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .errors import ConsistencyError, DomainError, FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# Standard file stems inside an MNIST / fashion-MNIST directory.
SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Dataset:
    """Flattened features in [0, 1] with integer labels.

    ``image_shape`` is kept so that the raster ordering can be inverted
    (re-serialization, down-sampling); it is ``None`` for non-image data.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    image_shape: tuple = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise ConsistencyError(f"features must be 2-D, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ConsistencyError(f"{X.shape[0]} feature rows but labels of shape {y.shape}")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise DomainError("feature values must lie in [0, 1]")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DomainError(f"labels must lie in [0, {self.n_classes})")
        if self.image_shape is not None and math.prod(self.image_shape) != X.shape[1]:
            raise ConsistencyError(f"image shape {self.image_shape} does not match N={X.shape[1]}")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(self.features[index], self.labels[index], self.n_classes,
                       self.image_shape, dict(self.meta))


def _open(path, mode="rb"):
    path = os.fspath(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode) if "r" in mode else gzip.GzipFile(path, mode, mtime=0)
    return open(path, mode)


def read_idx(path):
    """Read one IDX file of unsigned bytes and return it as a uint8 array."""
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise OSError(f"{path}: truncated IDX header")
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype_code != 0x08:
        raise FormatError(f"{path}: bad IDX magic 0x{int.from_bytes(raw[:4], 'big'):08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise OSError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = math.prod(dims)
    payload = raw[header:]
    if len(payload) < size:
        raise OSError(f"{path}: truncated payload ({len(payload)} of {size} bytes)")
    if len(payload) > size:
        raise FormatError(f"{path}: {len(payload) - size} trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, 0x08, array.ndim)
    header += struct.pack(f">{array.ndim}I", *array.shape)
    with _open(path, "wb") as f:
        f.write(header)
        f.write(array.tobytes())


def _magic(path):
    with _open(path) as f:
        head = f.read(4)
    if len(head) < 4:
        raise OSError(f"{path}: truncated IDX header")
    return struct.unpack(">I", head)[0]


def load_idx(images_path, labels_path, n_classes=None):
    """Load an image/label IDX pair as a :class:`Dataset`.

    Pixels are mapped ``u -> u / 255`` and each image is flattened row by
    row. ``n_classes`` defaults to ``max(label) + 1``.
    """
    if _magic(images_path) != IMAGE_MAGIC:
        raise FormatError(f"{images_path}: expected image magic 0x{IMAGE_MAGIC:08x}")
    if _magic(labels_path) != LABEL_MAGIC:
        raise FormatError(f"{labels_path}: expected label magic 0x{LABEL_MAGIC:08x}")
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"{images.shape[0]} images in {images_path} but {labels.shape[0]} labels in {labels_path}")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(features, labels.astype(np.int64), n_classes, tuple(images.shape[1:]),
                   {"source": os.fspath(images_path), "ordering": "row-major"})


def save_idx(dataset, images_path, labels_path):
    """Write ``dataset`` back to an IDX pair (inverse of :func:`load_idx`)."""
    shape = dataset.image_shape or (dataset.n_features,)
    pixels = np.rint(dataset.features * 255.0).astype(np.uint8)
    write_idx(images_path, pixels.reshape((len(dataset),) + tuple(shape)))
    write_idx(labels_path, dataset.labels.astype(np.uint8))


def _find(directory, stem):
    for candidate in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no {stem}[.gz] in {directory}")


def load_dir(directory, n_classes=10):
    """Load the official train and test splits from an MNIST-layout directory."""
    out = []
    for split_name in ("train", "test"):
        img, lab = SPLIT_FILES[split_name]
        out.append(load_idx(_find(directory, img), _find(directory, lab), n_classes))
    return tuple(out)


def split(dataset, fraction, seed):
    """Deterministically shuffle and cut ``dataset`` into two disjoint parts."""
    if not 0.0 < fraction < 1.0:
        raise DomainError(f"split fraction must be in (0, 1), got {fraction}")
    perm = rngs.stream(seed, "split").permutation(len(dataset))
    cut = int(round(fraction * len(dataset)))
    return dataset.subset(np.sort(perm[:cut])), dataset.subset(np.sort(perm[cut:]))


def take(dataset, count, seed):
    """Return a seeded random subset of ``count`` samples (all if ``count`` is None)."""
    if count is None or count >= len(dataset):
        return dataset
    perm = rngs.stream(seed, "take").permutation(len(dataset))
    return dataset.subset(np.sort(perm[:count]))


class BatchIterator:
    """Shuffled mini-batches of sample indices; one full pass per iteration.

    The permutation for epoch ``e`` depends only on ``(seed, e)``.
    """

    def __init__(self, n_samples, batch_size, seed, shuffle=True):
        if batch_size <= 0:
            raise DomainError("batch size must be positive")
        self.n_samples = n_samples
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle
        self.epoch = 0

    def __iter__(self):
        if self.shuffle:
            order = rngs.stream(self.seed, "shuffle", self.epoch).permutation(self.n_samples)
        else:
            order = np.arange(self.n_samples)
        self.epoch += 1
        for start in range(0, self.n_samples, self.batch_size):
            yield order[start:start + self.batch_size]

    def __len__(self):
        return -(-self.n_samples // self.batch_size)


def _area_weights(src, dst):
    # P[i, a] = fraction of output cell a covered by input pixel i.
    P = np.zeros((src, dst))
    scale = src / dst
    for a in range(dst):
        lo, hi = a * scale, (a + 1) * scale
        for i in range(int(math.floor(lo)), min(src, int(math.ceil(hi)))):
            P[i, a] = (min(hi, i + 1) - max(lo, i)) / scale
    return P


def downsample(dataset, n_features):
    """Area-average each image to a ``sqrt(n) x sqrt(n)`` grid.

    Used to evaluate the polynomial expansion on small-N models.
    """
    side = math.isqrt(n_features)
    if side * side != n_features:
        raise DomainError(f"feature count {n_features} is not a perfect square")
    if dataset.image_shape is None or len(dataset.image_shape) != 2:
        raise DomainError("down-sampling needs 2-D image metadata")
    rows, cols = dataset.image_shape
    if (rows, cols) == (side, side):
        return dataset
    Pr, Pc = _area_weights(rows, side), _area_weights(cols, side)
    imgs = dataset.features.reshape(len(dataset), rows, cols)
    small = np.einsum("ia,nij,jb->nab", Pr, imgs, Pc)
    small = np.clip(small, 0.0, 1.0).reshape(len(dataset), side * side)
    return Dataset(small, dataset.labels, dataset.n_classes, (side, side),
                   dict(dataset.meta, downsampled=n_features))
