"""Reproducible datasets: two-spiral classification, 2D grid regression,
and an MNIST IDX loader. All generators are pure functions of their seeds.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    inputs: np.ndarray  # n x d
    targets: np.ndarray  # (n,) int class ids, or n x k float
    task: str  # "classification" | "regression"
    split: str = "train"
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def num_classes(self) -> int:
        if self.task != "classification":
            raise ValueError("num_classes is only defined for classification")
        return int(self.targets.max()) + 1

    @property
    def output_dim(self) -> int:
        return self.num_classes if self.task == "classification" \
            else self.targets.shape[1]


def gen_spiral(n_per_class: int, noise_sd: float = 0.02, seed: int = 0,
               split: str = "train") -> Dataset:
    """Two interleaved spirals, one per class.

    Arm c: t ~ U[0, 3pi], radius t/(3pi), angle t + c*pi, plus isotropic
    gaussian jitter. With zero noise the arms are disjoint curves.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    points = []
    for c in (0, 1):
        t = rng.uniform(0.0, 3.0 * np.pi, size=n_per_class)
        radius = t / (3.0 * np.pi)
        angle = t + c * np.pi
        xy = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        xy += rng.normal(0.0, noise_sd, size=xy.shape)
        points.append(xy)
    inputs = np.concatenate(points, axis=0)
    targets = np.repeat(np.arange(2), n_per_class)
    return Dataset(inputs, targets, "classification", split, seed)


def grid_target(xy: np.ndarray) -> np.ndarray:
    """Smooth 2D test surface sin(3x) * cos(3y)."""
    return np.sin(3.0 * xy[:, 0]) * np.cos(3.0 * xy[:, 1])


def gen_grid_regression(n: int, seed: int = 0, split: str = "train") -> Dataset:
    """Points uniform on [-1, 1]^2 with the smooth surface as target."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(-1.0, 1.0, size=(n, 2))
    targets = grid_target(inputs)[:, None]
    return Dataset(inputs, targets, "regression", split, seed)


# ---------------------------------------------------------------------------
# MNIST IDX files

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    pass


def _read_file(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _take(buf: bytes, offset: int, count: int, path: Path) -> bytes:
    if offset + count > len(buf):
        raise IdxFormatError(f"{path}: truncated (wanted {offset + count} bytes, "
                             f"have {len(buf)})")
    return buf[offset:offset + count]


def read_idx_images(path: str | Path) -> np.ndarray:
    """Parse an IDX image file into n x (rows*cols) floats in [0, 1]."""
    path = Path(path)
    buf = _read_file(path)
    magic, n, rows, cols = struct.unpack(">IIII", _take(buf, 0, 16, path))
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"{path}: bad image magic 0x{magic:08x}")
    pixels = _take(buf, 16, n * rows * cols, path)
    data = np.frombuffer(pixels, dtype=np.uint8).reshape(n, rows * cols)
    return data.astype(np.float32) / 255.0


def read_idx_labels(path: str | Path) -> np.ndarray:
    path = Path(path)
    buf = _read_file(path)
    magic, n = struct.unpack(">II", _take(buf, 0, 8, path))
    if magic != IDX_LABEL_MAGIC:
        raise IdxFormatError(f"{path}: bad label magic 0x{magic:08x}")
    return np.frombuffer(_take(buf, 8, n, path), dtype=np.uint8).astype(np.int64)


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"),
                 stem.replace("-idx", ".idx") + ".gz"):
        candidate = directory / name
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{directory}: missing MNIST file {stem}[.gz]")


def load_mnist(directory: str | Path) -> tuple[Dataset, Dataset]:
    """Load the four canonical IDX files from `directory`."""
    directory = Path(directory)
    out = []
    for split, (image_stem, label_stem) in _MNIST_FILES.items():
        images = read_idx_images(_find(directory, image_stem))
        labels = read_idx_labels(_find(directory, label_stem))
        if images.shape[0] != labels.shape[0]:
            raise IdxFormatError(
                f"{directory}: {split} has {images.shape[0]} images but "
                f"{labels.shape[0]} labels"
            )
        out.append(Dataset(images, labels, "classification", split))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# batching / export

def batches(dataset: Dataset, batch_size: int, shuffle_seed=None):
    """Yield (inputs, targets) batches; the last one may be short.

    With a seed the permutation is a pure function of it; without, rows come
    in stored order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = dataset.n
    if shuffle_seed is None:
        order = np.arange(n)
    else:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield dataset.inputs[idx], dataset.targets[idx]


def to_csv(dataset: Dataset, path: str | Path) -> None:
    """Plain CSV dump (feature columns then target), e.g. for scatter plots."""
    targets = dataset.targets
    if targets.ndim == 1:
        targets = targets[:, None]
    header = [f"x{i}" for i in range(dataset.input_dim)]
    header += [f"y{i}" for i in range(targets.shape[1])]
    rows = np.concatenate([dataset.inputs, targets.astype(np.float64)], axis=1)
    lines = [",".join(header)]
    lines += [",".join(repr(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")
