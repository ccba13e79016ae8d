"""Seeded Gaussian-mixture classification tasks with a known accuracy ceiling."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, DimensionError, DomainError
from .fsutil import atomic_write_bytes

_TRAIN, _VAL, _MEANS, _BAYES = 1, 2, 3, 4


def seed_stream(*key: int) -> np.random.Generator:
    """Independent generator for an integer key path, e.g. ``(seed, domain, index)``."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass(frozen=True, eq=False)
class GaussianMixtureSpec:
    """Isotropic Gaussian classes: class ``k`` is N(means[k], covariance_scale * I)."""

    means: np.ndarray
    covariance_scale: float = 1.0
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        object.__setattr__(self, "means", means)
        if means.ndim != 2:
            raise DimensionError(f"means must be a [classes, dim] matrix, got shape {means.shape}")
        c, d = means.shape
        if c < 2 or d < 2:
            raise DomainError(f"need at least 2 classes and 2 dimensions, got {c} x {d}")
        if not self.covariance_scale > 0:
            raise DomainError(f"covariance_scale must be positive, got {self.covariance_scale}")
        if not 0.0 <= self.label_noise < 1.0 - 1.0 / c:
            raise DomainError(f"label_noise must lie in [0, {1 - 1 / c:.4g}), got {self.label_noise}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def has_distinct_means(self) -> bool:
        return len({row.tobytes() for row in self.means}) == self.num_classes

    @classmethod
    def random(cls, num_classes: int, dim: int, separation: float, *, covariance_scale: float = 1.0,
               label_noise: float = 0.0, seed: int = 0) -> "GaussianMixtureSpec":
        """Class means drawn i.i.d. from N(0, separation^2 I) using ``seed``."""
        means = seed_stream(seed, _MEANS).normal(0.0, separation, size=(num_classes, dim))
        return cls(means, covariance_scale, label_noise, seed)

    def __eq__(self, other):
        if not isinstance(other, GaussianMixtureSpec):
            return NotImplemented
        return (np.array_equal(self.means, other.means) and self.covariance_scale == other.covariance_scale
                and self.label_noise == other.label_noise and self.seed == other.seed)


@dataclass(eq=False)
class DatasetSplit:
    features: np.ndarray
    labels: np.ndarray
    role: str = "train"
    num_classes: int = field(default=0)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise DimensionError(f"features {self.features.shape} and labels {self.labels.shape} disagree")
        if self.num_classes == 0:
            self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def tensor(self) -> Tensor:
        return Tensor(self.features)


def _sample(spec: GaussianMixtureSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    labels = rng.permutation(np.arange(n) % spec.num_classes)
    noise = rng.standard_normal((n, spec.dim))
    return spec.means[labels] + math.sqrt(spec.covariance_scale) * noise, labels


def generate(spec: GaussianMixtureSpec, n_train: int, n_val: int) -> tuple[DatasetSplit, DatasetSplit]:
    """Class-balanced train/val draws; a ``label_noise`` share of train labels is redrawn uniformly."""
    if n_train <= 0 or n_val <= 0:
        raise DomainError(f"split sizes must be positive, got n_train={n_train}, n_val={n_val}")
    rng = seed_stream(spec.seed, _TRAIN)
    x_train, y_train = _sample(spec, n_train, rng)
    n_noisy = int(round(spec.label_noise * n_train))
    if n_noisy:
        idx = rng.choice(n_train, size=n_noisy, replace=False)
        y_train[idx] = rng.integers(0, spec.num_classes, size=n_noisy)
    x_val, y_val = _sample(spec, n_val, seed_stream(spec.seed, _VAL))
    return (DatasetSplit(x_train, y_train, "train", spec.num_classes),
            DatasetSplit(x_val, y_val, "val", spec.num_classes))


@dataclass(frozen=True)
class BayesEstimate:
    accuracy: float
    stderr: float
    n_mc: int


def bayes_accuracy(spec: GaussianMixtureSpec, n_mc: int = 1_000_000, seed: int | None = None,
                   chunk: int = 50_000) -> BayesEstimate:
    """Monte Carlo accuracy of the argmax-density classifier under uniform class priors.

    Every class is scored against the same ``n_mc`` standard-normal draws, so
    relabelling the classes only reorders the per-class terms.
    """
    if n_mc < 10_000:
        raise DomainError(f"n_mc must be at least 1e4, got {n_mc}")
    rng = seed_stream(spec.seed if seed is None else seed, _BAYES)
    sigma = math.sqrt(spec.covariance_scale)
    means = spec.means
    sq_norms = (means**2).sum(axis=1)
    per_draw = np.zeros(n_mc)
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        z = rng.standard_normal((m, spec.dim))
        hits = np.zeros(m)
        for k in range(spec.num_classes):
            x = means[k] + sigma * z
            # equal isotropic covariances: argmax density == argmin squared distance
            scores = 2.0 * x @ means.T - sq_norms
            hits += scores.argmax(axis=1) == k
        per_draw[done:done + m] = hits / spec.num_classes
        done += m
    acc = float(per_draw.mean())
    se = float(per_draw.std(ddof=1) / math.sqrt(n_mc))
    return BayesEstimate(acc, se, n_mc)


def mixup(x1, x2, y1, y2, alpha: float, rng: np.random.Generator | None = None,
          m: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Convex blend of two examples with weight m ~ Beta(alpha, alpha).

    Pass ``m`` to pin the blend weight instead of drawing it.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if m is None:
        if rng is None:
            raise ContractError("mixup needs either rng or m")
        m = float(rng.beta(alpha, alpha))
    x1, x2 = np.asarray(x1, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    y1, y2 = np.asarray(y1, dtype=np.float64), np.asarray(y2, dtype=np.float64)
    return m * x1 + (1.0 - m) * x2, m * y1 + (1.0 - m) * y2


def mixup_batch(x: np.ndarray, labels: np.ndarray, num_classes: int, alpha: float,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-example mixup of a batch against a shuffled copy of itself."""
    onehot = np.eye(num_classes)[labels]
    partner = rng.permutation(len(x))
    m = rng.beta(alpha, alpha, size=(len(x), 1))
    return m * x + (1.0 - m) * x[partner], m * onehot + (1.0 - m) * onehot[partner]


def epoch_order(n: int, epoch_seed: int, epoch: int) -> np.ndarray:
    return seed_stream(epoch_seed, epoch).permutation(n)


def batches(split: DatasetSplit, batch_size: int, epoch_seed: int, epoch: int = 0
            ) -> Iterator[tuple[Tensor, np.ndarray]]:
    """One epoch of shuffled batches; the final short batch is kept."""
    if batch_size <= 0:
        raise DomainError(f"batch_size must be positive, got {batch_size}")
    if batch_size > len(split):
        raise ContractError(f"batch_size {batch_size} exceeds split size {len(split)}")
    order = epoch_order(len(split), epoch_seed, epoch)
    for start in range(0, len(split), batch_size):
        idx = order[start:start + batch_size]
        yield Tensor(split.features[idx]), split.labels[idx]


def batch_stream(split: DatasetSplit, batch_size: int, epoch_seed: int
                 ) -> Iterator[tuple[Tensor, np.ndarray]]:
    """Endless concatenation of epochs 0, 1, 2, ..."""
    epoch = 0
    while True:
        yield from batches(split, batch_size, epoch_seed, epoch)
        epoch += 1


_DS_MAGIC = b"DBDS"
_DS_VERSION = 1


def save_split(split: DatasetSplit, path: str | Path) -> None:
    """Little-endian: magic, u32 version, u64 rows, u64 dim, u32 classes, f64 features, i32 labels."""
    n, d = split.features.shape
    header = _DS_MAGIC + struct.pack("<IQQI", _DS_VERSION, n, d, split.num_classes)
    body = split.features.astype("<f8").tobytes() + split.labels.astype("<i4").tobytes()
    atomic_write_bytes(path, header + body)


def load_split(path: str | Path, role: str = "train") -> DatasetSplit:
    raw = Path(path).read_bytes()
    if raw[:4] != _DS_MAGIC:
        raise ContractError(f"{path}: not a dataset file")
    version, n, d, c = struct.unpack_from("<IQQI", raw, 4)
    if version != _DS_VERSION:
        raise ContractError(f"{path}: unsupported dataset version {version}")
    off = 4 + struct.calcsize("<IQQI")
    feats = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off + 8 * n * d)
    return DatasetSplit(feats.astype(np.float64), labels.astype(np.int64), role, c)
