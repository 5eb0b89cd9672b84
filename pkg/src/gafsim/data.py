"""Synthetic datasets, symmetric label noise, and macrobatch sampling.

Datasets are immutable after construction: noise injection and subsetting
return new Dataset objects. Label noise flips an exact count of labels,
round(rate * n), chosen without replacement, each to a uniformly random
*different* class, and the flips are fixed for the lifetime of the dataset.
Sampling is pure given a step seed, so every draw is reproducible.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

STRATIFIED = "stratified"
UNIFORM = "uniform"

GAUSSIAN = "gaussian"
WHITE_NOISE = "white_noise"
CSV = "csv"


@dataclass
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64, possibly noisy
    clean_labels: np.ndarray  # (n,) int64 ground truth
    num_classes: int
    noise_rate: float
    seed: int

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels.shape[0] != n or self.clean_labels.shape[0] != n:
            raise ValueError("features and labels disagree on row count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class Microbatch:
    """One worker's slice of a macrobatch: row indices plus materialized views."""

    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class DataConfig:
    """Declarative dataset source for the training loop.

    kind selects the generator: "gaussian" (n_per_class per class around
    random unit means, spread sigma), "white_noise" (n rows, no
    feature-label relationship), or "csv" (path to f0,...,label file).
    noise_rate > 0 additionally flips that fraction of labels for the run.
    """

    kind: str
    num_classes: int = 10
    input_dim: int = 32
    n_per_class: int = 500
    n: int = 2000
    sigma: float = 1.0
    noise_rate: float = 0.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, WHITE_NOISE, CSV):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must be in [0, 1]")
        if self.kind == CSV and not self.path:
            raise ValueError("csv dataset needs a path")


def make_dataset(cfg: DataConfig, seed: int) -> Dataset:
    """Materialize the configured source (noise injection happens separately)."""
    if cfg.kind == GAUSSIAN:
        return gen_gaussian_clusters(cfg.num_classes, cfg.input_dim, cfg.n_per_class, cfg.sigma, seed)
    if cfg.kind == WHITE_NOISE:
        return gen_white_noise(cfg.num_classes, cfg.input_dim, cfg.n, seed)
    return load_csv(cfg.path)


def gen_gaussian_clusters(
    num_classes: int, input_dim: int, n_per_class: int, sigma: float, seed: int
) -> Dataset:
    """Isotropic Gaussian blobs around per-class random unit-vector means."""
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if input_dim < 1 or n_per_class < 1:
        raise ValueError("input_dim and n_per_class must be positive")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(num_classes, input_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    features = np.empty((num_classes * n_per_class, input_dim))
    labels = np.empty(num_classes * n_per_class, dtype=np.int64)
    for c in range(num_classes):
        block = slice(c * n_per_class, (c + 1) * n_per_class)
        features[block] = means[c] + sigma * rng.normal(size=(n_per_class, input_dim))
        labels[block] = c
    return Dataset(
        features=features,
        labels=labels,
        clean_labels=labels.copy(),
        num_classes=num_classes,
        noise_rate=0.0,
        seed=seed,
    )


def gen_white_noise(num_classes: int, input_dim: int, n: int, seed: int) -> Dataset:
    """Pure noise: i.i.d. standard-normal features, uniform labels, no relationship."""
    if num_classes < 2 or input_dim < 1 or n < 1:
        raise ValueError("invalid white-noise dimensions")
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, input_dim))
    labels = rng.integers(0, num_classes, size=n).astype(np.int64)
    return Dataset(
        features=features,
        labels=labels,
        clean_labels=labels.copy(),
        num_classes=num_classes,
        noise_rate=0.0,
        seed=seed,
    )


def inject_symmetric_noise(ds: Dataset, rate: float, seed: int) -> Dataset:
    """Flip exactly round(rate * n) labels to a random different class.

    Flips are applied relative to the clean labels, so re-injecting replaces
    any earlier noise instead of compounding it. Features are shared with
    the source dataset, bit for bit.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"noise rate must be in [0, 1], got {rate}")
    n = ds.n
    n_flip = round(rate * n)
    labels = ds.clean_labels.copy()
    if n_flip > 0:
        rng = np.random.default_rng(seed)
        idx = rng.choice(n, size=n_flip, replace=False)
        # uniform over the C-1 classes other than the clean one
        draws = rng.integers(0, ds.num_classes - 1, size=n_flip)
        labels[idx] = draws + (draws >= ds.clean_labels[idx])
    return Dataset(
        features=ds.features,
        labels=labels,
        clean_labels=ds.clean_labels,
        num_classes=ds.num_classes,
        noise_rate=rate,
        seed=ds.seed,
    )


def take(ds: Dataset, indices: np.ndarray) -> Dataset:
    """Row subset as a new Dataset (noise_rate recomputed on the subset)."""
    indices = np.asarray(indices)
    labels = ds.labels[indices]
    clean = ds.clean_labels[indices]
    rate = float((labels != clean).mean()) if indices.size else 0.0
    return Dataset(
        features=ds.features[indices],
        labels=labels,
        clean_labels=clean,
        num_classes=ds.num_classes,
        noise_rate=rate,
        seed=ds.seed,
    )


def sample_macrobatch(
    ds: Dataset, k: int, u: int, mode: str, step_seed: int
) -> list[Microbatch]:
    """Draw k pairwise-disjoint microbatches of size u.

    Stratified mode draws u / num_classes samples per class per microbatch
    (u must divide evenly), so all k microbatches share one class histogram.
    Uniform mode draws k*u distinct rows and chunks them. Deterministic
    given step_seed.
    """
    if k < 1 or u < 1:
        raise ValueError("k and u must be positive")
    rng = np.random.default_rng(step_seed)
    if mode == STRATIFIED:
        if u % ds.num_classes != 0:
            raise ValueError(
                f"stratified sampling needs u divisible by num_classes ({u} % {ds.num_classes} != 0)"
            )
        per_class = u // ds.num_classes
        picks = np.empty((k, u), dtype=np.int64)
        col = 0
        for c in range(ds.num_classes):
            pool = np.flatnonzero(ds.labels == c)
            need = k * per_class
            if pool.size < need:
                raise ValueError(
                    f"class {c} has {pool.size} samples, need {need} for k={k}, u={u}"
                )
            chosen = rng.choice(pool, size=need, replace=False)
            picks[:, col : col + per_class] = chosen.reshape(k, per_class)
            col += per_class
    elif mode == UNIFORM:
        if k * u > ds.n:
            raise ValueError(f"macrobatch k*u={k * u} exceeds dataset size {ds.n}")
        picks = rng.choice(ds.n, size=k * u, replace=False).reshape(k, u)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")

    return [
        Microbatch(indices=row, features=ds.features[row], labels=ds.labels[row])
        for row in picks
    ]


def load_csv(path) -> Dataset:
    """Read a dataset from CSV with header f0,...,f{d-1},label.

    Features are 64-bit reals; labels are non-negative integers. Rows with
    the wrong number of fields are rejected.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        d = len(header) - 1
        expected = [f"f{i}" for i in range(d)] + ["label"]
        if d < 1 or header != expected:
            raise ValueError(f"{path}: header must be f0,...,f{{d-1}},label")
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            feats.append([float(v) for v in row[:d]])
            if not re.fullmatch(r"\d+", row[d].strip()):
                raise ValueError(f"{path}:{lineno}: label must be a non-negative integer")
            labels.append(int(row[d]))
    if not feats:
        raise ValueError(f"{path}: no data rows")
    features = np.asarray(feats, dtype=np.float64)
    label_arr = np.asarray(labels, dtype=np.int64)
    return Dataset(
        features=features,
        labels=label_arr,
        clean_labels=label_arr.copy(),
        num_classes=int(label_arr.max()) + 1,
        noise_rate=0.0,
        seed=0,
    )
