"""Synthetic classification data with controlled label noise.

Class-conditional Gaussian blobs stand in for image benchmarks at desk scale;
flip_labels corrupts a chosen fraction of training labels to a uniformly
random incorrect class while keeping the originals and a per-sample mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .losses import Sample
from .mlp import MlpSpec, accuracy_on


@dataclass
class Dataset:
    samples: list[Sample]
    num_classes: int
    noise_mask: np.ndarray = field(default=None)
    original_labels: np.ndarray = field(default=None)

    def __post_init__(self):
        m = len(self.samples)
        if self.noise_mask is None:
            self.noise_mask = np.zeros(m, dtype=bool)
        if self.original_labels is None:
            self.original_labels = np.array([z.label for z in self.samples], dtype=int)
        self.noise_mask = np.asarray(self.noise_mask, dtype=bool)
        self.original_labels = np.asarray(self.original_labels, dtype=int)
        if self.noise_mask.shape != (m,) or self.original_labels.shape != (m,):
            raise ValueError("mask and original labels must have one entry per sample")
        for z, flipped, orig in zip(self.samples, self.noise_mask, self.original_labels):
            if not 0 <= z.label < self.num_classes:
                raise ValueError(f"label {z.label} outside [0, {self.num_classes})")
            if flipped and z.label == orig:
                raise ValueError("masked sample whose label equals its original")

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([z.label for z in self.samples], dtype=int)

    def features_matrix(self) -> np.ndarray:
        return np.stack([z.features for z in self.samples])

    @staticmethod
    def from_labels(labels: Sequence[int], num_classes: int = 2) -> "Dataset":
        """Feature-free dataset for the 1-D analytic losses."""
        return Dataset(samples=[Sample(label=int(l)) for l in labels], num_classes=num_classes)


def class_means(num_classes: int, d: int, separation: float) -> np.ndarray:
    """Blob centers: the first num_classes coordinate axes scaled by separation
    (vertices of a regular simplex)."""
    if d < num_classes:
        raise ValueError(f"need d >= num_classes, got d={d} < {num_classes}")
    means = np.zeros((num_classes, d))
    means[np.arange(num_classes), np.arange(num_classes)] = separation
    return means


def gen_gaussian_blobs(num_classes: int, n: int, d: int, separation: float, seed) -> Dataset:
    """Balanced isotropic Gaussian blobs, deterministic in the seed.

    Sample i belongs to class i mod num_classes, so any prefix is as balanced
    as it can be.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if separation <= 0:
        raise ValueError("separation must be positive")
    rng = np.random.default_rng(seed)
    means = class_means(num_classes, d, separation)
    samples = []
    for i in range(n):
        label = i % num_classes
        features = means[label] + rng.standard_normal(d)
        samples.append(Sample(features=features, label=label))
    return Dataset(samples=samples, num_classes=num_classes)


def flip_labels(data: Dataset, frac: float, rng: np.random.Generator) -> Dataset:
    """Flip exactly round(frac * m) uniformly chosen labels to a uniformly
    random incorrect class. Features are shared with the input dataset
    bit-for-bit; only labels and the mask change."""
    if not 0.0 <= frac <= 1.0:
        raise ValueError("frac must be in [0, 1]")
    if data.num_classes < 2:
        raise ValueError("need at least two classes to flip")
    m = len(data)
    k = int(round(frac * m))
    chosen = rng.choice(m, size=k, replace=False) if k else np.array([], dtype=int)
    chosen_set = set(int(i) for i in chosen)
    mask = np.zeros(m, dtype=bool)
    originals = data.labels()
    samples = []
    for i, z in enumerate(data.samples):
        if i in chosen_set:
            # Uniform over the other classes: skip the original label.
            offset = int(rng.integers(0, data.num_classes - 1))
            new_label = offset if offset < z.label else offset + 1
            samples.append(Sample(features=z.features, label=new_label, target=z.target))
            mask[i] = True
        else:
            samples.append(z)
    return Dataset(
        samples=samples,
        num_classes=data.num_classes,
        noise_mask=mask,
        original_labels=originals,
    )


def accuracy(spec: MlpSpec, w, data: Dataset) -> float:
    """Fraction of samples whose argmax logit (ties to the lowest class index)
    matches the label."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    return accuracy_on(spec, w, data.samples)
