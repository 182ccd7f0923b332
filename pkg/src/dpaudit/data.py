"""Datasets, CSV ingestion and synthetic generators."""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path

import numpy as np

from dpaudit.numerics import RngStream, as_matrix


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with integer labels in ``[0, class_count)``."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        x = as_matrix(self.features, "features")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError(f"labels must be a vector of length {x.shape[0]}, got shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("labels must be integers")
            y = y.astype(np.int64)
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        x = x.copy()
        y = y.astype(np.int64).copy()
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def replace_rows(self, indices, rows, labels) -> "Dataset":
        """Return a copy with ``features[indices] = rows`` and matching labels."""
        idx = np.asarray(indices, dtype=np.int64)
        x = np.array(self.features)
        y = np.array(self.labels)
        x[idx] = np.asarray(rows, dtype=np.float64).reshape(len(idx), self.d)
        y[idx] = labels
        return Dataset(x, y, self.class_count)

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.labels, self.class_count)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_count)

    def differing_rows(self, other: "Dataset") -> np.ndarray:
        """Indices of rows whose features or label differ from ``other``."""
        if self.features.shape != other.features.shape:
            raise ValueError("datasets have different shapes")
        feat = np.any(self.features != other.features, axis=1)
        return np.flatnonzero(feat | (self.labels != other.labels))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


class DataFormatError(ValueError):
    """Raised for malformed dataset files; the message carries the line number."""


def load_dataset(path, format: str = "csv", class_count: int | None = None) -> Dataset:
    """Read a dataset file.

    The CSV layout is a header row, a column named ``label`` and numeric
    feature columns everywhere else. Labels must be non-negative integers;
    ``class_count`` defaults to ``max(label) + 1`` (at least 2).
    """
    if format != "csv":
        raise ValueError(f"unsupported dataset format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if "label" not in header:
            raise DataFormatError(f"{path}:1: no 'label' column in header")
        label_col = header.index("label")
        width = len(header)
        rows, labels = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != width:
                raise DataFormatError(f"{path}:{lineno}: expected {width} fields, got {len(record)}")
            try:
                values = [float(cell) for cell in record]
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric cell") from None
            if not all(math.isfinite(v) for v in values):
                raise DataFormatError(f"{path}:{lineno}: non-finite cell")
            lab = values.pop(label_col)
            if lab != int(lab) or lab < 0:
                raise DataFormatError(f"{path}:{lineno}: label {record[label_col]!r} is not a class index")
            if class_count is not None and lab >= class_count:
                raise DataFormatError(f"{path}:{lineno}: label {int(lab)} outside [0, {class_count})")
            rows.append(values)
            labels.append(int(lab))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    if width < 2:
        raise DataFormatError(f"{path}:1: no feature columns")
    y = np.asarray(labels, dtype=np.int64)
    classes = class_count if class_count is not None else max(2, int(y.max()) + 1)
    return Dataset(np.asarray(rows), y, classes)


def save_dataset(data: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(data.d)] + ["label"])
        for row, lab in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    """Synthetic dataset description.

    ``kind="gauss"`` draws a balanced two-class Gaussian mixture: class means
    at ``+-separation/2`` along the first axis, unit isotropic covariance
    otherwise. ``kind="images"`` draws ``side x side`` grayscale images in
    [0, 1] whose class determines a stroke pattern; a dark border margin of
    ``border`` pixels mimics the empty corners of real digit/clothing scans.
    """

    kind: str = "gauss"
    n: int = 1000
    d: int = 20
    separation: float = 4.0
    side: int = 28
    border: int = 6
    noise: float = 0.1

    @classmethod
    def parse(cls, text: str) -> "SynthSpec":
        """Parse ``"kind:key=value,..."``, e.g. ``"gauss:n=1000,d=20"``."""
        kind, _, rest = text.partition(":")
        kind = kind.strip() or "gauss"
        kwargs = {}
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            key = key.strip()
            if not eq or key not in fields or key == "kind":
                raise ValueError(f"bad synthetic spec item {item!r}")
            kwargs[key] = float(value) if key in ("separation", "noise") else int(value)
        return cls(kind=kind, **kwargs)

    def to_string(self) -> str:
        if self.kind == "images":
            return f"images:n={self.n},side={self.side},border={self.border},noise={self.noise}"
        return f"gauss:n={self.n},d={self.d},separation={self.separation}"


def synth_dataset(spec: SynthSpec, rng: RngStream) -> Dataset:
    """Draw a balanced two-class synthetic dataset (``n // 2`` rows per class)."""
    if spec.n < 2:
        raise ValueError("synthetic datasets need n >= 2")
    g = rng.generator
    labels = np.repeat([0, 1], [spec.n // 2, spec.n - spec.n // 2])
    labels = labels[g.permutation(spec.n)]
    if spec.kind == "gauss":
        if spec.d < 1:
            raise ValueError("d must be >= 1")
        x = g.standard_normal((spec.n, spec.d))
        x[:, 0] += np.where(labels == 1, 0.5, -0.5) * spec.separation
        return Dataset(x, labels, 2)
    if spec.kind == "images":
        return Dataset(_synth_images(spec, labels, g), labels, 2)
    raise ValueError(f"unknown synthetic kind {spec.kind!r}")


def _synth_images(spec: SynthSpec, labels: np.ndarray, g: np.random.Generator) -> np.ndarray:
    side, border = spec.side, spec.border
    if side - 2 * border < 4:
        raise ValueError("image side too small for the border")
    inner = side - 2 * border
    rr, cc = np.mgrid[0:inner, 0:inner] / (inner - 1)
    # class 0: a filled blob ("shirt"), class 1: two vertical bars ("trousers")
    blob = np.exp(-((rr - 0.5) ** 2 + (cc - 0.5) ** 2) / 0.08)
    bars = np.exp(-((cc - 0.3) ** 2) / 0.01) + np.exp(-((cc - 0.7) ** 2) / 0.01)
    templates = np.stack([blob / blob.max(), bars / bars.max()])
    n = labels.shape[0]
    brightness = g.uniform(0.6, 1.0, size=(n, 1, 1))
    body = templates[labels] * brightness + spec.noise * g.standard_normal((n, inner, inner))
    images = np.zeros((n, side, side))
    images[:, border:side - border, border:side - border] = np.clip(body, 0.0, 1.0)
    return images.reshape(n, side * side)


def train_test_split(data: Dataset, test_fraction: float, rng: RngStream) -> tuple[Dataset, Dataset]:
    perm = rng.generator.permutation(data.n)
    n_test = int(round(data.n * test_fraction))
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))
