"""Labelled feature datasets: CSV I/O and a synthetic Gaussian-cluster generator."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DroPairsError


class ParseError(DroPairsError, ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels, dtype=np.int64)
        if x.shape[0] != y.shape[0]:
            raise ValueError("features and labels disagree on the number of examples")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])


def format_float(x) -> str:
    """Shortest decimal string that parses back to the same double."""
    return repr(float(x))


def parse_dataset(text: str, source="<string>") -> Dataset:
    """Parse ``label,x1,...,xD`` rows (no header)."""
    rows, labels = [], []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) < 2:
            raise ParseError(f"{source}:{lineno}: expected label and at least one feature")
        try:
            label = int(parts[0])
            feats = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise ParseError(f"{source}:{lineno}: non-numeric field ({exc})") from None
        if label < 0:
            raise ParseError(f"{source}:{lineno}: labels must be non-negative")
        if width is None:
            width = len(feats)
        elif len(feats) != width:
            raise ParseError(f"{source}:{lineno}: expected {width} features, found {len(feats)}")
        rows.append(feats)
        labels.append(label)
    if not rows:
        raise ParseError(f"{source}:1: empty dataset")
    return Dataset(np.array(rows), np.array(labels))


def load_dataset(path) -> Dataset:
    path = Path(path)
    return parse_dataset(path.read_text(), source=str(path))


def dump_dataset(ds: Dataset) -> str:
    return "".join(
        f"{lab}," + ",".join(format_float(v) for v in row) + "\n"
        for lab, row in zip(ds.labels.tolist(), ds.features)
    )


def save_dataset(ds: Dataset, path):
    Path(path).write_text(dump_dataset(ds))


def gen_synthetic(classes=10, per_class=30, dim=16, spread=0.5, seed=0) -> Dataset:
    """Gaussian clusters around class means drawn uniformly on the unit sphere."""
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    labels = np.repeat(np.arange(classes), per_class)
    x = means[labels] + spread * rng.standard_normal((labels.size, dim))
    return Dataset(x, labels)
