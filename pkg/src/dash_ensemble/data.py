"""Synthetic generators, delimited-file I/O and dataset splitting."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError, EmptyFileError, NonNumericCellError, ParameterError, RaggedRowError,
)
from .model import Batch
from .tensor import Rng, as_tensor


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    label_names: list = field(default=None)

    def __post_init__(self):
        self.inputs = as_tensor(self.inputs, ndim=2)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        self.n_classes = int(self.n_classes)
        if self.inputs.shape[0] < 1:
            raise DataError("a dataset needs at least one row")
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise DataError(f"{self.inputs.shape[0]} rows but {self.labels.shape[0]} labels")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if self.label_names is not None and len(self.label_names) != self.n_classes:
            raise DataError("label_names must have one entry per class")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def bounds(self):
        return self.inputs.min(axis=0), self.inputs.max(axis=0)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes, self.label_names)

    def batch(self, idx=None):
        if idx is None:
            return Batch(self.inputs, self.labels)
        return Batch(self.inputs[idx], self.labels[idx])


def gen_two_moons(n, noise_sd=0.0, seed=0):
    """Two interleaved half circles, ``n/2`` points each.

    Class 0: ``(cos t, sin t)``; class 1: ``(1 - cos t, 0.5 - sin t)``, with
    ``t`` evenly spaced over ``[0, pi]``.  Gaussian noise of scale
    ``noise_sd`` is added to both coordinates.
    """
    n = int(n)
    if n < 2 or n % 2:
        raise ParameterError(f"two-moons needs an even n >= 2, got {n}")
    if noise_sd < 0:
        raise ParameterError(f"noise_sd must be nonnegative, got {noise_sd}")
    half = n // 2
    t = np.linspace(0.0, math.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    x = np.vstack([upper, lower])
    y = np.repeat([0, 1], half)
    if noise_sd > 0:
        x = x + Rng(seed).normal(0.0, noise_sd, size=x.shape)
    return Dataset(x, y, 2)


def gen_spirals(n, turns=1.0, noise_sd=0.0, classes=2, seed=0):
    """``classes`` interleaved Archimedean spiral arms with ``n/classes`` points each.

    Point ``j`` of arm ``c`` has radius ``r = (j+1)/n_per`` and angle
    ``2*pi*(turns*r + c/classes)``.
    """
    n, classes = int(n), int(classes)
    if classes < 2:
        raise ParameterError(f"spirals need at least 2 classes, got {classes}")
    if n < classes or n % classes:
        raise ParameterError(f"n={n} must be a positive multiple of classes={classes}")
    if noise_sd < 0:
        raise ParameterError(f"noise_sd must be nonnegative, got {noise_sd}")
    per = n // classes
    r = np.arange(1, per + 1) / per
    xs, ys = [], []
    for c in range(classes):
        angle = 2.0 * math.pi * (turns * r + c / classes)
        xs.append(np.column_stack([r * np.cos(angle), r * np.sin(angle)]))
        ys.append(np.full(per, c))
    x = np.vstack(xs)
    if noise_sd > 0:
        x = x + Rng(seed).normal(0.0, noise_sd, size=x.shape)
    return Dataset(x, np.concatenate(ys), classes)


# ------------------------------------------------------------------ file I/O

def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_delimited(path, label_column=-1, delimiter=",", label_names=None):
    """Read a comma/tab separated file into a :class:`Dataset`.

    A first row whose feature cells are not all numeric is treated as a
    header.  Labels that are all nonnegative integers are used as class
    indices directly; any other labels are mapped to ``0..M-1`` in order of
    first appearance (or by position in ``label_names`` when given, so that
    train and test files agree) and the originals kept in ``label_names``.  ``label_column``
    is a column index (negative counts from the end) or, with a header, a
    column name.
    """
    path = str(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    if not rows:
        raise EmptyFileError(path)
    width = len(rows[0])
    if width < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")
    header = None
    col = label_column
    if isinstance(col, str):
        if col not in rows[0]:
            raise DataError(f"{path}: label column {col!r} not found in header")
        col = rows[0].index(col)
    col = int(col) % width
    feat_cols = [k for k in range(width) if k != col]
    if not all(_is_float(rows[0][k]) for k in feat_cols):
        header = rows[0]
        rows = rows[1:]
    if not rows:
        raise EmptyFileError(path)
    first = 2 if header is not None else 1
    x = np.empty((len(rows), width - 1))
    raw_labels = []
    for r, row in enumerate(rows):
        lineno = r + first
        if len(row) != width:
            raise RaggedRowError(path, lineno, width, len(row))
        for j, k in enumerate(feat_cols):
            try:
                x[r, j] = float(row[k])
            except ValueError:
                raise NonNumericCellError(path, lineno, k + 1, row[k]) from None
        raw_labels.append(row[col].strip())
    if label_names is not None:
        mapping = {name: k for k, name in enumerate(label_names)}
        unknown = sorted(set(raw_labels) - set(mapping))
        if unknown:
            raise DataError(f"{path}: labels {unknown} not in the supplied label names")
    elif all(lab.isdigit() for lab in raw_labels):
        labels = np.array([int(lab) for lab in raw_labels])
        return _finish(Dataset(x, labels, int(labels.max()) + 1), header)
    else:
        mapping = {}
        for lab in raw_labels:
            mapping.setdefault(lab, len(mapping))
    labels = np.array([mapping[lab] for lab in raw_labels])
    names = list(mapping)
    return _finish(Dataset(x, labels, len(names), names), header)


def _finish(ds, header):
    ds.header = header
    return ds


def format_delimited(dataset, delimiter=","):
    """The text :func:`save_delimited` writes: an ``x0..x{d-1},label`` header, then rows.

    Floats are written with ``repr`` so a load reproduces them exactly.
    """
    names = dataset.label_names
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow([f"x{k}" for k in range(dataset.dim)] + ["label"])
    for xi, yi in zip(dataset.inputs, dataset.labels):
        w.writerow([repr(float(v)) for v in xi] + [names[yi] if names else int(yi)])
    return buf.getvalue()


def save_delimited(dataset, path, delimiter=","):
    with open(path, "w", newline="") as fh:
        fh.write(format_delimited(dataset, delimiter))


# ----------------------------------------------------------------- splitting

def _split_sizes(n, fractions):
    sizes = [int(math.floor(n * f)) for f in fractions]
    rem = n - sum(sizes)
    k = 0
    while rem > 0:
        if fractions[k % len(fractions)] > 0:
            sizes[k % len(fractions)] += 1
            rem -= 1
        k += 1
    return sizes


def split(dataset, fractions=(0.8, 0.1, 0.1), seed=0, stratified=False):
    """Shuffle and cut into train/validation/test.

    Sizes are ``floor(n*f)`` with leftover rows handed out train first, then
    validation, then test.  With ``stratified`` the rule is applied per class.
    Empty parts come back as ``None``.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or max(fractions) <= 0:
        raise ParameterError(f"need three nonnegative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must sum to 1, got {sum(fractions)}")
    rng = Rng(seed)
    parts = [[], [], []]
    if stratified:
        active = sum(f > 0 for f in fractions)
        for c in range(dataset.n_classes):
            idx = np.flatnonzero(dataset.labels == c)
            if 0 < len(idx) < active:
                raise DataError(f"class {c} has {len(idx)} samples, fewer than the {active} requested splits")
            idx = idx[rng.child(c).permutation(len(idx))]
            start = 0
            for p, size in enumerate(_split_sizes(len(idx), fractions)):
                parts[p].append(idx[start:start + size])
                start += size
        parts = [np.sort(np.concatenate(p)) for p in parts]
        parts = [p[rng.child(dataset.n_classes + k).permutation(len(p))] for k, p in enumerate(parts)]
    else:
        perm = rng.permutation(len(dataset))
        start = 0
        for p, size in enumerate(_split_sizes(len(dataset), fractions)):
            parts[p] = perm[start:start + size]
            start += size
    return tuple(dataset.subset(p) if len(p) else None for p in parts)


def standardize(train, *others):
    """Zero-mean unit-variance features using statistics of ``train`` only."""
    mu = train.inputs.mean(axis=0)
    sd = train.inputs.std(axis=0)
    sd[sd == 0] = 1.0

    def apply(ds):
        if ds is None:
            return None
        return Dataset((ds.inputs - mu) / sd, ds.labels, ds.n_classes, ds.label_names)

    return (apply(train),) + tuple(apply(o) for o in others)
