"""Censored datasets: the synthetic sine generator, CSV ingestion, splits and
feature standardisation.

Observations follow the right-censoring convention ``y = min(y*, z)`` with
``l = (y* <= z)``, so ``l`` is True for an uncensored observation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed input data or an impossible split request."""


@dataclass(frozen=True)
class CensoredSample:
    x: np.ndarray
    y: float
    l: bool

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "l", bool(self.l))
        if not (np.all(np.isfinite(x)) and math.isfinite(self.y)):
            raise DataError("censored sample has non-finite features or target")


class Dataset:
    """Array-backed collection of censored samples.

    Indexing with an integer gives a :class:`CensoredSample`; indexing with an
    index array gives a new ``Dataset``.
    """

    def __init__(self, X, y, l):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        self.X = X
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        self.l = np.asarray(l, dtype=bool).reshape(-1)
        if not (len(self.X) == len(self.y) == len(self.l)):
            raise DataError("feature, target and indicator arrays differ in length")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DataError("dataset contains non-finite values")

    @classmethod
    def from_samples(cls, samples: Iterable[CensoredSample]) -> Dataset:
        samples = list(samples)
        if not samples:
            raise DataError("cannot build a dataset from zero samples")
        return cls(np.stack([s.x for s in samples]), [s.y for s in samples], [s.l for s in samples])

    @classmethod
    def coerce(cls, data) -> Dataset:
        return data if isinstance(data, Dataset) else cls.from_samples(data)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, idx):
        if np.isscalar(idx) or isinstance(idx, (int, np.integer)):
            return CensoredSample(self.X[idx], self.y[idx], self.l[idx])
        return Dataset(self.X[idx], self.y[idx], self.l[idx])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def samples(self) -> list[CensoredSample]:
        return list(self)

    def censored_fraction(self) -> float:
        return float(np.mean(~self.l))

    def concat(self, other: Dataset) -> Dataset:
        return Dataset(np.vstack([self.X, other.X]), np.r_[self.y, other.y], np.r_[self.l, other.l])


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticPoint:
    x: float
    y_star: float
    z: float
    y: float
    l: bool


@dataclass(frozen=True)
class SyntheticData:
    """Columns of generated points, latent ``y_star`` and ``z`` included."""

    x: np.ndarray
    y_star: np.ndarray
    z: np.ndarray
    eps_target: np.ndarray
    eps_threshold: np.ndarray

    @property
    def y(self) -> np.ndarray:
        return np.minimum(self.y_star, self.z)

    @property
    def l(self) -> np.ndarray:
        return self.y_star <= self.z

    def __len__(self) -> int:
        return len(self.x)

    def __getitem__(self, i) -> SyntheticPoint:
        return SyntheticPoint(float(self.x[i]), float(self.y_star[i]), float(self.z[i]),
                              float(self.y[i]), bool(self.l[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def to_dataset(self) -> Dataset:
        return Dataset(self.x[:, None], self.y, self.l)


def synthetic_response(x, rng: np.random.Generator, noise_scale: float = 1.0) -> SyntheticData:
    """Latent target and threshold for given inputs.

    ``y* = sin(2x)/2 + 2 + e1`` and ``z = cos(2x)/2 + 2 + e2`` where e1, e2 are
    independent draws from ``N(0, 0.01 |x|)`` (second argument a variance).
    ``noise_scale`` multiplies the noise standard deviation.
    """
    x = np.asarray(x, dtype=np.float64)
    sd = noise_scale * np.sqrt(0.01 * np.abs(x))
    e1 = rng.standard_normal(x.shape) * sd
    e2 = rng.standard_normal(x.shape) * sd
    y_star = 0.5 * np.sin(2.0 * x) + 2.0 + e1
    z = 0.5 * np.cos(2.0 * x) + 2.0 + e2
    return SyntheticData(x, y_star, z, e1, e2)


def generate_synthetic(n: int, seed) -> SyntheticData:
    """Training/pool distribution: ``x ~ N(5, 1)``."""
    if n < 1:
        raise DataError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.normal(5.0, 1.0, size=n)
    return synthetic_response(x, rng)


def generate_synthetic_test(n: int, seed) -> SyntheticData:
    """Test distribution covering the whole range: ``x ~ U(1.5, 8.5)``."""
    if n < 1:
        raise DataError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(1.5, 8.5, size=n)
    return synthetic_response(x, rng)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    features: tuple[str, ...]
    target: str = "y"
    event: str = "event"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))


def load_csv(path, schema: CsvSchema, log_transform: bool = False) -> Dataset:
    """Read a censored dataset; ``event == 1`` marks an uncensored row.

    All row problems are collected and reported together, each prefixed with
    its 1-based data row number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (*schema.features, schema.target, schema.event) if c not in header]
        if missing:
            raise DataError(f"{path}: unknown column(s) {missing}; header is {header}")
        X, y, l, errors = [], [], [], []
        for i, row in enumerate(reader, start=1):
            try:
                xs = [_parse_float(row[c], c) for c in schema.features]
                t = _parse_float(row[schema.target], schema.target)
                ev = _parse_float(row[schema.event], schema.event)
                if ev not in (0.0, 1.0):
                    raise DataError(f"event column '{schema.event}' must be 0 or 1, got {row[schema.event]!r}")
                if log_transform:
                    if t <= 0:
                        raise DataError(f"target {t} is not positive and cannot be log-transformed")
                    t = math.log(t)
            except DataError as exc:
                errors.append(f"row {i}: {exc}")
                continue
            X.append(xs)
            y.append(t)
            l.append(ev == 1.0)
    if errors:
        raise DataError(f"{path}: {len(errors)} bad row(s)\n" + "\n".join(errors))
    if not y:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(X, dtype=np.float64).reshape(len(y), len(schema.features)), y, l)


def _parse_float(text, column: str) -> float:
    if text is None or text.strip() == "":
        raise DataError(f"missing value in column '{column}'")
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} in column '{column}'") from None
    if not math.isfinite(v):
        raise DataError(f"non-finite value {text!r} in column '{column}'")
    return v


def write_csv(data: Dataset, path, schema: CsvSchema | None = None) -> Path:
    """Write ``data`` in the ingestion schema (floats via repr, so exact)."""
    if schema is None:
        names = ("x",) if data.n_features == 1 else tuple(f"x{j}" for j in range(data.n_features))
        schema = CsvSchema(names)
    if len(schema.features) != data.n_features:
        raise DataError("schema feature count does not match the data")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*schema.features, schema.target, schema.event])
        for xi, yi, li in zip(data.X, data.y, data.l):
            w.writerow([*(repr(float(v)) for v in xi), repr(float(yi)), int(li)])
    return path


# ---------------------------------------------------------------------------
# splits and standardisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSizes:
    n0: int
    pool: int
    val: int
    test: int

    def total(self) -> int:
        return self.n0 + self.pool + self.val + self.test


@dataclass
class DatasetSplits:
    """Disjoint index sets into ``source`` plus the matching datasets."""

    source: Dataset
    train_idx: np.ndarray
    pool_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    seed: object = None
    train: Dataset = field(init=False)
    pool: Dataset = field(init=False)
    val: Dataset = field(init=False)
    test: Dataset = field(init=False)

    def __post_init__(self):
        for name in ("train", "pool", "val", "test"):
            idx = np.asarray(getattr(self, f"{name}_idx"), dtype=np.int64)
            setattr(self, f"{name}_idx", idx)
            setattr(self, name, self.source[idx])
        allidx = np.concatenate([self.train_idx, self.pool_idx, self.val_idx, self.test_idx])
        if len(np.unique(allidx)) != len(allidx):
            raise DataError("splits overlap")


def split(data: Dataset, sizes: SplitSizes, seed, test_idx: Sequence[int] | None = None) -> DatasetSplits:
    """Uniform random partition without replacement.

    With ``test_idx`` given the test set is fixed to those rows and only
    train/pool/val are drawn (at random) from the remaining rows.
    """
    data = Dataset.coerce(data)
    rng = np.random.default_rng(seed)
    if test_idx is None:
        if sizes.total() > len(data):
            raise DataError(f"requested {sizes.total()} rows but the dataset has {len(data)}")
        perm = rng.permutation(len(data))
        cut = np.cumsum([sizes.n0, sizes.pool, sizes.val, sizes.test])
        parts = np.split(perm[: cut[-1]], cut[:-1])
        return DatasetSplits(data, *parts, seed=seed)
    test_idx = np.asarray(test_idx, dtype=np.int64)
    if len(test_idx) != sizes.test:
        raise DataError("fixed test index set does not match the requested test size")
    rest = np.setdiff1d(np.arange(len(data)), test_idx)
    need = sizes.n0 + sizes.pool + sizes.val
    if need > len(rest):
        raise DataError(f"requested {need} non-test rows but only {len(rest)} are available")
    perm = rest[rng.permutation(len(rest))[:need]]
    cut = np.cumsum([sizes.n0, sizes.pool])
    tr, po, va = np.split(perm, cut)
    return DatasetSplits(data, tr, po, va, test_idx, seed=seed)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    STD_FLOOR = 1e-8

    @classmethod
    def fit(cls, X) -> Standardizer:
        X = np.asarray(X, dtype=np.float64)
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), cls.STD_FLOOR))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def apply(self, data: Dataset) -> Dataset:
        return Dataset(self.transform(data.X), data.y, data.l)


def standardize(train: Dataset, *others: Dataset) -> tuple[list[Dataset], Standardizer]:
    """Scale features by train statistics; targets are left alone."""
    train = Dataset.coerce(train)
    if len(train) == 0:
        raise DataError("cannot standardise on an empty training set")
    tf = Standardizer.fit(train.X)
    return [tf.apply(train), *(tf.apply(Dataset.coerce(o)) for o in others)], tf
