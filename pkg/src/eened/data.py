"""Dataset ingestion and the published train/test protocol.

The source file is the public seizure-recognition CSV: 11500 rows of 178
integer samples (one second of single-channel EEG each) plus a 5-way label.
Label 1 is a seizure segment; labels 2-5 are seizure-free and collapse to the
negative class. The published protocol trains on 7360 segments and tests on
1840 of which 1461 are negative, so the split subsamples the file to those
counts with seeded stratified draws.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from .rng import SeedStream

TRAIN, TEST, UNUSED = 0, 1, 2

TRAIN_COUNT = 7360
TEST_COUNT = 1840
TEST_NEG = 1461
TEST_POS = TEST_COUNT - TEST_NEG  # 379
# Only the test composition is published; the train draw keeps the source
# file's 1-in-5 positive rate: 7360 / 5.
TRAIN_POS = 1472
TRAIN_NEG = TRAIN_COUNT - TRAIN_POS  # 5888

CACHE_MAGIC = b"EENEDDS1"


class DataError(RuntimeError):
    """Input data is missing, malformed, or insufficient."""


@dataclass
class RawRecord:
    id: Optional[str]
    features: np.ndarray  # (t_in,) float32
    label5: int  # 1..5


@dataclass
class Dataset:
    x: np.ndarray  # (N, t_in) float32
    y: np.ndarray  # (N,) uint8, 1 = seizure
    split: np.ndarray  # (N,) uint8: TRAIN / TEST / UNUSED
    norm_stats: Optional[tuple[float, float]] = None  # (mean, std) of train values

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def t_in(self) -> int:
        return self.x.shape[1]

    def indices_of(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.split == tag)


@dataclass
class Batch:
    x: np.ndarray  # (B, t_in)
    y: np.ndarray  # (B,)
    indices: np.ndarray  # (B,) positions in the Dataset


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _parse_float(cell: str) -> Optional[float]:
    try:
        return float(cell)
    except ValueError:
        return None


def parse_csv(path, has_header: bool, id_column: bool) -> list[RawRecord]:
    """One RawRecord per data row; the first data row fixes the column count.
    Malformed rows are reported with their 1-based line number."""
    records: list[RawRecord] = []
    n_cols = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if has_header and lineno == 1:
                continue
            if n_cols is None:
                n_cols = len(row)
                if n_cols < 2 + (1 if id_column else 0):
                    raise DataError(f"{path}:{lineno}: too few columns ({n_cols})")
            if len(row) != n_cols:
                raise DataError(
                    f"{path}:{lineno}: expected {n_cols} columns, found {len(row)}")
            rid = row[0] if id_column else None
            body = row[1:] if id_column else row
            feats = np.empty(len(body) - 1, dtype=np.float32)
            for i, cell in enumerate(body[:-1]):
                v = _parse_float(cell)
                if v is None:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric feature value {cell!r}")
                feats[i] = v
            label_f = _parse_float(body[-1])
            if label_f is None or not label_f.is_integer() or not 1 <= label_f <= 5:
                raise DataError(
                    f"{path}:{lineno}: label must be an integer in 1..5, got {body[-1]!r}")
            records.append(RawRecord(rid, feats, int(label_f)))
    if not records:
        raise DataError(f"{path}: no data rows")
    return records


def sniff_csv(path) -> tuple[bool, bool]:
    """Detect (has_header, id_column) by whether the first cells parse as
    numbers."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_header = any(_parse_float(c) is None for c in first)
        probe = next(reader, first) if has_header else first
    id_column = _parse_float(probe[0]) is None
    return has_header, id_column


def binarize_labels(records: list[RawRecord]) -> np.ndarray:
    """Label 1 -> positive (1); labels 2-5 -> negative (0)."""
    return np.fromiter((1 if r.label5 == 1 else 0 for r in records),
                       dtype=np.uint8, count=len(records))


def records_to_dataset(records: list[RawRecord], t_in: int) -> Dataset:
    widths = {r.features.shape[0] for r in records}
    if widths != {t_in}:
        raise DataError(
            f"expected {t_in} features per row, file has {sorted(widths)}")
    x = np.stack([r.features for r in records]).astype(np.float32)
    y = binarize_labels(records)
    return Dataset(x=x, y=y, split=np.full(len(records), UNUSED, dtype=np.uint8))


def load_dataset(path, t_in: int) -> Dataset:
    """Sniff the dialect, parse, and binarize. Split is not yet assigned."""
    has_header, id_column = sniff_csv(path)
    return records_to_dataset(parse_csv(path, has_header, id_column), t_in)


# ---------------------------------------------------------------------------
# split / normalize / batch
# ---------------------------------------------------------------------------


def split(dataset: Dataset, seed: int) -> Dataset:
    """Assign the published split: 7360 train / 1840 test rows, 1461 of the
    test rows negative. Stratified draws without replacement, deterministic
    per seed; rows beyond the required counts stay unused."""
    pos = np.flatnonzero(dataset.y == 1)
    neg = np.flatnonzero(dataset.y == 0)
    need_pos = TRAIN_POS + TEST_POS
    need_neg = TRAIN_NEG + TEST_NEG
    if len(pos) < need_pos or len(neg) < need_neg:
        raise DataError(
            f"dataset too small for the published split: need {need_pos} positive "
            f"and {need_neg} negative rows, have {len(pos)} and {len(neg)}")
    rng = SeedStream(seed).child("split").generator()
    pos = pos[rng.permutation(len(pos))]
    neg = neg[rng.permutation(len(neg))]
    tags = np.full(dataset.n, UNUSED, dtype=np.uint8)
    tags[pos[:TEST_POS]] = TEST
    tags[pos[TEST_POS:need_pos]] = TRAIN
    tags[neg[:TEST_NEG]] = TEST
    tags[neg[TEST_NEG:need_neg]] = TRAIN
    return replace(dataset, split=tags)


def normalize(dataset: Dataset) -> Dataset:
    """Global z-score with statistics from the train rows only; test rows are
    transformed with the train statistics (no leakage)."""
    train_idx = dataset.indices_of(TRAIN)
    if train_idx.size == 0:
        raise DataError("normalize needs an assigned train split")
    values = dataset.x[train_idx].astype(np.float64)
    mean = float(values.mean())
    std = float(values.std())
    if std == 0.0:
        raise DataError("train split has zero variance; cannot normalize")
    x = ((dataset.x.astype(np.float64) - mean) / std).astype(np.float32)
    return replace(dataset, x=x, norm_stats=(mean, std))


def batches(dataset: Dataset, tag: int, batch_size: int,
            shuffle_seed: Optional[int] = None) -> Iterator[Batch]:
    """Minibatches covering every row with the given tag exactly once.
    ``shuffle_seed=None`` keeps dataset order."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    idx = dataset.indices_of(tag)
    if idx.size == 0:
        raise DataError(f"no rows with split tag {tag}")
    if shuffle_seed is not None:
        rng = SeedStream(shuffle_seed).child("batches").generator()
        idx = idx[rng.permutation(idx.size)]
    for start in range(0, idx.size, batch_size):
        part = idx[start:start + batch_size]
        yield Batch(x=dataset.x[part], y=dataset.y[part], indices=part)


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------


def save_cache(dataset: Dataset, path) -> None:
    """Row-major binary cache: magic, u32 N, u32 t_in, f32 features, u8
    labels, u8 split tags (all little-endian)."""
    import struct

    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<II", dataset.n, dataset.t_in))
        fh.write(np.ascontiguousarray(dataset.x, dtype="<f4").tobytes())
        fh.write(dataset.y.astype(np.uint8).tobytes())
        fh.write(dataset.split.astype(np.uint8).tobytes())


def load_cache(path) -> Dataset:
    import struct

    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:len(CACHE_MAGIC)] != CACHE_MAGIC:
        raise DataError(f"{path}: not a dataset cache (bad magic)")
    pos = len(CACHE_MAGIC)
    if len(buf) < pos + 8:
        raise DataError(f"{path}: truncated cache header")
    n, t_in = struct.unpack_from("<II", buf, pos)
    pos += 8
    expect = pos + 4 * n * t_in + n + n
    if len(buf) != expect:
        raise DataError(f"{path}: cache is {len(buf)} bytes, expected {expect}")
    x = np.frombuffer(buf, dtype="<f4", count=n * t_in, offset=pos)
    x = x.reshape(n, t_in).astype(np.float32)
    pos += 4 * n * t_in
    y = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos).copy()
    pos += n
    tags = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos).copy()
    return Dataset(x=x, y=y, split=tags)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def make_toy_dataset(n: int, t_in: int, seed: int) -> Dataset:
    """Two separable waveform classes: both are low-amplitude noise, and the
    positive class adds a large Gaussian bump at a random position. Split is
    assigned 80/20 stratified. Used by the CLI --toy mode and smoke tests."""
    if n < 2:
        raise DataError(f"toy dataset needs n >= 2, got {n}")
    rng = SeedStream(seed).child("toy").generator()
    t = np.arange(t_in, dtype=np.float64)
    x = np.empty((n, t_in), dtype=np.float32)
    y = np.zeros(n, dtype=np.uint8)
    y[: n // 2] = 1
    for i in range(n):
        row = rng.normal(0.0, 1.0, size=t_in)
        if y[i] == 1:
            center = rng.uniform(0.2, 0.8) * t_in
            width = rng.uniform(0.03, 0.08) * t_in
            sign = 1.0 if rng.random() < 0.5 else -1.0
            row = row + sign * 8.0 * np.exp(-0.5 * ((t - center) / width) ** 2)
        x[i] = row
    order = rng.permutation(n)
    x, y = x[order], y[order]
    tags = np.full(n, TRAIN, dtype=np.uint8)
    for cls in (0, 1):
        cls_idx = np.flatnonzero(y == cls)
        n_test = max(1, cls_idx.size // 5) if cls_idx.size > 1 else 0
        tags[cls_idx[:n_test]] = TEST
    return Dataset(x=x, y=y, split=tags)


def write_synthetic_public_csv(path, seed: int = 0, n: int = 11500,
                               t_in: int = 178) -> None:
    """A file with the public dataset's layout: header, id column, n rows of
    t_in integer samples, label column cycling 1..5 in equal counts. Feature
    values are noise; only the layout and label histogram matter."""
    rng = SeedStream(seed).child("synthetic-csv").generator()
    labels = np.tile(np.arange(1, 6, dtype=np.int64), n // 5 + 1)[:n]
    labels = labels[rng.permutation(n)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"X{i}" for i in range(1, t_in + 1)] + ["y"])
        for i in range(n):
            amp = 400 if labels[i] == 1 else 60
            row = np.rint(rng.normal(0.0, amp, size=t_in)).astype(np.int64)
            writer.writerow([f"r{i}", *row.tolist(), int(labels[i])])
