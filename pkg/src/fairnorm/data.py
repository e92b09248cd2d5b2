"""Embedding datasets: in-memory model, CSV/binary persistence, subject-disjoint folds.

Two on-disk formats are supported. The CSV layout is the interchange default:

    sample_id,subject_id,attr:<name>...,v0,...,v{dim-1}

with optional ``attr:``-prefixed columns, ``#``-prefixed comment lines, and floats
in decimal or scientific notation. The binary layout is compact: magic ``FNE1``,
u32 dim, u64 sample count, then per sample the length-prefixed UTF-8 IDs, a u16
attribute count with length-prefixed key/value pairs, and dim little-endian
32-bit floats. Everything is little-endian. Note the binary format stores
vectors as float32; CSV preserves full float64 precision.

Vectors are never modified on load (no normalization happens here).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, NumericError

_MAGIC = b"FNE1"


@dataclass(eq=False)
class Sample:
    """One embedding row: IDs, optional demographic attributes, and the vector."""

    sample_id: str
    subject_id: str
    attributes: Mapping[str, str]
    vector: np.ndarray

    def __post_init__(self):
        if not self.sample_id:
            raise DataError("sample_id must be a non-empty string")
        if not self.subject_id:
            raise DataError(f"sample {self.sample_id!r}: subject_id must be non-empty")
        for key, val in self.attributes.items():
            if not key or not val:
                raise DataError(
                    f"sample {self.sample_id!r}: attribute names and values must be non-empty"
                )
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise DataError(f"sample {self.sample_id!r}: vector must be one-dimensional")
        if not np.all(np.isfinite(vec)):
            raise DataError(f"sample {self.sample_id!r}: vector contains a non-finite value")
        vec = vec.copy()
        vec.flags.writeable = False
        self.vector = vec
        self.attributes = dict(self.attributes)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and self.subject_id == other.subject_id
            and self.attributes == other.attributes
            and np.array_equal(self.vector, other.vector)
        )


@dataclass(eq=False)
class EmbeddingDataset:
    """An ordered collection of samples sharing one embedding dimension.

    Immutable after construction; the derived arrays (`matrix`, `subject_codes`)
    are cached and safe to share across threads.
    """

    dim: int
    samples: tuple[Sample, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise DataError(f"dim must be positive, got {self.dim}")
        self.samples = tuple(self.samples)
        seen: set[str] = set()
        for sample in self.samples:
            if sample.vector.shape[0] != self.dim:
                raise DataError(
                    f"sample {sample.sample_id!r}: expected {self.dim} components, "
                    f"got {sample.vector.shape[0]}"
                )
            if sample.sample_id in seen:
                raise DataError(f"duplicate sample_id {sample.sample_id!r}")
            seen.add(sample.sample_id)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingDataset):
            return NotImplemented
        return self.dim == other.dim and self.samples == other.samples

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def matrix(self) -> np.ndarray:
        """All vectors stacked into an (n_samples, dim) float64 array."""
        if not self.samples:
            mat = np.empty((0, self.dim), dtype=np.float64)
        else:
            mat = np.stack([s.vector for s in self.samples]).astype(np.float64)
        mat.flags.writeable = False
        return mat

    @cached_property
    def subject_ids(self) -> tuple[str, ...]:
        """Distinct subject IDs in order of first appearance."""
        seen: dict[str, None] = {}
        for s in self.samples:
            seen.setdefault(s.subject_id, None)
        return tuple(seen)

    @cached_property
    def subject_codes(self) -> np.ndarray:
        """Per-sample integer code of the subject, aligned with `matrix` rows."""
        code = {sid: i for i, sid in enumerate(self.subject_ids)}
        arr = np.array([code[s.subject_id] for s in self.samples], dtype=np.int64)
        arr.flags.writeable = False
        return arr

    @cached_property
    def sample_index(self) -> dict[str, int]:
        return {s.sample_id: i for i, s in enumerate(self.samples)}

    @cached_property
    def attribute_names(self) -> tuple[str, ...]:
        names: set[str] = set()
        for s in self.samples:
            names.update(s.attributes)
        return tuple(sorted(names))

    def subset_by_subjects(self, subject_ids: Iterable[str]) -> "EmbeddingDataset":
        """New dataset keeping only samples of the given subjects, order preserved."""
        keep = set(subject_ids)
        return EmbeddingDataset(
            dim=self.dim, samples=tuple(s for s in self.samples if s.subject_id in keep)
        )


@dataclass(frozen=True)
class FoldSplit:
    """One subject-disjoint train/test split."""

    train_subject_ids: frozenset[str]
    test_subject_ids: frozenset[str]

    def __post_init__(self):
        overlap = self.train_subject_ids & self.test_subject_ids
        if overlap:
            raise DataError(f"fold split overlaps on subjects: {sorted(overlap)[:5]}")


def make_subject_disjoint_folds(
    dataset: EmbeddingDataset, n_folds: int, seed: int
) -> list[FoldSplit]:
    """Shuffle subjects with the seeded generator and deal them round-robin.

    Every subject lands in exactly one test fold; test-fold sizes differ by at
    most one. Deterministic for a given seed.
    """
    if n_folds < 2:
        raise NumericError(f"n_folds must be at least 2, got {n_folds}")
    subjects = sorted(dataset.subject_ids)
    if len(subjects) < n_folds:
        raise NumericError(
            f"cannot make {n_folds} subject-disjoint folds from {len(subjects)} subjects"
        )
    rng = np.random.default_rng(seed)
    shuffled = [subjects[i] for i in rng.permutation(len(subjects))]
    folds = []
    for f in range(n_folds):
        test = frozenset(shuffled[f::n_folds])
        folds.append(
            FoldSplit(train_subject_ids=frozenset(subjects) - test, test_subject_ids=test)
        )
    return folds


# ---------------------------------------------------------------------------
# CSV format
# ---------------------------------------------------------------------------


def _parse_csv_header(header: Sequence[str]) -> tuple[list[str], int]:
    if len(header) < 3 or header[0] != "sample_id" or header[1] != "subject_id":
        raise DataError(
            "CSV header must start with 'sample_id,subject_id' followed by "
            "optional 'attr:<name>' columns and 'v0..v{dim-1}'"
        )
    attr_names: list[str] = []
    pos = 2
    while pos < len(header) and header[pos].startswith("attr:"):
        name = header[pos][len("attr:"):]
        if not name:
            raise DataError("CSV header: empty attribute name in 'attr:' column")
        attr_names.append(name)
        pos += 1
    vcols = header[pos:]
    dim = len(vcols)
    if dim == 0:
        raise DataError("CSV header declares no vector columns")
    for i, col in enumerate(vcols):
        if col != f"v{i}":
            raise DataError(f"CSV header: expected column 'v{i}', got {col!r}")
    return attr_names, dim


def load_dataset_csv(lines: Iterable[str]) -> EmbeddingDataset:
    """Parse the CSV dataset format from an iterable of text lines."""
    reader = csv.reader(line for line in lines if not line.lstrip().startswith("#"))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty dataset file") from None
    attr_names, dim = _parse_csv_header(header)
    n_cols = 2 + len(attr_names) + dim
    samples: list[Sample] = []
    seen: set[str] = set()
    for row_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != n_cols:
            raise DataError(
                f"row {row_no}: expected {n_cols} columns ({dim} vector components), "
                f"got {len(row)}"
            )
        sample_id, subject_id = row[0], row[1]
        if sample_id in seen:
            raise DataError(f"row {row_no}: duplicate sample_id {sample_id!r}")
        seen.add(sample_id)
        attributes = {
            name: val for name, val in zip(attr_names, row[2 : 2 + len(attr_names)]) if val
        }
        try:
            vector = np.array([float(x) for x in row[2 + len(attr_names):]], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"row {row_no}: bad float value ({exc})") from None
        if not np.all(np.isfinite(vector)):
            raise DataError(f"row {row_no}: non-finite vector component")
        try:
            samples.append(
                Sample(sample_id=sample_id, subject_id=subject_id,
                       attributes=attributes, vector=vector)
            )
        except DataError as exc:
            raise DataError(f"row {row_no}: {exc}") from None
    return EmbeddingDataset(dim=dim, samples=tuple(samples))


def save_dataset_csv(dataset: EmbeddingDataset, out) -> None:
    """Write the CSV dataset format to a text file object."""
    attr_names = list(dataset.attribute_names)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["sample_id", "subject_id"]
        + [f"attr:{a}" for a in attr_names]
        + [f"v{i}" for i in range(dataset.dim)]
    )
    for s in dataset.samples:
        writer.writerow(
            [s.sample_id, s.subject_id]
            + [s.attributes.get(a, "") for a in attr_names]
            + [repr(float(x)) for x in s.vector]
        )


# ---------------------------------------------------------------------------
# Binary format
# ---------------------------------------------------------------------------


def _read_exact(buf, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise DataError("truncated binary dataset file")
    return data


def _read_str(buf) -> str:
    (length,) = struct.unpack("<I", _read_exact(buf, 4))
    return _read_exact(buf, length).decode("utf-8")


def _write_str(buf, text: str) -> None:
    raw = text.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def load_dataset_binary(buf) -> EmbeddingDataset:
    """Parse the binary dataset format from a binary file object."""
    magic = buf.read(4)
    if len(magic) == 0:
        raise DataError("empty dataset file")
    if magic != _MAGIC:
        raise DataError(f"bad magic bytes {magic!r}, expected {_MAGIC!r}")
    (dim,) = struct.unpack("<I", _read_exact(buf, 4))
    (count,) = struct.unpack("<Q", _read_exact(buf, 8))
    samples: list[Sample] = []
    seen: set[str] = set()
    for row_no in range(1, count + 1):
        sample_id = _read_str(buf)
        subject_id = _read_str(buf)
        (n_attrs,) = struct.unpack("<H", _read_exact(buf, 2))
        attributes = {}
        for _ in range(n_attrs):
            key = _read_str(buf)
            attributes[key] = _read_str(buf)
        raw = _read_exact(buf, 4 * dim)
        vector = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if sample_id in seen:
            raise DataError(f"row {row_no}: duplicate sample_id {sample_id!r}")
        seen.add(sample_id)
        if not np.all(np.isfinite(vector)):
            raise DataError(f"row {row_no}: non-finite vector component")
        try:
            samples.append(
                Sample(sample_id=sample_id, subject_id=subject_id,
                       attributes=attributes, vector=vector)
            )
        except DataError as exc:
            raise DataError(f"row {row_no}: {exc}") from None
    return EmbeddingDataset(dim=dim, samples=tuple(samples))


def save_dataset_binary(dataset: EmbeddingDataset, buf) -> None:
    """Write the binary dataset format to a binary file object.

    Vectors are stored as 32-bit floats; values outside float32 precision are
    rounded (the CSV format keeps full precision).
    """
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", dataset.dim))
    buf.write(struct.pack("<Q", len(dataset.samples)))
    for s in dataset.samples:
        _write_str(buf, s.sample_id)
        _write_str(buf, s.subject_id)
        if len(s.attributes) > 0xFFFF:
            raise DataError(f"sample {s.sample_id!r}: too many attributes for binary format")
        buf.write(struct.pack("<H", len(s.attributes)))
        for key in sorted(s.attributes):
            _write_str(buf, key)
            _write_str(buf, s.attributes[key])
        buf.write(s.vector.astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Path-level entry points
# ---------------------------------------------------------------------------

FORMATS = ("csv", "binary")


def load_dataset(path: str | Path, format: str = "csv") -> EmbeddingDataset:
    """Load and validate a dataset file in the given format ('csv' or 'binary')."""
    path = Path(path)
    if format == "csv":
        with path.open("r", encoding="utf-8", newline="") as f:
            return load_dataset_csv(f)
    if format == "binary":
        with path.open("rb") as f:
            return load_dataset_binary(f)
    raise DataError(f"unknown dataset format {format!r}, expected one of {FORMATS}")


def save_dataset(dataset: EmbeddingDataset, path: str | Path, format: str = "csv") -> None:
    """Persist a dataset in the given format ('csv' or 'binary')."""
    path = Path(path)
    if format == "csv":
        with path.open("w", encoding="utf-8", newline="") as f:
            save_dataset_csv(dataset, f)
    elif format == "binary":
        with path.open("wb") as f:
            save_dataset_binary(dataset, f)
    else:
        raise DataError(f"unknown dataset format {format!r}, expected one of {FORMATS}")
