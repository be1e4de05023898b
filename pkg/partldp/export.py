"""CSV and binary exports for partldp."""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path
from typing import List, Optional

import numpy as np

from .classifier import PartitionClassifier
from .conditions import ProbeResult
from .experiments import RateTable
from .models import InvalidInputError, SampleSet, infer_label_set
from .partition import PartitionSpec

RATE_COLUMNS = ("n", "h", "mean_excess", "std_err", "replications")
PROBE_COLUMNS = ("t", "g_star", "g_h", "g_tilde_h")

CLASSIFIER_MAGIC = b"PCLF1"
# flags, dim, classes, n, h
_HEADER = struct.Struct("<BIIQd")
FLAG_BINARY = 1
FLAG_PRIVATE = 2


def fmt(value: float) -> str:
    """Shortest round-tripping text for a float; stable across runs."""
    return repr(float(value))


def format_rate_csv(table: RateTable) -> str:
    lines = [",".join(RATE_COLUMNS)]
    for row in table.rows:
        lines.append(f"{row.n},{fmt(row.h)},{fmt(row.mean_excess)},{fmt(row.std_err)},{row.replications}")
    lines.append(f"# slope={fmt(table.fitted_slope)}")
    lines.append(f"# ci={fmt(table.slope_ci_halfwidth)}")
    if table.partial:
        lines.append("# partial=true")
    return "\n".join(lines) + "\n"


def format_probe_csv(result: ProbeResult) -> str:
    lines = [",".join(PROBE_COLUMNS)]
    for t, a, b, c in zip(result.t_grid, result.g_star, result.g_h, result.g_tilde_h):
        lines.append(f"{fmt(t)},{fmt(a)},{fmt(b)},{fmt(c)}")
    for name in ("gamma", "gamma1", "gamma2", "sda_ratio", "predicted_observable", "predicted_private"):
        lines.append(f"# {name}={fmt(getattr(result, name))}")
    return "\n".join(lines) + "\n"


def write_text(text: str, path: Optional[str]) -> None:
    """Write to path, or to stdout when path is None or '-'."""
    if path is None or path == "-":
        print(text, end="")
        return
    Path(path).write_text(text, encoding="utf-8")


def export_rate_csv(table: RateTable, path: Optional[str]) -> None:
    write_text(format_rate_csv(table), path)


def export_probe_csv(result: ProbeResult, path: Optional[str]) -> None:
    write_text(format_probe_csv(result), path)


def read_footer(text: str) -> dict:
    """The `# key=value` footer lines of a CSV export, values as floats."""
    out = {}
    for line in text.splitlines():
        if line.startswith("# ") and "=" in line:
            key, _, value = line[2:].partition("=")
            try:
                out[key] = float(value)
            except ValueError:
                out[key] = value
    return out


def export_samples_csv(data: SampleSet, path: Optional[str]) -> None:
    """Write a sample as CSV with columns x1..xd,y."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{i + 1}" for i in range(data.dim)] + ["y"])
    for row, label in zip(data.X, data.y):
        writer.writerow([fmt(v) for v in row] + [int(label)])
    write_text(buf.getvalue(), path)


def import_samples_csv(
    path: str, num_classes: Optional[int] = None, binary: Optional[bool] = None
) -> SampleSet:
    """Read a CSV written by export_samples_csv.

    Raises:
        InvalidInputError: on a malformed header or row.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InvalidInputError(f"Cannot read samples {path}: {e.strerror}") from e
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][-1] != "y":
        raise InvalidInputError(f"Invalid samples file {path}: header must be x1..xd,y")
    dim = len(rows[0]) - 1
    X: List[List[float]] = []
    y: List[int] = []
    for number, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise InvalidInputError(f"Invalid samples file {path}: line {number} has {len(row)} fields")
        try:
            X.append([float(v) for v in row[:-1]])
            y.append(int(row[-1]))
        except ValueError as e:
            raise InvalidInputError(f"Invalid samples file {path}: line {number}: {e}") from e
    labels = np.asarray(y, dtype=np.int64)
    binary, m = infer_label_set(labels, num_classes, binary)
    return SampleSet(np.asarray(X, dtype=float).reshape(-1, dim), labels, num_classes=m, binary=binary)


def classifier_to_bytes(clf: PartitionClassifier) -> bytes:
    """PCLF1 dump: header, bbox, then one (key, sums) record per stored cell.

    All fields little-endian; keys int64, sums float64, cells in key order.
    """
    d = clf.spec.dim
    flags = (FLAG_BINARY if clf.binary else 0) | (FLAG_PRIVATE if clf.private else 0)
    parts = [
        CLASSIFIER_MAGIC,
        _HEADER.pack(flags, d, clf.num_classes, clf.n, clf.spec.h),
        np.asarray(clf.spec.lower, dtype="<f8").tobytes(),
        np.asarray(clf.spec.upper, dtype="<f8").tobytes(),
        struct.pack("<Q", len(clf.table)),
    ]
    for key in sorted(clf.table):
        parts.append(np.asarray(key, dtype="<i8").tobytes())
        parts.append(np.asarray(clf.table[key], dtype="<f8").reshape(clf.width).tobytes())
    return b"".join(parts)


def classifier_from_bytes(payload: bytes) -> PartitionClassifier:
    """Inverse of classifier_to_bytes.

    Raises:
        InvalidInputError: on a wrong magic or a truncated payload.
    """
    if not payload.startswith(CLASSIFIER_MAGIC):
        raise InvalidInputError("Invalid classifier dump: bad magic")
    view = memoryview(payload)
    pos = len(CLASSIFIER_MAGIC)
    try:
        flags, d, num_classes, n, h = _HEADER.unpack_from(view, pos)
        pos += _HEADER.size
        lower = np.frombuffer(view, dtype="<f8", count=d, offset=pos)
        pos += 8 * d
        upper = np.frombuffer(view, dtype="<f8", count=d, offset=pos)
        pos += 8 * d
        (count,) = struct.unpack_from("<Q", view, pos)
        pos += 8
        binary = bool(flags & FLAG_BINARY)
        width = 1 if binary else num_classes
        table = {}
        for _ in range(count):
            key = tuple(int(v) for v in np.frombuffer(view, dtype="<i8", count=d, offset=pos))
            pos += 8 * d
            table[key] = np.frombuffer(view, dtype="<f8", count=width, offset=pos).copy()
            pos += 8 * width
    except (struct.error, ValueError) as e:
        raise InvalidInputError(f"Invalid classifier dump: truncated ({e})") from e
    if pos != len(payload):
        raise InvalidInputError("Invalid classifier dump: trailing bytes")
    return PartitionClassifier(
        spec=PartitionSpec(h, tuple(lower.tolist()), tuple(upper.tolist())),
        num_classes=num_classes,
        table=table,
        n=n,
        private=bool(flags & FLAG_PRIVATE),
        binary=binary,
    )


def export_classifier(clf: PartitionClassifier, path: str) -> None:
    Path(path).write_bytes(classifier_to_bytes(clf))


def import_classifier(path: str) -> PartitionClassifier:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise InvalidInputError(f"Cannot read classifier {path}: {e.strerror}") from e
    return classifier_from_bytes(payload)
