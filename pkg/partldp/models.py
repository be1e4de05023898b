"""Shared data models, errors and validation for partldp."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Optional, Sequence

import numpy as np

# Type aliases
Mode = Literal["observable", "private"]
BandwidthRule = Literal["paper_nonprivate", "paper_nonprivate_ambient", "paper_private", "explicit"]
EvalMethod = Literal["exact", "mc"]

BINARY_LABELS = (1, -1)


class PartLDPError(Exception):
    """Base class for every error raised by partldp."""


class InvalidInputError(PartLDPError, ValueError):
    """Input outside the domain of an operation."""


class ResourceError(PartLDPError):
    """A configured resource cap (cell count, memory) would be exceeded."""


class SamplingError(PartLDPError):
    """A sampler could not produce the requested draws."""


class NumericError(PartLDPError):
    """Quadrature, root finding or fitting did not reach its tolerance."""

    def __init__(self, message: str, achieved_tolerance: Optional[float] = None):
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class DegenerateFitError(NumericError):
    """A log-log fit had too few usable points."""


class ConfigError(PartLDPError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if key is not None:
            where += f" [{key}]"
        if line is not None:
            where += f" (line {line})"
        super().__init__(message + where)
        self.key = key
        self.line = line


class SweepError(PartLDPError):
    """A replication failed; ``partial`` holds the rows completed before it."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


def validate_positive(name: str, value: float) -> float:
    """Validate a finite, strictly positive real."""
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise InvalidInputError(f"Invalid {name}: {value}. Must be a finite positive number")
    return value


def validate_mode(mode: str) -> Mode:
    """Validate sweep mode."""
    if mode not in ("observable", "private"):
        raise InvalidInputError(f"Invalid mode: {mode}. Must be one of: observable, private")
    return mode


def validate_bandwidth_rule(rule: str) -> BandwidthRule:
    """Validate bandwidth rule name."""
    rules = ("paper_nonprivate", "paper_nonprivate_ambient", "paper_private", "explicit")
    if rule not in rules:
        raise InvalidInputError(f"Invalid bandwidth_rule: {rule}. Must be one of: {', '.join(rules)}")
    return rule


def validate_eval(method: str) -> EvalMethod:
    """Validate risk evaluation method."""
    if method not in ("exact", "mc"):
        raise InvalidInputError(f"Invalid eval: {method}. Must be one of: exact, mc")
    return method


@dataclass(frozen=True)
class LabeledSample:
    """One observation (x, y); y is +1/-1 for binary data and 1..M otherwise."""

    x: tuple[float, ...]
    y: int


@dataclass
class SampleSet:
    """Column-oriented batch of labeled samples.

    ``X`` has shape (n, d) and ``y`` shape (n,). ``num_classes`` is 2 for the
    binary +1/-1 encoding and M for labels 1..M.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int = 2
    binary: bool = True
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        """Normalize array shapes and check the label set."""
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise InvalidInputError(
                f"Invalid sample set: {self.X.shape[0]} points but {self.y.shape[0]} labels"
            )
        if not self._checked:
            validate_labels(self.y, self.num_classes, self.binary)
            self._checked = True

    def __len__(self) -> int:
        return int(self.y.shape[0])

    def __iter__(self) -> Iterator[LabeledSample]:
        for row, label in zip(self.X, self.y):
            yield LabeledSample(tuple(float(v) for v in row), int(label))

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[LabeledSample],
        num_classes: Optional[int] = None,
        binary: Optional[bool] = None,
    ) -> "SampleSet":
        """Build a batch from LabeledSample records; see infer_label_set."""
        if not samples:
            raise InvalidInputError("Invalid sample set: no samples")
        X = np.array([s.x for s in samples], dtype=float)
        y = np.array([s.y for s in samples], dtype=np.int64)
        binary, m = infer_label_set(y, num_classes, binary)
        return cls(X, y, num_classes=m, binary=binary)

    def with_label_set(self, num_classes: Optional[int] = None, binary: Optional[bool] = None) -> "SampleSet":
        """The same batch under a declared label set; self when nothing changes."""
        if num_classes is None and binary is None:
            return self
        binary = self.binary if binary is None else binary
        if num_classes is None and binary == self.binary:
            num_classes = self.num_classes
        binary, m = infer_label_set(self.y, num_classes, binary)
        if binary == self.binary and m == self.num_classes:
            return self
        return SampleSet(self.X, self.y, num_classes=m, binary=binary)


def infer_label_set(
    y: np.ndarray, num_classes: Optional[int] = None, binary: Optional[bool] = None
) -> tuple[bool, int]:
    """Decide between the +1/-1 binary encoding and labels 1..M.

    Without ``binary`` the +1/-1 encoding is chosen only when -1 occurs, so a
    sample whose labels are all 1 is read as class 1 of M. Without
    ``num_classes`` M is the largest label seen (at least 2).

    Raises:
        InvalidInputError: if binary is asked for with num_classes other than 2.
    """
    labels = set(int(v) for v in np.unique(y))
    if binary is None:
        binary = -1 in labels and labels <= {-1, 1}
    if binary:
        if num_classes not in (None, 2):
            raise InvalidInputError(f"Invalid num_classes: {num_classes}. Binary labels have 2 classes")
        return True, 2
    m = num_classes if num_classes is not None else max(labels, default=1)
    return False, max(int(m), 2)


def validate_labels(y: np.ndarray, num_classes: int, binary: bool) -> None:
    """Reject labels outside the declared label set."""
    if y.size == 0:
        return
    if binary:
        bad = ~np.isin(y, BINARY_LABELS)
        if bad.any():
            raise InvalidInputError(f"Invalid label: {int(y[bad][0])}. Binary labels must be +1 or -1")
    else:
        bad = (y < 1) | (y > num_classes)
        if bad.any():
            raise InvalidInputError(
                f"Invalid label: {int(y[bad][0])}. Must be in 1..{num_classes}"
            )
