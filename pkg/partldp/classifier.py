"""Partitioning classification rules: the sign rule and the multi-class argmax rule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .models import InvalidInputError, LabeledSample, ResourceError, SampleSet
from .partition import CellKey, CellUniverse, PartitionSpec, cell_keys

logger = logging.getLogger(__name__)


def decide(values: np.ndarray, binary: bool) -> int:
    """sign(v) with sign(0) = +1, or argmax with ties to the smallest class."""
    if binary:
        return 1 if values[0] >= 0 else -1
    return int(np.argmax(values)) + 1


def _decide_rows(values: np.ndarray, binary: bool) -> np.ndarray:
    if binary:
        return np.where(values[:, 0] >= 0, 1, -1)
    return np.argmax(values, axis=1) + 1


@dataclass
class PartitionClassifier:
    """Per-cell label sums over a cubic partition.

    Binary tables hold one signed sum per cell (n times nu_n(A)); multi-class
    tables hold M class counts (n times nu_{n,k}(A)). Private tables hold the
    aggregated noisy sums over the whole cell universe.
    """

    spec: PartitionSpec
    num_classes: int
    table: Dict[CellKey, np.ndarray]
    n: int
    private: bool = False
    binary: bool = True
    cell_counts: Optional[Dict[CellKey, int]] = None
    _dense: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    _universe: Optional[CellUniverse] = field(default=None, repr=False, compare=False)

    @property
    def width(self) -> int:
        return 1 if self.binary else self.num_classes

    @property
    def default_label(self) -> int:
        """The decision in a cell with all-zero sums."""
        return 1

    def universe(self) -> Optional[CellUniverse]:
        if self._universe is None:
            try:
                self._universe = CellUniverse(self.spec)
            except ResourceError:
                logger.debug("cell universe too large, predictions use the sparse table")
                return None
        return self._universe

    def dense_decisions(self, universe: Optional[CellUniverse] = None) -> np.ndarray:
        """Decision for every cell of the universe, in enumeration order."""
        own = universe is None
        universe = universe or self.universe()
        if universe is None:
            raise ResourceError("cell universe exceeds the cap")
        if own and self._dense is not None:
            return self._dense
        out = np.full(universe.size, self.default_label, dtype=np.int64)
        if self.table:
            keys = np.array(list(self.table.keys()), dtype=np.int64).reshape(-1, self.spec.dim)
            values = np.array(list(self.table.values()), dtype=float)
            idx = universe.index_of(keys)
            inside = idx >= 0
            out[idx[inside]] = _decide_rows(values[inside], self.binary)
        if own:
            self._dense = out
        return out

    def decision_for_key(self, key: CellKey) -> int:
        values = self.table.get(key)
        if values is None:
            return self.default_label
        return decide(values, self.binary)


def fit(
    data: Union[SampleSet, Sequence[LabeledSample]],
    spec: PartitionSpec,
    num_classes: Optional[int] = None,
    binary: Optional[bool] = None,
) -> PartitionClassifier:
    """Fit the partitioning rule in one pass over the data.

    Binary cells store the sum of the +1/-1 labels, multi-class cells the
    class counts; the 1/n factor is left out since sign and argmax ignore it.
    ``num_classes`` and ``binary`` declare the label set when the data alone
    cannot (see ``infer_label_set``).

    Raises:
        InvalidInputError: on empty data or labels outside one label set.
    """
    if isinstance(data, SampleSet):
        data = data.with_label_set(num_classes, binary)
    else:
        data = SampleSet.from_samples(list(data), num_classes, binary)
    if len(data) == 0:
        raise InvalidInputError("Invalid data: cannot fit on an empty sample")
    keys = cell_keys(data.X, spec)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = np.bincount(inverse, minlength=uniq.shape[0])
    if data.binary:
        sums = np.bincount(inverse, weights=data.y, minlength=uniq.shape[0]).astype(np.int64)
        values = sums.reshape(-1, 1)
    else:
        values = np.zeros((uniq.shape[0], data.num_classes), dtype=np.int64)
        np.add.at(values, (inverse, data.y - 1), 1)
    cell_list = [tuple(int(v) for v in row) for row in uniq]
    table = {key: values[i] for i, key in enumerate(cell_list)}
    cell_counts = {key: int(counts[i]) for i, key in enumerate(cell_list)}
    return PartitionClassifier(
        spec=spec,
        num_classes=data.num_classes,
        table=table,
        n=len(data),
        binary=data.binary,
        cell_counts=cell_counts,
    )


def predict(clf: PartitionClassifier, x: Sequence[float]) -> int:
    """D_n(x): the decision of the cell containing x; unseen cells act as all-zero."""
    key = tuple(int(v) for v in cell_keys(np.asarray(x, dtype=float).reshape(1, -1), clf.spec)[0])
    return clf.decision_for_key(key)


def predict_batch(clf: PartitionClassifier, points) -> np.ndarray:
    """Elementwise predict, order preserved."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.empty(0, dtype=np.int64)
    pts = pts.reshape(-1, clf.spec.dim)
    keys = cell_keys(pts, clf.spec)
    universe = clf.universe()
    if universe is None:
        return np.array([clf.decision_for_key(tuple(int(v) for v in k)) for k in keys], dtype=np.int64)
    idx = universe.index_of(keys)
    dense = clf.dense_decisions()
    out = np.where(idx >= 0, dense[np.maximum(idx, 0)], clf.default_label)
    outside = np.flatnonzero(idx < 0)
    for i in outside:
        out[i] = clf.decision_for_key(tuple(int(v) for v in keys[i]))
    return out.astype(np.int64)
