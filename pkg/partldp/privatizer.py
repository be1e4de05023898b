"""Non-interactive alpha-LDP release of per-cell label indicators with Laplace noise.

Each data holder i emits, for every cell A_j of the public cell universe (and
every class k in the multi-class case), Z = signal + sigma_Z * eps with eps a
centered unit-variance Laplace variable. sigma_Z = 2 sqrt(2) / alpha, so the
Laplace scale on Z is b = sigma_Z / sqrt(2) = 2 / alpha.

Wire format of a record: |universe| * W little-endian float64 values in
universe enumeration order, class index fastest (W = 1 binary, W = M otherwise).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .classifier import PartitionClassifier
from .models import InvalidInputError, LabeledSample, SampleSet, validate_positive
from .partition import CellUniverse, PartitionSpec
from .utils import KahanAccumulator

logger = logging.getLogger(__name__)

CHUNK_ELEMENTS = 1 << 22
CERTIFICATE_SLACK = 1e-9


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget alpha and the derived noise levels.

    alpha = inf is the zero-noise sentinel. ``scale_multiplier`` rescales the
    Laplace scale actually used and exists to exercise miscalibration checks.
    """

    alpha: float
    scale_multiplier: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0):
            raise InvalidInputError(f"Invalid alpha: {self.alpha}. Must be positive")
        validate_positive("scale_multiplier", self.scale_multiplier)

    @property
    def zero_noise(self) -> bool:
        return math.isinf(self.alpha)

    @property
    def sigma_z(self) -> float:
        return 0.0 if self.zero_noise else 2 * math.sqrt(2) / self.alpha

    @property
    def noise_scale(self) -> float:
        return self.sigma_z / math.sqrt(2) * self.scale_multiplier


@dataclass
class PrivatizedRecord:
    """The dense vector one data holder sends to the statistician."""

    z: np.ndarray
    fingerprint: str
    width: int = 1

    def to_bytes(self) -> bytes:
        return np.asarray(self.z, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes, fingerprint: str, width: int = 1) -> "PrivatizedRecord":
        return cls(np.frombuffer(payload, dtype="<f8").copy(), fingerprint, width)


def _width(num_classes: int, binary: bool) -> int:
    return 1 if binary else num_classes


def signal_vector(
    sample: LabeledSample, universe: CellUniverse, num_classes: int = 2, binary: bool = True
) -> np.ndarray:
    """y * 1{x in A_j} (binary) or 1{y = k} 1{x in A_j}, flattened.

    Raises:
        InvalidInputError: if x falls outside the cell universe.
    """
    width = _width(num_classes, binary)
    j = int(universe.index_of_points(np.asarray(sample.x, dtype=float).reshape(1, -1))[0])
    if j < 0:
        raise InvalidInputError(f"Invalid sample: x={sample.x} lies outside the cell universe")
    s = np.zeros(universe.size * width)
    if binary:
        s[j] = sample.y
    else:
        s[j * width + sample.y - 1] = 1.0
    return s


def privatize_record(
    sample: LabeledSample,
    universe: CellUniverse,
    params: PrivacyParams,
    seed,
    num_classes: int = 2,
    binary: bool = True,
) -> PrivatizedRecord:
    """Release one holder's noisy indicator vector."""
    z = signal_vector(sample, universe, num_classes, binary)
    if not params.zero_noise:
        rng = np.random.default_rng(seed)
        z = z + rng.laplace(0.0, params.noise_scale, size=z.shape)
    return PrivatizedRecord(z, universe.fingerprint, _width(num_classes, binary))


def _private_classifier(
    sums: np.ndarray, universe: CellUniverse, n: int, num_classes: int, binary: bool
) -> PartitionClassifier:
    width = _width(num_classes, binary)
    rows = sums.reshape(universe.size, width)
    table = {key: rows[i] for i, key in enumerate(universe.keys)}
    return PartitionClassifier(
        spec=universe.spec,
        num_classes=num_classes,
        table=table,
        n=n,
        private=True,
        binary=binary,
        _universe=universe,
    )


def aggregate(
    records: Iterable[PrivatizedRecord],
    universe: CellUniverse,
    num_classes: int = 2,
    binary: bool = True,
) -> PartitionClassifier:
    """Sum privatized records per cell into a private classifier.

    Predictions are sign(nu~_n) or argmax_k nu~_{n,k}; the table keeps the
    unnormalized sums.

    Raises:
        InvalidInputError: if a record was produced over another universe.
    """
    width = _width(num_classes, binary)
    acc = KahanAccumulator(universe.size * width)
    for rec in records:
        if rec.fingerprint != universe.fingerprint or rec.z.shape[0] != universe.size * width:
            raise InvalidInputError("Invalid record: produced over a different cell universe")
        acc.add(rec.z)
    if acc.count == 0:
        raise InvalidInputError("Invalid records: nothing to aggregate")
    return _private_classifier(acc.value, universe, acc.count, num_classes, binary)


def fit_private(
    data: Union[SampleSet, Sequence[LabeledSample]],
    spec: PartitionSpec,
    params: PrivacyParams,
    seed: int,
    shortcut: bool = True,
    universe: Optional[CellUniverse] = None,
    num_classes: Optional[int] = None,
    binary: Optional[bool] = None,
) -> PartitionClassifier:
    """Privatize every record and aggregate, streaming.

    With ``shortcut`` the exact signal sums are computed directly and the n
    Laplace draws per coordinate are generated in vectorized chunks, which has
    the same distribution as summing per-record releases. Without it every
    record is released with its own seed stream (seed, index). The label set
    is declared as in ``classifier.fit``.

    Raises:
        ResourceError: if the cell universe exceeds its cap.
    """
    if isinstance(data, SampleSet):
        data = data.with_label_set(num_classes, binary)
    else:
        data = SampleSet.from_samples(list(data), num_classes, binary)
    if len(data) == 0:
        raise InvalidInputError("Invalid data: cannot fit on an empty sample")
    universe = universe or CellUniverse(spec)
    width = _width(data.num_classes, data.binary)

    if not shortcut:
        records = (
            privatize_record(s, universe, params, [seed, i], data.num_classes, data.binary)
            for i, s in enumerate(data)
        )
        return aggregate(records, universe, data.num_classes, data.binary)

    idx = universe.index_of_points(data.X)
    if np.any(idx < 0):
        raise InvalidInputError("Invalid data: some points lie outside the cell universe")
    size = universe.size * width
    if data.binary:
        signal = np.bincount(idx, weights=data.y, minlength=universe.size).astype(float)
    else:
        signal = np.bincount(idx * width + data.y - 1, minlength=size).astype(float)
    acc = KahanAccumulator(size)
    acc.add(signal)
    if not params.zero_noise:
        rng = np.random.default_rng(seed)
        rows = max(1, CHUNK_ELEMENTS // size)
        remaining = len(data)
        while remaining:
            take = min(rows, remaining)
            acc.add(rng.laplace(0.0, params.noise_scale, size=(take, size)).sum(axis=0))
            remaining -= take
    logger.debug("private fit: n=%d, %d cells, b=%g", len(data), universe.size, params.noise_scale)
    return _private_classifier(acc.value, universe, len(data), data.num_classes, data.binary)


def ldp_log_ratio(
    record_a: LabeledSample,
    record_b: LabeledSample,
    z: PrivatizedRecord,
    universe: CellUniverse,
    params: PrivacyParams,
    num_classes: int = 2,
    binary: bool = True,
) -> float:
    """log q(z | record_a) - log q(z | record_b) under the Laplace mechanism."""
    s_a = signal_vector(record_a, universe, num_classes, binary)
    s_b = signal_vector(record_b, universe, num_classes, binary)
    if params.zero_noise:
        return 0.0 if np.array_equal(s_a, s_b) else math.inf
    diff = np.abs(z.z - s_b) - np.abs(z.z - s_a)
    return float(diff.sum() / params.noise_scale)


@dataclass(frozen=True)
class LdpCertificate:
    alpha: float
    trials: int
    max_abs_log_ratio: float

    @property
    def passed(self) -> bool:
        return self.max_abs_log_ratio <= self.alpha + CERTIFICATE_SLACK


def certify(
    params: PrivacyParams,
    trials: int,
    seed: int,
    spec: Optional[PartitionSpec] = None,
    num_classes: int = 2,
) -> LdpCertificate:
    """Empirical alpha-LDP check over random record pairs.

    Half of the pairs share x and differ in the label only; the rest are
    independent. z is released under record_a each time.
    """
    spec = spec or PartitionSpec(0.25, (-1.0,), (1.0,))
    universe = CellUniverse(spec)
    binary = num_classes == 2
    rng = np.random.default_rng(seed)
    lower, upper = np.asarray(spec.lower), np.asarray(spec.upper)

    def draw_label():
        if binary:
            return int(rng.choice([1, -1]))
        return int(rng.integers(1, num_classes + 1))

    worst = 0.0
    for t in range(trials):
        xa = tuple(rng.uniform(lower, upper).tolist())
        ya = draw_label()
        if t % 2 == 0:
            xb = xa
            yb = -ya if binary else int((ya % num_classes) + 1)
        else:
            xb = tuple(rng.uniform(lower, upper).tolist())
            yb = draw_label()
        a, b = LabeledSample(xa, ya), LabeledSample(xb, yb)
        z = privatize_record(a, universe, params, [seed, t], num_classes, binary)
        worst = max(worst, abs(ldp_log_ratio(a, b, z, universe, params, num_classes, binary)))
    return LdpCertificate(params.alpha, trials, worst)
