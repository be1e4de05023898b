"""Error probability and excess risk of fitted classifiers.

The exact path uses L(D) - L* = integral of (P_(1)(x) - P_{D(x)}(x)) mu(dx),
which for binary labels is the integral of |m| over {D != D*}. A partitioning
rule is constant on cells, so the integral splits into one term per cell and
candidate decision; ``RiskOracle`` tabulates those terms once per (dist, h).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np

from .classifier import PartitionClassifier, predict_batch
from .distributions import MixtureDistribution, bayes_risk, sample
from .models import InvalidInputError, NumericError
from .partition import CellUniverse, PartitionSpec
from .utils import SCAN_POINTS, panels, sign_change_roots

logger = logging.getLogger(__name__)

FALLBACK_PANELS = 64


@dataclass(frozen=True)
class RiskReport:
    error_prob: float
    excess: float
    method: str
    std_err: float = 0.0
    n_eval: int = 0
    warnings: Tuple[str, ...] = ()

    def to_row(self) -> str:
        return f"{self.error_prob:.10g},{self.excess:.10g},{self.method},{self.std_err:.10g},{self.n_eval}"


def decision_columns(decisions: np.ndarray, binary: bool) -> np.ndarray:
    """Column of the loss table for each decision (+1 -> 0, -1 -> 1; class k -> k-1)."""
    if binary:
        return np.where(decisions == 1, 0, 1)
    return decisions - 1


@dataclass
class RiskOracle:
    """Per-cell disagreement integrals of one distribution on one partition.

    ``loss[j, c]`` is the integral over cell j of P_(1) - P_c against mu, i.e.
    the excess risk contributed by cell j when it predicts column c.
    """

    dist: MixtureDistribution
    spec: PartitionSpec
    universe: CellUniverse = field(init=False)
    loss: np.ndarray = field(init=False)
    bayes_risk: float = field(init=False)
    warnings: List[str] = field(init=False, default_factory=list)

    def __post_init__(self):
        if self.dist.intrinsic_dim > 2 and self.dist.weight_a > 0:
            raise NumericError(
                f"Exact risk needs intrinsic dimension <= 2, got {self.dist.intrinsic_dim}; use Monte Carlo"
            )
        self.universe = CellUniverse(self.spec)
        self.loss = np.zeros((self.universe.size, self.dist.num_classes))
        self.bayes_risk = bayes_risk(self.dist)
        if self.dist.weight_a > 0:
            self._tabulate_continuous()
        self._add_atoms()

    def _pointwise_loss(self, col: int):
        dist = self.dist

        def func(U):
            P = dist.posteriors(dist.embed(U))
            return P.max(axis=1) - P[:, col]

        return func

    def _crossings(self, lo: float, hi: float) -> List[float]:
        """Zeros of pairwise posterior differences in [lo, hi] (1-D intrinsic)."""
        dist = self.dist
        roots: List[float] = []
        for a, b in combinations(range(dist.num_classes), 2):
            def diff(u, a=a, b=b):
                P = dist.posteriors(dist.embed(np.array([[u]])))[0]
                return float(P[a] - P[b])

            roots.extend(sign_change_roots(diff, lo, hi, SCAN_POINTS))
        return roots

    def _cell_losses_1d(self, lo: float, hi: float) -> np.ndarray:
        dist = self.dist
        M = dist.num_classes
        out = np.zeros(M)
        lo = max(lo, dist.intrinsic_lower[0])
        hi = min(hi, dist.intrinsic_upper[0])
        if lo >= hi:
            return out
        nodes = np.linspace(lo, hi, SCAN_POINTS + 1).reshape(-1, 1)
        P = dist.posteriors(dist.embed(nodes))
        winners = set(np.argmax(P, axis=1).tolist())
        try:
            roots = self._crossings(lo, hi)
        except NumericError as e:
            msg = f"root finding failed on ({lo}, {hi}], using {FALLBACK_PANELS} panels: {e}"
            logger.warning(msg)
            self.warnings.append(msg)
            for c in range(M):
                func = self._pointwise_loss(c)
                out[c] = sum(dist.intrinsic_integral(func, (a,), (b,)) for a, b in panels(lo, hi, FALLBACK_PANELS))
            return out
        for c in range(M):
            if not roots and winners == {c}:
                # the same class wins on the whole cell: nothing to integrate
                continue
            out[c] = dist.intrinsic_integral(self._pointwise_loss(c), (lo,), (hi,), extra_points=roots)
        return out

    def _tabulate_continuous(self) -> None:
        dist = self.dist
        d_a = dist.intrinsic_dim
        keys = self.universe.key_array
        lower = (keys - 1.0) * self.spec.h
        upper = keys * self.spec.h
        # cells whose trailing faces miss the embedded subspace carry no mu_a mass
        if dist.offset:
            off = np.asarray(dist.offset)
            on_subspace = np.all((lower[:, d_a:] < off) & (off <= upper[:, d_a:]), axis=1)
        else:
            on_subspace = np.ones(keys.shape[0], dtype=bool)
        meets = on_subspace & np.all(
            (upper[:, :d_a] > dist.intrinsic_lower) & (lower[:, :d_a] < dist.intrinsic_upper), axis=1
        )
        for j in np.flatnonzero(meets):
            if d_a == 1:
                cell = self._cell_losses_1d(lower[j, 0], upper[j, 0])
            else:
                cell = np.array(
                    [
                        dist.intrinsic_integral(self._pointwise_loss(c), lower[j, :d_a], upper[j, :d_a])
                        for c in range(dist.num_classes)
                    ]
                )
            self.loss[j] += dist.weight_a * cell

    def _add_atoms(self) -> None:
        for atom in self.dist.atoms:
            j = int(self.universe.index_of_points(np.asarray(atom.point).reshape(1, -1))[0])
            if j < 0:
                raise InvalidInputError(f"Invalid atom {atom.point}: outside the cell universe")
            P = np.asarray(atom.posteriors)
            self.loss[j] += atom.prob * (P.max() - P)

    def excess(self, clf: PartitionClassifier) -> float:
        if clf.spec.h != self.spec.h:
            raise InvalidInputError(f"Classifier h={clf.spec.h} does not match oracle h={self.spec.h}")
        decisions = clf.dense_decisions(self.universe)
        cols = decision_columns(decisions, clf.binary)
        return float(self.loss[np.arange(self.universe.size), cols].sum())


def covering_spec(clf: PartitionClassifier, dist: MixtureDistribution) -> PartitionSpec:
    if clf.spec.dim != dist.ambient_dim:
        raise InvalidInputError(
            f"Classifier dimension {clf.spec.dim} does not match distribution dimension {dist.ambient_dim}"
        )
    lower, upper = dist.bbox
    return PartitionSpec(
        clf.spec.h,
        tuple(min(a, b) for a, b in zip(lower, clf.spec.lower)),
        tuple(max(a, b) for a, b in zip(upper, clf.spec.upper)),
    )


def excess_risk_exact(
    clf: PartitionClassifier, dist: MixtureDistribution, oracle: Optional[RiskOracle] = None
) -> RiskReport:
    """Excess risk by per-cell integration of the gap over the disagreement set.

    Without an oracle one is built over the union of the classifier's and the
    distribution's bounding boxes, so mass outside the training box counts.
    """
    oracle = oracle or RiskOracle(dist, covering_spec(clf, dist))
    excess = oracle.excess(clf)
    return RiskReport(
        error_prob=oracle.bayes_risk + excess,
        excess=excess,
        method="quadrature",
        warnings=tuple(oracle.warnings),
    )


def excess_risk_mc(
    clf: PartitionClassifier,
    dist: MixtureDistribution,
    n_eval: int,
    seed,
    bayes: Optional[float] = None,
) -> RiskReport:
    """Misclassification frequency on fresh samples, minus L*."""
    if n_eval < 1:
        raise InvalidInputError(f"Invalid n_eval: {n_eval}. Must be >= 1")
    fresh = sample(dist, n_eval, seed)
    wrong = predict_batch(clf, fresh.X) != fresh.y
    p = float(wrong.mean())
    std_err = math.sqrt(p * (1 - p) / n_eval)
    l_star = bayes_risk(dist) if bayes is None else bayes
    return RiskReport(error_prob=p, excess=p - l_star, method="monte-carlo", std_err=std_err, n_eval=n_eval)
