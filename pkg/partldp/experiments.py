"""Rate-of-convergence sweeps for the partitioning rules."""

from __future__ import annotations

import logging
import math
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy import stats

from .classifier import fit
from .distributions import MixtureDistribution, bayes_risk, build_distribution, sample
from .models import (
    BandwidthRule,
    DegenerateFitError,
    EvalMethod,
    InvalidInputError,
    Mode,
    PartLDPError,
    SweepError,
    validate_bandwidth_rule,
    validate_eval,
    validate_mode,
    validate_positive,
)
from .privatizer import PrivacyParams, fit_private
from .risk import RiskOracle, excess_risk_exact, excess_risk_mc

logger = logging.getLogger(__name__)

MIN_GRID_POINTS = 4
CI_LEVEL = 0.95


@dataclass
class SweepConfig:
    """One rate study: a distribution, a grid of sample sizes and a bandwidth rule.

    ``distribution`` is a mapping with a ``kind`` and the parameters of
    ``build_distribution``. ``h_grid`` is used by the explicit rule only.
    ``cell_center``, when set, rounds every rule-based h_n so that this
    point is the midpoint of a cell.
    """

    distribution: Mapping[str, Any]
    n_grid: Tuple[int, ...]
    mode: Mode = "observable"
    replications: int = 200
    bandwidth_rule: BandwidthRule = "paper_nonprivate"
    bandwidth_constant: float = 1.0
    cell_center: Optional[float] = None
    h_grid: Tuple[float, ...] = ()
    alpha: Optional[float] = None
    eval: EvalMethod = "exact"
    n_eval: int = 100_000
    master_seed: int = 0
    _dist: Optional[MixtureDistribution] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.h_grid = tuple(float(h) for h in self.h_grid)
        validate_mode(self.mode)
        validate_bandwidth_rule(self.bandwidth_rule)
        validate_eval(self.eval)
        validate_positive("bandwidth_constant", self.bandwidth_constant)
        if len(self.n_grid) < MIN_GRID_POINTS:
            raise InvalidInputError(f"Invalid n_grid: need at least {MIN_GRID_POINTS} points")
        if any(n < 1 for n in self.n_grid) or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InvalidInputError("Invalid n_grid: must be positive and strictly increasing")
        if self.replications < 1:
            raise InvalidInputError(f"Invalid replications: {self.replications}. Must be >= 1")
        if self.n_eval < 1:
            raise InvalidInputError(f"Invalid n_eval: {self.n_eval}. Must be >= 1")
        if self.bandwidth_rule == "explicit":
            if len(self.h_grid) != len(self.n_grid):
                raise InvalidInputError("Invalid h_grid: explicit rule needs one h per n")
            for h in self.h_grid:
                validate_positive("h", h)
        if self.cell_center is not None:
            if self.bandwidth_rule == "explicit":
                raise InvalidInputError("Invalid cell_center: the explicit rule takes h_grid as given")
            if not math.isfinite(self.cell_center) or self.cell_center == 0:
                raise InvalidInputError(
                    f"Invalid cell_center: {self.cell_center}. Must be finite and nonzero; 0 is always a cell face"
                )
        if self.mode == "private":
            if self.alpha is None:
                raise InvalidInputError("Invalid alpha: private mode needs alpha")
            PrivacyParams(self.alpha)
        if "kind" not in self.distribution:
            raise InvalidInputError("Invalid distribution: missing kind")

    @property
    def dist(self) -> MixtureDistribution:
        if self._dist is None:
            params = {k: v for k, v in self.distribution.items() if k != "kind"}
            self._dist = build_distribution(self.distribution["kind"], **params)
        return self._dist

    @property
    def privacy(self) -> Optional[PrivacyParams]:
        return PrivacyParams(self.alpha) if self.mode == "private" else None


def centered_bandwidth(h: float, point: float) -> float:
    """The side length close to h that makes point a cell midpoint.

    Cell k spans ((k - 1) h, k h], so point is a midpoint exactly when
    |point| / h - 1/2 is an integer.
    """
    a = abs(point)
    return a / (math.floor(a / h) + 0.5)


def bandwidth(config: SweepConfig, n: int) -> float:
    """h_n for the configured rule.

    paper_nonprivate      c n^(-1/(2 + d_a))
    paper_nonprivate_ambient  c n^(-1/(2 + d)), for unknown d_a
    paper_private         c (n / sigma_Z^2)^(-1/(2 + 2 d_a))
    explicit              h_grid at the position of n

    The rule-based values are passed through centered_bandwidth when
    ``cell_center`` is set.
    """
    dist = config.dist
    c = config.bandwidth_constant
    rule = config.bandwidth_rule
    if rule == "explicit":
        try:
            return config.h_grid[config.n_grid.index(n)]
        except ValueError:
            raise InvalidInputError(f"Invalid n: {n} is not on the n_grid") from None
    if rule == "paper_nonprivate":
        h = c * n ** (-1.0 / (2 + dist.intrinsic_dim))
    elif rule == "paper_nonprivate_ambient":
        h = c * n ** (-1.0 / (2 + dist.ambient_dim))
    else:
        sigma = PrivacyParams(config.alpha if config.alpha is not None else math.inf).sigma_z
        if sigma == 0:
            raise InvalidInputError("Invalid bandwidth_rule: paper_private needs a finite alpha")
        h = c * (n / sigma**2) ** (-1.0 / (2 + 2 * dist.intrinsic_dim))
    if config.cell_center is not None:
        h = centered_bandwidth(h, config.cell_center)
    return h


@dataclass(frozen=True)
class RateRow:
    n: int
    h: float
    mean_excess: float
    std_err: float
    replications: int


@dataclass
class RateTable:
    rows: List[RateRow]
    fitted_slope: float = math.nan
    slope_ci_halfwidth: float = math.nan
    partial: bool = False


def task_seeds(master_seed: int, n: int, rep: int) -> Tuple[int, int, int]:
    """Independent (train, noise, eval) seeds for one replication."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(n, rep))
    return tuple(int(s) for s in ss.generate_state(3))


def _summarize(n: int, h: float, excess: List[float]) -> RateRow:
    values = np.asarray(excess, dtype=float)
    std_err = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return RateRow(n, h, float(values.mean()), std_err, int(values.size))


def run_sweep(
    config: SweepConfig,
    threads: Optional[int] = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> RateTable:
    """Run every (n, rep) replication and fit the empirical rate.

    Replications run on a thread pool of ``threads`` workers (serial when
    None) and are reduced in (n, rep) order, so the table depends on
    master_seed only.

    Raises:
        SweepError: when a replication fails; ``partial`` holds a RateTable
            with the sample sizes whose replications all completed.
    """
    dist = config.dist
    privacy = config.privacy
    hs = {n: bandwidth(config, n) for n in config.n_grid}
    oracles: Dict[int, RiskOracle] = {}
    l_star = None
    if config.eval == "exact":
        for n, h in hs.items():
            oracles[n] = RiskOracle(dist, dist.partition(h))
            _ = oracles[n].universe.keys  # materialize before worker threads share it
    else:
        l_star = bayes_risk(dist)

    def replicate(n: int, rep: int) -> float:
        train_seed, noise_seed, eval_seed = task_seeds(config.master_seed, n, rep)
        data = sample(dist, n, train_seed)
        oracle = oracles.get(n)
        spec = oracle.spec if oracle else dist.partition(hs[n])
        if privacy is None:
            clf = fit(data, spec)
        else:
            clf = fit_private(data, spec, privacy, noise_seed, universe=oracle.universe if oracle else None)
        if oracle is not None:
            return excess_risk_exact(clf, dist, oracle).excess
        return excess_risk_mc(clf, dist, config.n_eval, eval_seed, bayes=l_star).excess

    tasks = [(n, rep) for n in config.n_grid for rep in range(config.replications)]
    results: Dict[Tuple[int, int], float] = {}
    failure: Optional[BaseException] = None
    logger.info("sweep %s: %d tasks on %d threads", dist.name, len(tasks), threads or 1)

    if not threads or threads <= 1:
        for n, rep in tasks:
            try:
                results[(n, rep)] = replicate(n, rep)
            except PartLDPError as e:
                failure = e
                break
            if progress:
                progress(len(results), len(tasks))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(replicate, n, rep): (n, rep) for n, rep in tasks}
            done, pending = wait(futures, return_when=FIRST_EXCEPTION)
            for fut in pending:
                fut.cancel()
            for fut in done:
                if fut.exception() is not None:
                    failure = failure or fut.exception()
                else:
                    results[futures[fut]] = fut.result()
            if progress:
                progress(len(results), len(tasks))

    rows = []
    for n in config.n_grid:
        excess = [results.get((n, rep)) for rep in range(config.replications)]
        if any(v is None for v in excess):
            continue
        rows.append(_summarize(n, hs[n], excess))

    if failure is not None:
        if not isinstance(failure, PartLDPError):
            raise failure
        raise SweepError(f"Sweep aborted: {failure}", partial=RateTable(rows, partial=True)) from failure

    table = RateTable(rows)
    try:
        table.fitted_slope, table.slope_ci_halfwidth = fit_rate(table)
    except DegenerateFitError as e:
        logger.warning("rate fit skipped: %s", e)
    return table


def fit_rate(table: RateTable) -> Tuple[float, float]:
    """Weighted least squares of log mean_excess on log n.

    Weights are 1 / Var(log mean) ~ (mean / std_err)^2; if any standard error
    is zero all rows get unit weight. Returns the slope and the half-width of
    its 95% Student-t interval.

    Raises:
        DegenerateFitError: with fewer than four usable rows.
    """
    usable = []
    for row in table.rows:
        if row.mean_excess > 0 and math.isfinite(row.mean_excess):
            usable.append(row)
        else:
            logger.warning("dropping n=%d from the rate fit: mean excess %g", row.n, row.mean_excess)
    if len(usable) < MIN_GRID_POINTS:
        raise DegenerateFitError(f"Need at least {MIN_GRID_POINTS} rows with positive mean excess, got {len(usable)}")

    x = np.log([r.n for r in usable])
    y = np.log([r.mean_excess for r in usable])
    se = np.array([r.std_err for r in usable])
    means = np.array([r.mean_excess for r in usable])
    w = (means / se) ** 2 if np.all(se > 0) else np.ones(len(usable))

    A = np.column_stack([np.ones_like(x), x])
    AtW = A.T * w
    cov_unscaled = np.linalg.inv(AtW @ A)
    beta = cov_unscaled @ (AtW @ y)
    resid = y - A @ beta
    dof = len(usable) - 2
    s2 = float((w * resid**2).sum()) / dof
    half = float(stats.t.ppf(0.5 + CI_LEVEL / 2, dof) * math.sqrt(max(s2, 0.0) * cov_unscaled[1, 1]))
    return float(beta[1]), half


def predicted_exponent(
    mode: Mode,
    d_a: int,
    gamma: float,
    gamma1: Optional[float] = None,
    gamma2: Optional[float] = None,
) -> float:
    """Rate exponent of the excess risk guaranteed for the partitioning rule.

    observable: -(1 + min(1, gamma, gamma1)) / (2 + d_a)
    private:    -(1 + min(1, gamma, gamma2)) / (2 + 2 d_a)
    """
    validate_mode(mode)
    if mode == "observable":
        g = min(1.0, gamma, gamma1 if gamma1 is not None else math.inf)
        return -(1 + g) / (2 + d_a)
    g = min(1.0, gamma, gamma2 if gamma2 is not None else math.inf)
    return -(1 + g) / (2 + 2 * d_a)


def baseline_exponents(gamma: float, d: int) -> Dict[str, float]:
    """Earlier rates for comparison: margin condition alone and with the strong density assumption."""
    return {
        "without_sda": -(1 + gamma) / (3 + gamma + d),
        "with_sda": -(1 + gamma) / (2 + d),
    }
