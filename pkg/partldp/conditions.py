"""Margin and density functionals of a distribution and their power-law exponents.

G*(t)      = mu{0 < gap <= t}                                   (exponent gamma)
G_h(t)     = int 1{0 < sqrt(f_h) gap <= t} f / sqrt(f_h) d lambda  (exponent gamma_1)
G~_h(t)    = int 1{0 < f_h gap <= t} f / f_h d lambda              (exponent gamma_2)

gap is |m| for binary labels and P_(1) - P_(2) otherwise; f is the density of
mu_a (weight included) and f_h its cell average.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .distributions import MixtureDistribution
from .experiments import predicted_exponent
from .models import DegenerateFitError, InvalidInputError, NumericError
from .partition import PartitionSpec, cell_key, cell_keys
from .utils import BISECT_XTOL, SCAN_POINTS, integrate_1d, sign_change_roots

logger = logging.getLogger(__name__)

NODES_PER_CELL = 16
STAR_PANELS = 1024
MC_DRAWS = 10**6
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class ExponentEstimate:
    """Least-squares power law values ~ exp(intercept) * t^exponent."""

    exponent: float
    intercept: float
    t_grid: Tuple[float, ...]
    values: Tuple[float, ...]
    r_squared: float

    def __post_init__(self):
        t = np.asarray(self.t_grid)
        v = np.asarray(self.values)
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("Invalid t_grid: must be strictly increasing")
        if np.any(np.diff(v) < -MONOTONE_SLACK * max(1.0, float(np.abs(v).max(initial=0.0)))):
            raise InvalidInputError("Invalid values: G-functionals must be nondecreasing in t")

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)


def fit_exponent(t_grid: Sequence[float], values: Sequence[float]) -> ExponentEstimate:
    """Fit log G = intercept + exponent * log t over the smallest decade of positive G.

    If that decade holds fewer than four points the window grows to the four
    smallest positive ones.

    Raises:
        DegenerateFitError: with fewer than four positive values.
    """
    t = np.asarray(t_grid, dtype=float)
    v = np.asarray(values, dtype=float)
    positive = np.flatnonzero(v > 0)
    if positive.size < 4:
        raise DegenerateFitError(f"Need at least 4 positive values to fit an exponent, got {positive.size}")
    t_pos, v_pos = t[positive], v[positive]
    window = t_pos <= 10 * t_pos[0] * (1 + 1e-12)
    if window.sum() < 4:
        window = np.zeros_like(window)
        window[:4] = True
    x, y = np.log(t_pos[window]), np.log(v_pos[window])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float((resid**2).sum()) / ss_tot)
    return ExponentEstimate(float(slope), float(intercept), tuple(t.tolist()), tuple(v.tolist()), r2)


def _f(dist: MixtureDistribution, U: np.ndarray) -> np.ndarray:
    return dist.weight_a * dist.density(U)


def _gap_intrinsic(dist: MixtureDistribution, U: np.ndarray) -> np.ndarray:
    return dist.gap(dist.embed(U))


def _on_subspace(dist: MixtureDistribution, spec: PartitionSpec, x: np.ndarray) -> bool:
    """Whether x shares its trailing cell coordinates with the embedded subspace."""
    if not dist.offset:
        return True
    d_a = dist.intrinsic_dim
    tail = PartitionSpec(spec.h, spec.lower[d_a:], spec.upper[d_a:])
    return cell_key(x[d_a:], tail) == cell_key(dist.offset, tail)


@dataclass
class IntrinsicCells:
    """The cells of P_h restricted to the subspace carrying mu_a.

    ``lower``/``upper`` are (C, d_a) face coordinates and ``f_h`` the cell
    averages mu_a(A) / h^d_a.
    """

    dist: MixtureDistribution
    h: float
    lower: np.ndarray = field(init=False)
    upper: np.ndarray = field(init=False)
    f_h: np.ndarray = field(init=False)

    def __post_init__(self):
        d_a = self.dist.intrinsic_dim
        spec = PartitionSpec(self.h, self.dist.intrinsic_lower, self.dist.intrinsic_upper)
        lo = cell_keys(np.asarray(spec.lower).reshape(1, -1), spec)[0]
        hi = cell_keys(np.asarray(spec.upper).reshape(1, -1), spec)[0]
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        keys = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1).reshape(-1, d_a)
        self.lower = (keys - 1.0) * self.h
        self.upper = keys * self.h
        self.f_h = self._cell_masses() / self.h**d_a

    def _cell_masses(self) -> np.ndarray:
        dist = self.dist
        if dist.weight_a == 0:
            return np.zeros(self.lower.shape[0])
        if dist.marginals is not None:
            mass = np.ones(self.lower.shape[0])
            for i, fam in enumerate(dist.marginals):
                mass *= fam.cdf(self.upper[:, i]) - fam.cdf(self.lower[:, i])
            return dist.weight_a * mass
        return np.array(
            [dist.weight_a * dist.intrinsic_mass(lo, hi) for lo, hi in zip(self.lower, self.upper)]
        )

    def __len__(self) -> int:
        return self.lower.shape[0]


def f_h(dist: MixtureDistribution, spec: PartitionSpec, x: Sequence[float]) -> float:
    """Cell average mu_a(A) / lambda_{d_a}(A) of the cell containing x."""
    x = np.asarray(x, dtype=float)
    if not _on_subspace(dist, spec, x):
        return 0.0
    d_a = dist.intrinsic_dim
    key = np.asarray(cell_key(x, spec)[:d_a], dtype=float)
    lo, hi = (key - 1.0) * spec.h, key * spec.h
    if dist.weight_a == 0:
        return 0.0
    return dist.weight_a * dist.intrinsic_mass(tuple(lo), tuple(hi)) / spec.h**d_a


def _piece_mass(dist: MixtureDistribution, a: float, b: float) -> float:
    return dist.weight_a * dist.intrinsic_mass((a,), (b,))


def _masked_mass_1d(
    dist: MixtureDistribution,
    lower: np.ndarray,
    upper: np.ndarray,
    taus: np.ndarray,
    weights: np.ndarray,
) -> float:
    """Sum of weights[i] * mu_a{u in (lower[i], upper[i]] : 0 < gap(u) <= taus[i]}.

    The gap is scanned on NODES_PER_CELL + 1 nodes per interval; crossings of
    the level tau are refined by Brent's method and each resulting piece is
    kept or dropped by its midpoint.
    """
    lo_s, hi_s = dist.intrinsic_lower[0], dist.intrinsic_upper[0]
    lower = np.maximum(lower, lo_s)
    upper = np.minimum(upper, hi_s)
    live = (upper > lower) & (weights > 0) & (taus > 0)
    if not live.any():
        return 0.0
    idx = np.flatnonzero(live)
    frac = np.linspace(0.0, 1.0, NODES_PER_CELL + 1)
    nodes = lower[idx, None] + (upper[idx] - lower[idx])[:, None] * frac
    gaps = _gap_intrinsic(dist, nodes.reshape(-1, 1)).reshape(nodes.shape)
    total = 0.0
    for row, i in enumerate(idx):
        tau = taus[i]
        g = gaps[row]
        if g.min() > tau:
            continue
        a, b = lower[i], upper[i]
        if g.max() <= tau and g.min() > 0:
            total += weights[i] * _piece_mass(dist, a, b)
            continue

        def level(u, tau=tau):
            return float(_gap_intrinsic(dist, np.array([[u]]))[0] - tau)

        cuts = [a]
        shifted = g - tau
        for k in range(NODES_PER_CELL):
            if shifted[k] * shifted[k + 1] < 0:
                cuts.append(optimize.brentq(level, nodes[row, k], nodes[row, k + 1], xtol=BISECT_XTOL))
        cuts.extend(p for p in dist.breakpoints if a < p < b)
        cuts.append(b)
        cuts = sorted(set(cuts))
        for p, q in zip(cuts[:-1], cuts[1:]):
            mid = _gap_intrinsic(dist, np.array([[0.5 * (p + q)]]))[0]
            if 0 < mid <= tau:
                total += weights[i] * _piece_mass(dist, p, q)
    return total


def _masked_mass_2d(dist: MixtureDistribution, lo: np.ndarray, hi: np.ndarray, tau: float) -> float:
    """mu_a{u in box : 0 < gap(u) <= tau} by iterated quadrature (d_a = 2)."""
    lo = np.maximum(lo, dist.intrinsic_lower)
    hi = np.minimum(hi, dist.intrinsic_upper)
    if np.any(lo >= hi):
        return 0.0

    def inner(v):
        def gap(u):
            return float(_gap_intrinsic(dist, np.array([[u, v]]))[0])

        def density(u):
            return float(_f(dist, np.array([[u, v]]))[0])

        roots = sign_change_roots(lambda u: gap(u) - tau, lo[0], hi[0], SCAN_POINTS)
        cuts = sorted({lo[0], hi[0], *roots, *(p for p in dist.breakpoints if lo[0] < p < hi[0])})
        total = 0.0
        for p, q in zip(cuts[:-1], cuts[1:]):
            if 0 < gap(0.5 * (p + q)) <= tau:
                total += integrate_1d(density, p, q, abs_tol=1e-10, rel_tol=1e-8)
        return total

    return integrate_1d(inner, lo[1], hi[1], points=dist.breakpoints, abs_tol=1e-8, rel_tol=1e-6)


def _mc_draws(dist: MixtureDistribution, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return dist.sample_intrinsic(rng, MC_DRAWS)


def _mc_functional(
    dist: MixtureDistribution, h: Optional[float], t: float, power: float, seed: int = 0
) -> Tuple[float, float]:
    """Monte Carlo value and standard error for d_a > 2, sampling from mu_a itself."""
    U = _mc_draws(dist, seed)
    gap = _gap_intrinsic(dist, U)
    if h is None:
        weight = np.ones(U.shape[0])
        level = gap
    else:
        spec = PartitionSpec(h, dist.intrinsic_lower, dist.intrinsic_upper)
        keys = cell_keys(U, spec)
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        fh = dist.weight_a * counts[inverse.reshape(-1)] / (U.shape[0] * h**dist.intrinsic_dim)
        weight = fh**-power
        level = fh**power * gap
    vals = dist.weight_a * weight * ((level > 0) & (level <= t))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def _atom_margin_mass(dist: MixtureDistribution, t: float) -> float:
    total = 0.0
    for a in dist.atoms:
        P = sorted(a.posteriors, reverse=True)
        if 0 < P[0] - P[1] <= t:
            total += a.prob
    return total


def g_star(dist: MixtureDistribution, t: float) -> float:
    """mu{x : 0 < gap(x) <= t}, atoms included."""
    if t <= 0:
        return 0.0
    atoms = _atom_margin_mass(dist, t)
    if dist.weight_a == 0:
        return atoms
    if dist.intrinsic_dim == 1:
        edges = np.linspace(dist.intrinsic_lower[0], dist.intrinsic_upper[0], STAR_PANELS + 1)
        edges = np.unique(np.concatenate([edges, [p for p in dist.breakpoints if edges[0] < p < edges[-1]]]))
        n = edges.size - 1
        cont = _masked_mass_1d(dist, edges[:-1], edges[1:], np.full(n, t), np.ones(n))
    elif dist.intrinsic_dim == 2:
        cont = _masked_mass_2d(dist, np.asarray(dist.intrinsic_lower), np.asarray(dist.intrinsic_upper), t)
    else:
        cont, se = _mc_functional(dist, None, t, 0.0)
        logger.debug("g_star(%g) = %g +- %g (Monte Carlo)", t, cont, se)
    return cont + atoms


def _weighted_functional(dist: MixtureDistribution, spec: PartitionSpec, t: float, power: float) -> float:
    """int 1{0 < f_h^power gap <= t} f / f_h^power over S_a."""
    if t <= 0 or dist.weight_a == 0:
        return 0.0
    if dist.intrinsic_dim > 2:
        value, se = _mc_functional(dist, spec.h, t, power)
        logger.debug("weighted functional (power %g) at t=%g: %g +- %g (Monte Carlo)", power, t, value, se)
        return value
    cells = IntrinsicCells(dist, spec.h)
    fh = cells.f_h
    positive = fh > 0
    scale = np.where(positive, fh, 1.0) ** power
    taus = np.where(positive, t / scale, 0.0)
    weights = np.where(positive, 1.0 / scale, 0.0)
    if dist.intrinsic_dim == 1:
        return _masked_mass_1d(dist, cells.lower[:, 0], cells.upper[:, 0], taus, weights)
    total = 0.0
    for i in np.flatnonzero(positive):
        total += weights[i] * _masked_mass_2d(dist, cells.lower[i], cells.upper[i], taus[i])
    return total


def g_h(dist: MixtureDistribution, spec: PartitionSpec, t: float) -> float:
    """Combined margin and density functional, weight f / sqrt(f_h)."""
    return _weighted_functional(dist, spec, t, 0.5)


def g_tilde_h(dist: MixtureDistribution, spec: PartitionSpec, t: float) -> float:
    """Modified combined functional for the private rule, weight f / f_h."""
    return _weighted_functional(dist, spec, t, 1.0)


def sda_ratio(dist: MixtureDistribution, spec: PartitionSpec) -> float:
    """min over cells of positive mass of mu(A) / h^d.

    The strong density assumption asks for this to stay bounded away from 0
    as h shrinks.
    """
    masses = {}
    if dist.weight_a > 0:
        if dist.intrinsic_dim > 2:
            raise NumericError("sda_ratio needs intrinsic dimension <= 2")
        cells = IntrinsicCells(dist, spec.h)
        tail = tuple(dist.offset)
        for hi, m in zip(cells.upper, cells.f_h * spec.h**dist.intrinsic_dim):
            if m > 0:
                k = cell_key(tuple((hi - 0.5 * spec.h).tolist()) + tail, spec)
                masses[k] = masses.get(k, 0.0) + m
    for a in dist.atoms:
        k = cell_key(a.point, spec)
        masses[k] = masses.get(k, 0.0) + a.prob
    positive = [m for m in masses.values() if m > 0]
    if not positive:
        return 0.0
    return min(positive) / spec.h**spec.dim


def density_floor(dist: MixtureDistribution, spec: PartitionSpec, eps: float) -> float:
    """min f_h over cells that meet {0 <= gap <= eps} (scanned on cell nodes)."""
    cells = IntrinsicCells(dist, spec.h)
    d_a = dist.intrinsic_dim
    frac = np.linspace(0.0, 1.0, NODES_PER_CELL + 1)
    lo = np.maximum(cells.lower, dist.intrinsic_lower)
    hi = np.minimum(cells.upper, dist.intrinsic_upper)
    inside = np.all(hi > lo, axis=1)
    floor = math.inf
    for i in np.flatnonzero(inside):
        axes = [lo[i, k] + (hi[i, k] - lo[i, k]) * frac for k in range(d_a)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        if _gap_intrinsic(dist, grid).min() <= eps:
            floor = min(floor, float(cells.f_h[i]))
    return floor


@dataclass(frozen=True)
class ProbeResult:
    t_grid: Tuple[float, ...]
    g_star: Tuple[float, ...]
    g_h: Tuple[float, ...]
    g_tilde_h: Tuple[float, ...]
    gamma: float
    gamma1: float
    gamma2: float
    sda_ratio: float
    predicted_observable: float = math.nan
    predicted_private: float = math.nan


def _exponent_or_nan(t_grid, values, label: str) -> float:
    try:
        return fit_exponent(t_grid, values).exponent
    except (DegenerateFitError, InvalidInputError) as e:
        logger.warning("could not fit %s: %s", label, e)
        return math.nan


def default_t_grid(t_min: float = 1e-4, t_max: float = 1.0, points: int = 25) -> List[float]:
    return np.geomspace(t_min, t_max, points).tolist()


def probe(dist: MixtureDistribution, spec: PartitionSpec, t_grid: Sequence[float]) -> ProbeResult:
    """Evaluate the three functionals on a t-grid and fit gamma, gamma_1, gamma_2."""
    t_grid = [float(t) for t in t_grid]
    star = [g_star(dist, t) for t in t_grid]
    gh = [g_h(dist, spec, t) for t in t_grid]
    gt = [g_tilde_h(dist, spec, t) for t in t_grid]
    try:
        sda = sda_ratio(dist, spec)
    except NumericError as e:
        logger.warning("sda ratio skipped: %s", e)
        sda = math.nan
    gamma = _exponent_or_nan(t_grid, star, "gamma")
    gamma1 = _exponent_or_nan(t_grid, gh, "gamma1")
    gamma2 = _exponent_or_nan(t_grid, gt, "gamma2")
    d_a = dist.intrinsic_dim
    observable = private = math.nan
    if not math.isnan(gamma):
        if not math.isnan(gamma1):
            observable = predicted_exponent("observable", d_a, gamma, gamma1=gamma1)
        if not math.isnan(gamma2):
            private = predicted_exponent("private", d_a, gamma, gamma2=gamma2)
    return ProbeResult(
        t_grid=tuple(t_grid),
        g_star=tuple(star),
        g_h=tuple(gh),
        g_tilde_h=tuple(gt),
        gamma=gamma,
        gamma1=gamma1,
        gamma2=gamma2,
        sda_ratio=sda,
        predicted_observable=observable,
        predicted_private=private,
    )
