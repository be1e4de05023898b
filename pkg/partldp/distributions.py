"""Sampleable joint models of (X, Y) with mu = mu_a + mu_s and their Bayes oracles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .models import (
    InvalidInputError,
    NumericError,
    SampleSet,
    SamplingError,
    validate_positive,
)
from .partition import PartitionSpec
from .utils import integrate_1d

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-6
MARGINAL_CHECK_POINTS = (0.3, 0.5, 0.8)
ATOM_MASS_TOL = 1e-12
POSTERIOR_SUM_TOL = 1e-12
MAX_REJECTION_ROUNDS = 1000
MC_RISK_DRAWS = 10**6

Density = Callable[[np.ndarray], np.ndarray]
Posteriors = Callable[[np.ndarray], np.ndarray]
Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class Family1D:
    """A density on [-1, 1] (or a translate of it) with its CDF and an exact sampler."""

    name: str
    density: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    envelope: float
    breakpoints: Tuple[float, ...] = (0.0,)


def uniform_family() -> Family1D:
    return Family1D(
        name="uniform",
        density=lambda u: np.where(np.abs(u) <= 1, 0.5, 0.0),
        cdf=lambda t: np.clip((np.asarray(t) + 1) / 2, 0.0, 1.0),
        sampler=lambda rng, n: rng.uniform(-1.0, 1.0, size=n),
        envelope=0.5,
    )


def tent_family(delta: float) -> Family1D:
    """f(u) = c (1 - |u|^delta) with c = (delta + 1) / (2 delta)."""
    delta = validate_positive("delta", delta)
    c = (delta + 1) / (2 * delta)

    def density(u):
        a = np.abs(u)
        return np.where(a <= 1, c * (1 - a**delta), 0.0)

    def cdf(t):
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        a = np.abs(t)
        half = c * (a - a ** (delta + 1) / (delta + 1))
        return 0.5 + np.sign(t) * half

    def sampler(rng, n):
        # rejection from the uniform proposal; acceptance probability 1 - |u|^delta
        out = np.empty(0)
        for _ in range(MAX_REJECTION_ROUNDS):
            if out.size >= n:
                return out[:n]
            want = max(2 * (n - out.size), 64)
            u = rng.uniform(-1.0, 1.0, size=want)
            keep = rng.random(want) < 1 - np.abs(u) ** delta
            out = np.concatenate([out, u[keep]])
        if out.size >= n:
            return out[:n]
        raise SamplingError(f"Rejection sampler for tent(delta={delta}) exhausted {MAX_REJECTION_ROUNDS} rounds")

    return Family1D(f"tent({delta:g})", density, cdf, sampler, envelope=c)


def shifted_family(fam: Family1D, shift: float) -> Family1D:
    """fam translated to [shift - 1, shift + 1]."""
    if shift == 0:
        return fam
    return Family1D(
        name=f"{fam.name}{shift:+g}",
        density=lambda u: fam.density(np.asarray(u, dtype=float) - shift),
        cdf=lambda t: fam.cdf(np.asarray(t, dtype=float) - shift),
        sampler=lambda rng, n: fam.sampler(rng, n) + shift,
        envelope=fam.envelope,
        breakpoints=tuple(p + shift for p in fam.breakpoints),
    )


def power_family(delta: float) -> Family1D:
    """f(u) = c |u|^delta with c = (delta + 1) / 2, delta > -1."""
    delta = float(delta)
    if not math.isfinite(delta) or delta <= -1:
        raise InvalidInputError(f"Invalid delta: {delta}. Must be greater than -1")
    c = (delta + 1) / 2

    def density(u):
        a = np.abs(np.asarray(u, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where((a <= 1) & (a > 0), c * a**delta, 0.0)

    def cdf(t):
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        return 0.5 + 0.5 * np.sign(t) * np.abs(t) ** (delta + 1)

    def sampler(rng, n):
        # inverse CDF of |X|, which is t^(delta + 1); unbounded densities included
        v = 1.0 - rng.random(n)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return sign * v ** (1.0 / (delta + 1))

    envelope = c if delta >= 0 else math.inf
    return Family1D(f"power({delta:g})", density, cdf, sampler, envelope=envelope)


@dataclass(frozen=True)
class Atom:
    """A point mass of mu_s with its own label probabilities."""

    point: Tuple[float, ...]
    prob: float
    posteriors: Tuple[float, ...]


@dataclass(frozen=True)
class MixtureDistribution:
    """Joint law of (X, Y) with X ~ weight_a * mu_a + sum of atoms.

    mu_a lives on the coordinate subspace spanned by the first ``intrinsic_dim``
    axes; trailing coordinates equal ``offset``. ``density`` and ``marginals``
    are expressed in intrinsic coordinates, ``posterior_fn`` in ambient ones.
    For ``num_classes == 2`` class 1 is the label +1 and class 2 the label -1.
    """

    name: str
    ambient_dim: int
    intrinsic_dim: int
    density: Density
    weight_a: float
    atoms: Tuple[Atom, ...]
    posterior_fn: Posteriors
    num_classes: int
    intrinsic_lower: Tuple[float, ...]
    intrinsic_upper: Tuple[float, ...]
    offset: Tuple[float, ...] = ()
    breakpoints: Tuple[float, ...] = (0.0,)
    marginals: Optional[Tuple[Family1D, ...]] = None
    sampler: Optional[Sampler] = None
    envelope: Optional[float] = None
    check_normalization: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.intrinsic_dim < 1 or self.intrinsic_dim > self.ambient_dim:
            raise InvalidInputError(
                f"Invalid dims: intrinsic {self.intrinsic_dim}, ambient {self.ambient_dim}"
            )
        if len(self.offset) != self.ambient_dim - self.intrinsic_dim:
            raise InvalidInputError("Invalid offset: need one constant per trailing coordinate")
        if not 0.0 <= self.weight_a <= 1.0:
            raise InvalidInputError(f"Invalid weight_a: {self.weight_a}. Must be in [0, 1]")
        atom_mass = sum(a.prob for a in self.atoms)
        if any(a.prob < 0 for a in self.atoms) or abs(atom_mass - (1 - self.weight_a)) > ATOM_MASS_TOL:
            raise InvalidInputError(
                f"Invalid atoms: masses sum to {atom_mass}, expected {1 - self.weight_a}"
            )
        for a in self.atoms:
            if len(a.point) != self.ambient_dim or len(a.posteriors) != self.num_classes:
                raise InvalidInputError(f"Invalid atom at {a.point}: wrong dimension or class count")
            if abs(sum(a.posteriors) - 1) > POSTERIOR_SUM_TOL or min(a.posteriors) < 0:
                raise InvalidInputError(f"Invalid atom posteriors {a.posteriors}")
        self._check_posteriors()
        if self.weight_a > 0 and self.check_normalization and self.intrinsic_dim <= 2:
            mass = self.intrinsic_integral(lambda U: np.ones(U.shape[0]), self.intrinsic_lower, self.intrinsic_upper)
            if abs(mass - 1.0) > NORMALIZATION_TOL:
                raise InvalidInputError(f"Invalid density: integrates to {mass}, not 1")
            self._check_marginals()

    def _check_marginals(self) -> None:
        """Each marginal CDF must agree with the quadrature of its density."""
        for fam, lo, hi in zip(self.marginals or (), self.intrinsic_lower, self.intrinsic_upper):
            for frac in MARGINAL_CHECK_POINTS:
                t = lo + frac * (hi - lo)
                by_cdf = float(fam.cdf(t) - fam.cdf(lo))
                by_density = integrate_1d(
                    lambda u: float(fam.density(np.array([u]))[0]), lo, t, points=fam.breakpoints
                )
                if abs(by_cdf - by_density) > NORMALIZATION_TOL:
                    raise InvalidInputError(
                        f"Invalid family {fam.name}: CDF gives {by_cdf} on [{lo}, {t}], density integrates to {by_density}"
                    )

    def _check_posteriors(self) -> None:
        axes = [np.linspace(lo, hi, 41) for lo, hi in zip(self.intrinsic_lower, self.intrinsic_upper)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        P = self.posteriors(self.embed(grid))
        if P.shape[1] != self.num_classes:
            raise InvalidInputError(f"Invalid posteriors: {P.shape[1]} columns, expected {self.num_classes}")
        if np.any(np.abs(P.sum(axis=1) - 1) > POSTERIOR_SUM_TOL) or np.any(P < -POSTERIOR_SUM_TOL):
            raise InvalidInputError("Invalid posteriors: rows must be probability vectors")

    @property
    def binary(self) -> bool:
        return self.num_classes == 2

    @property
    def bbox(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        """Ambient bounding box of the support, atoms included."""
        lower = list(self.intrinsic_lower) + list(self.offset)
        upper = list(self.intrinsic_upper) + list(self.offset)
        for a in self.atoms:
            lower = [min(l, p) for l, p in zip(lower, a.point)]
            upper = [max(u, p) for u, p in zip(upper, a.point)]
        for i in range(self.ambient_dim):
            if lower[i] >= upper[i]:
                lower[i] -= 0.5
                upper[i] += 0.5
        return tuple(lower), tuple(upper)

    def partition(self, h: float) -> PartitionSpec:
        lower, upper = self.bbox
        return PartitionSpec(h, lower, upper)

    def embed(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float).reshape(-1, self.intrinsic_dim)
        if not self.offset:
            return U
        tail = np.broadcast_to(np.asarray(self.offset, dtype=float), (U.shape[0], len(self.offset)))
        return np.hstack([U, tail])

    def posteriors(self, X: np.ndarray) -> np.ndarray:
        """Posterior probability vectors at ambient points; atoms use their own."""
        X = np.asarray(X, dtype=float).reshape(-1, self.ambient_dim)
        P = np.array(self.posterior_fn(X), dtype=float).reshape(X.shape[0], self.num_classes)
        for a in self.atoms:
            at = np.all(X == np.asarray(a.point), axis=1)
            if at.any():
                P[at] = a.posteriors
        return P

    def regression(self, X: np.ndarray) -> np.ndarray:
        """m(x) = E[Y | X = x] for the binary +1/-1 encoding."""
        if not self.binary:
            raise InvalidInputError(f"regression is defined for binary labels, {self.name} has {self.num_classes}")
        P = self.posteriors(X)
        return P[:, 0] - P[:, 1]

    def gap(self, X: np.ndarray) -> np.ndarray:
        """|m| for binary, P_(1) - P_(2) otherwise (the margin variable)."""
        P = np.sort(self.posteriors(X), axis=1)
        return P[:, -1] - P[:, -2]

    def intrinsic_integral(
        self,
        func: Callable[[np.ndarray], np.ndarray],
        lower: Sequence[float],
        upper: Sequence[float],
        extra_points: Sequence[float] = (),
    ) -> float:
        """Integrate func(u) * f(u) over a box in intrinsic coordinates.

        func maps intrinsic points (N, d_a) to (N,). The box is clipped to the
        intrinsic support; quadrature is supported for d_a <= 2.
        """
        lo = np.maximum(np.asarray(lower, dtype=float), self.intrinsic_lower)
        hi = np.minimum(np.asarray(upper, dtype=float), self.intrinsic_upper)
        if np.any(lo >= hi):
            return 0.0
        points = tuple(self.breakpoints) + tuple(extra_points)
        if self.intrinsic_dim == 1:
            def integrand(u):
                row = np.array([[u]])
                return float(func(row)[0] * self.density(row)[0])

            return integrate_1d(integrand, lo[0], hi[0], points=points)
        if self.intrinsic_dim == 2:
            def inner(v):
                def integrand(u):
                    row = np.array([[u, v]])
                    return float(func(row)[0] * self.density(row)[0])

                return integrate_1d(integrand, lo[0], hi[0], points=points)

            return integrate_1d(inner, lo[1], hi[1], points=points, abs_tol=1e-9, rel_tol=1e-7)
        raise NumericError(f"Quadrature needs intrinsic dimension <= 2, got {self.intrinsic_dim}")

    def intrinsic_mass(self, lower: Sequence[float], upper: Sequence[float]) -> float:
        """mu_a-probability (without the weight) of a box in intrinsic coordinates."""
        if self.marginals is not None:
            mass = 1.0
            for fam, lo, hi in zip(self.marginals, lower, upper):
                mass *= float(fam.cdf(hi) - fam.cdf(lo))
            return mass
        return self.intrinsic_integral(lambda U: np.ones(U.shape[0]), lower, upper)

    def sample_intrinsic(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n points from mu_a in intrinsic coordinates."""
        if n == 0:
            return np.empty((0, self.intrinsic_dim))
        if self.marginals is not None:
            return np.stack([fam.sampler(rng, n) for fam in self.marginals], axis=1)
        if self.sampler is not None:
            return np.asarray(self.sampler(rng, n), dtype=float).reshape(n, self.intrinsic_dim)
        if self.envelope is None or not math.isfinite(self.envelope):
            raise SamplingError(f"{self.name}: no sampler and no finite envelope for rejection")
        lo = np.asarray(self.intrinsic_lower)
        hi = np.asarray(self.intrinsic_upper)
        out = np.empty((0, self.intrinsic_dim))
        for _ in range(MAX_REJECTION_ROUNDS):
            if out.shape[0] >= n:
                break
            want = max(2 * (n - out.shape[0]), 64)
            U = rng.uniform(lo, hi, size=(want, self.intrinsic_dim))
            keep = rng.random(want) * self.envelope < self.density(U)
            out = np.vstack([out, U[keep]])
        if out.shape[0] < n:
            raise SamplingError(f"{self.name}: rejection sampler exhausted {MAX_REJECTION_ROUNDS} rounds")
        return out[:n]

    def sample_points(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n ambient points from the mixture."""
        X = np.empty((n, self.ambient_dim))
        continuous = rng.random(n) < self.weight_a
        n_a = int(continuous.sum())
        X[continuous] = self.embed(self.sample_intrinsic(rng, n_a))
        n_s = n - n_a
        if n_s:
            probs = np.array([a.prob for a in self.atoms])
            which = rng.choice(len(self.atoms), size=n_s, p=probs / probs.sum())
            X[~continuous] = np.array([a.point for a in self.atoms])[which]
        return X


def sample(dist: MixtureDistribution, n: int, seed) -> SampleSet:
    """Draw n i.i.d. copies of (X, Y); deterministic given seed."""
    if n < 0:
        raise InvalidInputError(f"Invalid n: {n}. Must be >= 0")
    rng = np.random.default_rng(seed)
    X = dist.sample_points(rng, n)
    P = dist.posteriors(X)
    u = rng.random(n)
    cls = np.minimum((u[:, None] >= np.cumsum(P, axis=1)).sum(axis=1), dist.num_classes - 1)
    if dist.binary:
        y = np.where(cls == 0, 1, -1)
    else:
        y = cls + 1
    return SampleSet(X, y, num_classes=dist.num_classes, binary=dist.binary, _checked=True)


def _linear_posteriors(X: np.ndarray) -> np.ndarray:
    m = np.clip(X[:, 0], -1.0, 1.0)
    return np.stack([(1 + m) / 2, (1 - m) / 2], axis=1)


def _signed_square_posteriors(X: np.ndarray) -> np.ndarray:
    x = np.clip(X[:, 0], -1.0, 1.0)
    m = np.sign(x) * x**2
    return np.stack([(1 + m) / 2, (1 - m) / 2], axis=1)


REGRESSIONS = {"linear": _linear_posteriors, "signed-square": _signed_square_posteriors}


def _from_family(name: str, fam: Family1D, posterior_fn: Posteriors, shift: float = 0.0) -> MixtureDistribution:
    """One-dimensional model on [-1, 1], translated by shift.

    Every cell grid is anchored at 0, so with shift = 0 the decision boundary
    lies on a cell face for every h. A shift lets it fall inside a cell.
    """
    shift = float(shift)
    if not math.isfinite(shift):
        raise InvalidInputError(f"Invalid shift: {shift}. Must be finite")
    fam = shifted_family(fam, shift)
    if shift:
        name = f"{name[:-1]}, shift={shift:g})" if name.endswith(")") else f"{name}(shift={shift:g})"
        base = posterior_fn

        def posterior_fn(X):
            return base(np.asarray(X, dtype=float) - shift)

    return MixtureDistribution(
        name=name,
        ambient_dim=1,
        intrinsic_dim=1,
        density=lambda U: fam.density(U[:, 0]),
        weight_a=1.0,
        atoms=(),
        posterior_fn=posterior_fn,
        num_classes=2,
        intrinsic_lower=(shift - 1.0,),
        intrinsic_upper=(shift + 1.0,),
        breakpoints=fam.breakpoints,
        marginals=(fam,),
        envelope=fam.envelope,
    )


def example1(delta: float, shift: float = 0.0) -> MixtureDistribution:
    """m(x) = x with the tent density c (1 - |x|^delta) on [-1, 1]."""
    return _from_family(f"example1(delta={delta:g})", tent_family(delta), _linear_posteriors, shift)


def example2(delta: float, shift: float = 0.0) -> MixtureDistribution:
    """m(x) = x with density c |x|^delta, unbounded at 0 when delta < 0."""
    return _from_family(f"example2(delta={delta:g})", power_family(delta), _linear_posteriors, shift)


def example3(shift: float = 0.0) -> MixtureDistribution:
    """m(x) = sign(x) x^2 with density |x|; the density vanishes on the boundary."""
    return _from_family("example3", power_family(1.0), _signed_square_posteriors, shift)


def example_multiclass() -> MixtureDistribution:
    """Three classes on the uniform density with P = ((1-x)/3, 1/3, (1+x)/3)."""

    def posterior_fn(X):
        x = np.clip(X[:, 0], -1.0, 1.0)
        return np.stack([(1 - x) / 3, np.full_like(x, 1 / 3), (1 + x) / 3], axis=1)

    fam = uniform_family()
    return MixtureDistribution(
        name="three-class",
        ambient_dim=1,
        intrinsic_dim=1,
        density=lambda U: fam.density(U[:, 0]),
        weight_a=1.0,
        atoms=(),
        posterior_fn=posterior_fn,
        num_classes=3,
        intrinsic_lower=(-1.0,),
        intrinsic_upper=(1.0,),
        marginals=(fam,),
        envelope=fam.envelope,
    )


FAMILIES = {
    "uniform": lambda delta: uniform_family(),
    "tent": tent_family,
    "power": power_family,
}


def custom_mixture(
    density: str = "uniform",
    delta: float = 1.0,
    intrinsic_dim: int = 1,
    offset: Sequence[float] = (),
    regression: str = "linear",
    atoms: Sequence[Tuple[Sequence[float], float, float]] = (),
) -> MixtureDistribution:
    """Product density on [-1, 1]^d_a plus point masses, binary labels.

    Each atom is (point, probability, P(Y = +1 | X = point)); the continuous
    weight is one minus the atom mass. The regression acts on the first
    intrinsic coordinate.
    """
    if density not in FAMILIES:
        raise InvalidInputError(f"Invalid density: {density}. Must be one of: {', '.join(FAMILIES)}")
    if regression not in REGRESSIONS:
        raise InvalidInputError(f"Invalid regression: {regression}. Must be one of: {', '.join(REGRESSIONS)}")
    if intrinsic_dim < 1:
        raise InvalidInputError(f"Invalid intrinsic_dim: {intrinsic_dim}")
    fam = FAMILIES[density](delta)
    marginals = (fam,) * intrinsic_dim
    ambient_dim = intrinsic_dim + len(offset)
    parsed = tuple(
        Atom(tuple(float(v) for v in point), float(prob), (float(p_plus), 1.0 - float(p_plus)))
        for point, prob, p_plus in atoms
    )
    weight_a = 1.0 - sum(a.prob for a in parsed)

    def product_density(U):
        out = np.ones(U.shape[0])
        for i in range(intrinsic_dim):
            out = out * fam.density(U[:, i])
        return out

    envelope = fam.envelope**intrinsic_dim
    return MixtureDistribution(
        name=f"custom-mixture({density}, d_a={intrinsic_dim})",
        ambient_dim=ambient_dim,
        intrinsic_dim=intrinsic_dim,
        density=product_density,
        weight_a=weight_a,
        atoms=parsed,
        posterior_fn=REGRESSIONS[regression],
        num_classes=2,
        intrinsic_lower=(-1.0,) * intrinsic_dim,
        intrinsic_upper=(1.0,) * intrinsic_dim,
        offset=tuple(float(v) for v in offset),
        breakpoints=fam.breakpoints,
        marginals=marginals,
        envelope=envelope,
    )


def bayes_decisions(dist: MixtureDistribution, X: np.ndarray) -> np.ndarray:
    """Vectorized Bayes rule: sign(m) with sign(0) = +1, or argmax with lowest-index ties."""
    P = dist.posteriors(X)
    if dist.binary:
        return np.where(P[:, 0] - P[:, 1] >= 0, 1, -1)
    return np.argmax(P, axis=1) + 1


def bayes_decision(dist: MixtureDistribution, x: Sequence[float]) -> int:
    """The Bayes decision D*(x)."""
    return int(bayes_decisions(dist, np.asarray(x, dtype=float).reshape(1, -1))[0])


def bayes_risk(dist: MixtureDistribution, seed: int = 0) -> float:
    """L* = integral of 1 - P_(1) against mu.

    Quadrature for d_a <= 2; otherwise a Monte Carlo average over
    ``MC_RISK_DRAWS`` draws of X (no label noise, the integrand is exact).
    """
    atom_part = sum(a.prob * (1 - max(a.posteriors)) for a in dist.atoms)
    if dist.weight_a == 0:
        return atom_part

    def loss(U):
        return 1.0 - dist.posteriors(dist.embed(U)).max(axis=1)

    if dist.intrinsic_dim <= 2:
        cont = dist.intrinsic_integral(loss, dist.intrinsic_lower, dist.intrinsic_upper)
    else:
        rng = np.random.default_rng(seed)
        cont = float(loss(dist.sample_intrinsic(rng, MC_RISK_DRAWS)).mean())
        logger.debug("bayes_risk for %s by Monte Carlo (d_a=%d)", dist.name, dist.intrinsic_dim)
    return dist.weight_a * cont + atom_part


def build_distribution(kind: str, **params) -> MixtureDistribution:
    """Construct a distribution from a config kind and its parameters."""
    if kind in ("example1", "example2", "example3"):
        allowed = {"shift"} if kind == "example3" else {"delta", "shift"}
        unknown = sorted(set(params) - allowed)
        if unknown:
            raise InvalidInputError(f"Invalid parameter for {kind}: {unknown[0]}")
        shift = params.get("shift", 0.0)
        if kind == "example1":
            return example1(params.get("delta", 1.0), shift)
        if kind == "example2":
            return example2(params.get("delta", 0.0), shift)
        return example3(shift)
    if kind == "three-class":
        return example_multiclass()
    if kind == "custom-mixture":
        return custom_mixture(**params)
    raise InvalidInputError(
        f"Invalid kind: {kind}. Must be one of: example1, example2, example3, three-class, custom-mixture"
    )
