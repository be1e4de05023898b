"""Utility functions for partldp: quadrature, root finding, summation, terminal output."""

from __future__ import annotations

import logging
import shutil
import sys
import warnings
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from .models import NumericError

logger = logging.getLogger(__name__)

SCAN_POINTS = 32
BISECT_XTOL = 1e-12


def integrate_1d(
    func: Callable[[float], float],
    a: float,
    b: float,
    points: Sequence[float] = (),
    abs_tol: float = 1e-10,
    rel_tol: float = 1e-8,
    limit: int = 200,
) -> float:
    """Integrate a 1-dimensional function from a to b with adaptive Gauss-Kronrod.

    Breakpoints strictly inside (a, b) are passed on so that kinks and
    integrable singularities sit on panel edges.

    Raises:
        NumericError: if the requested tolerance is not reached; the error
            carries the achieved absolute error estimate.
    """
    if b <= a:
        return 0.0
    inner = sorted({float(p) for p in points if a < p < b})
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(
                func, a, b, points=inner or None, epsabs=abs_tol, epsrel=rel_tol, limit=limit
            )
        except integrate.IntegrationWarning as e:
            # retry once with a larger subdivision budget before giving up
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                value, abserr = integrate.quad(
                    func, a, b, points=inner or None, epsabs=abs_tol, epsrel=rel_tol, limit=limit * 10
                )
            if abserr > max(abs_tol, rel_tol * abs(value)) * 100:
                raise NumericError(f"Quadrature on [{a}, {b}] did not converge: {e}", abserr)
    return float(value)


def sign_change_roots(
    func: Callable[[float], float],
    a: float,
    b: float,
    scan_points: int = SCAN_POINTS,
) -> List[float]:
    """Locate the zeros of func on [a, b] by a uniform scan plus bisection.

    Only roots bracketed by a sign change between scan nodes are found; exact
    zeros at scan nodes are returned as they are.

    Raises:
        NumericError: if a bracketed root does not converge.
    """
    if b <= a:
        return []
    xs = np.linspace(a, b, scan_points + 1)
    vals = np.array([func(float(x)) for x in xs])
    roots: List[float] = []
    for i in range(scan_points):
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(xs[i]))
        elif fa * fb < 0:
            try:
                r = optimize.brentq(func, xs[i], xs[i + 1], xtol=BISECT_XTOL, maxiter=200)
            except (RuntimeError, ValueError) as e:
                raise NumericError(f"Root finding on [{xs[i]}, {xs[i + 1]}] failed: {e}") from e
            roots.append(float(r))
    if vals[-1] == 0.0:
        roots.append(float(xs[-1]))
    return sorted(set(roots))


def panels(a: float, b: float, count: int) -> Iterable[Tuple[float, float]]:
    """Split [a, b] into count equal panels."""
    edges = np.linspace(a, b, count + 1)
    return zip(edges[:-1].tolist(), edges[1:].tolist())


class KahanAccumulator:
    """Compensated running sum of equally shaped float vectors."""

    def __init__(self, size: int):
        self.total = np.zeros(size, dtype=float)
        self._comp = np.zeros(size, dtype=float)
        self.count = 0

    def add(self, values: np.ndarray) -> None:
        """Add one vector (one record, or one pre-summed chunk)."""
        y = np.asarray(values, dtype=float) - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t
        self.count += 1

    @property
    def value(self) -> np.ndarray:
        return self.total - self._comp


def comma_split(s: Optional[str]) -> List[str]:
    """Split comma-separated string into list of trimmed strings."""
    if not s:
        return []
    return [item.strip() for item in s.split(",") if item.strip()]


def print_table(rows: List[dict], columns: List[Tuple[str, str]]) -> None:
    """
    Print a simple ASCII table with dynamic column widths.

    Args:
        rows: List of dictionaries representing table rows
        columns: List of (field_name, display_name) tuples
    """
    if not rows:
        print("No rows.")
        return

    terminal_width = shutil.get_terminal_size().columns
    widths = {name: len(title) for name, title in columns}
    for row in rows:
        for name, _ in columns:
            widths[name] = max(widths[name], len(str(row.get(name, ""))))

    available = terminal_width - (len(columns) - 1) * 3
    total = sum(widths.values())
    if total > available:
        scale = available / total
        for name in widths:
            widths[name] = min(widths[name], max(8, int(widths[name] * scale)))

    print(" | ".join(title.ljust(widths[name]) for name, title in columns))
    print("-+-".join("-" * widths[name] for name, _ in columns))
    for row in rows:
        parts = []
        for name, _ in columns:
            value = str(row.get(name, ""))
            if len(value) > widths[name]:
                value = value[: widths[name] - 3] + "..."
            parts.append(value.ljust(widths[name]))
        print(" | ".join(parts))


def error_exit(message: str, code: int = 1) -> None:
    """Print error message and exit with code."""
    print(f"Error: {message}", file=sys.stderr)
    sys.exit(code)
