"""Experiment configuration: strict TOML documents and the thread cap."""

from __future__ import annotations

import logging
import math
import os
import re
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .conditions import default_t_grid
from .distributions import MixtureDistribution, build_distribution
from .experiments import SweepConfig
from .models import ConfigError, PartLDPError

logger = logging.getLogger(__name__)

THREADS_ENV = "PARTLDP_THREADS"

DISTRIBUTION_KEYS = {
    "kind": str,
    "delta": float,
    "density": str,
    "intrinsic_dim": int,
    "offset": list,
    "shift": float,
    "regression": str,
    "atoms": list,
}
ATOM_KEYS = {"point": list, "prob": float, "p_plus": float}
SWEEP_KEYS = {
    "mode": str,
    "n_grid": list,
    "n_grid_log2": list,
    "replications": int,
    "bandwidth_rule": str,
    "bandwidth_constant": float,
    "cell_center": float,
    "h_grid": list,
    "alpha": float,
    "eval": str,
    "n_eval": int,
    "master_seed": int,
}
PROBE_KEYS = {"h": float, "t_min": float, "t_max": float, "points": int, "t_grid": list}
OUTPUT_KEYS = {"path": str, "probe_path": str}
SECTIONS = {
    "distribution": DISTRIBUTION_KEYS,
    "sweep": SWEEP_KEYS,
    "probe": PROBE_KEYS,
    "output": OUTPUT_KEYS,
}


def get_thread_cap() -> int:
    """Worker threads for sweeps, from PARTLDP_THREADS or the CPU count."""
    default = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        logger.warning("ignoring %s=%r: must be a positive integer", THREADS_ENV, raw)
        return default
    return value


@dataclass
class ProbeConfig:
    h: float = 1e-3
    t_grid: List[float] = field(default_factory=default_t_grid)


@dataclass
class ExperimentConfig:
    """A parsed configuration document."""

    distribution: Dict[str, Any]
    dist: MixtureDistribution
    sweep: Optional[SweepConfig] = None
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    output_path: Optional[str] = None
    probe_output_path: Optional[str] = None
    source: Optional[str] = None

    def require_sweep(self) -> SweepConfig:
        if self.sweep is None:
            raise ConfigError("Missing section", key="sweep")
        return self.sweep


class _Locator:
    """Line lookup for dotted keys in the raw TOML text."""

    header = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
    assign = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")

    def __init__(self, text: str):
        self.lines: Dict[str, int] = {}
        section = ""
        for number, line in enumerate(text.splitlines(), start=1):
            m = self.header.match(line)
            if m:
                section = m.group(1)
                self.lines.setdefault(section, number)
                continue
            m = self.assign.match(line)
            if m:
                dotted = f"{section}.{m.group(1)}" if section else m.group(1)
                self.lines.setdefault(dotted, number)

    def line(self, key: str) -> Optional[int]:
        while key:
            if key in self.lines:
                return self.lines[key]
            key = key.rpartition(".")[0]
        return None

    def error(self, message: str, key: str) -> ConfigError:
        return ConfigError(message, key=key, line=self.line(key))


def _check_type(value: Any, expected: type, key: str, where: _Locator, allow_inf: bool = False) -> Any:
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise where.error(f"Expected a number, got {type(value).__name__}", key)
        value = float(value)
        if not math.isfinite(value) and not (allow_inf and value == math.inf):
            raise where.error("Expected a finite number", key)
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise where.error(f"Expected an integer, got {type(value).__name__}", key)
        return value
    if not isinstance(value, expected):
        raise where.error(f"Expected {expected.__name__}, got {type(value).__name__}", key)
    return value


def _numbers(values: List[Any], key: str, where: _Locator, kind: type = float) -> List[Any]:
    return [_check_type(v, kind, key, where) for v in values]


def _section(doc: Dict[str, Any], name: str, where: _Locator) -> Dict[str, Any]:
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise where.error("Expected a table", name)
    keys = SECTIONS[name]
    out = {}
    for key, value in raw.items():
        dotted = f"{name}.{key}"
        if key not in keys:
            raise where.error(f"Unknown key '{key}'", dotted)
        out[key] = _check_type(value, keys[key], dotted, where, allow_inf=(dotted == "sweep.alpha"))
    return out


def _distribution(doc: Dict[str, Any], where: _Locator) -> Dict[str, Any]:
    dist = _section(doc, "distribution", where)
    if "kind" not in dist:
        raise where.error("Missing required key", "distribution.kind")
    if "offset" in dist:
        dist["offset"] = _numbers(dist["offset"], "distribution.offset", where)
    if "atoms" in dist:
        atoms = []
        for atom in dist["atoms"]:
            key = "distribution.atoms"
            if not isinstance(atom, dict):
                raise where.error("Expected a table per atom", key)
            unknown = set(atom) - set(ATOM_KEYS)
            if unknown:
                raise where.error(f"Unknown key '{sorted(unknown)[0]}'", key)
            missing = set(ATOM_KEYS) - set(atom)
            if missing:
                raise where.error(f"Missing required key '{sorted(missing)[0]}'", key)
            point = _numbers(_check_type(atom["point"], list, key, where), key, where)
            atoms.append(
                (point, _check_type(atom["prob"], float, key, where), _check_type(atom["p_plus"], float, key, where))
            )
        dist["atoms"] = atoms
    return dist


def _sweep(
    doc: Dict[str, Any], distribution: Dict[str, Any], dist: MixtureDistribution, where: _Locator
) -> Optional[SweepConfig]:
    if "sweep" not in doc:
        return None
    sweep = _section(doc, "sweep", where)
    if "n_grid" in sweep and "n_grid_log2" in sweep:
        raise where.error("Give either n_grid or n_grid_log2, not both", "sweep.n_grid_log2")
    if "n_grid" in sweep:
        n_grid = _numbers(sweep.pop("n_grid"), "sweep.n_grid", where, int)
    elif "n_grid_log2" in sweep:
        bounds = _numbers(sweep.pop("n_grid_log2"), "sweep.n_grid_log2", where, int)
        if len(bounds) != 2 or bounds[0] > bounds[1]:
            raise where.error("Expected [first, last] exponents", "sweep.n_grid_log2")
        n_grid = [2**k for k in range(bounds[0], bounds[1] + 1)]
    else:
        raise where.error("Missing required key", "sweep.n_grid")
    if "h_grid" in sweep:
        sweep["h_grid"] = tuple(_numbers(sweep["h_grid"], "sweep.h_grid", where))
    try:
        return SweepConfig(distribution=distribution, n_grid=tuple(n_grid), _dist=dist, **sweep)
    except PartLDPError as e:
        raise where.error(str(e), "sweep") from e


def _probe(doc: Dict[str, Any], where: _Locator) -> ProbeConfig:
    probe = _section(doc, "probe", where)
    cfg = ProbeConfig()
    if "h" in probe:
        if probe["h"] <= 0:
            raise where.error("Expected a positive number", "probe.h")
        cfg.h = probe["h"]
    if "t_grid" in probe:
        cfg.t_grid = _numbers(probe["t_grid"], "probe.t_grid", where)
    else:
        t_min = probe.get("t_min", 1e-4)
        t_max = probe.get("t_max", 1.0)
        points = probe.get("points", 25)
        if not 0 < t_min < t_max or points < 4:
            raise where.error("Expected 0 < t_min < t_max and points >= 4", "probe")
        cfg.t_grid = default_t_grid(t_min, t_max, points)
    if any(t <= 0 for t in cfg.t_grid) or any(b <= a for a, b in zip(cfg.t_grid, cfg.t_grid[1:])):
        raise where.error("Expected positive, strictly increasing values", "probe.t_grid")
    return cfg


def parse_config(text: str, source: Optional[str] = None) -> ExperimentConfig:
    """Parse and validate a configuration document.

    Raises:
        ConfigError: naming the offending dotted key and its line.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise ConfigError(f"Syntax error: {e}", line=int(m.group(1)) if m else None) from e
    where = _Locator(text)
    for name in doc:
        if name not in SECTIONS:
            raise where.error(f"Unknown section '{name}'", name)
    if "distribution" not in doc:
        raise ConfigError("Missing section", key="distribution")
    distribution = _distribution(doc, where)
    params = {k: v for k, v in distribution.items() if k != "kind"}
    try:
        dist = build_distribution(distribution["kind"], **params)
    except TypeError as e:
        raise where.error(f"Parameter not accepted by {distribution['kind']}: {e}", "distribution") from e
    except PartLDPError as e:
        raise where.error(str(e), "distribution") from e
    output = _section(doc, "output", where)
    return ExperimentConfig(
        distribution=distribution,
        dist=dist,
        sweep=_sweep(doc, distribution, dist, where),
        probe=_probe(doc, where),
        output_path=output.get("path"),
        probe_output_path=output.get("probe_path"),
        source=source,
    )


def load_config(path: str) -> ExperimentConfig:
    """Read a TOML configuration file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e.strerror}") from e
    return parse_config(text, source=path)

