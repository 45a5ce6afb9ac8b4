"""Run configuration: a line-oriented ``[section]`` / ``key = value`` format.

Example::

    # comments start with '#'
    [system]
    system = cubic_scalar

    [target]
    g1 = -x1

    [solver]
    radius = 0.5
    grid = 21

An inline system replaces ``system = <name>`` by ``n``, ``m`` and ``f1..fn``
(optionally ``name``).  Expressions run to the end of the line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ParseError
from .exprdsl import parse
from .model import ORIGIN_TOL, AutonomousField, VectorFieldSpec, get_system, origin_residual

SECTIONS = ("system", "target", "solver", "simulate")


@dataclass
class SolverConfig:
    radius: float = 0.5
    grid: int = 21
    tol: float = 1e-8
    max_iter: int = 100
    fd_step: float = 1e-6
    seed: int = 42
    multistart: int = 8
    directions: Optional[int] = None
    bound: Optional[float] = None


@dataclass
class SimulateConfig:
    t_final: float = 20.0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    num_initial: int = 8
    radius: Optional[float] = None  # starting sphere for classification; defaults to solver radius


@dataclass
class RunConfig:
    system: VectorFieldSpec
    target: AutonomousField
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    target_is_default: bool = True

    @property
    def sim_radius(self) -> float:
        return self.simulate.radius if self.simulate.radius is not None else self.solver.radius


_SOLVER_TYPES = {
    "radius": float, "grid": int, "tol": float, "max_iter": int, "fd_step": float,
    "seed": int, "multistart": int, "directions": int, "bound": float,
}
_SIMULATE_TYPES = {"t_final": float, "rel_tol": float, "abs_tol": float, "num_initial": int, "radius": float}


def parse_config_text(text: str) -> dict:
    """Split config text into ``{section: {key: (value, line)}}``."""
    out = {s: {} for s in SECTIONS}
    current = "system"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            current = line[1:-1].strip()
            if current not in SECTIONS:
                raise ConfigError(f"unknown section [{current}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not value:
            raise ConfigError("empty key or value", lineno)
        if key in out[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno)
        out[current][key] = (value, lineno)
    return out


def _typed(section, key, value, lineno, types):
    if key not in types:
        raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
    try:
        return types[key](value)
    except ValueError:
        raise ConfigError(f"bad {types[key].__name__} for {key}: {value!r}", lineno) from None


def _build_system(entries) -> VectorFieldSpec:
    if "system" in entries:
        value, lineno = entries["system"]
        extra = set(entries) - {"system"}
        if extra:
            raise ConfigError(f"named system cannot be combined with {sorted(extra)}", lineno)
        try:
            return get_system(value)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0]), lineno) from None
    if "n" not in entries:
        raise ConfigError("[system] needs 'system = <name>' or an inline definition with n, m, f1..fn")
    try:
        n = int(entries["n"][0])
        m = int(entries.get("m", ("0", None))[0])
    except ValueError:
        raise ConfigError("n and m must be integers", entries["n"][1]) from None
    if n < 1 or m < 0:
        raise ConfigError("need n >= 1 and m >= 0", entries["n"][1])
    allowed = {"n", "m", "name"} | {f"f{i + 1}" for i in range(n)}
    for key, (_, lineno) in entries.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [system]", lineno)
    comps = []
    for i in range(n):
        key = f"f{i + 1}"
        if key not in entries:
            raise ConfigError(f"missing component {key}")
        comps.append(entries[key])
    name = entries.get("name", ("inline", None))[0]
    return _make(lambda: VectorFieldSpec.from_strings(name, n, m, [c for c, _ in comps]), comps)


def _make(builder, comps):
    try:
        return builder()
    except ParseError as exc:
        line = comps[0][1] if comps else None
        for text, lineno in comps:
            try:
                parse(text)
            except ParseError:
                line = lineno
                break
        raise ConfigError(f"expression error: {exc}", line) from None
    except ValueError as exc:
        raise ConfigError(str(exc), comps[0][1] if comps else None) from None


def build_config(parsed: dict) -> RunConfig:
    sys = _build_system(parsed["system"])
    if origin_residual(sys) > ORIGIN_TOL:
        line = next(iter(parsed["system"].values()))[1] if parsed["system"] else None
        raise ConfigError("f(0,0) must vanish", line)

    tentries = parsed["target"]
    if tentries:
        for key, (_, lineno) in tentries.items():
            if key not in {f"g{i + 1}" for i in range(sys.n)}:
                raise ConfigError(f"unknown key {key!r} in [target]", lineno)
        missing = [f"g{i + 1}" for i in range(sys.n) if f"g{i + 1}" not in tentries]
        if missing:
            raise ConfigError(f"target is missing {missing}")
        comps = [tentries[f"g{i + 1}"] for i in range(sys.n)]
        target = _make(lambda: AutonomousField.from_strings([c for c, _ in comps]), comps)
        if np.max(np.abs(target(np.zeros(sys.n)))) > ORIGIN_TOL:
            raise ConfigError("target G(0) must vanish", comps[0][1])
    else:
        target = AutonomousField.negative_identity(sys.n)

    solver = SolverConfig()
    for key, (value, lineno) in parsed["solver"].items():
        setattr(solver, key, _typed("solver", key, value, lineno, _SOLVER_TYPES))
    sim = SimulateConfig()
    for key, (value, lineno) in parsed["simulate"].items():
        setattr(sim, key, _typed("simulate", key, value, lineno, _SIMULATE_TYPES))

    def line_of(sec, key):
        return parsed[sec].get(key, (None, None))[1]

    if solver.grid < 3 or solver.grid % 2 == 0:
        raise ConfigError(f"grid must be odd and >= 3, got {solver.grid}", line_of("solver", "grid"))
    if solver.radius <= 0:
        raise ConfigError("radius must be positive", line_of("solver", "radius"))
    for key in ("tol", "fd_step"):
        if getattr(solver, key) <= 0:
            raise ConfigError(f"{key} must be positive", line_of("solver", key))
    if solver.max_iter < 1 or solver.multistart < 1:
        raise ConfigError("max_iter and multistart must be >= 1")
    if solver.directions is not None and solver.directions < 2 * sys.n:
        raise ConfigError(f"directions must be >= {2 * sys.n}", line_of("solver", "directions"))
    if sim.t_final <= 0:
        raise ConfigError("t_final must be positive", line_of("simulate", "t_final"))
    if sim.num_initial < 4:
        raise ConfigError("num_initial must be >= 4", line_of("simulate", "num_initial"))
    if sim.radius is not None and sim.radius <= 0:
        raise ConfigError("simulate radius must be positive", line_of("simulate", "radius"))
    return RunConfig(sys, target, solver, sim, target_is_default=not tentries)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build_config(parse_config_text(text))
