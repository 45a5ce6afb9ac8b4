"""Tabulated local sections alpha of f near the origin: f(alpha(y)) = y, alpha(0) = 0.

Grid nodes are solved in expanding shells (by ||y||_inf).  Each node is
warm-started from the nearest solved node of an earlier shell, so results
never depend on the order of solves within a shell.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError, NoConvergence, NoSolution, SectionIncomplete
from .model import VectorFieldSpec
from .newton import GNResult, gauss_newton, multistart

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
BOUND_FACTOR = 10.0


class Grid:
    """Uniform grid on [-radius, radius]^n with ``count`` (odd) nodes per axis.

    ``points``, ``index`` and ``shell`` are listed in shell order: by
    ||y||_inf, ties lexicographic.
    """

    def __init__(self, n: int, radius: float, count: int):
        if count < 3 or count % 2 == 0:
            raise ValueError(f"grid count must be odd and >= 3, got {count}")
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.n = n
        self.radius = float(radius)
        self.count = count
        self.axis = np.linspace(-radius, radius, count)
        self.axis[count // 2] = 0.0
        c = count // 2
        idx = sorted(
            itertools.product(range(count), repeat=n),
            key=lambda t: (max(abs(i - c) for i in t), t),
        )
        self.index = np.array(idx, dtype=int).reshape(-1, n)
        self.shell = np.max(np.abs(self.index - c), axis=1)
        self.points = self.axis[self.index]
        self.spacing = 2.0 * radius / (count - 1)

    def __len__(self):
        return len(self.points)

    @property
    def origin(self) -> int:
        return 0

    def shells(self):
        """Yield arrays of node positions, one per shell, in order."""
        bounds = np.flatnonzero(np.diff(self.shell)) + 1
        start = 0
        for stop in list(bounds) + [len(self.shell)]:
            yield np.arange(start, stop)
            start = stop

    def neighbor_pairs(self):
        """Pairs of node positions differing by one step along one axis."""
        lookup = {tuple(t): k for k, t in enumerate(self.index)}
        pairs = []
        for k, t in enumerate(self.index):
            for d in range(self.n):
                nb = list(t)
                nb[d] += 1
                j = lookup.get(tuple(nb))
                if j is not None:
                    pairs.append((k, j))
        return pairs

    def to_array(self, values: np.ndarray) -> np.ndarray:
        """Rearrange per-node rows into a (count,)*n + (k,) array."""
        out = np.full((self.count,) * self.n + (values.shape[1],), np.nan)
        out[tuple(self.index.T)] = values
        return out

    def interpolator(self, values: np.ndarray) -> Callable:
        """Multilinear interpolant of per-node rows; queries are clipped to the box."""
        interp = RegularGridInterpolator((self.axis,) * self.n, self.to_array(values), method="linear")

        def fn(y):
            y = np.clip(np.asarray(y, dtype=float), -self.radius, self.radius)
            return interp(y.reshape(1, -1))[0]

        return fn


def solve_on_grid(grid: Grid, make_problem, dim: int, tol, max_iter, bound, seed, multistart_count, scale):
    """Shell-continuation driver shared by sections, feedback and symbol tables.

    ``make_problem(k)`` returns ``(F, J)`` for node ``k`` or None when the node
    cannot even be set up.  Node 0 (the origin) is pinned to the zero vector.
    Returns (solutions, residuals, solved).
    """
    N = len(grid)
    sols = np.full((N, dim), np.nan)
    resid = np.full(N, np.nan)
    solved = np.zeros(N, dtype=bool)
    sols[0] = 0.0
    resid[0] = 0.0
    problem = make_problem(0)
    if problem is not None:
        try:
            resid[0] = float(np.max(np.abs(problem[0](sols[0])), initial=0.0))
        except DomainError:
            resid[0] = np.inf
    solved[0] = resid[0] <= tol
    for shell in grid.shells():
        if shell[0] == 0:
            continue
        done = np.flatnonzero(solved[: shell[0]])
        for k in shell:
            if len(done):
                d = np.linalg.norm(grid.points[done] - grid.points[k], axis=1)
                warm = sols[done[int(np.argmin(d))]]
            else:
                warm = np.zeros(dim)
            problem = make_problem(k)
            if problem is None:
                continue
            F, J = problem
            rng = np.random.default_rng([seed, int(k)])
            extra = [warm + scale * rng.uniform(-1.0, 1.0, dim) for _ in range(max(multistart_count - 1, 0))]
            res = multistart(F, J, [warm] + extra, tol, max_iter, bound)
            resid[k] = res.residual
            if res.converged:
                sols[k] = res.w
                solved[k] = True
    return sols, resid, solved


@dataclass
class SectionTable:
    """Tabulated stationary local section y -> w = (x-part, u-part)."""

    grid: Grid
    n: int
    m: int
    values: np.ndarray
    residuals: np.ndarray
    solved: np.ndarray
    tol: float
    lipschitz: float
    state_map: Optional[Callable] = field(default=None, repr=False)

    @property
    def radius(self) -> float:
        return self.grid.radius

    @property
    def complete(self) -> bool:
        return bool(np.all(self.solved))

    @property
    def unsolved(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(~self.solved)]

    def state_part(self) -> Callable:
        return self.grid.interpolator(self.values[:, : self.n])

    def control_part(self) -> Callable:
        return self.grid.interpolator(self.values[:, self.n:])

    def header(self) -> list[str]:
        return (
            [f"y{i + 1}" for i in range(self.n)]
            + [f"x{i + 1}" for i in range(self.n)]
            + [f"u{j + 1}" for j in range(self.m)]
            + ["residual"]
        )

    def rows(self):
        for k in range(len(self.grid)):
            yield list(self.grid.points[k]) + list(self.values[k]) + [self.residuals[k]]

    def to_csv(self, path):
        write_csv(path, self.header(), self.rows())


def fmt(v) -> str:
    return "%.17g" % v


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def empirical_lipschitz(grid: Grid, values: np.ndarray, solved: np.ndarray) -> float:
    L = 0.0
    for a, b in grid.neighbor_pairs():
        if solved[a] and solved[b]:
            L = max(L, float(np.linalg.norm(values[a] - values[b]) / np.linalg.norm(grid.points[a] - grid.points[b])))
    return L


def _section_problem(sys: VectorFieldSpec, y):
    y = np.asarray(y, dtype=float)

    def F(w):
        return sys.joint(w) - y

    return F, sys.joint_jacobian


def solve_section_point(
    sys: VectorFieldSpec, y, warm_start=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, bound=None
) -> np.ndarray:
    """Find w in R^{n+m} with ||f(w) - y||_inf <= tol by damped Gauss-Newton.

    Raises NoSolution when the iteration stalls above ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if warm_start is None:
        warm_start = np.zeros(sys.n + sys.m)
    F, J = _section_problem(sys, y)
    res: GNResult = gauss_newton(F, J, warm_start, tol, max_iter, bound)
    if not res.converged:
        raise NoSolution(f"no section point for y={list(y)} (residual {res.residual:.3g})", res.residual, res.w)
    return res.w


def build_section(
    sys: VectorFieldSpec,
    radius: float,
    grid: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    bound: Optional[float] = None,
    seed: int = 42,
    multistart: int = 8,
    state_map: Optional[Callable] = None,
    strict: bool = True,
) -> SectionTable:
    """Tabulate a stationary local section on a uniform grid of targets y.

    Solves are confined to the ball ``||w|| <= bound`` (default
    ``10 * radius``), the neighborhood on which the section lives.  With
    ``state_map`` the x-part is prescribed as ``state_map(y)`` and only the
    control part is solved for, which is how a section with a chosen
    ``alpha_1`` is built.

    Raises SectionIncomplete (carrying the partial table) when any node
    fails and ``strict`` is set.
    """
    if sys.n > 3:
        raise ValueError("grid sections are limited to n <= 3")
    g = Grid(sys.n, radius, grid)
    if bound is None:
        bound = BOUND_FACTOR * radius
    n, m = sys.n, sys.m

    if state_map is None:
        def make_problem(k):
            return _section_problem(sys, g.points[k])

        dim = n + m
    else:
        states = np.full((len(g), n), np.nan)
        for k in range(len(g)):
            try:
                states[k] = state_map(g.points[k])
            except (NoConvergence, NoSolution, DomainError):
                pass
        states[0] = 0.0

        def make_problem(k):
            x = states[k]
            if not np.all(np.isfinite(x)):
                return None
            y = g.points[k]

            def F(u):
                return sys(x, u) - y

            def J(u):
                return sys.joint_jacobian(np.concatenate([x, u]))[:, n:]

            return F, J

        dim = m

    sols, resid, solved = solve_on_grid(g, make_problem, dim, tol, max_iter, bound, seed, multistart, radius)
    if state_map is not None:
        sols = np.hstack([states, sols])
        sols[~solved] = np.nan
    table = SectionTable(
        grid=g,
        n=n,
        m=m,
        values=sols,
        residuals=resid,
        solved=solved,
        tol=tol,
        lipschitz=empirical_lipschitz(g, sols, solved),
        state_map=state_map,
    )
    if strict and not table.complete:
        raise SectionIncomplete(
            f"{len(table.unsolved)} of {len(g)} section nodes unsolved", table, table.unsolved
        )
    return table


def check_section(sys: VectorFieldSpec, table: SectionTable) -> float:
    """Max over solved nodes of ||f(alpha(y)) - y||_inf (0 for an empty table)."""
    worst = 0.0
    for k in np.flatnonzero(table.solved):
        r = sys.joint(table.values[k]) - table.grid.points[k]
        worst = max(worst, float(np.max(np.abs(r), initial=0.0)))
    return worst
