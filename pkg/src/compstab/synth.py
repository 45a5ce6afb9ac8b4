"""Feedback and composition-symbol synthesis from local sections.

Target-driven synthesis fixes the desired closed loop G (a stable field
with G(0) = 0) and solves f(x, u) = G(x) for u at each grid node.  This
picks the section whose state part alpha_1 has inverse G, and the
resulting feedback is u = proj_2 o alpha o alpha_1^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DomainError,
    NoConvergence,
    NotSynthesizable,
    NumericError,
    SingularAtOrigin,
)
from .model import AutonomousField, VectorFieldSpec, jacobian_fd
from .newton import gauss_newton, multistart
from .section import (
    BOUND_FACTOR,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    Grid,
    SectionTable,
    solve_on_grid,
    write_csv,
)

DET_TOL = 1e-12
EIG_TOL = 1e-9


@dataclass
class FeedbackTable:
    grid: Grid
    n: int
    m: int
    values: np.ndarray  # u(x) per node, NaN where unsolved
    residuals: np.ndarray
    solved: np.ndarray
    target: Callable = field(repr=False)
    tol: float = DEFAULT_TOL

    @property
    def complete(self) -> bool:
        return bool(np.all(self.solved))

    @property
    def unsolved(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(~self.solved)]

    def header(self):
        return [f"x{i + 1}" for i in range(self.n)] + [f"u{j + 1}" for j in range(self.m)] + ["residual"]

    def rows(self):
        for k in range(len(self.grid)):
            yield list(self.grid.points[k]) + list(self.values[k]) + [self.residuals[k]]

    def to_csv(self, path):
        write_csv(path, self.header(), self.rows())

    def interpolator(self):
        vals = np.where(np.isfinite(self.values), self.values, 0.0)
        return self.grid.interpolator(vals)


@dataclass
class SymbolTable:
    grid: Grid
    n: int
    m: int
    values: np.ndarray  # h(x) = (hx, hu) per node
    residuals: np.ndarray
    solved: np.ndarray
    target: Callable = field(repr=False)
    tol: float = DEFAULT_TOL

    @property
    def complete(self) -> bool:
        return bool(np.all(self.solved))

    @property
    def unsolved(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(~self.solved)]

    def header(self):
        return (
            [f"x{i + 1}" for i in range(self.n)]
            + [f"hx{i + 1}" for i in range(self.n)]
            + [f"hu{j + 1}" for j in range(self.m)]
            + ["residual"]
        )

    def rows(self):
        for k in range(len(self.grid)):
            yield list(self.grid.points[k]) + list(self.values[k]) + [self.residuals[k]]

    def to_csv(self, path):
        write_csv(path, self.header(), self.rows())


def _check_target(target, n):
    if target.n != n:
        raise ValueError(f"target has dimension {target.n}, system has {n}")
    g0 = np.asarray(target(np.zeros(n)))
    if np.max(np.abs(g0), initial=0.0) > 1e-12:
        raise ValueError("target must vanish at the origin")


def _control_problem(sys: VectorFieldSpec, x, gx):
    n = sys.n

    def F(u):
        return sys(x, u) - gx

    def J(u):
        return sys.joint_jacobian(np.concatenate([x, u]))[:, n:]

    return F, J


def synthesize_feedback(
    sys: VectorFieldSpec,
    target: AutonomousField,
    radius: float,
    grid: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    bound: Optional[float] = None,
    seed: int = 42,
    multistart: int = 8,
    strict: bool = True,
) -> FeedbackTable:
    """Tabulate u(x) with f(x, u(x)) = G(x) on a grid over [-radius, radius]^n.

    Raises NotSynthesizable (with the partial table) when some node has no
    control reaching the target, unless ``strict`` is false.
    """
    if sys.m < 1:
        raise ValueError("feedback synthesis needs m >= 1")
    _check_target(target, sys.n)
    g = Grid(sys.n, radius, grid)
    if bound is None:
        bound = BOUND_FACTOR * radius

    def make_problem(k):
        x = g.points[k]
        try:
            gx = target(x)
        except DomainError:
            return None
        return _control_problem(sys, x, gx)

    sols, resid, solved = solve_on_grid(g, make_problem, sys.m, tol, max_iter, bound, seed, multistart, radius)
    sols[~solved] = np.nan
    table = FeedbackTable(g, sys.n, sys.m, sols, resid, solved, target, tol)
    if strict and not table.complete:
        raise NotSynthesizable(f"{len(table.unsolved)} of {len(g)} nodes have no feedback value", table, table.unsolved)
    return table


def synthesize_composition_symbol(
    sys: VectorFieldSpec,
    target: AutonomousField,
    radius: float,
    grid: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    bound: Optional[float] = None,
    seed: int = 42,
    multistart: int = 8,
    strict: bool = True,
) -> SymbolTable:
    """Tabulate a stationary symbol h with f(h(x)) = g(x), all n+m arguments free."""
    _check_target(target, sys.n)
    g = Grid(sys.n, radius, grid)
    if bound is None:
        bound = BOUND_FACTOR * radius

    def make_problem(k):
        try:
            gx = target(g.points[k])
        except DomainError:
            return None

        def F(w):
            return sys.joint(w) - gx

        return F, sys.joint_jacobian

    dim = sys.n + sys.m
    sols, resid, solved = solve_on_grid(g, make_problem, dim, tol, max_iter, bound, seed, multistart, radius)
    sols[~solved] = np.nan
    table = SymbolTable(g, sys.n, sys.m, sols, resid, solved, target, tol)
    if strict and not table.complete:
        raise NotSynthesizable(f"{len(table.unsolved)} of {len(g)} nodes have no symbol value", table, table.unsolved)
    return table


def _map_jacobian(fmap):
    if hasattr(fmap, "jacobian"):
        return fmap.jacobian
    return lambda y: jacobian_fd(fmap, y)


def invert_map(fmap, x, tol: float = 1e-12, y0=None, max_iter: int = 100, n: int | None = None) -> np.ndarray:
    """Solve fmap(y) = x by Newton's method (exact Jacobian when available).

    Raises SingularAtOrigin when |det J(0)| < 1e-12 and NoConvergence when
    the residual is still above ``tol`` after ``max_iter`` iterations.
    """
    x = np.asarray(x, dtype=float)
    n = n if n is not None else x.size
    jac = _map_jacobian(fmap)
    J0 = np.atleast_2d(jac(np.zeros(n)))
    if abs(np.linalg.det(J0)) < DET_TOL:
        raise SingularAtOrigin(f"map Jacobian at the origin is singular (det {np.linalg.det(J0):.3g})")
    if y0 is None:
        y0 = np.linalg.solve(J0, x)

    def F(y):
        return np.asarray(fmap(y), dtype=float) - x

    res = gauss_newton(F, jac, y0, tol, max_iter)
    if not res.converged:
        # fall back to the linearized guess when a warm start led astray
        res2 = gauss_newton(F, jac, np.linalg.solve(J0, x), tol, max_iter)
        if res2.residual < res.residual:
            res = res2
    if not res.converged:
        raise NoConvergence(f"could not invert map at x={list(x)} (residual {res.residual:.3g})")
    return res.w


class SectionInverse:
    """y = alpha_1^{-1}(x) for a tabulated section, i.e. the closed loop it induces.

    Inverts the multilinear interpolant of the state part; when the section
    was built from a prescribed exact state map, the result is refined by
    Newton on that map.
    """

    def __init__(self, table: SectionTable, tol: float = 1e-12):
        self.table = table
        self.n = table.n
        self.tol = tol
        self.alpha1 = table.state_part()
        J0 = jacobian_fd(self.alpha1, np.zeros(self.n))
        if abs(np.linalg.det(J0)) < DET_TOL:
            raise SingularAtOrigin("state part of the section has singular Jacobian at 0")
        self.J0 = J0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not np.any(x):
            return np.zeros(self.n)
        y = invert_map(self.alpha1, x, self.tol, n=self.n)
        if self.table.state_map is not None:
            y = invert_map(self.table.state_map, x, self.tol, y0=y, n=self.n)
        return y


def polish_control(sys, x, gx, starts, tol, max_iter=DEFAULT_MAX_ITER):
    """Gauss-Newton on f(x, u) = gx in u; tolerance is relative to |gx| for small targets."""
    scale = min(1.0, float(np.max(np.abs(gx), initial=0.0)))
    eff = max(tol * scale, 1e-300)
    F, J = _control_problem(sys, np.asarray(x, dtype=float), gx)
    return multistart(F, J, starts, eff, max_iter)


def feedback_from_section(
    sys: VectorFieldSpec,
    table: SectionTable,
    radius: float,
    grid: int,
    tol: float = DEFAULT_TOL,
    seed: int = 42,
    multistart: int = 8,
    strict: bool = True,
) -> FeedbackTable:
    """u = proj_2 o alpha o alpha_1^{-1} on a grid, polished to ||f(x,u) - alpha_1^{-1}(x)|| <= tol."""
    if not table.complete:
        raise ValueError("section table must be complete")
    inverse = SectionInverse(table)
    alpha2 = table.control_part()
    g = Grid(sys.n, radius, grid)
    N = len(g)
    us = np.full((N, sys.m), np.nan)
    resid = np.full(N, np.nan)
    solved = np.zeros(N, dtype=bool)
    us[0] = 0.0
    resid[0] = float(np.max(np.abs(sys(np.zeros(sys.n), np.zeros(sys.m))), initial=0.0))
    solved[0] = resid[0] <= tol
    failures = []
    for k in range(1, N):
        x = g.points[k]
        try:
            y = inverse(x)
        except (NoConvergence, DomainError) as exc:
            failures.append((k, str(exc)))
            continue
        u0 = alpha2(y)
        rng = np.random.default_rng([seed, k])
        starts = [u0] + [u0 + radius * rng.uniform(-1, 1, sys.m) for _ in range(max(multistart - 1, 0))]
        res = polish_control(sys, x, y, starts, tol)
        resid[k] = res.residual
        if res.residual <= tol:
            us[k] = res.w
            solved[k] = True
    out = FeedbackTable(g, sys.n, sys.m, us, resid, solved, inverse, tol)
    if strict and not out.complete:
        raise NotSynthesizable(f"{len(out.unsolved)} of {N} nodes failed", out, out.unsolved)
    return out


def check_exponential_condition(alpha1_jacobian_at_0) -> bool:
    """True iff every eigenvalue of J_{alpha_1}(0)^{-1} has real part < -1e-9."""
    J = np.atleast_2d(np.asarray(alpha1_jacobian_at_0, dtype=float))
    if abs(np.linalg.det(J)) < DET_TOL:
        raise SingularAtOrigin("alpha_1 Jacobian at the origin is singular")
    lam = np.linalg.eigvals(np.linalg.inv(J))
    return bool(np.all(lam.real < -EIG_TOL))


class ClosedLoop:
    """The closed-loop field x -> f(x, u(x)) for a feedback table.

    ``u(x)`` is recomputed at every call by the polished pointwise solve of
    f(x, u) = G(x), warm-started from the previous solution and from the
    table interpolant.  With ``strict`` a failed solve raises NumericError;
    otherwise the best iterate is used.
    """

    def __init__(self, sys: VectorFieldSpec, table: FeedbackTable, strict: bool = True, max_iter: int = DEFAULT_MAX_ITER):
        self.sys = sys
        self.table = table
        self.n = sys.n
        self.strict = strict
        self.max_iter = max_iter
        self._interp = table.interpolator()
        self._last = None

    def control(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        gx = np.asarray(self.table.target(x), dtype=float)
        starts = []
        if self._last is not None:
            starts.append(self._last)
        starts.append(self._interp(x))
        starts.append(np.full(self.sys.m, 1e-3))
        starts.append(np.full(self.sys.m, -1e-3))
        res = polish_control(self.sys, x, gx, starts, self.table.tol, self.max_iter)
        if self.strict and not res.converged:
            raise NumericError(f"pointwise feedback solve failed at x={list(x)} (residual {res.residual:.3g})")
        self._last = res.w
        return res.w

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.sys(x, self.control(x))
