"""Control systems xdot = f(x, u): evaluation, Jacobians, example registry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import exprdsl
from .errors import DomainError

ORIGIN_TOL = 1e-12
FD_STEP = 1e-6
SINGULAR_SHIFT = 1e-7


def _bind(components, n, m, allow_controls=True):
    nodes = tuple(exprdsl.parse(c) if isinstance(c, str) else c for c in components)
    if len(nodes) != n:
        raise ValueError(f"expected {n} components, got {len(nodes)}")
    for i, node in enumerate(nodes, start=1):
        for name in sorted(exprdsl.variables(node)):
            var = exprdsl.Var(name)
            limit = n if var.kind == "x" else (m if allow_controls else 0)
            if var.index >= limit:
                raise ValueError(f"component {i} references undeclared variable {name}")
    return nodes


def _symbolic_jacobian(nodes, names):
    derivs = [exprdsl.differentiate(node, v) for node in nodes for v in names]
    return exprdsl.compile_many(derivs)


@dataclass(frozen=True)
class VectorFieldSpec:
    """A control system xdot = f(x, u) with ``n`` states and ``m`` controls."""

    name: str
    n: int
    m: int
    components: tuple
    _f: Callable = field(init=False, repr=False, compare=False)
    _jac: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise ValueError("need n >= 1 and m >= 0")
        nodes = _bind(self.components, self.n, self.m)
        object.__setattr__(self, "components", nodes)
        object.__setattr__(self, "_f", exprdsl.compile_many(nodes))
        names = [f"x{i + 1}" for i in range(self.n)] + [f"u{j + 1}" for j in range(self.m)]
        object.__setattr__(self, "_jac", _symbolic_jacobian(nodes, names))

    @classmethod
    def from_strings(cls, name: str, n: int, m: int, components: Sequence[str]):
        return cls(name, n, m, tuple(components))

    def __call__(self, x, u=()) -> np.ndarray:
        return np.array(self._f(x, u), dtype=float)

    def joint(self, w) -> np.ndarray:
        """f evaluated at the stacked point w = (x, u)."""
        return np.array(self._f(w[: self.n], w[self.n:]), dtype=float)

    def joint_jacobian(self, w) -> np.ndarray:
        """n x (n+m) Jacobian at w = (x, u); symbolic, FD where singular."""
        try:
            vals = self._jac(w[: self.n], w[self.n:])
        except DomainError:
            return jacobian_fd(self.joint, w)
        return np.array(vals, dtype=float).reshape(self.n, self.n + self.m)

    def expressions(self) -> list[str]:
        return [exprdsl.to_string(c) for c in self.components]


@dataclass(frozen=True)
class AutonomousField:
    """An n-dimensional map over x1..xn only (targets, closed loops)."""

    n: int
    components: tuple
    _f: Callable = field(init=False, repr=False, compare=False)
    _jac: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = _bind(self.components, self.n, 0, allow_controls=False)
        object.__setattr__(self, "components", nodes)
        object.__setattr__(self, "_f", exprdsl.compile_many(nodes))
        names = [f"x{i + 1}" for i in range(self.n)]
        object.__setattr__(self, "_jac", _symbolic_jacobian(nodes, names))

    @classmethod
    def from_strings(cls, components: Sequence[str]):
        return cls(len(components), tuple(components))

    @classmethod
    def negative_identity(cls, n: int):
        return cls(n, tuple(f"-x{i + 1}" for i in range(n)))

    def __call__(self, x) -> np.ndarray:
        return np.array(self._f(x), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        try:
            vals = self._jac(x)
        except DomainError:
            return jacobian_fd(self, x)
        return np.array(vals, dtype=float).reshape(self.n, self.n)

    def expressions(self) -> list[str]:
        return [exprdsl.to_string(c) for c in self.components]


@dataclass(frozen=True)
class Linearization:
    A: np.ndarray
    B: np.ndarray

    @property
    def J(self) -> np.ndarray:
        """The joint Jacobian [A | B] at the origin."""
        return np.hstack([self.A, self.B])


def eval_field(sys: VectorFieldSpec, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (sys.n,) or u.shape != (sys.m,):
        raise ValueError(f"expected x in R^{sys.n} and u in R^{sys.m}")
    return sys(x, u)


def jacobian_fd(fun, x, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``x``.

    Per-coordinate step is ``step * max(1, |x_i|)``.  If the stencil hits a
    numeric-domain error we fall back to one-sided differences from a center
    shifted by 1e-7 (forward from x + 1e-7, then backward from x - 1e-7); a
    failure of both propagates.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        lo, hi = x.copy(), x.copy()
        lo[i] -= h
        hi[i] += h
        try:
            col = (np.asarray(fun(hi), dtype=float) - np.asarray(fun(lo), dtype=float)) / (2 * h)
        except DomainError:
            col = None
            for sign in (1.0, -1.0):
                c, e = x.copy(), x.copy()
                c[i] += sign * SINGULAR_SHIFT
                e[i] = c[i] + sign * h
                try:
                    col = sign * (np.asarray(fun(e), dtype=float) - np.asarray(fun(c), dtype=float)) / h
                    break
                except DomainError:
                    if sign < 0:
                        raise
        cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def linearize(sys: VectorFieldSpec) -> Linearization:
    """A = df/dx and B = df/du at the origin."""
    w0 = np.zeros(sys.n + sys.m)
    try:
        J = np.array(sys._jac(w0[: sys.n], w0[sys.n:]), dtype=float).reshape(sys.n, sys.n + sys.m)
    except DomainError:
        J = jacobian_fd(sys.joint, w0, FD_STEP)
    return Linearization(A=J[:, : sys.n].copy(), B=J[:, sys.n:].copy())


_CORPUS = (
    ("state_only", 1, 1, ("x1",)),
    ("brockett_integrator", 3, 2, ("u1", "u2", "x1*u2 - x2*u1")),
    ("cubic_scalar", 1, 1, ("x1 + u1^3",)),
    ("example_2d", 2, 1, ("x1^2 + x2^2 + x2", "x1*x2 + x2^2 + u1^3")),
)


def corpus() -> list[VectorFieldSpec]:
    """The four example systems, in a fixed order."""
    return [VectorFieldSpec.from_strings(*row) for row in _CORPUS]


def get_system(name: str) -> VectorFieldSpec:
    for sys in corpus():
        if sys.name == name:
            return sys
    raise KeyError(f"unknown system {name!r}; known: {[r[0] for r in _CORPUS]}")


def origin_residual(sys: VectorFieldSpec) -> float:
    return float(np.max(np.abs(sys(np.zeros(sys.n), np.zeros(sys.m))), initial=0.0))
