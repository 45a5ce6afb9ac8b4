"""Finite-resolution probes for openness of f at the origin and injectivity of maps.

Both probes produce evidence, not proofs: a direction reported as a
violation witness is one along which no tested target was reached by
projected Gauss-Newton from any start.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError
from .model import VectorFieldSpec
from .newton import gauss_newton
from .section import Grid

VIOLATION_RESIDUAL = 0.5
SOLVED_RESIDUAL = 1e-6
NOTE = "finite-resolution evidence; not a proof of (non-)openness"


@dataclass
class OpennessReport:
    verdict: str  # "violation" or "no-violation-found"
    witness: list | None
    witnesses: list
    directions: list
    scales: list
    residuals: list  # per direction, best relative residual per scale
    unresolved: list  # (direction index, scale index) with every start failing numerically
    undecided: list  # (direction index, scale index) neither solved nor violating
    attempts: int
    note: str = NOTE

    @property
    def worst_residual(self) -> list[float]:
        return [max(r) for r in self.residuals]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "witness": self.witness,
            "witnesses": self.witnesses,
            "directions": self.directions,
            "scales": [{"r": r, "rho": rho} for r, rho in self.scales],
            "residuals": self.residuals,
            "worst_residual": self.worst_residual,
            "unresolved": [list(t) for t in self.unresolved],
            "undecided": [list(t) for t in self.undecided],
            "attempts_per_target": self.attempts,
            "note": self.note,
        }


def probe_directions(n: int, count: int, seed: int) -> np.ndarray:
    """The 2n signed axis directions followed by seeded random unit vectors."""
    if count < 2 * n:
        raise ValueError(f"need at least {2 * n} directions")
    dirs = []
    for i in range(n):
        for s in (1.0, -1.0):
            e = np.zeros(n)
            e[i] = s
            dirs.append(e)
    rng = np.random.default_rng(seed)
    while len(dirs) < count:
        v = rng.standard_normal(n)
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            dirs.append(v / nv)
    return np.array(dirs)


def probe_scales(radius: float, n: int) -> list[tuple[float, float]]:
    scales = []
    for r in (radius, radius / 2, radius / 4):
        scales.append((r, 0.1 * r))
        if n > 1:
            scales.append((r, 0.01 * r * r))
    return scales


def _best_relative_residual(sys, y, r, starts, max_iter):
    ny = float(np.linalg.norm(y))

    def F(w):
        return sys.joint(w) - y

    best = np.inf
    for s in starts:
        res = gauss_newton(F, sys.joint_jacobian, s, 1e-7 * ny, max_iter, bound=r, polish=False)
        if not np.isfinite(res.residual):
            continue
        try:
            rel = float(np.linalg.norm(F(res.w))) / ny
        except DomainError:
            continue
        best = min(best, rel)
        if best <= SOLVED_RESIDUAL:
            break
    return best


def openness_probe(
    sys: VectorFieldSpec,
    radius: float,
    directions: int | None = None,
    seed: int = 42,
    multistart: int = 8,
    max_iter: int = 100,
) -> OpennessReport:
    """Look for directions d such that rho*d is not in f(ball of radius r).

    For r in (radius, radius/2, radius/4) and rho in (0.1 r, 0.01 r^2 when
    n > 1) we try to solve f(w) = rho*d with ||w|| <= r from the origin and
    ``multistart - 1`` seeded random points of the ball.  A direction is a
    witness when the best relative residual exceeds 0.5 at every scale.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = sys.n
    if directions is None:
        directions = 2 * n + 6
    dirs = probe_directions(n, directions, seed)
    scales = probe_scales(radius, n)
    dim = n + sys.m
    residuals, unresolved, undecided = [], [], []
    for i, d in enumerate(dirs):
        row = []
        for j, (r, rho) in enumerate(scales):
            rng = np.random.default_rng([seed, i, j])
            starts = [np.zeros(dim)]
            for _ in range(multistart - 1):
                v = rng.standard_normal(dim)
                starts.append(v / np.linalg.norm(v) * r * rng.uniform() ** (1.0 / dim))
            best = _best_relative_residual(sys, rho * d, r, starts, max_iter)
            if not np.isfinite(best):
                unresolved.append((i, j))
            elif SOLVED_RESIDUAL < best <= VIOLATION_RESIDUAL:
                undecided.append((i, j))
            row.append(float(best))
        residuals.append(row)
    witnesses = [
        i for i, row in enumerate(residuals)
        if all(np.isfinite(v) and v > VIOLATION_RESIDUAL for v in row)
    ]
    witness = None
    if witnesses:
        # strongest evidence: largest smallest-over-scales residual; first wins ties
        best_i = max(witnesses, key=lambda i: (min(residuals[i]), -i))
        witness = [float(v) for v in dirs[best_i]]
    return OpennessReport(
        verdict="violation" if witnesses else "no-violation-found",
        witness=witness,
        witnesses=witnesses,
        directions=[[float(v) for v in d] for d in dirs],
        scales=[(float(r), float(rho)) for r, rho in scales],
        residuals=residuals,
        unresolved=unresolved,
        undecided=undecided,
        attempts=multistart,
    )


@dataclass
class InjectivityReport:
    injective_on_grid: bool
    closest_pair: tuple | None  # (y_a, y_b, image distance)
    grid: int
    spacing: float
    failed_points: int = 0
    threshold: float = field(default=0.0)

    def to_dict(self) -> dict:
        pair = None
        if self.closest_pair is not None:
            a, b, dist = self.closest_pair
            pair = {"y_a": list(a), "y_b": list(b), "distance": dist}
        return {
            "injective_on_grid": self.injective_on_grid,
            "closest_pair": pair,
            "grid": self.grid,
            "spacing": self.spacing,
            "failed_points": self.failed_points,
            "threshold": self.threshold,
        }


def injectivity_probe(fmap, radius: float, grid: int, n: int | None = None) -> InjectivityReport:
    """Evaluate ``fmap`` on a uniform grid and report the closest pair of images.

    The map is declared non-injective on the grid when two distinct nodes
    have images within 1e-9 * (1 + spacing).
    """
    n = n if n is not None else fmap.n
    if n > 3:
        raise ValueError("injectivity probe is limited to n <= 3")
    g = Grid(n, radius, grid)
    pts, imgs, failed = [], [], 0
    for y in g.points:
        try:
            v = np.asarray(fmap(y), dtype=float)
        except DomainError:
            failed += 1
            continue
        if not np.all(np.isfinite(v)):
            failed += 1
            continue
        pts.append(y)
        imgs.append(v)
    threshold = 1e-9 * (1.0 + g.spacing)
    if len(imgs) < 2:
        return InjectivityReport(True, None, grid, g.spacing, failed, threshold)
    imgs = np.array(imgs)
    dist, idx = cKDTree(imgs).query(imgs, k=2)
    # a point may return itself second when duplicated images exist; either way d is the pair distance
    i = int(np.argmin(dist[:, 1]))
    j = int(idx[i, 1]) if int(idx[i, 1]) != i else int(idx[i, 0])
    d = float(dist[i, 1])
    pair = (tuple(float(v) for v in pts[i]), tuple(float(v) for v in pts[j]), d)
    return InjectivityReport(d > threshold, pair, grid, g.spacing, failed, threshold)
