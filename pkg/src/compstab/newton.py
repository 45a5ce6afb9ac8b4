"""Damped Gauss-Newton with pseudoinverse steps and optional ball projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

PINV_RTOL = 1e-8
MAX_HALVINGS = 20
STALL_RTOL = 1e-12
STALL_COUNT = 5
POLISH_STEPS = 8


@dataclass
class GNResult:
    w: np.ndarray
    residual: float  # infinity norm of F(w)
    converged: bool
    iterations: int


def project_ball(w, bound):
    if bound is None:
        return w
    nrm = np.linalg.norm(w)
    if nrm > bound:
        return w * (bound / nrm)
    return w


def gauss_newton(F, J, w0, tol, max_iter=100, bound=None, polish=True) -> GNResult:
    """Drive ``F(w) -> 0`` from ``w0``.

    Each step is ``-pinv(J) F`` (SVD cutoff 1e-8 * sigma_max), halved up to
    20 times until the 2-norm of the residual decreases.  With ``bound``
    every iterate is projected onto the ball ``||w|| <= bound``.  Iteration
    stops when ``||F||_inf <= tol`` (then, with ``polish``, a few more
    strictly-decreasing steps are taken), after ``max_iter`` steps, or on a
    stall: 5 consecutive steps with relative decrease below 1e-12, or a step
    no halving can improve.
    """
    w = project_ball(np.array(w0, dtype=float), bound)
    try:
        r = np.asarray(F(w), dtype=float)
    except DomainError:
        return GNResult(w, float("inf"), False, 0)
    norm = float(np.linalg.norm(r))
    stalls = 0
    polishing = 0
    it = 0
    while it < max_iter:
        if np.max(np.abs(r), initial=0.0) <= tol:
            if not polish or polishing >= POLISH_STEPS or norm == 0.0:
                break
            polishing += 1
        it += 1
        try:
            Jw = np.atleast_2d(np.asarray(J(w), dtype=float))
            step = -np.linalg.pinv(Jw, rcond=PINV_RTOL) @ r
        except (DomainError, np.linalg.LinAlgError):
            break
        if not np.all(np.isfinite(step)) or not np.any(step):
            break
        lam = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = project_ball(w + lam * step, bound)
            try:
                rc = np.asarray(F(cand), dtype=float)
                nc = float(np.linalg.norm(rc))
            except DomainError:
                nc = float("inf")
            if nc < norm:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        decrease = (norm - nc) / norm
        w, r, norm = cand, rc, nc
        if polishing:
            continue
        stalls = stalls + 1 if decrease < STALL_RTOL else 0
        if stalls >= STALL_COUNT:
            break
    resid = float(np.max(np.abs(r), initial=0.0))
    return GNResult(w, resid, resid <= tol, it)


def multistart(F, J, starts, tol, max_iter=100, bound=None, polish=True) -> GNResult:
    """Run from each start in order; return the first success or the best failure."""
    best = None
    for s in starts:
        res = gauss_newton(F, J, s, tol, max_iter, bound, polish)
        if res.converged:
            return res
        if best is None or res.residual < best.residual:
            best = res
    return best
