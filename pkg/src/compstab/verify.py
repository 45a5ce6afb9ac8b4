"""Closed-loop verification: integration, stability classification, spectra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import RK45, OdeSolution

from .errors import CompstabError, NonFiniteState, NumericError, StepSizeUnderflow
from .lintest import eigenvalues
from .model import VectorFieldSpec, jacobian_fd
from .section import write_csv
from .synth import ClosedLoop, FeedbackTable

SAMPLES = 200
DIVERGENCE_FACTOR = 10.0
DECAY_RATIO = 1e-4
R2_MIN = 0.99
SLOPE_SPREAD = 0.2
TAIL_DECAY = 0.9
LIPSCHITZ_FLAG = 1e6


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    truncated: bool = False
    reason: Optional[str] = None
    max_norm: float = 0.0

    def to_csv(self, path):
        n = self.states.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)]
        write_csv(path, header, (np.concatenate([[t], x]) for t, x in zip(self.times, self.states)))


def simulate(
    field,
    x0,
    t_final: float = 20.0,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
    samples: int = SAMPLES,
    stop_norm: Optional[float] = None,
) -> Trajectory:
    """Integrate xdot = field(x) with Dormand-Prince 5(4) and sample uniformly.

    Integration stops early (``truncated``) on a non-finite state or when
    ||x|| exceeds ``stop_norm``.  Raises StepSizeUnderflow when the step
    size collapses and NumericError when the field cannot be evaluated; the
    partial trajectory is attached to the exception as ``trajectory``.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    x0 = np.asarray(x0, dtype=float)

    def rhs(t, x):
        return np.asarray(field(x), dtype=float)

    solver = RK45(rhs, 0.0, x0, t_final, rtol=rel_tol, atol=abs_tol)
    ts = [0.0]
    interps = []
    max_norm = float(np.linalg.norm(x0))
    reason = None
    error = None
    while solver.status == "running":
        try:
            msg = solver.step()
        except CompstabError as exc:
            error = NumericError(f"field evaluation failed: {exc}")
            break
        if solver.status == "failed":
            error = StepSizeUnderflow(msg or "step size underflow")
            break
        if not np.all(np.isfinite(solver.y)):
            reason = "non-finite"
            break
        ts.append(solver.t)
        interps.append(solver.dense_output())
        max_norm = max(max_norm, float(np.linalg.norm(solver.y)))
        if stop_norm is not None and max_norm > stop_norm:
            reason = "escaped"
            break
    t_end = ts[-1]
    grid = np.linspace(0.0, t_final, samples)
    grid = grid[grid <= t_end]
    if interps:
        sol = OdeSolution(ts, interps)
        states = np.atleast_2d(sol(grid).T).reshape(len(grid), -1)
        states[0] = x0
        if t_end < t_final:
            grid = np.append(grid, t_end) if t_end > grid[-1] else grid
            if len(grid) > len(states):
                states = np.vstack([states, sol(t_end)])
    else:
        states = x0.reshape(1, -1)
        grid = np.array([0.0])
    traj = Trajectory(grid, states, truncated=(reason is not None or error is not None), reason=reason, max_norm=max_norm)
    if error is not None:
        error.trajectory = traj
        raise error
    if reason == "non-finite":
        traj.reason = str(NonFiniteState("state became non-finite"))
    return traj


@dataclass
class TrajectoryEvidence:
    x0: list
    final_ratio: float
    rate: float
    r2: float
    max_ratio: float
    status: str  # "completed", "escaped", or an error message

    def to_dict(self):
        return {
            "x0": self.x0,
            "final_ratio": self.final_ratio,
            "rate": self.rate,
            "r2": self.r2,
            "max_ratio": self.max_ratio,
            "status": self.status,
        }


@dataclass
class StabilityReport:
    classification: str  # exponential | asymptotic-only | diverged | inconclusive
    rate: float
    r2: float
    evidence: list = field(default_factory=list)
    t_final: float = 0.0
    radius: float = 0.0
    lipschitz_flag: Optional[bool] = None

    def to_dict(self):
        return {
            "classification": self.classification,
            "rate": self.rate,
            "r2": self.r2,
            "t_final": self.t_final,
            "radius": self.radius,
            "non_lipschitz_flag": self.lipschitz_flag,
            "evidence": [e.to_dict() for e in self.evidence],
        }


def _loglinear_fit(times, norms):
    keep = norms > 0
    t, y = times[keep], np.log(norms[keep])
    if t.size < 3:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(t, y, 1)
    ss_res = float(np.sum((y - (slope * t + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(r2)


def initial_states(n: int, radius: float, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        v = rng.standard_normal(n)
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            out.append(radius * v / nv)
    return np.array(out)


def classify_stability(
    field,
    radius: float,
    num_initial: int = 8,
    t_final: float = 20.0,
    seed: int = 42,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
    n: Optional[int] = None,
) -> StabilityReport:
    """Classify the origin of xdot = field(x) from seeded starts on the sphere ||x0|| = radius.

    * diverged: some trajectory exceeds 10 * radius;
    * exponential: every final ratio ||x(T)||/||x0|| <= 1e-4, and the
      log-norm regressions over [T/2, T] have negative slopes, R^2 >= 0.99,
      and slopes within 20% of each other;
    * asymptotic-only: every trajectory decays (final ratio <= 1e-4, or
      below 1 and still shrinking by 10% over the second half);
    * inconclusive otherwise.
    """
    if num_initial < 4:
        raise ValueError("num_initial must be >= 4")
    n = n if n is not None else field.n
    evidence = []
    tails = []
    stop = DIVERGENCE_FACTOR * radius
    for x0 in initial_states(n, radius, num_initial, seed):
        try:
            traj = simulate(field, x0, t_final, rel_tol, abs_tol, stop_norm=stop)
            status = traj.reason or "completed"
        except NumericError as exc:
            traj = getattr(exc, "trajectory", None)
            status = f"error: {exc}"
            if traj is None:
                evidence.append(TrajectoryEvidence(list(map(float, x0)), float("nan"), float("nan"), float("nan"), float("nan"), status))
                tails.append(None)
                continue
        norms = np.linalg.norm(traj.states, axis=1)
        r0 = float(np.linalg.norm(x0))
        completed = status == "completed"
        final_ratio = float(norms[-1] / r0) if completed else float("nan")
        tail = traj.times >= t_final / 2
        rate, r2 = _loglinear_fit(traj.times[tail], norms[tail]) if completed else (float("nan"), float("nan"))
        evidence.append(TrajectoryEvidence(list(map(float, x0)), final_ratio, rate, r2, traj.max_norm / r0, status))
        tails.append((float(np.interp(t_final / 2, traj.times, norms)), float(norms[-1])) if completed else None)

    done = [i for i, e in enumerate(evidence) if e.status == "completed"]
    rates = np.array([evidence[i].rate for i in done])
    r2s = np.array([evidence[i].r2 for i in done])
    rate = float(np.mean(rates)) if len(done) else float("nan")
    r2 = float(np.min(r2s)) if len(done) else float("nan")

    if any(e.max_ratio > DIVERGENCE_FACTOR for e in evidence if np.isfinite(e.max_ratio)):
        label = "diverged"
    elif not done:
        raise NumericError("no trajectory completed")
    else:
        ratios = np.array([evidence[i].final_ratio for i in done])
        decaying = all(
            evidence[i].final_ratio <= DECAY_RATIO
            or (evidence[i].final_ratio < 1.0 and tails[i][1] <= TAIL_DECAY * tails[i][0])
            for i in done
        )
        consistent = (
            np.all(rates < 0)
            and np.all(np.isfinite(rates))
            and np.max(np.abs(rates)) <= (1.0 + SLOPE_SPREAD) * np.min(np.abs(rates))
        )
        if len(done) == len(evidence) and np.all(ratios <= DECAY_RATIO) and rate < 0 and r2 >= R2_MIN and consistent:
            label = "exponential"
        elif decaying:
            label = "asymptotic-only"
        else:
            label = "inconclusive"
    return StabilityReport(label, rate, r2, evidence, float(t_final), float(radius))


def closed_loop_spectrum(sys: VectorFieldSpec, feedback: FeedbackTable, step: float = 1e-6) -> list[complex]:
    """Eigenvalues of the FD Jacobian of x -> f(x, u(x)) at the origin, sorted by (Re, Im) descending."""
    loop = ClosedLoop(sys, feedback, strict=False)
    J = jacobian_fd(loop, np.zeros(sys.n), step)
    lams = [complex(z) for z in eigenvalues(J)]
    return sorted(lams, key=lambda z: (z.real, z.imag), reverse=True)


def lipschitz_estimate(field, n: int, delta: float = 1e-3) -> float:
    """Largest FD Jacobian 2-norm of ``field`` over the origin and +-delta along each axis."""
    pts = [np.zeros(n)]
    for i in range(n):
        for s in (1.0, -1.0):
            p = np.zeros(n)
            p[i] = s * delta
            pts.append(p)
    return max(float(np.linalg.norm(jacobian_fd(field, p), 2)) for p in pts)


def non_lipschitz_flag(field, n: int) -> bool:
    return lipschitz_estimate(field, n) > LIPSCHITZ_FLAG
