"""Linear stabilizability tests at the origin.

The Hautus (PBH) check decides local exponential stabilizability by C^1
stationary feedback; full row rank of [A | B] decides the same for
composition operators with C^1 stationary symbols.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .model import VectorFieldSpec, linearize

RE_TOL = 1e-9
RANK_RTOL = 1e-8


@dataclass
class HautusCheck:
    eigenvalue: complex
    rank: int
    required: int


@dataclass
class HautusVerdict:
    stabilizable: bool
    checks: list = field(default_factory=list)


@dataclass
class RankVerdict:
    rank: int
    full_row_rank: bool
    singular_values: list


def _svd_rank(M):
    try:
        s = np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    return int(np.sum(s >= RANK_RTOL * s[0])), s


def eigenvalues(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc


def _sorted_desc(lams):
    return sorted(lams, key=lambda z: (z.real, z.imag), reverse=True)


def spectrum_plus(A) -> list[complex]:
    """Eigenvalues with real part >= 0 (within 1e-9), with multiplicity."""
    lams = [complex(z) for z in eigenvalues(A) if z.real >= -RE_TOL]
    return _sorted_desc(lams)


def spectrum_minus(A) -> list[complex]:
    lams = [complex(z) for z in eigenvalues(A) if z.real < -RE_TOL]
    return _sorted_desc(lams)


def hautus_test(A, B) -> HautusVerdict:
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    checks = []
    for lam in spectrum_plus(A):
        # complex lambda: the rank is taken over C
        M = np.hstack([lam * np.eye(n) - A, B.astype(complex)])
        r, _ = _svd_rank(M)
        checks.append(HautusCheck(eigenvalue=lam, rank=r, required=n))
    return HautusVerdict(stabilizable=all(c.rank == n for c in checks), checks=checks)


def rank_of_joint_jacobian(J) -> RankVerdict:
    J = np.atleast_2d(np.asarray(J, dtype=float))
    r, s = _svd_rank(J)
    return RankVerdict(rank=r, full_row_rank=(r == J.shape[0]), singular_values=[float(v) for v in s])


def full_row_rank_test(sys: VectorFieldSpec) -> RankVerdict:
    return rank_of_joint_jacobian(linearize(sys).J)
