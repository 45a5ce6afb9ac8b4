import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import orth
from scipy.signal import place_poles

from compstab.lintest import (
    eigenvalues, full_row_rank_test, hautus_test, rank_of_joint_jacobian, spectrum_minus, spectrum_plus,
)
from compstab.model import VectorFieldSpec, corpus, get_system


def test_spectrum_plus_examples():
    assert spectrum_plus(np.array([[0, 1], [-0.5, -2]])) == []
    assert spectrum_plus(np.array([[1.0]])) == [1]
    assert spectrum_plus(np.zeros((3, 3))) == [0, 0, 0]


def test_spectrum_order_and_multiplicity():
    A = np.array([[0, -2, 0], [2, 0, 0], [0, 0, 3.0]])
    sp = spectrum_plus(A)
    assert sp[0] == pytest.approx(3)
    assert [z.imag for z in sp[1:]] == pytest.approx([2, -2])
    rng = np.random.default_rng(5)
    for _ in range(50):
        A = rng.uniform(-2, 2, (3, 3))
        assert len(spectrum_plus(A)) + len(spectrum_minus(A)) == 3


def test_hautus_examples():
    v = hautus_test(np.array([[1.0]]), np.array([[0.0]]))
    assert not v.stabilizable
    assert v.checks[0].eigenvalue == 1 and v.checks[0].rank == 0

    assert hautus_test(np.array([[0, 1], [0, 0.0]]), np.array([[0], [1.0]])).stabilizable
    for n in (1, 2, 3):
        v = hautus_test(-np.eye(n), np.zeros((n, 1)))
        assert v.stabilizable and v.checks == []


def test_hautus_complex_pair():
    # rotation is controllable through one input; rank must be taken over C
    A = np.array([[0, 1], [-1, 0.0]])
    assert hautus_test(A, np.array([[0], [1.0]])).stabilizable
    assert not hautus_test(A, np.zeros((2, 1))).stabilizable


def test_marginal_eigenvalue_counts_as_unstable():
    assert not hautus_test(np.zeros((1, 1)), np.zeros((1, 1))).stabilizable


def test_full_row_rank_examples():
    assert full_row_rank_test(get_system("cubic_scalar")).full_row_rank
    assert full_row_rank_test(get_system("state_only")).full_row_rank
    v = full_row_rank_test(get_system("brockett_integrator"))
    assert v.rank == 2 and not v.full_row_rank


@pytest.mark.parametrize("sys", corpus(), ids=lambda s: s.name)
@pytest.mark.parametrize("c", [-3.0, 0.5, 7.0])
def test_rank_invariant_under_scaling(sys, c):
    scaled = VectorFieldSpec.from_strings(sys.name, sys.n, sys.m, [f"{c}*({e})" for e in sys.expressions()])
    assert full_row_rank_test(scaled).rank == full_row_rank_test(sys).rank


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_rank_matches_constructed(n, r, seed):
    r = min(r, n)
    rng = np.random.default_rng(seed)
    J = rng.standard_normal((n, r)) @ rng.standard_normal((r, n + 2))
    assert rank_of_joint_jacobian(J).rank == r


# ---------------------------------------------------------------- oracle
#
# Independent of the PBH rank test: stabilizable iff some K makes A + BK
# Hurwitz.  Random gain search finds K in easy cases; otherwise we split off
# the controllable subspace (Kalman decomposition), place poles there, and
# check the uncontrollable block's spectrum directly.


def _kalman_basis(A, B):
    n = A.shape[0]
    blocks, M = [], B
    for _ in range(n):
        blocks.append(M)
        M = A @ M
    C = np.hstack(blocks)
    if np.linalg.norm(C) < 1e-12:
        return np.zeros((n, 0))
    return orth(C, rcond=1e-9)


def _oracle_stabilizable(A, B, rng, draws=100_000):
    n, m = B.shape
    if np.max(np.linalg.eigvals(A).real) < 0:
        return True
    Ks = rng.uniform(-10, 10, (draws, m, n))
    # batched eigenvalues of A + B K
    M = A[None] + np.einsum("ij,kjl->kil", B, Ks)
    if np.any(np.max(np.linalg.eigvals(M).real, axis=1) < 0):
        return True
    Vc = _kalman_basis(A, B)
    k = Vc.shape[1]
    if k == 0:
        return False
    full = np.linalg.svd(Vc, full_matrices=True)[0]
    T = np.hstack([Vc, full[:, k:]])
    At = np.linalg.solve(T, A @ T)
    Bt = np.linalg.solve(T, B)
    Auu = At[k:, k:]
    if n - k and np.max(np.linalg.eigvals(Auu).real) >= -1e-9:
        return False
    poles = -1.0 - np.arange(k) * 0.5
    Kc = place_poles(At[:k, :k], Bt[:k], poles).gain_matrix
    K = np.zeros((m, n))
    K[:, :k] = -Kc
    Kx = K @ np.linalg.inv(T)
    return np.max(np.linalg.eigvals(A + B @ Kx).real) < 0


def _random_pairs(count, seed):
    rng = np.random.default_rng(seed)
    for i in range(count):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        A = rng.uniform(-2, 2, (n, n))
        B = rng.uniform(-2, 2, (n, m))
        kind = i % 4
        if kind == 1:
            B[:] = 0.0
        elif kind == 2 and n > 1:
            # decoupled unstable mode that B cannot reach
            A[-1, :-1] = 0.0
            A[:-1, -1] = rng.uniform(-2, 2, n - 1) * (rng.uniform() < 0.5)
            A[-1, -1] = rng.uniform(0.1, 2) if rng.uniform() < 0.5 else rng.uniform(-2, -0.1)
            B[-1] = 0.0
        elif kind == 3:
            B = B[:, :1] * 1e-3
        yield A, B


def hautus_oracle_agreement(count=200, seed=7, draws=20_000):
    """Compare against the oracle; returns (agreements, false positives, disagreements)."""
    rng = np.random.default_rng(seed + 1)
    agree = fp = 0
    bad = []
    for A, B in _random_pairs(count, seed):
        ours = hautus_test(A, B).stabilizable
        ref = _oracle_stabilizable(A, B, rng, draws=draws)
        if ours == ref:
            agree += 1
        else:
            bad.append((A, B, ours, ref))
            fp += int(ours and not ref)
    return agree, fp, bad


def test_hautus_matches_oracle():
    agree, fp, bad = hautus_oracle_agreement()
    assert fp == 0
    assert agree == 200, bad[:3]
