import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compstab.errors import NoConvergence, NotSynthesizable, NumericError, SingularAtOrigin
from compstab.model import AutonomousField, jacobian_fd
from compstab.section import build_section
from compstab.synth import (
    ClosedLoop, SectionInverse, check_exponential_condition, feedback_from_section, invert_map,
    synthesize_composition_symbol, synthesize_feedback,
)
from conftest import ex2d_control


@pytest.fixture(scope="module")
def cubic_feedback(cubic):
    return synthesize_feedback(cubic, AutonomousField.negative_identity(1), 0.5, 41)


@pytest.fixture(scope="module")
def ex2d_feedback(ex2d, ex2d_target):
    return synthesize_feedback(ex2d, ex2d_target, 0.2, 15)


def test_cubic_feedback_closed_form(cubic_feedback):
    x = cubic_feedback.grid.points[:, 0]
    assert cubic_feedback.complete
    assert np.max(np.abs(cubic_feedback.values[:, 0] - np.cbrt(-2 * x))) <= 1e-6


def test_ex2d_feedback_closed_form(ex2d_feedback):
    pts = ex2d_feedback.grid.points
    expected = np.array([ex2d_control(p) for p in pts])
    assert np.max(np.abs(ex2d_feedback.values[:, 0] - expected)) <= 1e-6


@pytest.mark.parametrize("which", ["cubic", "ex2d"])
def test_feedback_residual_and_pins(which, request, cubic, ex2d):
    table = request.getfixturevalue(f"{which}_feedback")
    sys = cubic if which == "cubic" else ex2d
    assert np.all(table.values[0] == 0)
    for x, u in zip(table.grid.points, table.values):
        # the tabulated closed loop is the target itself
        assert np.max(np.abs(sys(x, u) - table.target(x))) <= table.tol


def test_state_only_not_synthesizable(state_only):
    with pytest.raises(NotSynthesizable) as exc:
        synthesize_feedback(state_only, AutonomousField.negative_identity(1), 0.5, 21)
    table = exc.value.table
    assert table.solved[0] and not np.any(table.solved[1:])
    assert len(exc.value.unsolved) == 20


def test_state_only_symbol(state_only):
    sym = synthesize_composition_symbol(state_only, AutonomousField.negative_identity(1), 0.5, 21)
    assert sym.complete
    assert np.max(sym.residuals) <= 1e-8
    assert np.max(np.abs(sym.values[:, 0] + sym.grid.points[:, 0])) <= 1e-10
    assert np.all(sym.values[0] == 0)


def test_cubic_symbol(cubic):
    sym = synthesize_composition_symbol(cubic, AutonomousField.negative_identity(1), 0.5, 21)
    assert sym.complete and np.max(sym.residuals) <= 1e-8


def test_brockett_symbol_fails_on_axis(brockett):
    with pytest.raises(NotSynthesizable) as exc:
        synthesize_composition_symbol(brockett, AutonomousField.negative_identity(3), 0.5, 9)
    bad = exc.value.table.grid.points[exc.value.unsolved]
    assert len(bad) > 0
    # g(x) = -x leaves the image exactly where the third component dominates
    assert np.all(bad[:, :2] == 0)


def test_brockett_feedback_fails(brockett):
    with pytest.raises(NotSynthesizable):
        synthesize_feedback(brockett, AutonomousField.negative_identity(3), 0.5, 5)


def test_target_must_vanish(cubic):
    with pytest.raises(ValueError):
        synthesize_feedback(cubic, AutonomousField.from_strings(["1 - x1"]), 0.5, 5)


def test_invert_examples():
    half = AutonomousField.from_strings(["-x1/2"])
    assert invert_map(half, [1.0])[0] == pytest.approx(-2, abs=1e-12)
    ident = AutonomousField.from_strings(["x1", "x2"])
    assert np.allclose(invert_map(ident, [0.3, -0.7]), [0.3, -0.7], atol=1e-14)
    with pytest.raises(SingularAtOrigin):
        invert_map(AutonomousField.from_strings(["x1^3"]), [0.1])


def test_invert_round_trip_target(ex2d_target):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        v = rng.standard_normal(2)
        x = v / np.linalg.norm(v) * 0.01 * rng.uniform() ** 0.5
        y = invert_map(ex2d_target, x)
        worst = max(worst, float(np.max(np.abs(ex2d_target(y) - x))))
    assert worst <= 1e-8


def test_invert_target_has_no_preimage_far_out(ex2d_target):
    # the first component of G is bounded below by -1/4, so targets beyond it are unreachable
    with pytest.raises(NoConvergence):
        invert_map(ex2d_target, [-0.3, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_invert_linear_round_trip(a, b):
    f = AutonomousField.from_strings(["2*x1 + x2", "-x1 + 3*x2"])
    y = invert_map(f, [a, b])
    assert np.max(np.abs(f(y) - [a, b])) <= 1e-12


def test_feedback_from_section_negative_identity(cubic):
    # alpha_1(y) = -y: closed loop alpha_1^{-1}(x) = -x, so x + u^3 = -x
    table = build_section(cubic, 0.5, 21, state_map=lambda y: -y)
    fb = feedback_from_section(cubic, table, 0.25, 21)
    x = fb.grid.points[:, 0]
    assert np.max(np.abs(fb.values[:, 0] - np.cbrt(-2 * x))) <= 1e-6


def test_feedback_from_half_section(cubic):
    # alpha_1(y) = -y/2: closed loop -2x, so u = cbrt(-3x)
    table = build_section(cubic, 0.5, 21, state_map=lambda y: -y / 2)
    fb = feedback_from_section(cubic, table, 0.2, 21)
    x = fb.grid.points[:, 0]
    assert np.max(np.abs(fb.values[:, 0] - np.cbrt(-3 * x))) <= 1e-6


@pytest.mark.parametrize("scale", [1.0, 0.5])
def test_feedback_from_section_agrees_cubic(cubic, scale):
    table = build_section(cubic, 0.5, 21, state_map=lambda y: -scale * y)
    fb = feedback_from_section(cubic, table, 0.2, 21)
    G = AutonomousField.from_strings([f"-{1 / scale!r}*x1"])
    direct = synthesize_feedback(cubic, G, 0.2, 21)
    assert np.max(np.abs(fb.values - direct.values)) <= 1e-5


def test_feedback_from_section_agrees_ex2d(ex2d, ex2d_target):
    # a section whose state part is G^{-1}, so its closed loop is G again.
    # G is only locally invertible (its first component stays above about
    # -0.0147 when the second is near 0), hence the small boxes.  The cube-root
    # control is much larger than the box, so the default bound is too tight.
    table = build_section(ex2d, 0.005, 9, bound=1.0, state_map=lambda y: invert_map(ex2d_target, y))
    fb = feedback_from_section(ex2d, table, 0.002, 9)
    direct = synthesize_feedback(ex2d, ex2d_target, 0.002, 9, bound=1.0)
    assert fb.complete and direct.complete
    assert np.max(np.abs(fb.values - direct.values)) <= 1e-5


def test_identity_section_gives_identity_loop(state_only):
    table = build_section(state_only, 0.5, 11)
    inv = SectionInverse(table)
    for x in (0.1, -0.2, 0.3):
        assert inv([x])[0] == pytest.approx(x, abs=1e-10)
    fb = feedback_from_section(state_only, table, 0.25, 11)
    assert np.max(np.abs(fb.residuals)) <= 1e-8


def test_singular_state_part(cubic):
    table = build_section(cubic, 0.5, 11, state_map=lambda y: 0 * y)
    with pytest.raises(SingularAtOrigin):
        feedback_from_section(cubic, table, 0.25, 11)


def test_exponential_condition():
    A = np.array([[0, 1], [-0.5, -2.0]])
    assert check_exponential_condition(np.linalg.inv(A))
    assert check_exponential_condition([[-1.0]])
    assert not check_exponential_condition([[1.0]])
    with pytest.raises(SingularAtOrigin):
        check_exponential_condition([[0.0]])


def test_closed_loop_matches_target(ex2d, ex2d_feedback, ex2d_target):
    loop = ClosedLoop(ex2d, ex2d_feedback)
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.uniform(-0.15, 0.15, 2)
        assert np.max(np.abs(loop(x) - ex2d_target(x))) <= 1e-8 * max(1e-3, np.max(np.abs(x)))
        assert loop.control(x)[0] == pytest.approx(ex2d_control(x), abs=1e-7)


def test_closed_loop_jacobian(ex2d, ex2d_feedback):
    J = jacobian_fd(ClosedLoop(ex2d, ex2d_feedback), np.zeros(2))
    assert np.max(np.abs(J - np.array([[0, 1], [-0.5, -2]]))) <= 1e-5


def test_strict_closed_loop_raises(state_only):
    try:
        synthesize_feedback(state_only, AutonomousField.negative_identity(1), 0.5, 5)
    except NotSynthesizable as exc:
        table = exc.table
    loop = ClosedLoop(state_only, table)
    with pytest.raises(NumericError):
        loop([0.1])


def test_csv_headers(tmp_path, cubic_feedback, state_only):
    p = tmp_path / "f.csv"
    cubic_feedback.to_csv(p)
    assert p.read_text().splitlines()[0] == "x1,u1,residual"
    sym = synthesize_composition_symbol(state_only, AutonomousField.negative_identity(1), 0.5, 5)
    sym.to_csv(p)
    assert p.read_text().splitlines()[0] == "x1,hx1,hu1,residual"
