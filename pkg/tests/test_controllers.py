import pytest
from hypothesis import given
from hypothesis import strategies as st

from sponge.controllers import (
    BroadcastSignal,
    ControllerMode,
    ControllerState,
    SignalKind,
    pi_update,
    proportional_update,
)
from sponge.targets import TargetTrajectory, Window

W = Window(0, 0, 250, 1.0)
TOTAL = 40.0


def sponge(kp=1 / TOTAL, tracking="total"):
    return ControllerState(ControllerMode.SPONGE, TargetTrajectory(W, TOTAL), kp, tracking=tracking)


def exact(kp=1 / TOTAL, ki=0.0, tracking="total"):
    return ControllerState(ControllerMode.EXACT, TargetTrajectory(W, TOTAL), kp, ki, tracking=tracking)


class TestProportional:
    def test_met_is_free(self):
        assert proportional_update(sponge(), TOTAL, 10).kind is SignalKind.FREE
        assert proportional_update(sponge(), TOTAL + 1, 10).kind is SignalKind.FREE

    def test_saturation(self):
        assert proportional_update(sponge(), 0.0, 0).p == 1.0

    def test_half_gap(self):
        assert proportional_update(sponge(), 0.5 * TOTAL, 5).p == 0.5

    @given(st.floats(0, 2 * TOTAL), st.floats(0, 2 * TOTAL))
    def test_monotone_in_gap(self, a1, a2):
        lo, hi = sorted((a1, a2))
        # less achieved means a larger gap
        p_lo = proportional_update(sponge(kp=3 / TOTAL), hi, 0).effective_p
        p_hi = proportional_update(sponge(kp=3 / TOTAL), lo, 0).effective_p
        if hi < TOTAL:
            assert p_hi >= p_lo

    @given(st.floats(-1e3, 1e3), st.integers(0, 249), st.sampled_from(["total", "trajectory"]))
    def test_output_range(self, achieved, tick, tracking):
        s = proportional_update(sponge(kp=5 / TOTAL, tracking=tracking), achieved, tick)
        assert 0.0 <= s.effective_p <= 1.0

    def test_trajectory_free_when_ahead(self):
        ctrl = sponge(tracking="trajectory")
        ref = ctrl.reference.cumulative_at_tick(100)
        assert proportional_update(ctrl, ref, 100).kind is SignalKind.FREE
        assert proportional_update(ctrl, ref - 1.0, 100).kind is SignalKind.MODE_PROBABILITY


class TestPI:
    def test_cutoff(self):
        assert pi_update(exact(), TOTAL, 10, 1.0) == BroadcastSignal.probability(0.0, 10)

    def test_zero_reference_at_window_start(self):
        assert pi_update(exact(tracking="trajectory"), 0.0, 0, 1.0).p == 0.0

    def test_persistent_gap_saturates(self):
        ctrl = exact(kp=0.1 / TOTAL, ki=0.01 / TOTAL)
        ps = [pi_update(ctrl, 0.0, t, 1.0).p for t in range(200)]
        assert all(a <= b for a, b in zip(ps, ps[1:]))
        assert ps[-1] == 1.0

    def test_anti_windup(self):
        ctrl = exact(kp=2 / TOTAL, ki=0.5 / TOTAL)
        last = None
        for t in range(100):
            s = pi_update(ctrl, 1.0, t, 1.0)
            if s.p == 1.0 and last is not None:
                assert ctrl.integral_error <= last
            last = ctrl.integral_error
        assert ctrl.integral_error < TOTAL * 5  # stays bounded while saturated

    @given(st.lists(st.floats(0, 2 * TOTAL), min_size=1, max_size=50), st.sampled_from(["total", "trajectory"]))
    def test_output_range(self, achieved_seq, tracking):
        ctrl = exact(kp=3 / TOTAL, ki=0.1 / TOTAL, tracking=tracking)
        for t, a in enumerate(sorted(achieved_seq)):
            assert 0.0 <= pi_update(ctrl, a, t, 1.0).p <= 1.0

    def test_for_window_scales_gains(self):
        ctrl = ControllerState.for_window(ControllerMode.EXACT, TargetTrajectory(W, 10.0), 20.0, 0.8)
        assert ctrl.kp == pytest.approx(2.0) and ctrl.ki == pytest.approx(0.08)
        zero = ControllerState.for_window(ControllerMode.EXACT, TargetTrajectory(W, 0.0))
        assert zero.kp == 0.0
        assert pi_update(zero, 0.0, 0, 1.0).p == 0.0
        assert proportional_update(ControllerState.for_window(ControllerMode.SPONGE, TargetTrajectory(W, 0.0)),
                                   0.0, 0).kind is SignalKind.FREE


def test_signal_validation():
    with pytest.raises(ValueError):
        BroadcastSignal.probability(1.5, 0)
    assert BroadcastSignal.free(0).effective_p == 0.5
    assert BroadcastSignal.congestion(0).effective_p is None


def test_offset_keeps_request_away_from_zero():
    ctrl = ControllerState(ControllerMode.SPONGE, TargetTrajectory(W, TOTAL), 1 / TOTAL, p_min=0.02)
    assert proportional_update(ctrl, TOTAL - 1e-9, 0).p >= 0.02
    assert proportional_update(ctrl, TOTAL, 0).kind is SignalKind.FREE
    assert proportional_update(ctrl, 0.0, 0).p == 1.0
    with pytest.raises(ValueError):
        ControllerState(ControllerMode.SPONGE, TargetTrajectory(W, TOTAL), 1.0, p_min=1.5)
