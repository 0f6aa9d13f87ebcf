"""Controller state machine, trial outcomes, and the benchmark harness."""

import numpy as np
import pytest

from corridorpilot import controller as ctl
from corridorpilot.commands import NUM_COMMANDS, FlightCommand
from corridorpilot.errors import StateError
from corridorpilot.network import Prediction
from corridorpilot.world import generate_world


class StubNet:
    """Network lookalike returning fixed logits for every frame."""

    input_shape = (3, 64, 64)
    class_names = tuple(FlightCommand)

    def __init__(self, command: FlightCommand, confidence: float):
        # choose logits so softmax max prob ~= confidence on six classes
        p = np.full(NUM_COMMANDS, (1 - confidence) / (NUM_COMMANDS - 1))
        p[command] = confidence
        self._logits = np.log(p)

    def forward(self, x):
        if x.ndim == 4:
            return np.tile(self._logits, (x.shape[0], 1)), []
        return self._logits.copy(), []


def flying_state():
    return ctl.take_off(ctl.ControllerState())


FRAME = np.zeros((3, 64, 64), dtype=np.float32)


# ---------------------------------------------------------------------------
# control_step: the three Algorithm-1 branches
# ---------------------------------------------------------------------------

def test_low_confidence_hovers():
    action, state = ctl.control_step(
        flying_state(), FRAME, StubNet(FlightCommand.MOVE_FORWARD, 0.30), 0.5
    )
    assert action.kind is ctl.ActionKind.HOVER
    assert state.phase is ctl.Phase.HOVERING
    assert state.hover_streak == 1


def test_confident_stop_lands():
    action, state = ctl.control_step(
        flying_state(), FRAME, StubNet(FlightCommand.STOP, 0.95), 0.5
    )
    assert action.kind is ctl.ActionKind.LAND
    assert state.phase is ctl.Phase.LANDED


def test_confident_motion_executes():
    action, state = ctl.control_step(
        flying_state(), FRAME, StubNet(FlightCommand.SPIN_RIGHT, 0.80), 0.5
    )
    assert action.kind is ctl.ActionKind.EXECUTE
    assert action.command is FlightCommand.SPIN_RIGHT
    assert state.phase is ctl.Phase.FLYING
    assert state.hover_streak == 0


def test_hover_streak_resets_on_action():
    net_low = StubNet(FlightCommand.MOVE_FORWARD, 0.30)
    net_high = StubNet(FlightCommand.MOVE_FORWARD, 0.90)
    state = flying_state()
    for _ in range(3):
        _, state = ctl.control_step(state, FRAME, net_low, 0.5)
    assert state.hover_streak == 3
    _, state = ctl.control_step(state, FRAME, net_high, 0.5)
    assert state.hover_streak == 0


def test_threshold_boundaries():
    # threshold 0 never hovers; threshold 1+eps always hovers
    low = StubNet(FlightCommand.MOVE_FORWARD, 0.17)
    action, _ = ctl.control_step(flying_state(), FRAME, low, 0.0)
    assert action.kind is not ctl.ActionKind.HOVER
    sure = StubNet(FlightCommand.MOVE_FORWARD, 0.999999)
    action, _ = ctl.control_step(flying_state(), FRAME, sure, 1.0 + 1e-9)
    assert action.kind is ctl.ActionKind.HOVER


def test_control_step_in_terminal_phase_is_state_error():
    landed = ctl.ControllerState(ctl.Phase.LANDED, 3, 0)
    with pytest.raises(StateError):
        ctl.control_step(landed, FRAME, StubNet(FlightCommand.STOP, 0.9), 0.5)
    failed = ctl.ControllerState(ctl.Phase.FAILED, 3, 0)
    with pytest.raises(StateError):
        ctl.control_step(failed, FRAME, StubNet(FlightCommand.STOP, 0.9), 0.5)


def test_take_off_only_from_initializing():
    state = ctl.take_off(ctl.ControllerState())
    assert state.phase is ctl.Phase.FLYING
    with pytest.raises(StateError):
        ctl.take_off(state)


# ---------------------------------------------------------------------------
# run_trial outcomes
# ---------------------------------------------------------------------------

def test_expert_policy_succeeds_on_every_layout():
    for seed, layout in enumerate(("corridor", "corner_L", "corner_T", "loop")):
        plan = generate_world(seed + 40, layout, seed % 7)
        res = ctl.run_trial(plan, policy=ctl.expert_policy(plan))
        assert res.outcome is ctl.Outcome.SUCCESS, (layout, res.outcome)


def test_always_stop_stub_never_succeeds():
    plan = generate_world(1, "corridor", 0)  # spawn far from any target
    res = ctl.run_trial(plan, network=StubNet(FlightCommand.STOP, 0.99))
    assert res.outcome is ctl.Outcome.WRONG_TARGET
    assert res.outcome is not ctl.Outcome.SUCCESS


def test_forever_hover_stalls():
    plan = generate_world(1, "corridor", 0)
    res = ctl.run_trial(plan, network=StubNet(FlightCommand.MOVE_FORWARD, 0.2))
    assert res.outcome is ctl.Outcome.HOVER_STALL
    assert res.steps == ctl.HOVER_STALL_LIMIT


def test_spinner_times_out():
    plan = generate_world(1, "corridor", 0)
    res = ctl.run_trial(plan, network=StubNet(FlightCommand.SPIN_LEFT, 0.9), max_steps=80)
    assert res.outcome is ctl.Outcome.TIMEOUT
    assert res.steps == 80


def test_collision_precludes_success_structurally():
    # drive straight into the end wall: collision must terminate the trial
    # immediately, so no later Stop can ever flip the outcome
    plan = generate_world(1, "corridor", 0)
    res = ctl.run_trial(plan, network=StubNet(FlightCommand.MOVE_FORWARD, 0.99))
    assert res.outcome is ctl.Outcome.COLLISION
    runner = ctl.TrialRunner(plan, network=StubNet(FlightCommand.MOVE_FORWARD, 0.99))
    while not runner.done:
        runner.advance()
    assert runner.state.phase is ctl.Phase.FAILED
    with pytest.raises(StateError):
        runner.advance()


def test_trial_is_deterministic():
    plan = generate_world(9, "corner_L", 3)
    net = StubNet(FlightCommand.SPIN_LEFT, 0.9)
    a = ctl.run_trial(plan, net, max_steps=40)
    b = ctl.run_trial(plan, net, max_steps=40)
    assert a.outcome == b.outcome and a.steps == b.steps
    assert a.trajectory == b.trajectory


def test_trajectory_log_lines_are_canonical():
    plan = generate_world(2, "corridor", 0)
    runner = ctl.TrialRunner(plan, policy=ctl.expert_policy(plan))
    while not runner.done:
        runner.advance()
    lines = runner.log_lines()
    assert len(lines) == runner.result.steps
    import json

    first = json.loads(lines[0])
    assert set(first) == {"step", "pose", "command", "confidence", "action", "source"}
    assert first["step"] == 0


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

TABLE2_SUITES = [
    ctl.BenchmarkSuite("Test Loc 1", "corridor", 0, 10),
    ctl.BenchmarkSuite("Test Loc 2", "corner_L", 1, 10),
    ctl.BenchmarkSuite("Test Loc 3", "corner_T", 2, 10),
    ctl.BenchmarkSuite("Test Loc 4", "loop", 3, 10),
    ctl.BenchmarkSuite("Test Loc 5 (dim)", "corridor", 6, 5),
]


def test_benchmark_denominators_and_oracle_rate():
    results = ctl.run_benchmark(TABLE2_SUITES, use_expert_policy=True)
    assert [r.suite.n_trials for r in results] == [10, 10, 10, 10, 5]
    for r in results:
        assert r.successes == r.suite.n_trials  # oracle flies perfectly
    text = ctl.format_benchmark(results)
    assert "Test Environment" in text and "10/10" in text and "5/5" in text


def test_benchmark_deterministic():
    suites = TABLE2_SUITES[:2]
    net = StubNet(FlightCommand.SPIN_LEFT, 0.9)
    a = ctl.run_benchmark(suites, net, max_steps=30)
    b = ctl.run_benchmark(suites, net, max_steps=30)
    assert [r.outcomes for r in a] == [r.outcomes for r in b]
