"""Confidence-gated autonomous flight loop and the trial/benchmark harness.

Each control step classifies the current frame. Low confidence hovers in
place (the next frame is the same pose with fresh sensor noise), a Stop
prediction lands, and anything else executes the predicted motion. A trial
succeeds only if the drone takes off, never collides, and lands via a
predicted Stop while facing the true target; every failure mode is a
recorded outcome, never an exception.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .commands import FlightCommand
from .errors import StateError
from .network import Prediction, predict
from .world import (
    FloorPlan,
    Pose,
    add_sensor_noise,
    facing_target,
    generate_world,
    render,
    step as world_step,
)

HOVER_STALL_LIMIT = 50
LAND_CONE_DIST = 1.25               # landing judgment radius; covers the
LAND_CONE_HALF_ANGLE = math.pi / 4  # expert's 1.0 m stop distance


class Phase(enum.Enum):
    INITIALIZING = "initializing"
    TAKING_OFF = "taking_off"
    FLYING = "flying"
    HOVERING = "hovering"
    LANDED = "landed"
    FAILED = "failed"


TERMINAL_PHASES = (Phase.LANDED, Phase.FAILED)


class ActionKind(enum.Enum):
    HOVER = "hover"
    EXECUTE = "execute"
    LAND = "land"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    command: Optional[FlightCommand]
    prediction: Prediction


@dataclass(frozen=True)
class ControllerState:
    phase: Phase = Phase.INITIALIZING
    step_count: int = 0
    hover_streak: int = 0


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    WRONG_TARGET = "wrong_target"
    TIMEOUT = "timeout"
    HOVER_STALL = "hover_stall"
    ABORTED = "aborted"


@dataclass
class TrialResult:
    outcome: Outcome
    steps: int
    trajectory: list[Pose] = field(default_factory=list)


def take_off(state: ControllerState) -> ControllerState:
    """Single Initializing -> Flying transition; the sim has no altitude."""
    if state.phase is not Phase.INITIALIZING:
        raise StateError(f"cannot take off from phase {state.phase.value}")
    return replace(state, phase=Phase.FLYING)


def _gate(state: ControllerState, p: Prediction, threshold: float) -> tuple[Action, ControllerState]:
    """The three Algorithm-1 branches applied to one prediction."""
    count = state.step_count + 1
    if p.confidence < threshold:
        return (Action(ActionKind.HOVER, None, p),
                ControllerState(Phase.HOVERING, count, state.hover_streak + 1))
    if p.command is FlightCommand.STOP:
        return (Action(ActionKind.LAND, FlightCommand.STOP, p),
                ControllerState(Phase.LANDED, count, 0))
    return (Action(ActionKind.EXECUTE, p.command, p),
            ControllerState(Phase.FLYING, count, 0))


def control_step(
    state: ControllerState,
    frame: np.ndarray,
    network,
    threshold: float,
) -> tuple[Action, ControllerState]:
    """One Algorithm-1 decision. Pure given its inputs."""
    if state.phase not in (Phase.FLYING, Phase.HOVERING):
        raise StateError(f"control_step in phase {state.phase.value}")
    return _gate(state, predict(network, frame), threshold)


@dataclass
class StepRecord:
    step: int
    pose: Pose
    command: Optional[str]
    confidence: float
    action: str
    source: str = "model"

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "step": self.step,
                "pose": {"x": self.pose.x, "y": self.pose.y, "heading": self.pose.heading},
                "command": self.command,
                "confidence": self.confidence,
                "action": self.action,
                "source": self.source,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


class TrialRunner:
    """Drives one trial step-by-step.

    The headless harness and the gateway's streamed sessions share this class
    so both produce identical trajectory logs. ``policy`` optionally replaces
    the network: a callable (frame, pose) -> Prediction, e.g. the expert
    oracle wrapped as a policy.
    """

    def __init__(
        self,
        plan: FloorPlan,
        network=None,
        threshold: float = 0.5,
        max_steps: int = 500,
        sensor_noise_seed: int = 0,
        policy: Optional[Callable[[np.ndarray, Pose], Prediction]] = None,
    ):
        if network is None and policy is None:
            raise StateError("TrialRunner needs a network or a policy")
        self.plan = plan
        self.network = network
        self.threshold = threshold
        self.max_steps = max_steps
        self.noise_seed = sensor_noise_seed
        self.pose = plan.spawn
        self.state = take_off(ControllerState())
        self.records: list[StepRecord] = []
        self.trajectory: list[Pose] = [plan.spawn]
        self.result: Optional[TrialResult] = None
        self.last_frame: Optional[np.ndarray] = None
        self.last_prediction: Optional[Prediction] = None
        self._policy = policy

    @property
    def done(self) -> bool:
        return self.result is not None

    def current_frame(self) -> np.ndarray:
        frame = render(self.plan, self.pose)
        return add_sensor_noise(frame, [self.noise_seed, self.state.step_count])

    def _predict(self, frame: np.ndarray) -> Prediction:
        if self._policy is not None:
            return self._policy(frame, self.pose)
        return predict(self.network, frame)

    def _finish(self, outcome: Outcome) -> None:
        self.result = TrialResult(outcome, self.state.step_count, list(self.trajectory))

    def advance(self, override: Optional[FlightCommand] = None,
                override_source: str = "human") -> StepRecord:
        """One control step; an override preempts the gate for this step."""
        if self.done:
            raise StateError("trial already finished")
        frame = self.current_frame()
        self.last_frame = frame
        step_no = self.state.step_count
        p = self._predict(frame)
        self.last_prediction = p

        if override is not None:
            count = step_no + 1
            if override is FlightCommand.STOP:
                action = Action(ActionKind.LAND, FlightCommand.STOP, p)
                self.state = ControllerState(Phase.LANDED, count, 0)
            else:
                action = Action(ActionKind.EXECUTE, override, p)
                self.state = ControllerState(Phase.FLYING, count, 0)
            source = override_source
        else:
            action, self.state = _gate(self.state, p, self.threshold)
            source = "model"

        record = StepRecord(
            step=step_no,
            pose=self.pose,
            command=None if action.command is None else action.command.label,
            confidence=action.prediction.confidence,
            action=action.kind.value,
            source=source,
        )
        self.records.append(record)

        if action.kind is ActionKind.LAND:
            nearest = facing_target(self.plan, self.pose, LAND_CONE_DIST, LAND_CONE_HALF_ANGLE)
            if nearest is not None and nearest.kind == "true_target":
                self._finish(Outcome.SUCCESS)
            else:
                self._finish(Outcome.WRONG_TARGET)
            return record

        if action.kind is ActionKind.EXECUTE:
            new_pose, collision, _ = world_step(self.plan, self.pose, action.command, step_no)
            self.pose = new_pose
            self.trajectory.append(new_pose)
            if collision is not None:
                self.state = ControllerState(Phase.FAILED, self.state.step_count, 0)
                self._finish(Outcome.COLLISION)
                return record
        # a hover leaves the pose untouched; the next frame gets fresh noise

        if self.state.hover_streak >= HOVER_STALL_LIMIT:
            self.state = ControllerState(Phase.FAILED, self.state.step_count, 0)
            self._finish(Outcome.HOVER_STALL)
        elif self.state.step_count >= self.max_steps:
            self.state = ControllerState(Phase.FAILED, self.state.step_count, 0)
            self._finish(Outcome.TIMEOUT)
        return record

    def abort(self) -> TrialResult:
        if not self.done:
            self.state = ControllerState(Phase.FAILED, self.state.step_count, 0)
            self._finish(Outcome.ABORTED)
        return self.result

    def log_lines(self) -> list[str]:
        return [r.to_json_line() for r in self.records]


def expert_policy(plan: FloorPlan, config=None) -> Callable[[np.ndarray, Pose], Prediction]:
    """Wrap the scripted expert as a fully confident policy for trials."""
    from .commands import NUM_COMMANDS
    from .expert import OracleConfig, expert_command

    cfg = config or OracleConfig()

    def policy(frame: np.ndarray, pose: Pose) -> Prediction:
        cmd = expert_command(plan, pose, cfg)
        dist = np.zeros(NUM_COMMANDS)
        dist[cmd] = 1.0
        return Prediction(command=cmd, confidence=1.0, distribution=dist)

    return policy


def run_trial(
    plan: FloorPlan,
    network=None,
    threshold: float = 0.5,
    max_steps: int = 500,
    sensor_noise_seed: int = 0,
    record_path=None,
    policy=None,
) -> TrialResult:
    runner = TrialRunner(plan, network, threshold, max_steps, sensor_noise_seed, policy)
    while not runner.done:
        runner.advance()
    if record_path is not None:
        with open(record_path, "w") as f:
            f.write("\n".join(runner.log_lines()) + "\n")
    return runner.result


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkSuite:
    name: str
    layout: str
    theme: int
    n_trials: int


@dataclass
class SuiteResult:
    suite: BenchmarkSuite
    successes: int
    outcomes: list[Outcome]

    @property
    def rate(self) -> str:
        return f"{self.successes}/{self.suite.n_trials}"


def run_benchmark(
    suites: list[BenchmarkSuite],
    network=None,
    threshold: float = 0.5,
    world_seed_base: int = 10_000,
    max_steps: int = 500,
    use_expert_policy: bool = False,
) -> list[SuiteResult]:
    """Run every suite with deterministically enumerated world/noise seeds."""
    if not suites:
        raise StateError("benchmark needs at least one suite")
    results = []
    for si, suite in enumerate(suites):
        outcomes = []
        for ti in range(suite.n_trials):
            wseed = world_seed_base + si * 1000 + ti
            plan = generate_world(wseed, suite.layout, suite.theme)
            policy = expert_policy(plan) if use_expert_policy else None
            res = run_trial(
                plan, network, threshold, max_steps,
                sensor_noise_seed=wseed, policy=policy,
            )
            outcomes.append(res.outcome)
        results.append(
            SuiteResult(suite, sum(o is Outcome.SUCCESS for o in outcomes), outcomes)
        )
    return results


def format_benchmark(results: list[SuiteResult]) -> str:
    rows = [("Test Environment", "Success/Number of Trials")]
    rows += [(r.suite.name, r.rate) for r in results]
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    lines = [f"{a.ljust(w0)}  {b.rjust(w1)}" for a, b in rows]
    lines.insert(1, "-" * (w0 + w1 + 2))
    return "\n".join(lines)
