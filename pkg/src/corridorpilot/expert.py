"""Scripted expert pilot standing in for the human demonstrator.

The expert reads ground-truth world geometry (never pixels) so demonstration
labels are exactly consistent with world state. Commands follow a fixed
priority: stop at the target, avoid walls, hold the corridor center, turn at
corners, otherwise fly forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .commands import FlightCommand
from .errors import DomainError, StateError
from .world import (
    FloorPlan,
    Pose,
    cast_ray,
    quantize_heading,
    render,
    step,
    wrap_angle,
)


@dataclass(frozen=True)
class OracleConfig:
    wall_danger_dist: float = 0.75   # spin away when forward clearance drops below
    stop_dist: float = 1.0           # issue Stop within this range of the target
    center_band: float = 0.3         # tolerated offset from the corridor centerline
    corner_react_dist: float = 1.75  # start cornering when forward shrinks below
    corner_open_dist: float = 2.0    # a side counts as an open corridor beyond this
    center_cap: float = 2.0          # side clearances are capped for centering
    stop_half_angle: float = math.radians(30.0)

    def __post_init__(self):
        for name in ("wall_danger_dist", "stop_dist", "center_band",
                     "corner_react_dist", "corner_open_dist", "center_cap"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.stop_dist <= 0.5:
            raise DomainError("stop_dist must exceed the 0.5 m reach radius")


def _true_target_bearing(plan: FloorPlan, pose: Pose, config: OracleConfig) -> Optional[float]:
    """Signed bearing to the true target if it is in stop range with clear
    line of sight; None otherwise."""
    t = plan.true_target
    dx, dy = t.x - pose.x, t.y - pose.y
    d = math.hypot(dx, dy)
    if d > config.stop_dist:
        return None
    if cast_ray(plan, pose.x, pose.y, math.atan2(dy, dx)) < d - 0.05:
        return None
    return wrap_angle(math.atan2(dy, dx) - pose.heading)


def _spin_toward_best_axis(
    plan: FloorPlan, pose: Pose, escape_min: float = 0.0
) -> tuple[FlightCommand, float]:
    """Spin command toward the most open grid axis.

    Corridors are grid-aligned, so the four absolute axis clearances measure
    branch depth independently of the drone's exact heading; they depend on
    position only, which keeps the turn direction stable while spinning in
    place. Per-heading side rays would swing with the drone and can deadlock
    at junctions. The u-turn axis is only considered when every other axis
    has less than escape_min of room (a walled-in dead end); escape_min of 0
    never u-turns, which keeps approaches to target dead ends intact.
    Returns the command and the chosen axis clearance.
    """
    quarter = math.pi / 2
    clears = [cast_ray(plan, pose.x, pose.y, k * quarter) for k in range(4)]
    current = int(math.floor(pose.heading / quarter + 0.5)) % 4
    opposite = (current + 2) % 4
    candidates = [k for k in range(4) if k != opposite]
    if escape_min > 0.0 and max(clears[k] for k in candidates) < escape_min:
        candidates.append(opposite)
    best = max(candidates, key=lambda k: clears[k])
    diff = wrap_angle(best * quarter - pose.heading)
    cmd = FlightCommand.SPIN_LEFT if diff >= 0 else FlightCommand.SPIN_RIGHT
    return cmd, clears[best]


def expert_command(plan: FloorPlan, pose: Pose, config: OracleConfig = OracleConfig()) -> FlightCommand:
    """The demonstration command for the current pose. Deterministic."""
    if not plan.is_free(pose.x, pose.y):
        raise StateError("expert queried from inside a wall")

    bearing = _true_target_bearing(plan, pose, config)
    if bearing is not None:
        if abs(bearing) <= config.stop_half_angle:
            return FlightCommand.STOP
        # in stop range but not facing the target yet: turn to face it
        return FlightCommand.SPIN_LEFT if bearing > 0 else FlightCommand.SPIN_RIGHT

    h = pose.heading
    forward = cast_ray(plan, pose.x, pose.y, h)
    escape_min = 2 * config.wall_danger_dist

    if forward < config.wall_danger_dist:
        return _spin_toward_best_axis(plan, pose, escape_min)[0]

    # Centering measures the offset from the corridor centerline, so the side
    # rays run perpendicular to the nearest grid axis; rays perpendicular to
    # a tilted heading would dip into the walls ahead or behind. It applies
    # only between two corridor walls: a side clearance beyond the cap means
    # a junction mouth, and drifting into it is wrong.
    quarter = math.pi / 2
    axis = math.floor(h / quarter + 0.5) * quarter
    left = cast_ray(plan, pose.x, pose.y, axis + quarter)
    right = cast_ray(plan, pose.x, pose.y, axis - quarter)
    if left < config.center_cap and right < config.center_cap:
        if right - left > 2 * config.center_band:
            return FlightCommand.MOVE_RIGHT
        if left - right > 2 * config.center_band:
            return FlightCommand.MOVE_LEFT

    if forward < config.corner_react_dist:
        spin, best_clear = _spin_toward_best_axis(plan, pose)
        if best_clear > config.corner_open_dist and best_clear > forward:
            return spin

    return FlightCommand.MOVE_FORWARD


def jittered_spawn(plan: FloorPlan, seed: int,
                   lateral: float = 0.3, heading_deg: float = 20.0) -> Pose:
    """Perturbed spawn pose: uniform lateral offset and heading error.

    Resamples (deterministically) until the pose lands in free space.
    """
    from .rng import make_rng

    rng = make_rng([plan.seed, int(seed), 74])
    s = plan.spawn
    lx, ly = -math.sin(s.heading), math.cos(s.heading)
    for _ in range(32):
        off = rng.uniform(-lateral, lateral)
        dh = math.radians(rng.uniform(-heading_deg, heading_deg))
        pose = Pose(s.x + lx * off, s.y + ly * off, quantize_heading(s.heading + dh))
        if plan.is_free(pose.x, pose.y):
            return pose
    return s


def _stop_dwell_poses(plan: FloorPlan, pose: Pose, config: OracleConfig,
                      count: int) -> list[Pose]:
    """Extra hover poses at the target, as a pilot drifting before landing.

    Every pose still satisfies the stop rule, so the extra frames carry the
    same Stop label; this mirrors demonstration datasets where the target
    class is heavily represented by many near-target views.
    """
    from .rng import make_rng

    rng = make_rng([plan.seed, 20_250_101])
    poses = []
    attempts = 0
    while len(poses) < count and attempts < count * 20:
        attempts += 1
        cand = Pose(
            pose.x + rng.uniform(-0.15, 0.15),
            pose.y + rng.uniform(-0.15, 0.15),
            quantize_heading(pose.heading + math.radians(rng.uniform(-12, 12))),
        )
        if not plan.is_free(cand.x, cand.y):
            continue
        bearing = _true_target_bearing(plan, cand, config)
        if bearing is not None and abs(bearing) <= config.stop_half_angle:
            poses.append(cand)
    return poses


def rollout_expert(
    plan: FloorPlan,
    config: OracleConfig = OracleConfig(),
    max_steps: int = 500,
    jitter_seed: Optional[int] = None,
    stop_dwell: int = 0,
) -> list[tuple[np.ndarray, FlightCommand, Pose]]:
    """Fly the expert until Stop; returns [(frame, command, pose), ...].

    A collision or running out of steps is a hard failure: the oracle is
    required to be safe and terminating on every generated world.
    ``stop_dwell`` appends that many extra Stop-labeled frames rendered from
    slightly drifted hover poses at the target.
    """
    if max_steps < 1:
        raise DomainError("max_steps must be >= 1")
    pose = plan.spawn if jitter_seed is None else jittered_spawn(plan, jitter_seed)
    trajectory = []
    for i in range(max_steps):
        frame = render(plan, pose)
        cmd = expert_command(plan, pose, config)
        trajectory.append((frame, cmd, pose))
        if cmd is FlightCommand.STOP:
            for dwell in _stop_dwell_poses(plan, pose, config, stop_dwell):
                trajectory.append((render(plan, dwell), FlightCommand.STOP, dwell))
            return trajectory
        pose, collision, _ = step(plan, pose, cmd, i)
        if collision is not None:
            raise StateError(
                f"expert collided at step {i} in world seed={plan.seed} "
                f"layout={plan.layout!r}"
            )
    raise StateError(
        f"expert failed to reach the target within {max_steps} steps "
        f"(world seed={plan.seed} layout={plan.layout!r})"
    )
