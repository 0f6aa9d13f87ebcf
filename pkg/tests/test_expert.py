"""Expert oracle: rule priorities, safety, termination, label shape."""

import math
from collections import Counter

import pytest

from corridorpilot.commands import FlightCommand
from corridorpilot.errors import DomainError
from corridorpilot.expert import (
    OracleConfig,
    expert_command,
    jittered_spawn,
    rollout_expert,
)
from corridorpilot.world import (
    CELL_SIZE,
    LAYOUTS,
    Pose,
    cast_ray,
    generate_world,
    quantize_heading,
)

from oracles import ray_march


def test_config_validation():
    with pytest.raises(DomainError):
        OracleConfig(stop_dist=0.4)  # must exceed the reach radius
    with pytest.raises(DomainError):
        OracleConfig(center_band=-0.1)


def test_straight_corridor_centered_is_forward():
    plan = generate_world(0, "corridor", 0)
    assert expert_command(plan, plan.spawn) is FlightCommand.MOVE_FORWARD


def test_target_ahead_is_stop():
    plan = generate_world(0, "corridor", 0)
    t = plan.true_target
    pose = Pose(t.x - 0.8, t.y, quantize_heading(0.0))
    assert expert_command(plan, pose) is FlightCommand.STOP


def test_wall_ahead_spins_toward_open_side():
    # forward clearance ~0.5 m with the corridor opening on the left:
    # verified against the ray-march oracle, then the rule order by hand.
    plan = generate_world(1, "corner_L", 0)
    # place the pose 0.5 m before the corner's end wall, mid-junction
    t = plan.true_target
    going_up = t.y > plan.spawn.y
    y = plan.spawn.y
    to_wall = cast_ray(plan, t.x, y, 0.0)
    pose = Pose(t.x + to_wall - 0.5, y, quantize_heading(0.0))
    # hand-check the geometry with the independent oracle
    fwd = ray_march(plan, pose.x, pose.y, pose.heading)
    assert fwd < 0.75
    side = math.pi / 2 if going_up else -math.pi / 2
    assert ray_march(plan, pose.x, pose.y, pose.heading + side) > 1.0
    expected = FlightCommand.SPIN_LEFT if going_up else FlightCommand.SPIN_RIGHT
    assert expert_command(plan, pose) is expected


def test_off_center_strafes_back():
    plan = generate_world(2, "corridor", 0)
    s = plan.spawn
    left = cast_ray(plan, s.x, s.y, s.heading + math.pi / 2)
    # hug the left wall: left clearance small, right large -> Move Right
    pose = Pose(s.x, s.y + left - 0.15, s.heading)
    assert expert_command(plan, pose) is FlightCommand.MOVE_RIGHT


def test_rollout_ends_with_stop_at_target():
    plan = generate_world(4, "corridor", 1)
    traj = rollout_expert(plan)
    assert traj[-1][1] is FlightCommand.STOP
    last_pose = traj[-1][2]
    t = plan.true_target
    assert math.hypot(t.x - last_pose.x, t.y - last_pose.y) <= 1.0


def test_jittered_starts_recover():
    # tilted/offset starts drift toward a wall and must strafe or spin back
    # within the first 5 commands; each observed recovery is checked against
    # the ray-march clearances with the rule order applied by hand.
    cfg = OracleConfig()
    plan = generate_world(6, "corridor", 6)
    recoveries = 0
    for seed in range(100):
        first5 = [(cmd, pose) for _, cmd, pose in rollout_expert(plan, jitter_seed=seed)[:5]]
        for cmd, pose in first5:
            if cmd is FlightCommand.MOVE_FORWARD or cmd is FlightCommand.STOP:
                continue
            recoveries += 1
            # clearances perpendicular to the corridor axis, per the rules
            quarter = math.pi / 2
            axis = math.floor(pose.heading / quarter + 0.5) * quarter
            left = ray_march(plan, pose.x, pose.y, axis + quarter)
            right = ray_march(plan, pose.x, pose.y, axis - quarter)
            offset = (min(right, cfg.center_cap) - min(left, cfg.center_cap)) / 2
            if cmd is FlightCommand.MOVE_RIGHT:
                assert offset > cfg.center_band - 0.01
            elif cmd is FlightCommand.MOVE_LEFT:
                assert -offset > cfg.center_band - 0.01
    assert recoveries >= 10, "jitter produced no early recovery demonstrations"
    # an unperturbed start needs no recovery at all
    clean5 = [cmd for _, cmd, _ in rollout_expert(plan)[:5]]
    assert all(c is FlightCommand.MOVE_FORWARD for c in clean5)


@pytest.mark.slow
def test_expert_sweep_is_safe_and_terminating():
    # 500 seeded rollouts across all layouts and themes: zero collisions,
    # all terminate in Stop (rollout_expert raises otherwise).
    count = 0
    seed = 0
    while count < 500:
        layout = LAYOUTS[count % len(LAYOUTS)]
        theme = (count // len(LAYOUTS)) % 7
        plan = generate_world(seed, layout, theme)
        traj = rollout_expert(plan, max_steps=500)
        assert traj[-1][1] is FlightCommand.STOP
        count += 1
        seed += 1


def test_corridor_labels_are_forward_dominated():
    counts = Counter()
    for seed in range(8):
        for _, cmd, _ in rollout_expert(generate_world(seed, "corridor", seed % 7)):
            counts[cmd] += 1
    assert counts.most_common(1)[0][0] is FlightCommand.MOVE_FORWARD


def test_corner_labels_are_turn_heavy():
    turning = {FlightCommand.MOVE_RIGHT, FlightCommand.MOVE_LEFT,
               FlightCommand.SPIN_RIGHT, FlightCommand.SPIN_LEFT}
    corridor_turns = corridor_total = 0
    corner_turns = corner_total = 0
    for seed in range(8):
        for _, cmd, _ in rollout_expert(generate_world(seed, "corridor", seed % 7)):
            corridor_total += 1
            corridor_turns += cmd in turning
        for _, cmd, _ in rollout_expert(generate_world(seed, "corner_L", seed % 7)):
            corner_total += 1
            corner_turns += cmd in turning
    assert corner_turns / corner_total > corridor_turns / corridor_total
