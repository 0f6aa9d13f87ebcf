"""Procedural indoor worlds with drone kinematics and a raycast renderer.

Worlds are occupancy grids of 0.5 m cells: 0 is free, positive values are wall
texture ids. The drone flies at a fixed 1 m height, so motion is 2-D; frames
are rendered column-per-ray with a 90 degree FOV by DDA against the grid, and
targets are drawn as billboard quads with per-kind visual signatures.

Headings are quantized to a 2^-24 radian lattice on every update so spin
sequences invert bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .commands import FlightCommand
from .errors import DomainError, FormatError, StateError
from .rng import make_rng

CELL_SIZE = 0.5            # meters per grid cell
MOVE_DIST = 0.25           # meters per Move command
SPIN_DEG = 15.0            # degrees per Spin command
FRAME_SIZE = 64
FOV = math.pi / 2          # 90 degree horizontal field of view
EYE_HEIGHT = 1.0           # meters; constant flight height
WALL_TOP = 2.0             # meters
REACH_DIST = 0.5           # arrival cone radius
REACH_HALF_ANGLE = math.pi / 4
SWEEP_STEP = 0.05          # collision sweep sampling interval

_HEADING_Q = float(2 ** 24)
TWO_PI = round(2.0 * math.pi * _HEADING_Q) / _HEADING_Q
SPIN_RAD = round(math.radians(SPIN_DEG) * _HEADING_Q) / _HEADING_Q

LAYOUTS = ("corridor", "corner_L", "corner_T", "loop")
NUM_THEMES = 7

TARGET_KINDS = ("true_target", "fake_box", "fake_ulock", "fake_book", "fake_bottle")
TARGET_SIGNATURES = {kind: i + 1 for i, kind in enumerate(TARGET_KINDS)}


def quantize_heading(h: float) -> float:
    """Snap to the heading lattice and wrap into [0, TWO_PI)."""
    h = round(h * _HEADING_Q) / _HEADING_Q
    while h >= TWO_PI:
        h -= TWO_PI
    while h < 0.0:
        h += TWO_PI
    return h


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float
    height: float = EYE_HEIGHT  # informational; the world is 2-D


@dataclass(frozen=True)
class TargetSpec:
    kind: str
    x: float
    y: float

    @property
    def visual_signature(self) -> int:
        return TARGET_SIGNATURES[self.kind]


@dataclass(frozen=True)
class CollisionEvent:
    step_index: int
    pose_at_impact: Pose


@dataclass
class FloorPlan:
    cells: np.ndarray            # int8 (rows, cols); 0 free, >0 wall texture id
    theme: int
    targets: list[TargetSpec]
    spawn: Pose
    layout: str = ""
    seed: int = 0

    @property
    def true_target(self) -> TargetSpec:
        for t in self.targets:
            if t.kind == "true_target":
                return t
        raise StateError("floor plan has no true target")

    def cell_at(self, x: float, y: float) -> int:
        r = int(math.floor(y / CELL_SIZE))
        c = int(math.floor(x / CELL_SIZE))
        nr, nc = self.cells.shape
        if not (0 <= r < nr and 0 <= c < nc):
            return 1  # outside the grid counts as wall
        return int(self.cells[r, c])

    def is_free(self, x: float, y: float) -> bool:
        return self.cell_at(x, y) == 0


# ---------------------------------------------------------------------------
# themes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Theme:
    name: str
    wall: tuple
    wall_accent: tuple
    floor: tuple
    ceiling: tuple
    light: float


THEMES = (
    Theme("bright corridor", (0.82, 0.74, 0.58), (0.68, 0.58, 0.42), (0.45, 0.42, 0.38), (0.92, 0.92, 0.88), 1.00),
    Theme("cool corner hall", (0.58, 0.64, 0.74), (0.42, 0.48, 0.62), (0.35, 0.37, 0.42), (0.85, 0.88, 0.92), 0.95),
    Theme("brick passage", (0.70, 0.38, 0.30), (0.52, 0.26, 0.20), (0.40, 0.34, 0.30), (0.82, 0.78, 0.74), 0.90),
    Theme("narrow green hall", (0.52, 0.66, 0.48), (0.38, 0.52, 0.34), (0.32, 0.38, 0.30), (0.86, 0.90, 0.82), 0.92),
    Theme("office gray", (0.66, 0.66, 0.62), (0.50, 0.50, 0.48), (0.38, 0.38, 0.36), (0.90, 0.90, 0.90), 0.97),
    Theme("teal atrium", (0.42, 0.64, 0.66), (0.30, 0.48, 0.52), (0.34, 0.40, 0.42), (0.84, 0.92, 0.92), 0.93),
    Theme("dim glass hall", (0.30, 0.34, 0.46), (0.22, 0.26, 0.38), (0.20, 0.22, 0.28), (0.38, 0.42, 0.52), 0.45),
)
DIM_THEME_ID = 6

TARGET_COLORS = {
    # (base rgb, accent rgb, width m, height m)
    "true_target": ((0.58, 0.08, 0.10), (0.14, 0.04, 0.05), 0.40, 0.50),
    "fake_box": ((0.58, 0.40, 0.20), (0.72, 0.62, 0.40), 0.40, 0.40),
    "fake_ulock": ((0.58, 0.58, 0.62), (0.20, 0.20, 0.22), 0.30, 0.45),
    "fake_book": ((0.16, 0.26, 0.68), (0.88, 0.88, 0.88), 0.35, 0.28),
    "fake_bottle": ((0.20, 0.58, 0.30), (0.10, 0.32, 0.16), 0.16, 0.45),
}


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _paint_walls(cells: np.ndarray, rng: np.random.Generator) -> None:
    """Assign texture ids (1 base, 2 accent) to wall cells bordering free space."""
    nr, nc = cells.shape
    wall = cells > 0
    free = ~wall
    border = np.zeros_like(wall)
    border[1:, :] |= wall[1:, :] & free[:-1, :]
    border[:-1, :] |= wall[:-1, :] & free[1:, :]
    border[:, 1:] |= wall[:, 1:] & free[:, :-1]
    border[:, :-1] |= wall[:, :-1] & free[:, 1:]
    rr, cc = np.nonzero(border)
    accents = rng.random(rr.size) < 0.25
    stripes = ((rr + cc) % 5) == 0
    cells[rr, cc] = np.where(accents | stripes, 2, 1)


def _cell_center(r: int, c: int) -> tuple[float, float]:
    return (c + 0.5) * CELL_SIZE, (r + 0.5) * CELL_SIZE


def _place_fakes(
    cells: np.ndarray,
    rng: np.random.Generator,
    true_xy: tuple[float, float],
    spawn_xy: tuple[float, float],
) -> list[TargetSpec]:
    n_fakes = int(rng.integers(0, 4))
    if n_fakes == 0:
        return []
    kinds = list(TARGET_KINDS[1:])
    rng.shuffle(kinds)
    rows, cols = np.nonzero(cells == 0)
    candidates = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        x, y = _cell_center(r, c)
        if math.hypot(x - true_xy[0], y - true_xy[1]) < 3.0:
            continue
        if math.hypot(x - spawn_xy[0], y - spawn_xy[1]) < 1.5:
            continue
        candidates.append((r, c))
    fakes: list[TargetSpec] = []
    for kind in kinds[:n_fakes]:
        if not candidates:
            break
        idx = int(rng.integers(0, len(candidates)))
        r, c = candidates.pop(idx)
        x, y = _cell_center(r, c)
        # nudge toward the nearest wall so fakes sit beside the path, not on it
        if cells[r, c - 1] > 0:
            x -= 0.15
        elif cells[r, c + 1] > 0:
            x += 0.15
        elif cells[r - 1, c] > 0:
            y -= 0.15
        elif cells[r + 1, c] > 0:
            y += 0.15
        candidates = [
            (cr, cc) for cr, cc in candidates
            if math.hypot(*(np.subtract(_cell_center(cr, cc), (x, y)))) > 1.0
        ]
        fakes.append(TargetSpec(kind, x, y))
    return fakes


def _gen_corridor(rng: np.random.Generator):
    w = int(rng.integers(2, 5))
    length = int(rng.integers(14, 23))
    cells = np.ones((w + 2, length + 2), dtype=np.int8)
    cells[1 : 1 + w, 1 : 1 + length] = 0
    cy = (1 + w / 2.0) * CELL_SIZE
    spawn = Pose(1.0, cy, quantize_heading(0.0))
    target = TargetSpec("true_target", (length + 0.5) * CELL_SIZE, cy)
    return cells, spawn, target


def _gen_corner_l(rng: np.random.Generator):
    w = int(rng.integers(2, 4))
    la = int(rng.integers(8, 14))   # horizontal leg (cells before the junction)
    lb = int(rng.integers(8, 14))   # vertical leg above the junction
    rows = 1 + w + lb + 1
    cols = 1 + la + w + 1
    cells = np.ones((rows, cols), dtype=np.int8)
    cells[1 : 1 + w, 1 : 1 + la + w] = 0                 # leg A + junction box
    cells[1 : 1 + w + lb, 1 + la : 1 + la + w] = 0       # leg B going up
    cy = (1 + w / 2.0) * CELL_SIZE
    spawn = Pose(1.0, cy, quantize_heading(0.0))
    tx = (1 + la + w / 2.0) * CELL_SIZE
    ty = (w + lb + 0.5) * CELL_SIZE
    target = TargetSpec("true_target", tx, ty)
    if rng.random() < 0.5:  # mirror vertically for a right turn
        cells = cells[::-1].copy()
        h = rows * CELL_SIZE
        spawn = Pose(spawn.x, h - spawn.y, spawn.heading)
        target = TargetSpec("true_target", target.x, h - target.y)
    return cells, spawn, target


def _gen_corner_t(rng: np.random.Generator):
    w = int(rng.integers(2, 4))
    stem = int(rng.integers(8, 14))
    long_b = int(rng.integers(8, 13))
    short_b = int(rng.integers(3, max(4, long_b - 4)))
    rows = 1 + short_b + w + long_b + 1
    cols = 1 + stem + w + 1
    cells = np.ones((rows, cols), dtype=np.int8)
    r0 = 1 + short_b                                     # stem row band
    cells[r0 : r0 + w, 1 : 1 + stem + w] = 0             # stem + junction
    cells[1 : rows - 1, 1 + stem : 1 + stem + w] = 0     # full cross corridor
    cy = (r0 + w / 2.0) * CELL_SIZE
    spawn = Pose(1.0, cy, quantize_heading(0.0))
    tx = (1 + stem + w / 2.0) * CELL_SIZE
    ty = (rows - 1 - 0.5) * CELL_SIZE                    # end of the long branch
    target = TargetSpec("true_target", tx, ty)
    if rng.random() < 0.5:  # long branch below instead of above
        cells = cells[::-1].copy()
        h = rows * CELL_SIZE
        spawn = Pose(spawn.x, h - spawn.y, spawn.heading)
        target = TargetSpec("true_target", target.x, h - target.y)
    return cells, spawn, target


def _gen_loop(rng: np.random.Generator):
    w = int(rng.integers(2, 4))
    inner_h = int(rng.integers(6, 11))
    inner_w = int(rng.integers(6, 11))
    rows = 1 + w + inner_h + w + 1
    cols = 1 + w + inner_w + w + 1
    cells = np.ones((rows, cols), dtype=np.int8)
    cells[1 : rows - 1, 1 : cols - 1] = 0
    cells[1 + w : 1 + w + inner_h, 1 + w : 1 + w + inner_w] = 1
    cy = (1 + w / 2.0) * CELL_SIZE
    spawn = Pose(1.0, cy, quantize_heading(0.0))
    # target mid-way along the far (top) corridor segment
    tx = (1 + w + inner_w / 2.0) * CELL_SIZE
    ty = (rows - 1 - w / 2.0) * CELL_SIZE
    target = TargetSpec("true_target", tx, ty)
    if rng.random() < 0.5:  # mirror so half the rings circulate clockwise
        cells = cells[::-1].copy()
        h = rows * CELL_SIZE
        spawn = Pose(spawn.x, h - spawn.y, spawn.heading)
        target = TargetSpec("true_target", target.x, h - target.y)
    return cells, spawn, target


_GENERATORS = {
    "corridor": _gen_corridor,
    "corner_L": _gen_corner_l,
    "corner_T": _gen_corner_t,
    "loop": _gen_loop,
}


def generate_world(seed: int, layout: str = "corridor", theme_id: int = 0) -> FloorPlan:
    """Deterministically generate a connected world with one true target."""
    if layout not in LAYOUTS:
        raise DomainError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if not 0 <= theme_id < NUM_THEMES:
        raise DomainError(f"theme_id must be in 0..{NUM_THEMES - 1}, got {theme_id}")
    rng = make_rng([int(seed), LAYOUTS.index(layout), int(theme_id)])
    cells, spawn, true_target = _GENERATORS[layout](rng)
    fakes = _place_fakes(cells, rng, (true_target.x, true_target.y), (spawn.x, spawn.y))
    _paint_walls(cells, rng)
    return FloorPlan(
        cells=cells,
        theme=theme_id,
        targets=[true_target] + fakes,
        spawn=spawn,
        layout=layout,
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# kinematics
# ---------------------------------------------------------------------------

def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    while a <= -math.pi:
        a += 2 * math.pi
    while a > math.pi:
        a -= 2 * math.pi
    return a


def facing_target(
    plan: FloorPlan,
    pose: Pose,
    max_dist: float = REACH_DIST,
    half_angle: float = REACH_HALF_ANGLE,
) -> Optional[TargetSpec]:
    """Nearest target within max_dist that the pose faces within half_angle."""
    best = None
    best_d = float("inf")
    for t in plan.targets:
        dx, dy = t.x - pose.x, t.y - pose.y
        d = math.hypot(dx, dy)
        if d > max_dist or d >= best_d:
            continue
        if abs(wrap_angle(math.atan2(dy, dx) - pose.heading)) > half_angle:
            continue
        best, best_d = t, d
    return best


def step(
    plan: FloorPlan, pose: Pose, command: FlightCommand, step_index: int = 0
) -> tuple[Pose, Optional[CollisionEvent], Optional[TargetSpec]]:
    """Apply one motion command; sweep translations against walls."""
    if command is FlightCommand.STOP:
        raise DomainError("Stop is a landing decision, not a motion command")
    h = pose.heading
    if command is FlightCommand.SPIN_LEFT:
        new_pose = replace(pose, heading=quantize_heading(h + SPIN_RAD))
        return new_pose, None, facing_target(plan, new_pose)
    if command is FlightCommand.SPIN_RIGHT:
        new_pose = replace(pose, heading=quantize_heading(h - SPIN_RAD))
        return new_pose, None, facing_target(plan, new_pose)

    if command is FlightCommand.MOVE_FORWARD:
        ux, uy = math.cos(h), math.sin(h)
    elif command is FlightCommand.MOVE_RIGHT:
        ux, uy = math.sin(h), -math.cos(h)
    else:  # MOVE_LEFT
        ux, uy = -math.sin(h), math.cos(h)

    n_samples = max(1, int(math.ceil(MOVE_DIST / SWEEP_STEP)))
    for i in range(1, n_samples + 1):
        t = MOVE_DIST * i / n_samples
        sx, sy = pose.x + ux * t, pose.y + uy * t
        if not plan.is_free(sx, sy):
            impact = Pose(sx, sy, h)
            return pose, CollisionEvent(step_index, impact), None
    new_pose = Pose(pose.x + ux * MOVE_DIST, pose.y + uy * MOVE_DIST, h)
    return new_pose, None, facing_target(plan, new_pose)


class Episode:
    """Single-writer episode state: pose plus the collision terminal flag."""

    def __init__(self, plan: FloorPlan, pose: Optional[Pose] = None):
        self.plan = plan
        self.pose = pose if pose is not None else plan.spawn
        self.collided = False
        self.steps = 0

    def step(self, command: FlightCommand):
        if self.collided:
            raise StateError("episode already ended in a collision")
        new_pose, collision, reached = step(self.plan, self.pose, command, self.steps)
        self.pose = new_pose
        self.steps += 1
        if collision is not None:
            self.collided = True
        return new_pose, collision, reached


# ---------------------------------------------------------------------------
# raycasting
# ---------------------------------------------------------------------------

def _dda(cells: np.ndarray, px: float, py: float, dirx: np.ndarray, diry: np.ndarray):
    """Vectorized DDA for rays from one origin. Positions in cell units.

    Returns (perp_dist, tex, side, wall_u): perpendicular distance in cell
    units, the hit texture id, which axis was crossed (0=x, 1=y), and the
    fractional position along the wall face.
    """
    n = dirx.shape[0]
    nr, nc = cells.shape
    map_c = np.full(n, int(math.floor(px)), dtype=np.int64)
    map_r = np.full(n, int(math.floor(py)), dtype=np.int64)
    eps = 1e-30
    delta_x = np.abs(1.0 / np.where(np.abs(dirx) < eps, eps, dirx))
    delta_y = np.abs(1.0 / np.where(np.abs(diry) < eps, eps, diry))
    step_c = np.where(dirx < 0, -1, 1)
    step_r = np.where(diry < 0, -1, 1)
    side_x = np.where(dirx < 0, (px - map_c), (map_c + 1.0 - px)) * delta_x
    side_y = np.where(diry < 0, (py - map_r), (map_r + 1.0 - py)) * delta_y

    side = np.zeros(n, dtype=np.int8)
    tex = np.zeros(n, dtype=np.int8)
    active = np.ones(n, dtype=bool)
    for _ in range(2 * (nr + nc)):
        if not active.any():
            break
        go_x = active & (side_x < side_y)
        go_y = active & ~go_x
        side_x[go_x] += delta_x[go_x]
        map_c[go_x] += step_c[go_x]
        side[go_x] = 0
        side_y[go_y] += delta_y[go_y]
        map_r[go_y] += step_r[go_y]
        side[go_y] = 1
        inb = (map_r >= 0) & (map_r < nr) & (map_c >= 0) & (map_c < nc)
        val = np.where(inb, cells[np.clip(map_r, 0, nr - 1), np.clip(map_c, 0, nc - 1)], 1)
        hit = active & (val > 0)
        tex[hit] = val[hit]
        active &= ~hit

    perp = np.where(side == 0, side_x - delta_x, side_y - delta_y)
    hit_along = np.where(side == 0, py + perp * diry, px + perp * dirx)
    wall_u = hit_along - np.floor(hit_along)
    return perp, tex, side, wall_u


def cast_ray(plan: FloorPlan, x: float, y: float, angle: float) -> float:
    """Exact distance (meters) from (x, y) along angle to the first wall."""
    d = np.array([math.cos(angle)])
    perp, _, side, _ = _dda(plan.cells, x / CELL_SIZE, y / CELL_SIZE,
                            d, np.array([math.sin(angle)]))
    # perp here is the ray parameter t (dir is unit length), in cell units
    return float(perp[0]) * CELL_SIZE


def render(plan: FloorPlan, pose: Pose, width: int = FRAME_SIZE, height: int = FRAME_SIZE) -> np.ndarray:
    """First-person RGB frame, float32 in [0,1], shape (3, height, width)."""
    if not plan.is_free(pose.x, pose.y):
        raise StateError("cannot render from inside a wall")
    theme = THEMES[plan.theme]
    light = theme.light
    focal = (width / 2.0) / math.tan(FOV / 2.0)

    fx, fy = math.cos(pose.heading), math.sin(pose.heading)
    rx, ry = math.sin(pose.heading), -math.cos(pose.heading)
    xcam = (2.0 * (np.arange(width) + 0.5) / width - 1.0) * math.tan(FOV / 2.0)
    dirx = fx + rx * xcam
    diry = fy + ry * xcam

    perp_c, tex, side, wall_u = _dda(
        plan.cells, pose.x / CELL_SIZE, pose.y / CELL_SIZE, dirx, diry
    )
    perp = np.maximum(perp_c * CELL_SIZE, 1e-6)

    rows = np.arange(height, dtype=np.float64)[:, None]
    mid = height / 2.0
    top_row = mid + (EYE_HEIGHT - WALL_TOP) * focal / perp
    bot_row = mid + EYE_HEIGHT * focal / perp
    wall_mask = (rows >= top_row) & (rows <= bot_row)
    ceil_mask = rows < top_row
    floor_mask = ~wall_mask & ~ceil_mask

    base = np.array(theme.wall)
    accent = np.array(theme.wall_accent)
    wall_col = np.where((tex == 2)[:, None], accent, base)          # (W, 3)
    stripes = (np.floor(wall_u * 6.0).astype(int) % 2) == 0
    wall_col = wall_col * np.where(stripes, 1.0, 0.88)[:, None]
    wall_col = wall_col * np.where(side == 1, 1.0, 0.82)[:, None]   # x-face darker
    wall_shade = 1.0 / (1.0 + 0.10 * perp * perp)
    wall_rgb = wall_col * wall_shade[:, None] * light               # (W, 3)

    # floor/ceiling distance per row gives a simple depth gradient
    floor_d = EYE_HEIGHT * focal / np.maximum(rows - mid, 0.5)
    ceil_d = (WALL_TOP - EYE_HEIGHT) * focal / np.maximum(mid - rows, 0.5)
    floor_shade = 1.0 / (1.0 + 0.10 * floor_d * floor_d)
    ceil_shade = 1.0 / (1.0 + 0.10 * ceil_d * ceil_d)
    floor_rgb = np.array(theme.floor)[:, None, None] * floor_shade[None, :, :] * light
    ceil_rgb = np.array(theme.ceiling)[:, None, None] * ceil_shade[None, :, :] * light

    frame = np.empty((3, height, width), dtype=np.float64)
    for ch in range(3):
        frame[ch] = np.where(
            wall_mask,
            wall_rgb[:, ch][None, :],
            np.where(ceil_mask, ceil_rgb[ch], floor_rgb[ch]),
        )

    _draw_targets(frame, plan, pose, perp, focal, light, width, height)
    return np.clip(frame, 0.0, 1.0).astype(np.float32)


def _draw_targets(frame, plan, pose, wall_perp, focal, light, width, height):
    fx, fy = math.cos(pose.heading), math.sin(pose.heading)
    rx, ry = math.sin(pose.heading), -math.cos(pose.heading)
    mid = height / 2.0
    order = []
    for t in plan.targets:
        vx, vy = t.x - pose.x, t.y - pose.y
        depth = vx * fx + vy * fy
        if depth < 0.15:
            continue
        order.append((depth, t, vx * rx + vy * ry))
    order.sort(key=lambda item: -item[0])  # far to near

    for depth, t, lateral in order:
        base, accent, t_w, t_h = TARGET_COLORS[t.kind]
        col_center = (lateral / depth / math.tan(FOV / 2.0) + 1.0) * width / 2.0
        half_w = (t_w / 2.0) / depth * focal
        c0 = int(math.ceil(col_center - half_w))
        c1 = int(math.floor(col_center + half_w))
        r_top = mid + (EYE_HEIGHT - t_h) * focal / depth
        r_bot = mid + EYE_HEIGHT * focal / depth
        r0 = max(0, int(math.ceil(r_top)))
        r1 = min(height - 1, int(math.floor(r_bot)))
        if c1 < 0 or c0 >= width or r1 < r0:
            continue
        for c in range(max(0, c0), min(width - 1, c1) + 1):
            if depth >= wall_perp[c]:
                continue
            u = (c - (col_center - half_w)) / max(2 * half_w, 1e-6)
            vfrac = (np.arange(r0, r1 + 1) - r_top) / max(r_bot - r_top, 1e-6)
            col = _target_pattern(t.kind, u, vfrac, base, accent)
            keep = col[:, 0] >= 0
            rows_idx = np.arange(r0, r1 + 1)[keep]
            frame[:, rows_idx, c] = (col[keep] * light).T


def _target_pattern(kind, u, vfrac, base, accent):
    """Per-pixel color column for a billboard; rows with [0]<0 are cut out."""
    n = vfrac.shape[0]
    col = np.tile(np.asarray(base, dtype=np.float64), (n, 1))
    if kind == "true_target":
        if 0.18 <= u <= 0.30 or 0.70 <= u <= 0.82:
            col[:] = accent                       # shoulder straps
        col[vfrac < 0.15] = np.asarray(accent) * 1.4  # top flap
    elif kind == "fake_box":
        if 0.44 <= u <= 0.56:
            col[:] = accent                       # packing tape
    elif kind == "fake_ulock":
        inner = (0.30 <= u <= 0.70) & True
        if inner:
            col[(vfrac > 0.25) & (vfrac < 0.95)] = -1.0   # hollow of the U
        col[vfrac <= 0.25] = accent               # crossbar
    elif kind == "fake_book":
        col[(vfrac >= 0.40) & (vfrac <= 0.60)] = accent   # page band
    elif kind == "fake_bottle":
        col[vfrac <= 0.25] = accent               # cap
    return col


def add_sensor_noise(frame: np.ndarray, seed: int, sigma: float = 0.02) -> np.ndarray:
    """Additive Gaussian pixel noise, clamped to [0,1]; sigma=0 is identity."""
    if sigma == 0.0:
        return frame.copy()
    rng = make_rng(seed)
    noisy = frame + rng.normal(0.0, sigma, size=frame.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# CPWORLD v1 file format
# ---------------------------------------------------------------------------

_CELL_CHARS = "." + "123456789"


def dumps_world(plan: FloorPlan) -> str:
    nr, nc = plan.cells.shape
    lines = ["CPWORLD v1", f"{nc} {nr} {plan.theme} {plan.layout or 'custom'} {plan.seed}"]
    for r in range(nr):
        lines.append("".join(_CELL_CHARS[int(v)] for v in plan.cells[r]))
    for t in plan.targets:
        lines.append(f"T {t.kind} {t.x!r} {t.y!r}")
    s = plan.spawn
    lines.append(f"S {s.x!r} {s.y!r} {s.heading!r}")
    return "\n".join(lines) + "\n"


def loads_world(text: str) -> FloorPlan:
    lines = text.splitlines()
    if not lines or lines[0] != "CPWORLD v1":
        raise FormatError("not a CPWORLD v1 file")
    try:
        nc_s, nr_s, theme_s, layout, seed_s = lines[1].split()
        nc, nr, theme, seed = int(nc_s), int(nr_s), int(theme_s), int(seed_s)
    except (IndexError, ValueError) as e:
        raise FormatError(f"bad dimensions line: {e}") from None
    if len(lines) < 2 + nr:
        raise FormatError("truncated cell rows")
    cells = np.zeros((nr, nc), dtype=np.int8)
    for r in range(nr):
        row = lines[2 + r]
        if len(row) != nc:
            raise FormatError(f"cell row {r} has length {len(row)}, expected {nc}")
        for c, ch in enumerate(row):
            idx = _CELL_CHARS.find(ch)
            if idx < 0:
                raise FormatError(f"bad cell char {ch!r}")
            cells[r, c] = idx
    targets: list[TargetSpec] = []
    spawn = None
    for line in lines[2 + nr :]:
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "T":
            if len(parts) != 4 or parts[1] not in TARGET_KINDS:
                raise FormatError(f"bad target line {line!r}")
            targets.append(TargetSpec(parts[1], float(parts[2]), float(parts[3])))
        elif parts[0] == "S":
            if len(parts) != 4:
                raise FormatError(f"bad spawn line {line!r}")
            spawn = Pose(float(parts[1]), float(parts[2]), float(parts[3]))
        else:
            raise FormatError(f"unexpected line {line!r}")
    if spawn is None:
        raise FormatError("missing spawn line")
    if sum(1 for t in targets if t.kind == "true_target") != 1:
        raise FormatError("world must contain exactly one true target")
    return FloorPlan(cells=cells, theme=theme, targets=targets, spawn=spawn,
                     layout=layout, seed=seed)


def save_world(plan: FloorPlan, path) -> None:
    Path(path).write_text(dumps_world(plan))


def load_world(path) -> FloorPlan:
    return loads_world(Path(path).read_text())
