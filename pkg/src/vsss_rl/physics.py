"""Fixed-timestep 2D simulation of a VSSS field.

Robots are differential-drive bodies collided as bounding circles; the ball
is a circle with exponential rolling friction.  All arithmetic goes through
``math`` on Python floats so a run is bit-reproducible.
"""
from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

BLUE = "blue"
YELLOW = "yellow"


class ContractError(ValueError):
    """Raised when a caller breaks an operation's precondition."""


@dataclass(frozen=True)
class Vec2:
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class WheelCommand:
    v_left: float = 0.0
    v_right: float = 0.0

    def clamped(self, limit: float) -> "WheelCommand":
        return WheelCommand(_clamp(self.v_left, limit), _clamp(self.v_right, limit))


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.005
    wheel_radius: float = 0.026
    axle_length: float = 0.075
    max_wheel_speed: float = 50.0
    motor_tau: float = 0.05
    ground_friction_robot: float = 30.0
    ground_friction_ball: float = 0.8
    restitution_wall: float = 0.75
    restitution_robot_ball: float = 0.5
    restitution_robot_robot: float = 0.0
    robot_half_size: float = 0.0375
    ball_radius: float = 0.02135
    robot_mass: float = 0.18
    ball_mass: float = 0.046

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractError("dt must be positive")
        for name in ("wheel_radius", "axle_length", "robot_half_size", "ball_radius",
                     "robot_mass", "ball_mass", "max_wheel_speed"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")
        for name in ("restitution_wall", "restitution_robot_ball", "restitution_robot_robot"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        if self.motor_tau < 0:
            raise ContractError("motor_tau must be >= 0")
        if self.ground_friction_robot < 0 or self.ground_friction_ball < 0:
            raise ContractError("friction coefficients must be >= 0")

    @property
    def robot_radius(self) -> float:
        return self.robot_half_size * math.sqrt(2.0)


@dataclass(frozen=True)
class FieldSpec:
    length: float = 1.50
    width: float = 1.30
    goal_width: float = 0.40
    goal_depth: float = 0.10

    def __post_init__(self):
        if min(self.length, self.width, self.goal_width, self.goal_depth) <= 0:
            raise ContractError("field dimensions must be positive")
        if not self.goal_width < self.width:
            raise ContractError("goal_width must be smaller than width")

    @property
    def half_length(self) -> float:
        return self.length / 2

    @property
    def half_width(self) -> float:
        return self.width / 2


@dataclass
class RobotState:
    """Mutable robot record.

    ``lin_vel`` is the world-frame velocity, i.e. the wheel-driven velocity
    along the heading plus ``push_vel``, the contact-induced component that
    decays under ground friction.
    """

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    ang_vel: float = 0.0
    wheel_left: float = 0.0
    wheel_right: float = 0.0
    cmd_left: float = 0.0
    cmd_right: float = 0.0
    push_x: float = 0.0
    push_y: float = 0.0

    @property
    def position(self) -> Vec2:
        return Vec2(self.x, self.y)

    @property
    def lin_vel(self) -> Vec2:
        return Vec2(self.vx, self.vy)

    @property
    def wheels_actual(self) -> WheelCommand:
        return WheelCommand(self.wheel_left, self.wheel_right)

    @property
    def wheels_commanded(self) -> WheelCommand:
        return WheelCommand(self.cmd_left, self.cmd_right)

    def copy(self) -> "RobotState":
        return replace(self)


@dataclass
class BallState:
    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0

    @property
    def position(self) -> Vec2:
        return Vec2(self.x, self.y)

    @property
    def velocity(self) -> Vec2:
        return Vec2(self.vx, self.vy)

    def copy(self) -> "BallState":
        return replace(self)


@dataclass
class WorldState:
    step: int = 0
    robots_blue: list = field(default_factory=list)
    robots_yellow: list = field(default_factory=list)
    ball: BallState = field(default_factory=BallState)

    @property
    def robots(self) -> list:
        """Blue robots followed by yellow robots; the order used for commands."""
        return self.robots_blue + self.robots_yellow

    def copy(self) -> "WorldState":
        return WorldState(
            self.step,
            [r.copy() for r in self.robots_blue],
            [r.copy() for r in self.robots_yellow],
            self.ball.copy(),
        )

    def to_bytes(self) -> bytes:
        """Canonical little-endian layout: step, team sizes, ball, robots."""
        parts = [struct.pack("<QII", self.step, len(self.robots_blue), len(self.robots_yellow))]
        b = self.ball
        parts.append(struct.pack("<4d", b.x, b.y, b.vx, b.vy))
        for r in self.robots:
            parts.append(struct.pack("<12d", *_robot_tuple(r)))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WorldState":
        world, used = cls.unpack_from(data, 0)
        if used != len(data):
            raise ValueError("trailing bytes after world state")
        return world

    @classmethod
    def unpack_from(cls, data: bytes, offset: int) -> tuple["WorldState", int]:
        step, nb, ny = struct.unpack_from("<QII", data, offset)
        offset += 16
        ball = BallState(*struct.unpack_from("<4d", data, offset))
        offset += 32
        robots = []
        for _ in range(nb + ny):
            robots.append(RobotState(*struct.unpack_from("<12d", data, offset)))
            offset += 96
        return cls(step, robots[:nb], robots[nb:], ball), offset


def _robot_tuple(r: RobotState) -> tuple:
    return tuple(getattr(r, f.name) for f in fields(RobotState))


def world_nbytes(n_robots: int) -> int:
    return 16 + 32 + 96 * n_robots


def _clamp(value: float, limit: float) -> float:
    if value > limit:
        return limit
    if value < -limit:
        return -limit
    return value


def wrap_angle(theta: float) -> float:
    """Map an angle into [-pi, pi); angles already in range are returned unchanged."""
    if -math.pi <= theta < math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    # fmod rounding can land exactly on +pi
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def diff_drive_kinematics(cmd: WheelCommand, params: SimParams) -> tuple[float, float]:
    """Forward map from wheel speeds (rad/s) to (v, omega)."""
    cmd = cmd.clamped(params.max_wheel_speed)
    r = params.wheel_radius
    v = r * (cmd.v_right + cmd.v_left) / 2.0
    omega = r * (cmd.v_right - cmd.v_left) / params.axle_length
    return v, omega


def motor_lag(actual: float, commanded: float, dt: float, tau: float) -> float:
    if tau == 0.0:
        return commanded
    alpha = dt / tau
    if alpha >= 1.0:
        return commanded
    return actual + alpha * (commanded - actual)


def apply_motor_dynamics(actual: WheelCommand, commanded: WheelCommand, dt: float,
                         tau: float) -> WheelCommand:
    """First-order lag toward ``commanded``; ``tau == 0`` passes straight through."""
    if not dt > 0 or tau < 0:
        raise ContractError("need dt > 0 and tau >= 0")
    return WheelCommand(
        motor_lag(actual.v_left, commanded.v_left, dt, tau),
        motor_lag(actual.v_right, commanded.v_right, dt, tau),
    )


def step_sim(world: WorldState, commands: Sequence[WheelCommand], params: SimParams,
             fld: FieldSpec) -> WorldState:
    """Advance one physics tick and return the new world; ``world`` is untouched."""
    out = world.copy()
    step_inplace(out, commands, params, fld)
    return out


def step_inplace(world: WorldState, commands: Sequence[WheelCommand], params: SimParams,
                 fld: FieldSpec) -> None:
    robots = world.robots
    if len(commands) != len(robots):
        raise ContractError(
            f"got {len(commands)} wheel commands for {len(robots)} robots")
    dt = params.dt
    tau = params.motor_tau
    r = params.wheel_radius
    axle = params.axle_length
    limit = params.max_wheel_speed
    push_decay = math.exp(-params.ground_friction_robot * dt)

    for robot, cmd in zip(robots, commands):
        cl = _clamp(float(cmd.v_left), limit)
        cr = _clamp(float(cmd.v_right), limit)
        robot.cmd_left = cl
        robot.cmd_right = cr
        wl = motor_lag(robot.wheel_left, cl, dt, tau)
        wr = motor_lag(robot.wheel_right, cr, dt, tau)
        robot.wheel_left = wl
        robot.wheel_right = wr
        v = r * (wr + wl) / 2.0
        omega = r * (wr - wl) / axle
        # midpoint heading keeps constant-curvature motion on its arc
        mid = robot.theta + 0.5 * omega * dt
        px = robot.push_x * push_decay
        py = robot.push_y * push_decay
        robot.push_x = px
        robot.push_y = py
        robot.x += (v * math.cos(mid) + px) * dt
        robot.y += (v * math.sin(mid) + py) * dt
        theta = wrap_angle(robot.theta + omega * dt)
        robot.theta = theta
        robot.ang_vel = omega
        robot.vx = v * math.cos(theta) + px
        robot.vy = v * math.sin(theta) + py

    ball = world.ball
    decay = math.exp(-params.ground_friction_ball * dt)
    ball.vx *= decay
    ball.vy *= decay
    ball.x += ball.vx * dt
    ball.y += ball.vy * dt

    resolve_collisions_inplace(world, params, fld)
    world.step += 1


# ---------------------------------------------------------------- collisions

@functools.lru_cache(maxsize=8)
def wall_segments(fld: FieldSpec) -> list[tuple[float, float, float, float]]:
    """Boundary segments of the playable region; goal mouths are left open."""
    hl, hw = fld.half_length, fld.half_width
    gw, gd = fld.goal_width / 2, fld.goal_depth
    segs = [
        (-hl, -hw, hl, -hw),
        (-hl, hw, hl, hw),
    ]
    for s in (-1.0, 1.0):
        x0 = s * hl
        xb = s * (hl + gd)
        segs += [
            (x0, -hw, x0, -gw),
            (x0, gw, x0, hw),
            (x0, -gw, xb, -gw),
            (xb, -gw, xb, gw),
            (xb, gw, x0, gw),
        ]
    return segs


def inside_playable(x: float, y: float, fld: FieldSpec, margin: float = 0.0) -> bool:
    hl, hw = fld.half_length, fld.half_width
    if abs(x) <= hl - margin and abs(y) <= hw - margin:
        return True
    gw = fld.goal_width / 2
    return hl - margin <= abs(x) <= hl + fld.goal_depth - margin and abs(y) <= gw - margin


def _clamp_into_playable(x: float, y: float, radius: float, fld: FieldSpec) -> tuple[float, float]:
    # safety net for tunnelling only; contacts are handled by the wall pass
    if inside_playable(x, y, fld):
        return x, y
    hl, hw = fld.half_length, fld.half_width
    gw = fld.goal_width / 2
    if abs(x) > hl and abs(y) < gw:
        limit = hl + fld.goal_depth - radius
        inner = gw - radius
        return max(-limit, min(limit, x)), max(-inner, min(inner, y))
    cx = max(-(hl - radius), min(hl - radius, x))
    cy = max(-(hw - radius), min(hw - radius, y))
    return cx, cy


def _closest_on_segment(px, py, seg):
    x0, y0, x1, y1 = seg
    dx, dy = x1 - x0, y1 - y0
    t = ((px - x0) * dx + (py - y0) * dy) / (dx * dx + dy * dy)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return x0 + t * dx, y0 + t * dy


def _wall_contact(x, y, radius, segs):
    """Deepest wall contact as (normal_x, normal_y, depth) or None."""
    best = None
    for seg in segs:
        cx, cy = _closest_on_segment(x, y, seg)
        dx, dy = x - cx, y - cy
        d2 = dx * dx + dy * dy
        if d2 < radius * radius:
            d = math.sqrt(d2)
            if d < 1e-12:
                continue
            depth = radius - d
            if best is None or depth > best[2]:
                best = (dx / d, dy / d, depth)
    return best


def _collide_walls(body, radius, restitution, segs, fld, vel_attr=("vx", "vy")) -> bool:
    if abs(body.x) < fld.half_length - radius and abs(body.y) < fld.half_width - radius:
        return False
    touched = False
    for _ in range(3):
        hit = _wall_contact(body.x, body.y, radius, segs)
        if hit is None:
            return touched
        touched = True
        nx, ny, depth = hit
        body.x += nx * depth
        body.y += ny * depth
        vx, vy = getattr(body, vel_attr[0]), getattr(body, vel_attr[1])
        vn = vx * nx + vy * ny
        if vn < 0.0:
            setattr(body, vel_attr[0], vx - (1.0 + restitution) * vn * nx)
            setattr(body, vel_attr[1], vy - (1.0 + restitution) * vn * ny)


def resolve_collisions(world: WorldState, params: SimParams, fld: FieldSpec) -> WorldState:
    out = world.copy()
    resolve_collisions_inplace(out, params, fld)
    return out


def _refresh_robot_velocity(robot: RobotState, params: SimParams) -> None:
    v = params.wheel_radius * (robot.wheel_right + robot.wheel_left) / 2.0
    robot.vx = v * math.cos(robot.theta) + robot.push_x
    robot.vy = v * math.sin(robot.theta) + robot.push_y


def resolve_collisions_inplace(world: WorldState, params: SimParams, fld: FieldSpec,
                               passes: int = 4) -> None:
    """Fixed-order contact resolution: walls, robot pairs, robot-ball.

    Several positional passes are run so stacked contacts settle; impulses
    are applied only while bodies approach, so repeated passes cannot add
    energy.
    """
    segs = wall_segments(fld)
    robots = world.robots
    ball = world.ball
    rr = params.robot_radius
    br = params.ball_radius
    inv_mr = 1.0 / params.robot_mass
    inv_mb = 1.0 / params.ball_mass

    for _ in range(passes):
        touched = _collide_walls(ball, br, params.restitution_wall, segs, fld)
        for robot in robots:
            # robots hit walls inelastically; only the contact part of the velocity reacts
            if _collide_walls(robot, rr, 0.0, segs, fld, ("push_x", "push_y")):
                _refresh_robot_velocity(robot, params)
                touched = True

        n = len(robots)
        contact = 2.0 * rr
        for i in range(n):
            a = robots[i]
            for j in range(i + 1, n):
                b = robots[j]
                dx, dy = b.x - a.x, b.y - a.y
                d2 = dx * dx + dy * dy
                if d2 >= contact * contact:
                    continue
                touched = True
                d = math.sqrt(d2)
                if d < 1e-12:
                    nx, ny, d = 1.0, 0.0, 0.0
                else:
                    nx, ny = dx / d, dy / d
                corr = 0.5 * (contact - d)
                a.x -= nx * corr
                a.y -= ny * corr
                b.x += nx * corr
                b.y += ny * corr
                _refresh_robot_velocity(a, params)
                _refresh_robot_velocity(b, params)
                vn = (b.vx - a.vx) * nx + (b.vy - a.vy) * ny
                if vn < 0.0:
                    j_imp = -(1.0 + params.restitution_robot_robot) * vn / (2.0 * inv_mr)
                    a.push_x -= j_imp * inv_mr * nx
                    a.push_y -= j_imp * inv_mr * ny
                    b.push_x += j_imp * inv_mr * nx
                    b.push_y += j_imp * inv_mr * ny

        contact = rr + br
        for robot in robots:
            dx, dy = ball.x - robot.x, ball.y - robot.y
            d2 = dx * dx + dy * dy
            if d2 >= contact * contact:
                continue
            touched = True
            d = math.sqrt(d2)
            if d < 1e-12:
                nx, ny, d = math.cos(robot.theta), math.sin(robot.theta), 0.0
            else:
                nx, ny = dx / d, dy / d
            pen = contact - d
            w = inv_mb + inv_mr
            ball.x += nx * pen * inv_mb / w
            ball.y += ny * pen * inv_mb / w
            robot.x -= nx * pen * inv_mr / w
            robot.y -= ny * pen * inv_mr / w
            _refresh_robot_velocity(robot, params)
            vn = (ball.vx - robot.vx) * nx + (ball.vy - robot.vy) * ny
            if vn < 0.0:
                j_imp = -(1.0 + params.restitution_robot_ball) * vn / w
                ball.vx += j_imp * inv_mb * nx
                ball.vy += j_imp * inv_mb * ny
                robot.push_x -= j_imp * inv_mr * nx
                robot.push_y -= j_imp * inv_mr * ny
                _refresh_robot_velocity(robot, params)
        if not touched:
            break

    ball.x, ball.y = _clamp_into_playable(ball.x, ball.y, br, fld)
    for robot in robots:
        robot.x, robot.y = _clamp_into_playable(robot.x, robot.y, rr, fld)


def detect_goal(world: WorldState, fld: FieldSpec) -> Optional[str]:
    """Team that has scored (ball inside the opposing goal), or None.

    Blue defends the left (negative x) goal and attacks the right one.
    """
    b = world.ball
    if abs(b.y) >= fld.goal_width / 2:
        return None
    if b.x < -fld.half_length:
        return YELLOW
    if b.x > fld.half_length:
        return BLUE
    return None


def kinetic_energy(world: WorldState, params: SimParams) -> float:
    """Translational plus spin energy in joules (robots as uniform squares)."""
    b = world.ball
    e = 0.5 * params.ball_mass * (b.vx * b.vx + b.vy * b.vy)
    inertia = params.robot_mass * (2 * params.robot_half_size) ** 2 / 6.0
    for r in world.robots:
        e += 0.5 * params.robot_mass * (r.vx * r.vx + r.vy * r.vy)
        e += 0.5 * inertia * r.ang_vel * r.ang_vel
    return e
