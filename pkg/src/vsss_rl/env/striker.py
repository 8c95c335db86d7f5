"""Deterministic recover / align / strike controller used as the opponent proxy.

Everything is computed in the attacker's frame (goal at +x), so the same
code drives either side.
"""
from __future__ import annotations

import math

from ..physics import BLUE, WorldState, wrap_angle
from .core import ActionContinuous, EnvConfig, mirrored

RECOVER = "recover"
ALIGN = "align"
STRIKE = "strike"

BEHIND_DIST = 0.09
LINE_TOL = 0.03
ALIGN_TOL = 0.45
HEADING_GAIN = 7.0


def _frame(world: WorldState, side: str, index: int):
    robot = (world.robots_blue if side == BLUE else world.robots_yellow)[index]
    rx, ry, th = robot.x, robot.y, robot.theta
    bx, by = world.ball.x, world.ball.y
    if side != BLUE:
        rx, ry, th = mirrored(rx, ry, th)
        bx, by = -bx, -by
    return rx, ry, th, bx, by


def _geometry(world, side, config, index):
    rx, ry, th, bx, by = _frame(world, side, index)
    fld = config.field
    gy = max(-fld.goal_width / 4, min(fld.goal_width / 4, by))
    gx = fld.half_length + fld.goal_depth / 2
    dx, dy = gx - bx, gy - by
    norm = math.hypot(dx, dy) or 1.0
    ux, uy = dx / norm, dy / norm
    along = (rx - bx) * ux + (ry - by) * uy
    lateral = -(rx - bx) * uy + (ry - by) * ux
    return rx, ry, th, bx, by, ux, uy, along, lateral


def striker_mode(world: WorldState, side: str, config: EnvConfig, index: int = 0) -> str:
    rx, ry, th, bx, by, ux, uy, along, lateral = _geometry(world, side, config, index)
    if along < 0.0 and abs(lateral) < LINE_TOL + 0.15 * (-along):
        err = wrap_angle(math.atan2(by - ry, bx - rx) - th)
        return STRIKE if abs(err) < ALIGN_TOL else ALIGN
    return RECOVER


def _goto(rx, ry, th, tx, ty, config: EnvConfig, slow_radius: float = 0.08) -> ActionContinuous:
    err = wrap_angle(math.atan2(ty - ry, tx - rx) - th)
    dist = math.hypot(tx - rx, ty - ry)
    omega = max(-config.omega_max, min(config.omega_max, HEADING_GAIN * err))
    v = config.v_max * max(0.0, math.cos(err)) ** 3 * min(1.0, dist / slow_radius)
    return ActionContinuous(v, omega)


def scripted_striker(world: WorldState, side: str, config: EnvConfig, index: int = 0) -> ActionContinuous:
    rx, ry, th, bx, by, ux, uy, along, lateral = _geometry(world, side, config, index)
    mode = striker_mode(world, side, config, index)
    if mode == STRIKE:
        return _goto(rx, ry, th, bx + 0.1 * ux, by + 0.1 * uy, config, slow_radius=1e-9)
    if mode == ALIGN:
        err = wrap_angle(math.atan2(by - ry, bx - rx) - th)
        return ActionContinuous(0.0, max(-config.omega_max, min(config.omega_max, HEADING_GAIN * err)))
    tx, ty = bx - BEHIND_DIST * ux, by - BEHIND_DIST * uy
    if along > -0.05 and abs(lateral) < 0.12:
        # swing round the ball on the side the robot already occupies
        s = 1.0 if lateral >= 0 else -1.0
        tx += s * 0.14 * -uy
        ty += s * 0.14 * ux
    fld = config.field
    lim_x = fld.half_length - 0.06
    lim_y = fld.half_width - 0.06
    tx = max(-lim_x, min(lim_x, tx))
    ty = max(-lim_y, min(lim_y, ty))
    return _goto(rx, ry, th, tx, ty, config)
