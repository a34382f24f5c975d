"""Pure-Python rollout kernel.

Reference arithmetic for the bounce-to-cup dynamics. ``_kernel.pyx`` mirrors
every expression here in the same order so the compiled and fallback paths
produce bit-identical trajectories.

Task rows are packed as ``(cup_left_x, cup_right_x, cup_floor_y,
cup_wall_height, bank_shot, launch_x, launch_y)``.
"""
from math import sqrt

import numpy as np

GRAVITY = 9.81
DT = 1.0 / 240.0
RADIUS = 0.1
REST_SPEED = 0.05
REST_STEPS = 10
# normal speeds below this are resolved as resting contact (no rebound)
BOUNCE_SPEED = 0.1
# fraction of the rim energy barrier below which a ball in the cup is trapped
TRAP_MARGIN = 0.9

BACKEND = "python"


def resolve(vx, vy, nx, ny, mu, e):
    vn = vx * nx + vy * ny
    if vn >= 0.0:
        return vx, vy
    tx = vx - vn * nx
    ty = vy - vn * ny
    vt = sqrt(tx * tx + ty * ty)
    jt = mu * (1.0 + e) * (-vn)
    if vt > 0.0 and jt < vt:
        scale = (vt - jt) / vt
    else:
        scale = 0.0
    vn_new = -e * vn
    return vn_new * nx + tx * scale, vn_new * ny + ty * scale


def _wall(x, y, vx, vy, wx, fy, h, mu, e):
    cy = y
    if cy < fy:
        cy = fy
    elif cy > fy + h:
        cy = fy + h
    dx = x - wx
    dy = y - cy
    d2 = dx * dx + dy * dy
    if d2 >= RADIUS * RADIUS:
        return x, y, vx, vy
    d = sqrt(d2)
    if d > 0.0:
        nx = dx / d
        ny = dy / d
    else:
        nx = -1.0 if vx > 0.0 else 1.0
        ny = 0.0
    vn = vx * nx + vy * ny
    push = RADIUS
    if vn < 0.0:
        ee = e if -vn >= BOUNCE_SPEED else 0.0
        vx, vy = resolve(vx, vy, nx, ny, mu, ee)
        push = RADIUS + ee * (RADIUS - d)
    return wx + nx * push, cy + ny * push, vx, vy


def step(x, y, vx, vy, mu, e, c, L, R, fy, h, dt):
    """Advance one semi-implicit Euler step; returns ``(x, y, vx, vy, floor)``."""
    vx = vx + dt * (-c * vx)
    vy = vy + dt * (-GRAVITY - c * vy)
    x = x + dt * vx
    y = y + dt * vy
    floor = False
    depth = fy + RADIUS - y
    if depth > 0.0:
        floor = True
        if vy < 0.0:
            ee = e if -vy >= BOUNCE_SPEED else 0.0
            vx, vy = resolve(vx, vy, 0.0, 1.0, mu, ee)
            y = fy + RADIUS + ee * depth
        else:
            y = fy + RADIUS
    if h > 0.0:
        x, y, vx, vy = _wall(x, y, vx, vy, L, fy, h, mu, e)
        x, y, vx, vy = _wall(x, y, vx, vy, R, fy, h, mu, e)
    return x, y, vx, vy, floor


def _rollout(vx0, vy0, mu, e, c, task, horizon, states):
    L, R, fy, h, bank, x, y = (float(v) for v in task)
    vx = vx0
    vy = vy0
    if states is not None:
        states[0, 0] = x
        states[0, 1] = y
        states[0, 2] = vx
        states[0, 3] = vy
    barrier = TRAP_MARGIN * GRAVITY * (h + RADIUS)
    count = 0
    grounded = False
    reward = 0
    steps = 0
    inside = False
    while steps < horizon:
        x, y, vx, vy, floor = step(x, y, vx, vy, mu, e, c, L, R, fy, h, DT)
        steps += 1
        if states is not None:
            states[steps, 0] = x
            states[steps, 1] = y
            states[steps, 2] = vx
            states[steps, 3] = vy
        if floor and vx * vx + vy * vy < REST_SPEED * REST_SPEED:
            count += 1
        else:
            count = 0
        inside = L < x < R and y < fy + h
        if bank != 0.0:
            if floor and not L < x < R:
                grounded = True
            if inside and not grounded:
                inside = False
                break
        if count >= REST_STEPS:
            break
        if inside and 0.5 * (vx * vx + vy * vy) + GRAVITY * (y - fy) < barrier:
            break
        if x - RADIUS > R and vx >= 0.0:
            break
        if x + RADIUS < L and vx <= 0.0:
            break
    if inside:
        reward = 1
    return reward, steps


def rollout_reward(vx0, vy0, mu, e, c, task, horizon):
    """Return ``(reward, steps)`` for one launch."""
    return _rollout(vx0, vy0, mu, e, c, task, horizon, None)


def rollout_record(vx0, vy0, mu, e, c, task, horizon):
    """Return ``(reward, steps, states)`` with ``states`` shaped (steps + 1, 4)."""
    states = np.empty((horizon + 1, 4))
    reward, steps = _rollout(vx0, vy0, mu, e, c, task, horizon, states)
    return reward, steps, states[: steps + 1].copy()


def score_table(tasks, vels, latents, damping, horizon):
    """Binary rewards shaped (len(latents), len(tasks), len(vels))."""
    tasks = np.asarray(tasks, dtype=np.float64)
    vels = np.asarray(vels, dtype=np.float64)
    latents = np.asarray(latents, dtype=np.float64)
    out = np.zeros((len(latents), len(tasks), len(vels)), dtype=np.uint8)
    for g in range(len(latents)):
        mu = float(latents[g, 0])
        e = float(latents[g, 1])
        for t in range(len(tasks)):
            row = tasks[t]
            for a in range(len(vels)):
                r, _ = _rollout(float(vels[a, 0]), float(vels[a, 1]), mu, e, damping, row, horizon, None)
                out[g, t, a] = r
    return out


def first_success(vels, order, mu, e, c, task, horizon):
    """Try ``vels[order[i]]`` in turn; return the 1-based attempt that succeeds or 0."""
    for i in range(len(order)):
        a = order[i]
        r, _ = _rollout(float(vels[a, 0]), float(vels[a, 1]), mu, e, c, task, horizon, None)
        if r:
            return i + 1
    return 0


def constants():
    return {"GRAVITY": GRAVITY, "DT": DT, "RADIUS": RADIUS, "REST_SPEED": REST_SPEED, "REST_STEPS": REST_STEPS,
            "BOUNCE_SPEED": BOUNCE_SPEED, "TRAP_MARGIN": TRAP_MARGIN}
