# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernel.

Line-for-line port of ``_kernel_py``; keep the two in sync. Built without
fast-math or FP contraction so results match the fallback bit for bit.
"""
from libc.math cimport sqrt

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double GRAVITY = 9.81
cdef double DT = 1.0 / 240.0
cdef double RADIUS = 0.1
cdef double REST_SPEED = 0.05
cdef int REST_STEPS = 10
cdef double BOUNCE_SPEED = 0.1
cdef double TRAP_MARGIN = 0.9

BACKEND = "cython"


cdef struct Ball:
    double x
    double y
    double vx
    double vy


cdef inline void _resolve(Ball* b, double nx, double ny, double mu, double e) noexcept nogil:
    cdef double vn = b.vx * nx + b.vy * ny
    cdef double tx, ty, vt, jt, scale, vn_new
    if vn >= 0.0:
        return
    tx = b.vx - vn * nx
    ty = b.vy - vn * ny
    vt = sqrt(tx * tx + ty * ty)
    jt = mu * (1.0 + e) * (-vn)
    if vt > 0.0 and jt < vt:
        scale = (vt - jt) / vt
    else:
        scale = 0.0
    vn_new = -e * vn
    b.vx = vn_new * nx + tx * scale
    b.vy = vn_new * ny + ty * scale


cdef inline void _wall(Ball* b, double wx, double fy, double h, double mu, double e) noexcept nogil:
    cdef double cy = b.y
    cdef double dx, dy, d2, d, nx, ny, vn, ee
    cdef double push
    if cy < fy:
        cy = fy
    elif cy > fy + h:
        cy = fy + h
    dx = b.x - wx
    dy = b.y - cy
    d2 = dx * dx + dy * dy
    if d2 >= RADIUS * RADIUS:
        return
    d = sqrt(d2)
    if d > 0.0:
        nx = dx / d
        ny = dy / d
    else:
        nx = -1.0 if b.vx > 0.0 else 1.0
        ny = 0.0
    vn = b.vx * nx + b.vy * ny
    push = RADIUS
    if vn < 0.0:
        ee = e if -vn >= BOUNCE_SPEED else 0.0
        _resolve(b, nx, ny, mu, ee)
        push = RADIUS + ee * (RADIUS - d)
    b.x = wx + nx * push
    b.y = cy + ny * push


cdef inline bint _step(Ball* b, double mu, double e, double c, double L, double R,
                       double fy, double h, double dt) noexcept nogil:
    cdef bint floor = False
    cdef double depth, ee
    b.vx = b.vx + dt * (-c * b.vx)
    b.vy = b.vy + dt * (-GRAVITY - c * b.vy)
    b.x = b.x + dt * b.vx
    b.y = b.y + dt * b.vy
    depth = fy + RADIUS - b.y
    if depth > 0.0:
        floor = True
        if b.vy < 0.0:
            ee = e if -b.vy >= BOUNCE_SPEED else 0.0
            _resolve(b, 0.0, 1.0, mu, ee)
            b.y = fy + RADIUS + ee * depth
        else:
            b.y = fy + RADIUS
    if h > 0.0:
        _wall(b, L, fy, h, mu, e)
        _wall(b, R, fy, h, mu, e)
    return floor


cdef int _rollout(double vx0, double vy0, double mu, double e, double c,
                  const double[:] task, int horizon, double[:, :] states,
                  bint record, int* steps_out) noexcept nogil:
    cdef double L = task[0]
    cdef double R = task[1]
    cdef double fy = task[2]
    cdef double h = task[3]
    cdef double bank = task[4]
    cdef Ball b
    cdef double barrier = TRAP_MARGIN * GRAVITY * (h + RADIUS)
    cdef int count = 0
    cdef bint grounded = False
    cdef bint floor
    cdef bint inside = False
    cdef int steps = 0
    b.x = task[5]
    b.y = task[6]
    b.vx = vx0
    b.vy = vy0
    if record:
        states[0, 0] = b.x
        states[0, 1] = b.y
        states[0, 2] = b.vx
        states[0, 3] = b.vy
    while steps < horizon:
        floor = _step(&b, mu, e, c, L, R, fy, h, DT)
        steps += 1
        if record:
            states[steps, 0] = b.x
            states[steps, 1] = b.y
            states[steps, 2] = b.vx
            states[steps, 3] = b.vy
        if floor and b.vx * b.vx + b.vy * b.vy < REST_SPEED * REST_SPEED:
            count += 1
        else:
            count = 0
        inside = L < b.x and b.x < R and b.y < fy + h
        if bank != 0.0:
            if floor and not (L < b.x and b.x < R):
                grounded = True
            if inside and not grounded:
                inside = False
                break
        if count >= REST_STEPS:
            break
        if inside and 0.5 * (b.vx * b.vx + b.vy * b.vy) + GRAVITY * (b.y - fy) < barrier:
            break
        if b.x - RADIUS > R and b.vx >= 0.0:
            break
        if b.x + RADIUS < L and b.vx <= 0.0:
            break
    steps_out[0] = steps
    return 1 if inside else 0


def resolve(double vx, double vy, double nx, double ny, double mu, double e):
    cdef Ball b
    b.vx = vx
    b.vy = vy
    _resolve(&b, nx, ny, mu, e)
    return b.vx, b.vy


def step(double x, double y, double vx, double vy, double mu, double e, double c,
         double L, double R, double fy, double h, double dt):
    cdef Ball b
    b.x = x
    b.y = y
    b.vx = vx
    b.vy = vy
    floor = _step(&b, mu, e, c, L, R, fy, h, dt)
    return b.x, b.y, b.vx, b.vy, bool(floor)


def rollout_reward(double vx0, double vy0, double mu, double e, double c, task, int horizon):
    cdef const double[:] t = np.ascontiguousarray(task, dtype=np.float64)
    cdef double[:, :] dummy = np.empty((1, 4))
    cdef int steps = 0
    cdef int r = _rollout(vx0, vy0, mu, e, c, t, horizon, dummy, False, &steps)
    return r, steps


def rollout_record(double vx0, double vy0, double mu, double e, double c, task, int horizon):
    cdef const double[:] t = np.ascontiguousarray(task, dtype=np.float64)
    out = np.empty((horizon + 1, 4))
    cdef double[:, :] states = out
    cdef int steps = 0
    cdef int r = _rollout(vx0, vy0, mu, e, c, t, horizon, states, True, &steps)
    return r, steps, out[: steps + 1].copy()


def score_table(tasks, vels, latents, double damping, int horizon):
    cdef const double[:, :] tk = np.ascontiguousarray(tasks, dtype=np.float64)
    cdef const double[:, :] vl = np.ascontiguousarray(vels, dtype=np.float64)
    cdef const double[:, :] lt = np.ascontiguousarray(latents, dtype=np.float64)
    cdef Py_ssize_t G = lt.shape[0], T = tk.shape[0], A = vl.shape[0]
    out = np.zeros((G, T, A), dtype=np.uint8)
    cdef unsigned char[:, :, :] o = out
    cdef double[:, :] dummy = np.empty((1, 4))
    cdef Py_ssize_t g, t, a
    cdef int steps
    with nogil:
        for g in range(G):
            for t in range(T):
                for a in range(A):
                    o[g, t, a] = _rollout(vl[a, 0], vl[a, 1], lt[g, 0], lt[g, 1], damping,
                                          tk[t], horizon, dummy, False, &steps)
    return out


def first_success(vels, order, double mu, double e, double c, task, int horizon):
    cdef const double[:, :] vl = np.ascontiguousarray(vels, dtype=np.float64)
    cdef const long long[:] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef const double[:] t = np.ascontiguousarray(task, dtype=np.float64)
    cdef double[:, :] dummy = np.empty((1, 4))
    cdef Py_ssize_t i, a
    cdef int steps
    for i in range(od.shape[0]):
        a = od[i]
        if _rollout(vl[a, 0], vl[a, 1], mu, e, c, t, horizon, dummy, False, &steps):
            return i + 1
    return 0


def constants():
    return {"GRAVITY": GRAVITY, "DT": DT, "RADIUS": RADIUS, "REST_SPEED": REST_SPEED, "REST_STEPS": REST_STEPS,
            "BOUNCE_SPEED": BOUNCE_SPEED, "TRAP_MARGIN": TRAP_MARGIN}
