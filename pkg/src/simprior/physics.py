"""Deterministic 2D bounce-to-cup environment.

A ball of radius 0.1 m is launched from a fixed origin and must come to rest
inside a cup made of two vertical wall segments standing on the ground. The
latent factors are Coulomb friction and the coefficient of restitution; the
"real" world adds a linear velocity drag the simulator does not model.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from simprior import rng as _rng
from simprior._backend import kernel
from simprior._kernel_py import DT, GRAVITY, RADIUS, REST_SPEED, REST_STEPS
from simprior.errors import InvalidInputError

DEFAULT_HORIZON = 2400
DEFAULT_REAL_DAMPING = 0.8

__all__ = [
    "DT",
    "GRAVITY",
    "RADIUS",
    "Action",
    "BallState",
    "EnvironmentSetting",
    "LatentBounds",
    "Role",
    "Task",
    "TaskSet",
    "Trajectory",
    "generate_tasks",
    "read_tasks",
    "resolve_contact",
    "rollout",
    "rollout_reward",
    "step",
    "write_tasks",
    "write_trajectory",
]


@dataclass(frozen=True)
class LatentBounds:
    """Per-dimension search ranges for the latent factors."""

    lo: tuple[float, ...] = (0.0, 0.0)
    hi: tuple[float, ...] = (3.0, 1.0)
    names: tuple[str, ...] = ("friction", "restitution")

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or len(self.lo) == 0:
            raise InvalidInputError("lo and hi must be non-empty and of equal length")
        if any(not lo < hi for lo, hi in zip(self.lo, self.hi)):
            raise InvalidInputError(f"every bound needs lo < hi, got {self.lo} / {self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=float)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == (self.dim,) and bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def check(self, x) -> np.ndarray:
        """Return ``x`` as a float array or raise if it is outside the bounds."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidInputError(f"latent must have {self.dim} components, got shape {x.shape}")
        if not np.all(np.isfinite(x)) or not self.contains(x):
            raise InvalidInputError(f"latent {x.tolist()} outside bounds {self.lo}..{self.hi}")
        return x

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.width

    def denormalize(self, u) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * self.width

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)


class Role(enum.Enum):
    SIMULATED = "simulated"
    REAL = "real"


@dataclass(frozen=True)
class EnvironmentSetting:
    """Latent factors plus the unmodelled drag that separates real from simulated."""

    latent: tuple[float, ...]
    damping: float = 0.0
    role: Role = Role.SIMULATED

    def __post_init__(self):
        object.__setattr__(self, "latent", tuple(float(v) for v in self.latent))
        if self.role is Role.SIMULATED and self.damping != 0.0:
            raise InvalidInputError("simulated settings have no damping")
        if self.role is Role.REAL and not self.damping > 0.0:
            raise InvalidInputError("real settings need damping > 0")

    @classmethod
    def simulated(cls, latent) -> "EnvironmentSetting":
        return cls(tuple(latent), 0.0, Role.SIMULATED)

    @classmethod
    def real(cls, latent, damping: float = DEFAULT_REAL_DAMPING) -> "EnvironmentSetting":
        return cls(tuple(latent), damping, Role.REAL)

    @property
    def friction(self) -> float:
        return self.latent[0]

    @property
    def restitution(self) -> float:
        return self.latent[1]


@dataclass(frozen=True)
class Task:
    """One cup placement. ``bank_shot`` tasks only count entries after a ground bounce."""

    id: int
    cup_left_x: float
    cup_right_x: float
    cup_floor_y: float = 0.0
    cup_wall_height: float = 0.2
    launch_origin: tuple[float, float] = (0.0, 1.0)
    bank_shot: bool = False

    def __post_init__(self):
        if not self.cup_left_x < self.cup_right_x:
            raise InvalidInputError("cup_left_x must be < cup_right_x")
        lx, ly = self.launch_origin
        if self.cup_left_x <= lx <= self.cup_right_x and ly < self.cup_floor_y + self.cup_wall_height:
            raise InvalidInputError("launch origin lies inside the cup")

    def row(self) -> np.ndarray:
        lx, ly = self.launch_origin
        return np.array(
            [self.cup_left_x, self.cup_right_x, self.cup_floor_y, self.cup_wall_height,
             1.0 if self.bank_shot else 0.0, lx, ly],
            dtype=np.float64,
        )

    def inside(self, x: float, y: float) -> bool:
        return self.cup_left_x < x < self.cup_right_x and y < self.cup_floor_y + self.cup_wall_height


@dataclass(frozen=True)
class Action:
    angle: float  # radians
    speed: float  # m/s

    MIN_ANGLE = math.radians(10.0)
    MAX_ANGLE = math.radians(80.0)
    MIN_SPEED = 1.0
    MAX_SPEED = 15.0

    def __post_init__(self):
        if not (self.MIN_ANGLE - 1e-12 <= self.angle <= self.MAX_ANGLE + 1e-12):
            raise InvalidInputError(f"angle {self.angle} outside [10, 80] degrees")
        if not (self.MIN_SPEED <= self.speed <= self.MAX_SPEED):
            raise InvalidInputError(f"speed {self.speed} outside [1, 15] m/s")

    def velocity(self) -> tuple[float, float]:
        return self.speed * math.cos(self.angle), self.speed * math.sin(self.angle)


@dataclass(frozen=True)
class BallState:
    position: tuple[float, float]
    velocity: tuple[float, float]
    at_rest: bool = False
    rest_steps: int = 0

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray = field(repr=False)  # (steps + 1, 4): x, y, vx, vy
    reward: int
    steps: int

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]


def _finite(*values):
    return all(math.isfinite(v) for v in values)


def resolve_contact(state: BallState, surface_normal, latent, penetration: float = 0.0) -> BallState:
    """Apply a restitution + Coulomb-friction impulse against a surface.

    The normal velocity is reversed and scaled by the restitution; tangential
    speed drops by ``min(|v_t|, mu * (1 + e) * |v_n|)`` without changing sign.
    Separating contacts leave the velocity untouched. ``penetration`` (m) moves
    the ball out along the normal.
    """
    nx, ny = (float(v) for v in surface_normal)
    norm = math.hypot(nx, ny)
    if not norm > 0.0:
        raise InvalidInputError("surface normal must be non-zero")
    nx, ny = nx / norm, ny / norm
    mu, e = float(latent[0]), float(latent[1])
    vx, vy = kernel.resolve(float(state.velocity[0]), float(state.velocity[1]), nx, ny, mu, e)
    x, y = state.position
    if penetration > 0.0:
        x, y = x + nx * penetration, y + ny * penetration
    return replace(state, position=(x, y), velocity=(vx, vy))


def step(state: BallState, setting: EnvironmentSetting, dt: float = DT, task: Task | None = None) -> BallState:
    """Advance the ball by one semi-implicit Euler step.

    Without a ``task`` only the ground at y = 0 is present. A ball already at
    rest stays put.
    """
    if not dt > 0.0:
        raise InvalidInputError("dt must be positive")
    (x, y), (vx, vy) = state.position, state.velocity
    if not _finite(x, y, vx, vy):
        raise InvalidInputError("ball state must be finite")
    if state.at_rest:
        return state
    if task is None:
        L, R, fy, h = -1.0, 1.0, 0.0, 0.0
    else:
        L, R, fy, h = task.cup_left_x, task.cup_right_x, task.cup_floor_y, task.cup_wall_height
    x, y, vx, vy, floor = kernel.step(
        float(x), float(y), float(vx), float(vy), setting.friction, setting.restitution,
        float(setting.damping), L, R, fy, h, float(dt),
    )
    count = state.rest_steps + 1 if floor and vx * vx + vy * vy < REST_SPEED * REST_SPEED else 0
    return BallState((x, y), (vx, vy), count >= REST_STEPS, count)


def rollout(task: Task, action: Action, setting: EnvironmentSetting, horizon: int = DEFAULT_HORIZON) -> Trajectory:
    """Simulate one launch and record every state.

    Reward is 1 when the ball rests inside the cup, is trapped inside it, or
    is inside when the horizon runs out. The run stops early once the outcome
    can no longer change.
    """
    if horizon <= 0:
        raise InvalidInputError("horizon must be positive")
    vx, vy = action.velocity()
    reward, steps, states = kernel.rollout_record(
        vx, vy, setting.friction, setting.restitution, float(setting.damping), task.row(), int(horizon)
    )
    return Trajectory(states, int(reward), int(steps))


def rollout_reward(task: Task, action: Action, setting: EnvironmentSetting, horizon: int = DEFAULT_HORIZON) -> int:
    vx, vy = action.velocity()
    reward, _ = kernel.rollout_reward(
        vx, vy, setting.friction, setting.restitution, float(setting.damping), task.row(), int(horizon)
    )
    return int(reward)


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple[Task, ...]
    folds: dict = field(default_factory=dict)  # name -> tuple of task ids

    def __post_init__(self):
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("task ids must be unique")
        seen = set()
        for name, members in self.folds.items():
            members = set(members)
            if not members <= set(ids):
                raise InvalidInputError(f"fold {name!r} references unknown task ids")
            if seen & members:
                raise InvalidInputError("folds must be disjoint")
            seen |= members

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(t.id for t in self.tasks)

    def fold(self, name: str) -> "TaskSet":
        members = set(self.folds[name])
        return TaskSet(tuple(t for t in self.tasks if t.id in members), {name: tuple(sorted(members))})

    def rows(self) -> np.ndarray:
        return np.stack([t.row() for t in self.tasks]) if self.tasks else np.zeros((0, 7))


VARIANTS = {
    # cup geometry per benchmark variant
    "standard": dict(width=0.3, wall=0.2, left=(1.0, 4.0), bank_shot=False),
    # restitution-gated: the ball must bounce off the ground over 1 m walls,
    # which no launch in the action box can do with restitution below 0.3
    "bank_shot": dict(width=1.0, wall=1.0, left=(2.0, 8.0), bank_shot=True),
}


def generate_tasks(
    n_tasks: int = 25,
    seed: int = 0,
    folds: Sequence[int] = (15, 5, 5),
    variant: str = "standard",
    left_range: tuple[float, float] | None = None,
    launch_origin: tuple[float, float] = (0.0, 1.0),
    solvable_at=None,
    actions=None,
    max_draws: int = 1000,
) -> TaskSet:
    """Draw cup placements with left edge uniform in ``left_range``.

    ``left_range`` defaults to the variant's own range.
    When ``solvable_at`` (a latent vector) and ``actions`` (an ``ActionSet``)
    are given, placements with no successful action in that simulated setting
    are redrawn.
    """
    if variant not in VARIANTS:
        raise InvalidInputError(f"unknown variant {variant!r}")
    if sum(folds) != n_tasks:
        raise InvalidInputError("fold sizes must sum to n_tasks")
    geo = VARIANTS[variant]
    left_range = geo["left"] if left_range is None else left_range
    gen = _rng.generator(seed, "tasks", variant)
    vels = None if actions is None else actions.velocities()
    tasks = []
    draws = 0
    while len(tasks) < n_tasks:
        draws += 1
        if draws > max_draws:
            raise InvalidInputError("could not draw enough solvable tasks")
        left = float(gen.uniform(*left_range))
        task = Task(len(tasks), left, left + geo["width"], 0.0, geo["wall"], tuple(launch_origin), geo["bank_shot"])
        if solvable_at is not None and vels is not None:
            scores = kernel.score_table(task.row()[None], vels, np.asarray([solvable_at], float), 0.0, DEFAULT_HORIZON)
            if not scores.any():
                continue
        tasks.append(task)
    names = ("train", "val", "test")
    fold_map, start = {}, 0
    for name, size in zip(names, folds):
        fold_map[name] = tuple(range(start, start + size))
        start += size
    return TaskSet(tuple(tasks), fold_map)


TASK_FIELDS = ["id", "fold", "cup_left_x", "cup_right_x", "cup_floor_y", "cup_wall_height",
               "launch_x", "launch_y", "bank_shot"]


def write_tasks(path, taskset: TaskSet) -> None:
    fold_of = {i: name for name, ids in taskset.folds.items() for i in ids}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TASK_FIELDS)
        for t in taskset.tasks:
            w.writerow([t.id, fold_of.get(t.id, ""), repr(t.cup_left_x), repr(t.cup_right_x), repr(t.cup_floor_y),
                        repr(t.cup_wall_height), repr(t.launch_origin[0]), repr(t.launch_origin[1]),
                        int(t.bank_shot)])


def read_tasks(path) -> TaskSet:
    tasks, folds = [], {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TASK_FIELDS:
            raise InvalidInputError(f"unexpected task file header {reader.fieldnames}")
        for rec in reader:
            t = Task(int(rec["id"]), float(rec["cup_left_x"]), float(rec["cup_right_x"]), float(rec["cup_floor_y"]),
                     float(rec["cup_wall_height"]), (float(rec["launch_x"]), float(rec["launch_y"])),
                     bool(int(rec["bank_shot"])))
            tasks.append(t)
            if rec["fold"]:
                folds.setdefault(rec["fold"], []).append(t.id)
    return TaskSet(tuple(tasks), {k: tuple(v) for k, v in folds.items()})


def write_trajectory(path, traj: Trajectory) -> None:
    """Dump a trajectory as CSV with columns step, x, y, vx, vy."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "x", "y", "vx", "vy"])
        for i, (x, y, vx, vy) in enumerate(traj.states):
            w.writerow([i, repr(float(x)), repr(float(y)), repr(float(vx)), repr(float(vy))])
