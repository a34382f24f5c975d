"""Table-based universal policy.

Per-task action scores are trained exhaustively in simulation on a regular
lattice of latent values. Conditioning at an arbitrary latent interpolates
those scores multilinearly and ranks actions by the result.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from simprior._backend import kernel
from simprior.errors import ArtifactFormatError, InvalidInputError
from simprior.physics import DEFAULT_HORIZON, Action, EnvironmentSetting, LatentBounds, Role, TaskSet

ARTIFACT_MAGIC = b"SIMPRIOR-UPN"
ARTIFACT_VERSION = 1
DEFAULT_AUCCESS_K = 100


@dataclass(frozen=True)
class ActionSet:
    """Regular angle x speed grid, row-major (angle-major) for index stability."""

    n_angles: int = 30
    n_speeds: int = 30
    angle_range: tuple[float, float] = (Action.MIN_ANGLE, Action.MAX_ANGLE)
    speed_range: tuple[float, float] = (Action.MIN_SPEED, Action.MAX_SPEED)

    def __post_init__(self):
        if self.n_angles < 1 or self.n_speeds < 1:
            raise InvalidInputError("action grid must be non-empty")

    def __len__(self):
        return self.n_angles * self.n_speeds

    @property
    def actions(self) -> tuple[Action, ...]:
        angles = np.linspace(*self.angle_range, self.n_angles)
        speeds = np.linspace(*self.speed_range, self.n_speeds)
        return tuple(Action(float(a), float(s)) for a in angles for s in speeds)

    def velocities(self) -> np.ndarray:
        return np.array([a.velocity() for a in self.actions], dtype=np.float64)

    def spec(self) -> dict:
        return {"n_angles": self.n_angles, "n_speeds": self.n_speeds,
                "angle_range": list(self.angle_range), "speed_range": list(self.speed_range)}

    @classmethod
    def from_spec(cls, spec: dict) -> "ActionSet":
        return cls(int(spec["n_angles"]), int(spec["n_speeds"]),
                   tuple(spec["angle_range"]), tuple(spec["speed_range"]))


def lattice_nodes(bounds: LatentBounds, res: int) -> np.ndarray:
    """All lattice points, row-major over dimensions (first dimension slowest)."""
    axes = [np.linspace(lo, hi, res) for lo, hi in zip(bounds.lo, bounds.hi)]
    return np.array(list(itertools.product(*axes)), dtype=np.float64)


@dataclass(frozen=True)
class PolicyTable:
    bounds: LatentBounds
    lattice_res: int
    task_ids: tuple[int, ...]
    actions: ActionSet
    scores: np.ndarray = field(repr=False)  # (nodes, tasks, actions)

    def __post_init__(self):
        expected = (self.lattice_res ** self.bounds.dim, len(self.task_ids), len(self.actions))
        if self.scores.shape != expected:
            raise InvalidInputError(f"scores shape {self.scores.shape} != {expected}")
        if np.any(self.scores < 0.0) or np.any(self.scores > 1.0):
            raise InvalidInputError("scores must lie in [0, 1]")
        self.scores.setflags(write=False)

    @property
    def nodes(self) -> np.ndarray:
        return lattice_nodes(self.bounds, self.lattice_res)

    def task_index(self, task_id: int) -> int:
        try:
            return self.task_ids.index(task_id)
        except ValueError:
            raise InvalidInputError(f"task {task_id} is not in the policy table") from None

    def interpolate(self, theta) -> np.ndarray:
        """Multilinear interpolation of the score tensor at ``theta`` -> (tasks, actions)."""
        theta = self.bounds.check(theta)
        res = self.lattice_res
        u = self.bounds.normalize(theta) * (res - 1)
        cell = np.clip(np.floor(u).astype(int), 0, res - 2)
        frac = u - cell
        # snap round-off so a latent on a node reproduces that node exactly
        frac[np.abs(frac) < 1e-9] = 0.0
        frac[np.abs(frac - 1.0) < 1e-9] = 1.0
        out = np.zeros(self.scores.shape[1:])
        strides = [res ** (self.bounds.dim - 1 - k) for k in range(self.bounds.dim)]
        for corner in itertools.product((0, 1), repeat=self.bounds.dim):
            w = 1.0
            for k, c in enumerate(corner):
                w *= frac[k] if c else 1.0 - frac[k]
            if w == 0.0:
                continue
            idx = sum((cell[k] + c) * strides[k] for k, c in enumerate(corner))
            out += w * self.scores[idx]
        return out


@dataclass(frozen=True)
class RankedPolicy:
    """Per-task action orderings: descending score, ties by ascending index."""

    orders: dict = field(repr=False)  # task id -> int64 array of action indices
    actions: ActionSet
    latent: tuple[float, ...] | None = None

    def ranked(self, task_id: int, k: int | None = None) -> np.ndarray:
        try:
            order = self.orders[task_id]
        except KeyError:
            raise InvalidInputError(f"policy has no ranking for task {task_id}") from None
        return order if k is None else order[:k]


def rank_scores(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by descending score; a stable sort keeps ties in index order."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable").astype(np.int64)


def policy_from_scores(table: PolicyTable, scores: np.ndarray, latent=None) -> RankedPolicy:
    orders = {tid: rank_scores(scores[i]) for i, tid in enumerate(table.task_ids)}
    return RankedPolicy(orders, table.actions, None if latent is None else tuple(float(v) for v in latent))


def train(tasks: TaskSet, bounds: LatentBounds, actions: ActionSet, lattice_res: int = 4,
          horizon: int = DEFAULT_HORIZON) -> PolicyTable:
    """Score every action on every task at every lattice node, in simulation only."""
    if lattice_res < 2:
        raise InvalidInputError("lattice_res must be >= 2")
    nodes = lattice_nodes(bounds, lattice_res)
    scores = kernel.score_table(tasks.rows(), actions.velocities(), nodes, 0.0, int(horizon))
    return PolicyTable(bounds, lattice_res, tasks.ids, actions, scores.astype(np.float64))


def condition(table: PolicyTable, theta) -> RankedPolicy:
    return policy_from_scores(table, table.interpolate(theta), theta)


class InteractionCounter:
    """Tally of rollouts performed per environment role."""

    def __init__(self):
        self.counts = {Role.SIMULATED: 0, Role.REAL: 0}

    def add(self, role: Role, n: int) -> None:
        self.counts[role] += n

    @property
    def real(self) -> int:
        return self.counts[Role.REAL]

    @property
    def simulated(self) -> int:
        return self.counts[Role.SIMULATED]

    def reset(self) -> None:
        for k in self.counts:
            self.counts[k] = 0


INTERACTIONS = InteractionCounter()


@dataclass(frozen=True)
class EvalResult:
    objective: float
    first_success: tuple[int | None, ...]
    auccess: float
    interactions: int


def evaluate(policy: RankedPolicy, tasks: TaskSet, setting: EnvironmentSetting, top_k: int,
             horizon: int = DEFAULT_HORIZON, counter: InteractionCounter | None = None) -> EvalResult:
    """Attempt each task's ranked actions in order, stopping at the first success."""
    if top_k < 1:
        raise InvalidInputError("top_k must be >= 1")
    if len(tasks) == 0:
        raise InvalidInputError("cannot evaluate on an empty task set")
    vels = policy.actions.velocities()
    first, attempts = [], 0
    for task in tasks:
        order = policy.ranked(task.id, top_k)
        hit = int(kernel.first_success(vels, order, setting.friction, setting.restitution,
                                       float(setting.damping), task.row(), int(horizon)))
        first.append(hit if hit > 0 else None)
        attempts += hit if hit > 0 else len(order)
    for c in (INTERACTIONS, counter):
        if c is not None:
            c.add(setting.role, attempts)
    solved = sum(f is not None for f in first)
    return EvalResult(solved / len(first), tuple(first), auccess(first, max(DEFAULT_AUCCESS_K, top_k)), attempts)


def auccess_weights(K: int = DEFAULT_AUCCESS_K) -> np.ndarray:
    k = np.arange(1, K + 1, dtype=float)
    return np.log(k + 1.0) - np.log(k)


def auccess(first_success, K: int = DEFAULT_AUCCESS_K) -> float:
    """Attempt-weighted success: sum_k w_k s_k / sum_k w_k with w_k = ln(k+1) - ln(k).

    ``first_success`` holds, per task, the 1-based attempt that first solved
    it or ``None``; ``s_k`` is the fraction solved within ``k`` attempts.
    """
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    first = list(first_success)
    if not first:
        raise InvalidInputError("auccess needs at least one task")
    hits = []
    for f in first:
        if f is None:
            continue
        if not 1 <= f <= K:
            raise InvalidInputError(f"first-success index {f} outside [1, {K}]")
        hits.append(int(f))
    w = auccess_weights(K)
    solved_by = np.zeros(K)
    for f in hits:
        solved_by[f - 1:] += 1.0
    s = solved_by / len(first)
    return float(np.dot(w, s) / w.sum())


def save_table(path, table: PolicyTable) -> None:
    """Write the table as a magic line, a JSON header line and raw little-endian float64 scores."""
    header = {
        "version": ARTIFACT_VERSION,
        "bounds": {"lo": list(table.bounds.lo), "hi": list(table.bounds.hi), "names": list(table.bounds.names)},
        "lattice_res": table.lattice_res,
        "task_ids": list(table.task_ids),
        "actions": table.actions.spec(),
        "shape": list(table.scores.shape),
    }
    with open(path, "wb") as fh:
        fh.write(ARTIFACT_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(table.scores, dtype="<f8").tobytes())


def load_table(path, expect_tasks: TaskSet | None = None, expect_actions: ActionSet | None = None) -> PolicyTable:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != ARTIFACT_MAGIC:
            raise ArtifactFormatError(f"{path}: not a policy-table artifact")
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ArtifactFormatError(f"{path}: bad header") from exc
        payload = fh.read()
    if header.get("version") != ARTIFACT_VERSION:
        raise ArtifactFormatError(f"{path}: unsupported version {header.get('version')}")
    b = header["bounds"]
    bounds = LatentBounds(tuple(b["lo"]), tuple(b["hi"]), tuple(b["names"]))
    actions = ActionSet.from_spec(header["actions"])
    res = int(header["lattice_res"])
    task_ids = tuple(int(t) for t in header["task_ids"])
    shape = tuple(int(s) for s in header["shape"])
    expected = (res ** bounds.dim, len(task_ids), len(actions))
    if shape != expected:
        raise ArtifactFormatError(f"{path}: header shape {shape} inconsistent with layout {expected}")
    if len(payload) != 8 * math.prod(shape):
        raise ArtifactFormatError(f"{path}: payload holds {len(payload)} bytes, expected {8 * math.prod(shape)}")
    if expect_tasks is not None and tuple(expect_tasks.ids) != task_ids:
        raise ArtifactFormatError(f"{path}: task ids do not match the task set")
    if expect_actions is not None and expect_actions != actions:
        raise ArtifactFormatError(f"{path}: action grid does not match")
    scores = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    return PolicyTable(bounds, res, task_ids, actions, scores)
