"""Experiment configuration, read from and written to JSON.

Every field has a default, so a config file only needs the keys it changes.
Unknown keys are rejected to catch typos early.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from simprior.errors import InvalidInputError

METHODS = ("policy_prior", "no_prior", "dr", "estimated", "unfiltered_prior")


@dataclass(frozen=True)
class TaskConfig:
    seed: int = 0
    n_tasks: int = 25
    folds: tuple[int, int, int] = (15, 5, 5)
    variant: str = "standard"


@dataclass(frozen=True)
class ActionConfig:
    n_angles: int = 30
    n_speeds: int = 30


@dataclass(frozen=True)
class PriorSection:
    N: int = 100
    E: int = 10
    gamma: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class SearchSection:
    T: int = 20
    top_k: int = 5
    cold_start: int = 3
    xi: float = 0.0
    restarts: int = 10
    optimize_hyper: bool = True


@dataclass(frozen=True)
class RealConfig:
    latent: tuple[float, float] = (0.2, 0.8)
    damping: float = 0.8


@dataclass(frozen=True)
class BaselineConfig:
    dr_draws: int = 16
    probe_tasks: int = 5
    probe_actions: int = 5
    cem_population: int = 50
    cem_elites: int = 10
    cem_iterations: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    tasks: TaskConfig = field(default_factory=TaskConfig)
    lattice_res: int = 4
    actions: ActionConfig = field(default_factory=ActionConfig)
    prior: PriorSection = field(default_factory=PriorSection)
    search: SearchSection = field(default_factory=SearchSection)
    top_k_jumpstart: int = 100
    real: RealConfig = field(default_factory=RealConfig)
    trial_seeds: tuple[int, ...] = (50, 100, 150, 500, 1000)
    methods: tuple[str, ...] = ("policy_prior", "no_prior", "dr", "estimated")
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    horizon: int = 2400

    def __post_init__(self):
        if not self.trial_seeds or len(set(self.trial_seeds)) != len(self.trial_seeds):
            raise InvalidInputError("trial_seeds must be non-empty and distinct")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise InvalidInputError(f"unknown methods {bad}; choose from {METHODS}")
        if sum(self.tasks.folds) != self.tasks.n_tasks or any(f < 1 for f in self.tasks.folds):
            raise InvalidInputError("fold sizes must be positive and sum to n_tasks")
        if self.lattice_res < 2 or self.top_k_jumpstart < 1 or self.horizon < 1:
            raise InvalidInputError("lattice_res >= 2, top_k_jumpstart >= 1 and horizon >= 1 required")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data):
    if not isinstance(data, dict):
        raise InvalidInputError(f"expected an object for {cls.__name__}, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise InvalidInputError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if known[name].default_factory is not dataclasses.MISSING \
            else known[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value)
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data)


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: {exc}") from exc
    return from_dict(data)


def dump(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def ablation() -> ExperimentConfig:
    """Restitution-gated variant used to compare filtered and unfiltered priors.

    The task set is unsolvable below restitution 0.3. Drag is light here
    because under the full 0.8 drag no latent solves any task, which would
    leave nothing to compare.
    """
    return ExperimentConfig(tasks=TaskConfig(variant="bank_shot"), real=RealConfig((0.0, 0.8), 0.1),
                            methods=("policy_prior", "unfiltered_prior"))


PRESETS = {"default": ExperimentConfig, "ablation": ablation}
