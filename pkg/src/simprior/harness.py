"""Experiment pipeline: train the table, build the prior, run trials, aggregate.

Each stage reads its inputs from and writes its outputs to one run directory,
so stages can be rerun independently and the report is derived from files
alone.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from simprior import config as _config
from simprior import rng as _rng
from simprior.baselines import CemConfig, domain_randomized_policy, estimate_latents_cem, record_probes
from simprior.bo import SearchConfig, SearchHistory, evaluations_to_fraction, read_history, search, write_history
from simprior.errors import InvalidInputError
from simprior.physics import EnvironmentSetting, LatentBounds, TaskSet, generate_tasks, read_tasks, write_tasks
from simprior.policy import (ActionSet, InteractionCounter, PolicyTable, condition, evaluate, load_table, save_table,
                             train)
from simprior.prior import PriorConfig, build_prior, kept_only, read_prior, write_prior

log = logging.getLogger("simprior")

TASKS_FILE = "tasks.csv"
TABLE_FILE = "upn.bin"
PRIOR_FILE = "prior.csv"
CONFIG_FILE = "config.json"
REPORT_FILE = "report.csv"
REPORT_TEXT = "report.txt"
CONVERGENCE_FILE = "convergence.csv"


def history_file(method):
    return f"history_{method}.csv"


def jumpstart_file(method):
    return f"jumpstart_{method}.csv"


def curve_file(method):
    return f"curve_{method}.csv"


def real_setting(cfg: _config.ExperimentConfig) -> EnvironmentSetting:
    return EnvironmentSetting.real(cfg.real.latent, cfg.real.damping)


def search_config(cfg: _config.ExperimentConfig, seed: int) -> SearchConfig:
    s = cfg.search
    return SearchConfig(T=s.T, cold_start=s.cold_start, xi=s.xi, restarts=s.restarts, seed=seed, top_k=s.top_k,
                        optimize_hyper=s.optimize_hyper, horizon=cfg.horizon)


def prior_config(cfg: _config.ExperimentConfig, bounds: LatentBounds) -> PriorConfig:
    p = cfg.prior
    return PriorConfig(N=p.N, E=p.E, gamma=p.gamma, bounds=bounds, eval_top_k=cfg.search.top_k, horizon=cfg.horizon)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path} (run the earlier stage first)")
    return path


def cmd_train_upn(cfg: _config.ExperimentConfig, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t = cfg.tasks
    tasks = generate_tasks(t.n_tasks, t.seed, t.folds, t.variant)
    actions = ActionSet(cfg.actions.n_angles, cfg.actions.n_speeds)
    # simulation is free, so the table covers every fold
    table = train(tasks, LatentBounds(), actions, cfg.lattice_res, cfg.horizon)
    _config.dump(cfg, out / CONFIG_FILE)
    write_tasks(out / TASKS_FILE, tasks)
    save_table(out / TABLE_FILE, table)
    log.info("trained %d nodes x %d tasks x %d actions", *table.scores.shape)
    return out / TABLE_FILE


def _load(out: Path) -> tuple[TaskSet, PolicyTable]:
    tasks = read_tasks(_require(out / TASKS_FILE, "task file"))
    table = load_table(_require(out / TABLE_FILE, "policy table"), expect_tasks=tasks)
    return tasks, table


def cmd_build_prior(cfg: _config.ExperimentConfig, out) -> Path:
    out = Path(out)
    tasks, table = _load(out)
    counter = InteractionCounter()
    prior = build_prior(table, tasks.fold("train"), prior_config(cfg, table.bounds), cfg.prior.seed, counter)
    if counter.real:
        raise RuntimeError("prior construction touched the real setting")
    write_prior(out / PRIOR_FILE, prior, table.bounds.dim)
    kept = sum(p.kept for p in prior)
    print(f"prior: kept {kept} of {len(prior)} observations ({len(prior) - kept} filtered)")
    return out / PRIOR_FILE


@dataclass(frozen=True)
class JumpStart:
    method: str
    seed: int
    theta: tuple[float, ...]
    auccess: float
    solved: float
    test_interactions: int
    search_interactions: int
    probe_interactions: int


def _jump_start(table, policy, tasks: TaskSet, cfg, method, seed, theta, search_n, probe_n) -> JumpStart:
    res = evaluate(policy, tasks.fold("test"), real_setting(cfg), cfg.top_k_jumpstart, cfg.horizon)
    return JumpStart(method, seed, tuple(float(v) for v in theta), res.auccess, res.objective, res.interactions, search_n, probe_n)


def run_trial(method: str, seed: int, cfg: _config.ExperimentConfig, tasks: TaskSet, table: PolicyTable,
              prior) -> tuple[SearchHistory, JumpStart]:
    real = real_setting(cfg)
    val = tasks.fold("val")
    scfg = search_config(cfg, seed)
    counter = InteractionCounter()
    if method in ("policy_prior", "unfiltered_prior", "no_prior"):
        used = {"policy_prior": kept_only(prior), "unfiltered_prior": list(prior), "no_prior": []}[method]
        hist = search(table, used, val, real, scfg, counter)
        theta = hist.best_x
        return hist, _jump_start(table, condition(table, theta), tasks, cfg, method, seed, theta, counter.real, 0)

    b = cfg.baselines
    probe_n = 0
    if method == "dr":
        theta = ()
        policy = domain_randomized_policy(table, b.dr_draws, _rng.generator(seed, "dr"))
    elif method == "estimated":
        probes = record_probes(table, tasks.fold("train"), real, b.probe_tasks, b.probe_actions, counter, cfg.horizon)
        probe_n = counter.real
        cem = CemConfig(b.cem_population, b.cem_elites, b.cem_iterations)
        theta = tuple(estimate_latents_cem(probes, cem, table.bounds, _rng.generator(seed, "cem"), cfg.horizon))
        policy = condition(table, theta)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    # one validation evaluation so these methods share the history schema
    res = evaluate(policy, val, real, scfg.top_k, cfg.horizon, counter)
    hist = SearchHistory(seed)
    hist.append(0, theta, res.objective, counter.real)
    return hist, _jump_start(table, policy, tasks, cfg, method, seed, theta, counter.real - probe_n, probe_n)


def write_jumpstarts(path, records, dim) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "trial_seed"] + [f"theta_{i + 1}" for i in range(dim)]
                   + ["auccess", "solved", "test_interactions", "search_interactions", "probe_interactions"])
        for r in records:
            theta = [repr(float(v)) for v in r.theta] if r.theta else [""] * dim
            w.writerow([r.method, r.seed, *theta, repr(r.auccess), repr(r.solved), r.test_interactions,
                        r.search_interactions, r.probe_interactions])


def read_jumpstarts(path) -> list[JumpStart]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        dim = sum(1 for f in reader.fieldnames if f.startswith("theta_"))
        out = []
        for rec in reader:
            theta = tuple(float(rec[f"theta_{i + 1}"]) for i in range(dim)) if rec["theta_1"] else ()
            out.append(JumpStart(rec["method"], int(rec["trial_seed"]), theta, float(rec["auccess"]),
                                 float(rec["solved"]), int(rec["test_interactions"]),
                                 int(rec["search_interactions"]), int(rec["probe_interactions"])))
    return out


def _trial_job(job):
    method, seed, cfg, tasks, table, prior = job
    try:
        return run_trial(method, seed, cfg, tasks, table, prior)
    except Exception as exc:
        raise RuntimeError(f"{method} trial seed {seed} failed: {exc}") from exc


def cmd_search(cfg: _config.ExperimentConfig, out, methods=None, jobs: int = 1) -> list[Path]:
    """Run every trial seed for each method; ``jobs > 1`` runs seeds in worker processes.

    Trials draw all randomness from their own seed, so the files do not
    depend on ``jobs``.
    """
    out = Path(out)
    tasks, table = _load(out)
    methods = tuple(methods) if methods else cfg.methods
    needs_prior = any(m in ("policy_prior", "unfiltered_prior") for m in methods)
    prior = read_prior(_require(out / PRIOR_FILE, "prior file")) if needs_prior else []
    written = []
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        for method in methods:
            work = [(method, seed, cfg, tasks, table, prior) for seed in cfg.trial_seeds]
            results = list(pool.map(_trial_job, work)) if pool else [_trial_job(w) for w in work]
            for h, j in results:
                log.info("%s seed %d: best %.3f, jump-start auccess %.4f", method, h.seed, h.best_y, j.auccess)
            write_history(out / history_file(method), [r[0] for r in results], table.bounds.dim)
            write_jumpstarts(out / jumpstart_file(method), [r[1] for r in results], table.bounds.dim)
            written += [out / history_file(method), out / jumpstart_file(method)]
    finally:
        if pool:
            pool.shutdown()
    return written


def mean_stderr(values) -> tuple[float, float]:
    """Mean and sample-std / sqrt(n) standard error, computed exactly (identical values give 0)."""
    v = [float(x) for x in np.asarray(values, dtype=float).ravel()]
    if not v:
        raise InvalidInputError("no values to aggregate")
    se = statistics.stdev(v) / math.sqrt(len(v)) if len(v) > 1 else 0.0
    return statistics.mean(v), se


def best_curve_by_iteration(histories) -> tuple[list[int], np.ndarray]:
    """Best-so-far per search iteration (label >= 1), one row per trial.

    Trials without search iterations contribute their single entry.
    """
    rows, labels = [], None
    for h in histories:
        ents = [e for e in h.entries if e.iteration >= 1] or h.entries[-1:]
        lab = [e.iteration for e in ents]
        if labels is not None and lab != labels:
            raise InvalidInputError("trials disagree on iteration labels")
        labels = lab
        rows.append([e.best_so_far for e in ents])
    return labels, np.array(rows)


@dataclass(frozen=True)
class MethodSummary:
    method: str
    auccess_mean: float
    auccess_stderr: float
    interactions_mean: float
    median_evals_to_95: float
    final_best_mean: float


def summarize(out, methods=None) -> list[MethodSummary]:
    out = Path(out)
    if methods is None:
        methods = sorted(p.name[len("jumpstart_"):-4] for p in out.glob("jumpstart_*.csv"))
    if not methods:
        raise InvalidInputError(f"no trial results in {out}")
    rows = []
    for m in methods:
        jumps = read_jumpstarts(_require(out / jumpstart_file(m), f"{m} results"))
        hists = read_history(_require(out / history_file(m), f"{m} history"))
        a_mean, a_se = mean_stderr([j.auccess for j in jumps])
        inter = float(np.mean([j.search_interactions + j.probe_interactions for j in jumps]))
        evals = float(np.median([evaluations_to_fraction(h.best_curve()) for h in hists]))
        final = float(np.mean([h.best_curve()[-1] for h in hists]))
        rows.append(MethodSummary(m, a_mean, a_se, inter, evals, final))
    return rows


def cmd_report(out, methods=None) -> list[Path]:
    out = Path(out)
    rows = summarize(out, methods)
    with open(out / REPORT_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "auccess_mean", "auccess_stderr", "interactions_mean"])
        for r in rows:
            w.writerow([r.method, repr(r.auccess_mean), repr(r.auccess_stderr), repr(r.interactions_mean)])
    with open(out / CONVERGENCE_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "median_evals_to_95", "final_best_mean"])
        for r in rows:
            w.writerow([r.method, repr(r.median_evals_to_95), repr(r.final_best_mean)])
    written = [out / REPORT_FILE, out / CONVERGENCE_FILE]
    for r in rows:
        labels, curves = best_curve_by_iteration(read_history(out / history_file(r.method)))
        with open(out / curve_file(r.method), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "mean", "stderr"])
            for i, lab in enumerate(labels):
                m, se = mean_stderr(curves[:, i])
                w.writerow([lab, repr(m), repr(se)])
        written.append(out / curve_file(r.method))
    lines = [f"{'method':<18}{'jump-start AUCCESS':>24}{'real interactions':>20}{'evals to 95%':>15}",
             "-" * 77]
    for r in rows:
        lines.append(f"{r.method:<18}{r.auccess_mean:>14.4f} +/- {r.auccess_stderr:<6.4f}"
                     f"{r.interactions_mean:>20.1f}{r.median_evals_to_95:>15.1f}")
    text = "\n".join(lines) + "\n"
    (out / REPORT_TEXT).write_text(text)
    print(text, end="")
    return written + [out / REPORT_TEXT]


def run_all(cfg: _config.ExperimentConfig, out, jobs: int = 1) -> list[Path]:
    cmd_train_upn(cfg, out)
    if any(m in ("policy_prior", "unfiltered_prior") for m in cfg.methods):
        cmd_build_prior(cfg, out)
    cmd_search(cfg, out, jobs=jobs)
    return cmd_report(out, list(cfg.methods))


def csv_outputs(out) -> list[Path]:
    return sorted(Path(out).glob("*.csv"), key=os.fspath)
