"""Trajectory-ensemble execution.

Every trajectory ``i`` gets its own stream ``SeedSequence(master_seed,
spawn_key=(i,))``, so its output depends only on the configuration and its
index.  Trajectories run on a process pool (size from ``OTVMC_WORKERS``,
default ``os.cpu_count()``), each result is staged to its own file, and the
ensemble is reduced in index order.  The ensemble CSV is therefore
byte-identical for any worker count or completion order.

Staged files carry a hash of the trajectory-defining configuration; a rerun
into the same directory reuses matching files instead of recomputing them.
"""

from __future__ import annotations

import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ansatz import make_ansatz
from .config import RunConfig
from .engine import DegenerateTensorError
from .integrator import advance_trajectory, init_trajectory
from .observables import ObservableRecord, ensemble_average, local_spin_moments
from .results import atomic_write_text, write_records_csv
from .sampler import draw_samples

log = logging.getLogger(__name__)

MAX_ATTRITION = 0.10
WORKERS_ENV = "OTVMC_WORKERS"


class RunFailedError(RuntimeError):
    """Too many trajectories failed for the ensemble to be trusted."""


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass
class TrajectoryResult:
    index: int
    ok: bool
    m: np.ndarray            # (n_records, 3) per-trajectory <M_i>
    k: np.ndarray            # (n_records, 6) per-trajectory <{M_i, M_j}>/2
    log_Q: np.ndarray        # (n_records,) zero in nonlinear mode
    error: str = ""
    fail_step: int = -1
    acceptance: float = float("nan")


def _moments(ansatz, theta, samples):
    m, k = local_spin_moments(ansatz, theta, samples.x)
    w = samples.weights
    return (w @ m).real, (w @ k).real


def run_trajectory(config: RunConfig, index: int) -> TrajectoryResult:
    """Integrate one trajectory and collect its moments at the record steps."""
    model = config.model
    ansatz = make_ansatz(config.ansatz, model.N)
    traj = init_trajectory(ansatz, model, config.sampler, trajectory_seed(config.master_seed, index),
                           mode=config.mode,
                           bootstrap_scale=float(config.ansatz.get("bootstrap_scale", 1e-3)))
    steps = config.record_steps
    n_rec = len(steps)
    m = np.full((n_rec, 3), np.nan)
    k = np.full((n_rec, 6), np.nan)
    log_Q = np.zeros(n_rec)
    r = 0
    try:
        for step in range(config.n_steps):
            theta = traj.theta
            info = advance_trajectory(traj, model, config.sampler, config.regularization,
                                      config.scheme, config.dt)
            if not np.all(np.isfinite(traj.theta)):
                raise DegenerateTensorError("non-finite parameters", t=traj.t, step=traj.step)
            if step == steps[r]:
                # the predictor's samples were drawn at theta(t_step)
                m[r], k[r] = _moments(ansatz, theta, info.samples)
                r += 1
            if r < n_rec and traj.step == steps[r]:
                log_Q[r] = traj.log_Q
        if r < n_rec:       # final time: fresh samples at the end state
            samples = draw_samples(ansatz, traj.theta, config.sampler, traj.chain)
            m[r], k[r] = _moments(ansatz, traj.theta, samples)
            log_Q[r] = traj.log_Q
    except DegenerateTensorError as err:
        log.warning("trajectory %d failed at step %s: %s", index, err.step, err)
        return TrajectoryResult(index, False, m, k, log_Q, str(err),
                                -1 if err.step is None else int(err.step))
    acc = traj.chain.acceptance_rate if traj.chain is not None else float("nan")
    return TrajectoryResult(index, True, m, k, log_Q, acceptance=acc)


# -- staging ------------------------------------------------------------------------


def _stage_path(out: Path, index: int) -> Path:
    return out / "trajectories" / f"traj_{index:06d}.npz"


def _save_stage(path: Path, key: str, res: TrajectoryResult) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, key=key, ok=res.ok, m=res.m, k=res.k, log_Q=res.log_Q,
             error=res.error, fail_step=res.fail_step, acceptance=res.acceptance)
    os.replace(tmp, path)


def _load_stage(path: Path, key: str, index: int) -> TrajectoryResult | None:
    try:
        with np.load(path) as z:
            if str(z["key"]) != key:
                return None
            return TrajectoryResult(index, bool(z["ok"]), z["m"], z["k"], z["log_Q"],
                                    str(z["error"]), int(z["fail_step"]), float(z["acceptance"]))
    except (OSError, KeyError, ValueError):
        return None


def _run_and_stage(config: RunConfig, index: int, path: str, key: str) -> TrajectoryResult:
    res = run_trajectory(config, index)
    _save_stage(Path(path), key, res)
    return res


# -- ensemble -----------------------------------------------------------------------


def reduce_ensemble(config: RunConfig, results: list[TrajectoryResult]) -> list[ObservableRecord]:
    """Index-ordered reduction of successful trajectories into records."""
    good = sorted((r for r in results if r.ok), key=lambda r: r.index)
    if not good:
        raise RunFailedError("no trajectory completed")
    m = np.stack([r.m for r in good], axis=1)         # (n_rec, T, 3)
    k = np.stack([r.k for r in good], axis=1)
    logQ = np.stack([r.log_Q for r in good], axis=1)
    records = []
    for i, step in enumerate(config.record_steps):
        t = step * config.dt
        if config.mode == "linear":
            records.append(ensemble_average(t, m[i], k[i], config.model.N, "linear",
                                            np.exp(logQ[i])))
        else:
            records.append(ensemble_average(t, m[i], k[i], config.model.N))
    return records


def _code_version() -> dict:
    from . import __version__
    import numba
    return {"otvmc": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


@dataclass
class RunResult:
    records: list[ObservableRecord]
    csv_path: Path
    manifest_path: Path
    n_failed: int


def run_simulation(config: RunConfig, workers: int | None = None,
                   reuse_staged: bool = True) -> RunResult:
    """Run the ensemble described by ``config`` and write its outputs.

    Writes ``manifest.json`` (before and after the run), per-trajectory
    staging files, ``ensemble.csv`` and, with ``save_trajectories``,
    ``trajectories.csv``.  Raises :class:`RunFailedError` if more than 10% of
    the trajectories fail.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = worker_count() if workers is None else workers
    key = config.trajectory_key()
    T = config.n_trajectories
    manifest = {
        "config": config.to_dict(),
        "trajectory_key": key,
        "code_version": _code_version(),
        "started": _now(),
        "finished": None,
        "status": "running",
        "workers": workers,
        "seeds": [{"index": i, "entropy": config.master_seed, "spawn_key": [i]} for i in range(T)],
    }
    manifest_path = out / "manifest.json"
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")

    results: dict[int, TrajectoryResult] = {}
    todo = []
    for i in range(T):
        cached = _load_stage(_stage_path(out, i), key, i) if reuse_staged else None
        if cached is not None:
            results[i] = cached
        else:
            todo.append(i)
    if len(todo) < T:
        log.info("reusing %d staged trajectories", T - len(todo))

    t0 = time.time()
    if workers <= 1 or len(todo) <= 1:
        for i in todo:
            results[i] = _run_and_stage(config, i, str(_stage_path(out, i)), key)
            log.info("trajectory %d done (%d/%d, %.0fs)", i, len(results), T, time.time() - t0)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(_run_and_stage, config, i, str(_stage_path(out, i)), key): i
                    for i in todo}
            for f in as_completed(futs):
                res = f.result()
                results[res.index] = res
                log.info("trajectory %d done (%d/%d, %.0fs)", res.index, len(results), T,
                         time.time() - t0)

    ordered = [results[i] for i in range(T)]
    failed = [r for r in ordered if not r.ok]
    manifest["trajectories"] = [
        {"index": r.index, "status": "ok" if r.ok else "failed", "error": r.error,
         "fail_step": r.fail_step,
         "acceptance": None if np.isnan(r.acceptance) else r.acceptance}
        for r in ordered]
    manifest["n_failed"] = len(failed)
    manifest["finished"] = _now()
    csv_path = out / "ensemble.csv"
    if len(failed) > MAX_ATTRITION * T:
        manifest["status"] = "failed"
        atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")
        raise RunFailedError(f"{len(failed)} of {T} trajectories failed "
                             f"(limit {MAX_ATTRITION:.0%})")
    if failed:
        log.warning("attrition: %d of %d trajectories failed", len(failed), T)

    records = reduce_ensemble(config, ordered)
    write_records_csv(records, csv_path)
    if config.save_trajectories:
        _write_trajectories_csv(config, ordered, out / "trajectories.csv")
    manifest["status"] = "completed"
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")
    return RunResult(records, csv_path, manifest_path, len(failed))


def _write_trajectories_csv(config: RunConfig, results: list[TrajectoryResult], path) -> None:
    cols = ["traj", "t", "mx", "my", "mz", "kxx", "kxy", "kxz", "kyy", "kyz", "kzz", "log_Q"]
    lines = [",".join(cols)]
    times = [s * config.dt for s in config.record_steps]
    for r in results:
        if not r.ok:
            continue
        for i, t in enumerate(times):
            vals = [t, *r.m[i], *r.k[i], r.log_Q[i]]
            lines.append(",".join([str(r.index)] + [format(float(v), ".17g") for v in vals]))
    atomic_write_text(path, "\n".join(lines) + "\n")
