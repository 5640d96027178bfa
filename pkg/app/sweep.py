"""Parameter sweeps over (delta, n, ...) grids, written as a resumable CSV."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

from app.baselines import hierarchical_clustering, spectral_clustering
from app.estimator import EstimatorConfig, cluster_error, estimate_x, pair_cost, recover_partition
from app.hermite import count_labelings
from app.model import ModelParams, make_rng, sample_instance

logger = logging.getLogger(__name__)

GRID_KEYS = ("n", "d", "K", "delta", "L", "M", "lambda")
KEY_COLUMNS = ("n", "d", "K", "delta", "L", "M", "lambda", "seed")


@dataclass(frozen=True)
class SweepTask:
    n: int
    d: int
    K: int
    delta: float
    L: Optional[int]
    M: Optional[int]
    lam: Optional[int]
    seed: int
    partition: bool = False
    timing: bool = False
    override_threshold: Optional[float] = None
    robust: bool = False

    @property
    def params(self) -> ModelParams:
        return ModelParams(n=self.n, d=self.d, K=self.K, delta=self.delta)

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig.theoretical(
            self.n,
            self.K,
            self.delta,
            L=self.L,
            M=self.M,
            lam=self.lam,
            override_threshold=self.override_threshold,
            robust=self.robust,
        )


@dataclass(frozen=True)
class SweepRecord:
    n: int
    d: int
    K: int
    delta: float
    L: int
    M: int
    lam: int
    seed: int
    x: int
    x_hat: int
    median_T: float
    threshold: float
    cluster_err: float
    hc_err: float
    spectral_err: float
    runtime_ms: int

    def row(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return {column: _format(out[column]) for column in SWEEP_HEADER}


SWEEP_HEADER = tuple("lambda" if f.name == "lam" else f.name for f in fields(SweepRecord))


def _format(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def expand_grid(base: Mapping, grid: Mapping) -> list[dict]:
    """Cartesian product of ``grid`` on top of ``base``, in the grid's key order."""
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise KeyError(f"unknown grid keys: {sorted(unknown)}")
    keys = list(grid)
    points = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        point = dict(base)
        point.update(zip(keys, combo))
        points.append(point)
    return points


def sweep_tasks(base: Mapping, grid: Mapping, trials: int, seed: int, partition: bool = False, timing: bool = False) -> list[SweepTask]:
    tasks = []
    for point in expand_grid(base, grid):
        for trial in range(trials):
            tasks.append(
                SweepTask(
                    n=int(point["n"]),
                    d=int(point["d"]),
                    K=int(point["K"]),
                    delta=float(point["delta"]),
                    L=point.get("L"),
                    M=point.get("M"),
                    lam=point.get("lambda"),
                    seed=seed + trial,
                    partition=partition,
                    timing=timing,
                    override_threshold=point.get("override_threshold"),
                    robust=bool(point.get("robust", False)),
                )
            )
    return tasks


def task_cost(task: SweepTask) -> int:
    """Labelings evaluated by one trial."""
    cfg = task.estimator_config()
    size = (task.n - 2) // cfg.lam
    cost = cfg.lam * count_labelings(cfg.template.num_nodes, size + 2)
    if task.partition:
        cost += pair_cost(task.n, cfg)
    return cost


def run_trial(task: SweepTask) -> SweepRecord:
    start = time.perf_counter()
    cfg = task.estimator_config()
    inst = sample_instance(task.params, make_rng(task.seed, 0))
    decision = estimate_x(inst, 0, 1, cfg, make_rng(task.seed, 1))
    truth = inst.partition(signed=True)
    groups = 2 * task.K
    hc = cluster_error(hierarchical_clustering(inst.Y, min(groups, task.n)), truth)
    spectral = cluster_error(spectral_clustering(inst.Y, task.K, min(groups, task.n)), truth)
    recovered = math.nan
    if task.partition:
        recovered = cluster_error(recover_partition(inst, cfg, task.seed), truth)
    elapsed = int(round((time.perf_counter() - start) * 1000)) if task.timing else 0
    return SweepRecord(
        n=task.n,
        d=task.d,
        K=task.K,
        delta=task.delta,
        L=cfg.L,
        M=cfg.M,
        lam=cfg.lam,
        seed=task.seed,
        x=int(inst.kstar[0] == inst.kstar[1]),
        x_hat=decision.x_hat,
        median_T=decision.median_T,
        threshold=decision.threshold,
        cluster_err=recovered,
        hc_err=hc,
        spectral_err=spectral,
        runtime_ms=elapsed,
    )


def _key(row: Mapping) -> tuple:
    return tuple(str(row[c]) for c in KEY_COLUMNS)


def options_path(out: Path) -> Path:
    """Sidecar recording the estimator options a sweep CSV was written with."""
    return out.with_name(out.name + ".options.json")


def sweep_options(tasks: Iterable[SweepTask]) -> list[dict]:
    seen = {(t.partition, t.robust, t.override_threshold) for t in tasks}
    return [
        {"partition": partition, "robust": robust, "override_threshold": threshold}
        for partition, robust, threshold in sorted(seen, key=repr)
    ]


def read_completed(path: Path, options: Optional[list[dict]] = None) -> dict[tuple, dict]:
    """Complete rows of an earlier (possibly interrupted) run, keyed by parameters and seed.

    With ``options``, rows count only if the sidecar records the same estimator options.
    """
    if not path.exists():
        return {}
    if options is not None:
        sidecar = options_path(path)
        stored = json.loads(sidecar.read_text()) if sidecar.exists() else None
        if stored != options:
            logger.warning("%s was written with other estimator options; starting over", path)
            return {}
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != SWEEP_HEADER:
            logger.warning("%s has a different header; starting over", path)
            return {}
        done = {}
        for row in reader:
            if any(row.get(c) in (None, "") for c in SWEEP_HEADER):
                continue
            done[_key(row)] = row
    return done


def _task_key(task: SweepTask) -> tuple:
    cfg = task.estimator_config()
    row = {
        "n": task.n,
        "d": task.d,
        "K": task.K,
        "delta": _format(task.delta),
        "L": cfg.L,
        "M": cfg.M,
        "lambda": cfg.lam,
        "seed": task.seed,
    }
    return _key(row)


def _execute(tasks: list[SweepTask], threads: int) -> Iterator[SweepRecord]:
    if threads <= 1 or len(tasks) <= 1:
        yield from map(run_trial, tasks)
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(run_trial, tasks, chunksize=max(1, len(tasks) // (4 * threads)))


def run_sweep(tasks: Iterable[SweepTask], out: Path, threads: int = 1) -> int:
    """Run the missing tasks and rewrite ``out`` in task order; returns the number of new rows."""
    tasks = list(tasks)
    options = sweep_options(tasks)
    done = read_completed(out, options)
    keys = [_task_key(t) for t in tasks]
    missing = [t for t, k in zip(tasks, keys) if k not in done]
    logger.info("sweep: %d tasks, %d already done, %d to run", len(tasks), len(tasks) - len(missing), len(missing))
    out.parent.mkdir(parents=True, exist_ok=True)
    options_path(out).write_text(json.dumps(options, indent=2) + "\n")
    # Rows are written as they finish so an interrupted run can resume.
    with out.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_HEADER, lineterminator="\n")
        writer.writeheader()
        writer.writerows(done.values())
        handle.flush()
        for record in _execute(missing, threads):
            row = record.row()
            done[_key(row)] = row
            writer.writerow(row)
            handle.flush()
    tmp = out.with_suffix(out.suffix + ".tmp")
    with tmp.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_HEADER, lineterminator="\n")
        writer.writeheader()
        for k in keys:
            writer.writerow(done[k])
    tmp.replace(out)
    return len(missing)


__all__ = [
    "GRID_KEYS",
    "SWEEP_HEADER",
    "SweepTask",
    "SweepRecord",
    "expand_grid",
    "sweep_tasks",
    "task_cost",
    "run_trial",
    "options_path",
    "sweep_options",
    "read_completed",
    "run_sweep",
]
