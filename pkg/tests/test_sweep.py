import csv
from dataclasses import replace

import pytest

from app.estimator import EstimatorConfig, mom_threshold
from app.sweep import (
    SWEEP_HEADER,
    expand_grid,
    read_completed,
    run_sweep,
    run_trial,
    sweep_options,
    sweep_tasks,
    task_cost,
)

BASE = {"n": 12, "d": 2, "K": 2, "delta": 1.0, "L": 1, "M": 1, "lambda": 3}
GRID = {"delta": [1.0, 3.0]}


def test_header():
    assert SWEEP_HEADER == (
        "n", "d", "K", "delta", "L", "M", "lambda", "seed", "x", "x_hat",
        "median_T", "threshold", "cluster_err", "hc_err", "spectral_err", "runtime_ms",
    )


def test_expand_grid():
    points = expand_grid(BASE, {"delta": [0.0, 2.0], "n": [10, 20, 30]})
    assert len(points) == 6
    assert [(p["delta"], p["n"]) for p in points[:3]] == [(0.0, 10), (0.0, 20), (0.0, 30)]
    assert all(p["d"] == 2 for p in points)
    with pytest.raises(KeyError):
        expand_grid(BASE, {"sigma": [1.0]})


def test_sweep_tasks():
    tasks = sweep_tasks(BASE, GRID, trials=3, seed=10)
    assert len(tasks) == 6
    assert [t.seed for t in tasks] == [10, 11, 12, 10, 11, 12]
    assert {t.delta for t in tasks} == {1.0, 3.0}
    assert tasks[0].lam == 3 and not tasks[0].partition


def test_task_cost_grows_with_partition():
    task = sweep_tasks(BASE, GRID, trials=1, seed=0)[0]
    with_pairs = replace(task, partition=True)
    assert 0 < task_cost(task) < task_cost(with_pairs)


def test_run_trial():
    task = sweep_tasks(BASE, {"delta": [3.0]}, trials=1, seed=4)[0]
    record = run_trial(task)
    assert record.x in (0, 1) and record.x_hat in (0, 1)
    cfg = EstimatorConfig.theoretical(12, 2, 3.0, L=1, M=1, lam=3)
    assert record.threshold == pytest.approx(mom_threshold(cfg, batch_size=3))
    assert record.runtime_ms == 0
    assert record.row()["cluster_err"] == "nan"
    assert record.row() == run_trial(task).row()


def _read(path):
    with path.open(newline="") as handle:
        return list(csv.DictReader(handle))


def test_run_sweep_writes_and_resumes(tmp_path):
    out = tmp_path / "nested" / "sweep.csv"
    tasks = sweep_tasks(BASE, GRID, trials=2, seed=1)
    assert run_sweep(tasks, out) == 4
    first = out.read_bytes()
    rows = _read(out)
    assert [r["delta"] for r in rows] == ["1.0", "1.0", "3.0", "3.0"]
    assert [r["seed"] for r in rows] == ["1", "2", "1", "2"]

    assert run_sweep(tasks, out) == 0
    assert out.read_bytes() == first

    # Drop the last row and cut the one before it in half.
    lines = first.decode().splitlines(keepends=True)
    out.write_text("".join(lines[:-2]) + lines[-2][: len(lines[-2]) // 2])
    assert len(read_completed(out)) == 2
    assert run_sweep(tasks, out) == 2
    assert out.read_bytes() == first


def test_run_sweep_starts_over_when_estimator_options_change(tmp_path):
    out = tmp_path / "sweep.csv"
    tasks = sweep_tasks(BASE, GRID, trials=2, seed=1)
    assert run_sweep(tasks, out) == 4
    assert sweep_options(tasks) == [{"partition": False, "robust": False, "override_threshold": None}]
    assert read_completed(out, sweep_options(tasks)).keys() == read_completed(out).keys()

    robust = [replace(t, robust=True) for t in tasks]
    assert read_completed(out, sweep_options(robust)) == {}
    assert run_sweep(robust, out) == 4
    assert run_sweep(robust, out) == 0

    overridden = sweep_tasks({**BASE, "override_threshold": 0.0}, GRID, trials=2, seed=1)
    assert run_sweep(overridden, out) == 4
    assert {row["x_hat"] for row in _read(out)} <= {"0", "1"}
    assert run_sweep(sweep_tasks(BASE, GRID, trials=2, seed=1, partition=True), out) == 4


def test_run_sweep_starts_over_on_foreign_header(tmp_path):
    out = tmp_path / "sweep.csv"
    out.write_text("a,b\n1,2\n")
    assert read_completed(out) == {}
    assert run_sweep(sweep_tasks(BASE, GRID, trials=1, seed=0), out) == 2


@pytest.mark.slow
def test_worker_processes_give_the_same_file(tmp_path):
    tasks = sweep_tasks(BASE, GRID, trials=3, seed=5)
    run_sweep(tasks, tmp_path / "serial.csv", threads=1)
    run_sweep(tasks, tmp_path / "pool.csv", threads=2)
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "pool.csv").read_bytes()
