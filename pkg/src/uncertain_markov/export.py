"""CSV and JSON artifacts.

Every CSV starts with a header row and writes floats with 17 significant
digits, enough to round-trip a double exactly.
"""

from __future__ import annotations

import csv
import json
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .oracle import Estimate, MarkovPolicy, Trajectory
from .semigroup import SemigroupRun


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_run_csv(run: SemigroupRun, out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "state_index", "value", "argmax_control"])
    for t, values, best in zip(run.time_grid, run.iterates, run.argmax_field):
        for k in range(len(values)):
            w.writerow([fmt(t), k, fmt(values[k]), int(best[k])])


def write_policy_csv(policy: MarkovPolicy, labels: Sequence[str], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["cell_start", "cell_end", "state_index", "control_label"])
    b = policy.cell_boundaries
    for j in range(policy.n_cells):
        lo, hi = fmt(b[j]), fmt(b[j + 1])
        for k, g in enumerate(policy.choice[j]):
            w.writerow([lo, hi, k, labels[g]])


def read_policy_csv(src: IO[str], labels: Sequence[str], n_states: int) -> MarkovPolicy:
    rows = list(csv.DictReader(src))
    need = {"cell_start", "cell_end", "state_index", "control_label"}
    if not rows or not need <= set(rows[0]):
        raise ShapeError(f"policy CSV needs columns {sorted(need)}")
    lookup = {label: i for i, label in enumerate(labels)}
    cells: dict[tuple[float, float], dict[int, int]] = {}
    for row in rows:
        key = (float(row["cell_start"]), float(row["cell_end"]))
        label = row["control_label"]
        if label not in lookup:
            raise ParameterError(f"unknown control label {label!r} in policy")
        cells.setdefault(key, {})[int(row["state_index"])] = lookup[label]
    keys = sorted(cells)
    for (a, _), (_, b) in zip(keys[1:], keys[:-1]):
        if a != b:
            raise ParameterError("policy cells do not tile the horizon")
    choice = np.empty((len(keys), n_states), dtype=np.intp)
    for j, key in enumerate(keys):
        if sorted(cells[key]) != list(range(n_states)):
            raise ShapeError(f"cell {key} does not assign every state")
        choice[j] = [cells[key][k] for k in range(n_states)]
    return MarkovPolicy(np.array([keys[0][0]] + [hi for _, hi in keys]), choice)


def write_trajectory_csv(traj: Trajectory, out: IO[str]) -> None:
    """One row per visited state; the first row is the initial state at time 0."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["jump_time", "state_index"])
    w.writerow([fmt(0.0), int(traj.states[0])])
    for t, k in zip(traj.jump_times, traj.states[1:]):
        w.writerow([fmt(t), int(k)])


def write_estimates_csv(estimates: Iterable[Estimate], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["state", "mean", "stderr", "n"])
    for e in estimates:
        w.writerow([e.state, fmt(e.mean), fmt(e.stderr), e.n])


def write_probe_csv(horizons, gaps, out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "sup_gap"])
    for t, g in zip(horizons, gaps):
        w.writerow([fmt(t), fmt(g)])


def write_state_function_csv(values, out: IO[str], column: str = "value") -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["state_index", column])
    for k, v in enumerate(values):
        w.writerow([k, fmt(v)])


def write_json(obj, out: IO[str]) -> None:
    json.dump(obj, out, indent=2, sort_keys=True)
    out.write("\n")
