"""Readers and writers for every on-disk artifact.

Column orders are fixed and documented in FORMATS.md. Floats are written
with ``repr`` so that a value read back is bit-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ParameterError
from .plasticity import SynapseMatrix

ITERATION_COLUMNS = ["iteration", "state", "action", "reward", "baseline", "wall_time_s"]


class LogFormatError(ValueError):
    """A log that is empty, truncated or malformed. ``last_valid`` is a 1-based line number."""

    def __init__(self, msg: str, last_valid: int = 0):
        super().__init__(msg)
        self.last_valid = last_valid


def _f(x: float) -> str:
    return repr(float(x))


# weight snapshots

def write_weights(path, weights: SynapseMatrix) -> None:
    """One row per input unit. Quantized weights are written as integer levels."""
    n_in, n_out = weights.shape
    levels = weights.levels or 0
    with open(path, "w") as fh:
        fh.write(f"# shape {n_in} {n_out} levels {levels} w_min {_f(weights.w_min)} "
                 f"w_max {_f(weights.w_max)}\n")
        if levels:
            for row in weights.level_indices():
                fh.write(" ".join(str(int(v)) for v in row) + "\n")
        else:
            for row in weights.w:
                fh.write(" ".join(_f(v) for v in row) + "\n")


def read_weights(path) -> SynapseMatrix:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ParameterError(f"{path}: missing header line")
    head = lines[0][1:].split()
    meta = dict(zip(head[::2], head[1::2]))
    try:
        n_in, levels = int(meta["shape"]), int(meta["levels"])
        n_out = int(head[head.index("shape") + 2])
        w_min, w_max = float(meta["w_min"]), float(meta["w_max"])
    except (KeyError, ValueError, IndexError):
        raise ParameterError(f"{path}: malformed header {lines[0]!r}") from None
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(rows) != n_in or any(len(r) != n_out for r in rows):
        raise ParameterError(f"{path}: body does not match shape {n_in}x{n_out}")
    if levels:
        return SynapseMatrix.from_levels(np.array(rows, dtype=np.int64), w_min, w_max, levels)
    return SynapseMatrix(np.array(rows, dtype=np.float64), w_min, w_max, None)


def heatmap_rows(weights: SynapseMatrix) -> list[tuple[int, int, str]]:
    """``(row, col, level)`` for every synapse; raw weights when continuous."""
    vals = weights.level_indices() if weights.levels else weights.w
    n_in, n_out = weights.shape
    fmt = str if weights.levels else _f
    return [(i, j, fmt(vals[i, j])) for i in range(n_in) for j in range(n_out)]


def write_heatmap(path, weights: SynapseMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "level"])
        w.writerows(heatmap_rows(weights))


# iteration logs

def iteration_row(log) -> list:
    return [log.iteration, log.state, log.action, _f(log.reward), _f(log.baseline),
            _f(log.wall_time)]


def iteration_record(log) -> dict:
    return {"type": "iteration", "iteration": log.iteration, "state": log.state,
            "action": log.action, "reward": log.reward, "baseline": log.baseline,
            "rates": [float(r) for r in log.rate_vector],
            "weight_delta_norm": log.weight_delta_norm, "wall_time_s": log.wall_time}


class RunWriter:
    """Streams the CSV and NDJSON logs while an experiment runs."""

    def __init__(self, out_dir, ndjson: bool = True):
        self.out_dir = Path(out_dir)
        self._csv_fh = open(self.out_dir / "iterations.csv", "w", newline="")
        self._csv = csv.writer(self._csv_fh)
        self._csv.writerow(ITERATION_COLUMNS)
        self._nd = open(self.out_dir / "log.ndjson", "w") if ndjson else None

    def record(self, rec: dict) -> None:
        if self._nd:
            self._nd.write(json.dumps(rec) + "\n")

    def iteration(self, log) -> None:
        self._csv.writerow(iteration_row(log))
        self.record(iteration_record(log))

    def evaluation(self, iteration: int, fraction: float) -> None:
        self.record({"type": "evaluation", "iteration": iteration, "catch_fraction": fraction})

    def close(self) -> None:
        self._csv_fh.close()
        if self._nd:
            self._nd.close()


def final_record(result) -> dict:
    m, w = result.metrics, result.weights
    return {"type": "final", "n_iterations": len(result.logs),
            "eval_every": result.config.eval_every,
            "initial_catch_fraction": m.initial_catch_fraction,
            "final_catch_fraction": m.final_catch_fraction,
            "diagonal_dominance": m.diagonal_dominance,
            "weight_excitability_correlation": m.weight_excitability_correlation,
            "correlation_p_value": m.correlation_p_value,
            "final_policy": list(m.final_policy),
            "weights": {"w_min": w.w_min, "w_max": w.w_max, "levels": w.levels or 0,
                        "values": (w.level_indices() if w.levels else w.w).tolist()}}


def read_ndjson(path) -> list[dict]:
    """Parse a log, raising LogFormatError on the first bad line or a missing final record."""
    records = []
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict) or "type" not in rec:
                    raise ValueError
            except ValueError:
                raise LogFormatError(f"{path}: line {n} is not a valid record; "
                                     f"last valid record is line {n - 1}", n - 1) from None
            records.append(rec)
    if not records:
        raise LogFormatError(f"{path}: log is empty", 0)
    if records[-1]["type"] != "final":
        raise LogFormatError(f"{path}: log is truncated (no final record); "
                             f"last valid record is line {len(records)}", len(records))
    return records


def read_iterations_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise LogFormatError(f"{path}: log is empty", 0)
        if header != ITERATION_COLUMNS:
            raise LogFormatError(f"{path}: unexpected header {header}", 0)
        for n, row in enumerate(reader, start=2):
            try:
                if len(row) != len(ITERATION_COLUMNS):
                    raise ValueError
                rows.append({"iteration": int(row[0]), "state": int(row[1]),
                             "action": int(row[2]), "reward": float(row[3]),
                             "baseline": float(row[4]), "wall_time_s": float(row[5])})
            except ValueError:
                raise LogFormatError(f"{path}: line {n} is malformed; "
                                     f"last valid record is line {n - 1}", n - 1) from None
    if not rows:
        raise LogFormatError(f"{path}: log has no records", 1)
    return rows


# metrics

def write_curve(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer)) and not isinstance(v, bool)
                        else _f(v) for v in row])


def write_catch_curve(path, curve) -> None:
    write_curve(path, ["iteration", "catch_fraction"], curve)


def write_reward_curve(path, curve) -> None:
    write_curve(path, ["iteration", "mean_reward"], curve)


def reward_moving_average(rewards: Sequence[float], window: int) -> list[tuple[int, float]]:
    """Trailing mean over up to ``window`` iterations, one row per iteration."""
    if window < 1:
        raise ParameterError("window must be >= 1")
    r = np.asarray(rewards, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(r)])
    out = []
    for k in range(1, r.size + 1):
        lo = max(0, k - window)
        out.append((k, float((c[k] - c[lo]) / (k - lo))))
    return out


def summary_items(final: dict, catch_curve) -> list[tuple[str, object]]:
    last = catch_curve[-1][1] if catch_curve else None
    return [("n_iterations", final["n_iterations"]),
            ("initial_catch_fraction", final["initial_catch_fraction"]),
            ("final_catch_fraction", last),
            ("diagonal_dominance", final["diagonal_dominance"]),
            ("weight_excitability_correlation", final["weight_excitability_correlation"]),
            ("correlation_p_value", final["correlation_p_value"])]


def write_summary(path, items) -> None:
    with open(path, "w") as fh:
        for key, value in items:
            if value is None:
                text = "nan"
            elif isinstance(value, float):
                text = _f(value)
            else:
                text = str(value)
            fh.write(f"{key} = {text}\n")


def read_summary(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def weights_from_final(final: dict) -> SynapseMatrix:
    w = final["weights"]
    if w["levels"]:
        return SynapseMatrix.from_levels(np.array(w["values"], dtype=np.int64),
                                         w["w_min"], w["w_max"], w["levels"])
    return SynapseMatrix(np.array(w["values"], dtype=np.float64), w["w_min"], w["w_max"], None)


def write_aggregate(path, rows) -> None:
    write_curve(path, ["iteration", "median", "q25", "q75", "n_seeds"], rows)


def write_metrics(out_dir, catch_curve, reward_curve, summary) -> None:
    """The three metric files shared by a run and by its replay."""
    out_dir = Path(out_dir)
    write_catch_curve(out_dir / "catch_fraction.csv", catch_curve)
    write_reward_curve(out_dir / "mean_reward.csv", reward_curve)
    write_summary(out_dir / "summary.txt", summary)


def mean_reward_rows(rewards: Sequence[float], eval_every: int) -> list[tuple[int, float]]:
    """Mean reward over each consecutive block of ``eval_every`` iterations."""
    r = np.asarray(rewards, dtype=np.float64)
    return [(end, float(r[end - eval_every:end].mean()))
            for end in range(eval_every, r.size + 1, eval_every)]
