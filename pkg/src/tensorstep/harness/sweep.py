"""Convergence sweeps: final-time error against ``dt`` with a log-log fit."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig
from .runner import ExperimentFailure, run_experiment

SWEEP_COLUMNS = ("dt", "l2_error", "max_rank", "steps", "wall_s")


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    slope: float = float("nan")
    intercept: float = float("nan")
    complete: bool = False


class SweepAborted(RuntimeError):
    def __init__(self, message: str, result: SweepResult):
        super().__init__(message)
        self.result = result


def fit_slope(dts: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """Least-squares line through ``(log dt, log error)``; returns (slope, intercept)."""
    x = np.log(np.asarray(dts, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if len(x) < 2 or not np.all(np.isfinite(y)):
        raise ValueError("need at least two positive errors to fit a slope")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def _run_one(cfg: ExperimentConfig) -> dict:
    rec = run_experiment(cfg)
    last = rec.table[-1]
    return {"dt": cfg.dt, "l2_error": last["l2_error"], "max_rank": max(r["max_rank"] for r in rec.table),
            "steps": len(rec.table), "wall_s": sum(r["wall_ms"] for r in rec.table) / 1e3}


def _write(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r["dt"])), repr(float(r["l2_error"])), r["max_rank"], r["steps"],
                        f"{r['wall_s']:.4f}"])


def convergence_sweep(cfg: ExperimentConfig, dts: Sequence[float], out_dir: str | Path | None = None,
                      workers: int = 1) -> SweepResult:
    """Run ``cfg`` at every ``dt`` against a dense reference and fit the order.

    With ``out_dir`` each run writes ``run_dt<dt>.csv`` and the summary goes
    to ``sweep.csv``. A failing run aborts the sweep with the rows finished
    so far (`SweepAborted`).
    """
    dts = sorted((float(x) for x in dts), reverse=True)
    if len(dts) < 3:
        raise ValueError(f"a convergence sweep needs at least 3 step sizes, got {len(dts)}")
    if len(set(dts)) != len(dts):
        raise ValueError("step sizes must be distinct")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    configs = [cfg.replace(dt=dt, reference="dense",
                           output_csv=str(out / f"run_dt{dt:g}.csv") if out is not None else None)
               for dt in dts]
    result = SweepResult()
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for row in pool.map(_run_one, configs):
                    result.rows.append(row)
        else:
            for c in configs:
                result.rows.append(_run_one(c))
    except ExperimentFailure as exc:
        if out is not None:
            _write(out / "sweep.csv", result.rows)
        raise SweepAborted(f"sweep aborted at dt={configs[len(result.rows)].dt:g}: {exc}", result) from exc
    result.slope, result.intercept = fit_slope([r["dt"] for r in result.rows],
                                               [r["l2_error"] for r in result.rows])
    result.complete = True
    if out is not None:
        _write(out / "sweep.csv", result.rows)
    return result
