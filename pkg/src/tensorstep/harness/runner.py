"""Run one configured experiment and write its per-step CSV."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from .. import __version__
from ..dense import check_budget
from ..integrators import (ExplicitStepper, ImplicitStepper, IntegrationError, RunRecord,
                           SplittingStepper, ThresholdSchedule, integrate)
from ..problems import build_allen_cahn, build_fokker_planck, build_nls
from ..problems.base import ProblemSpec, reference_solution
from ..solvers import GmresConfig, NewtonConfig
from ..tt import TtTensor, tt_norm
from .config import EXPLICIT, IMPLICIT, SPLITTINGS, ExperimentConfig
from .tensor_io import save_tt

log = logging.getLogger(__name__)

COLUMNS = ("step", "t", "l2_error", "max_rank", "storage_entries", "newton_iters", "gmres_iters",
           "e_r", "mass", "hamiltonian", "wall_ms")


class ExperimentFailure(RuntimeError):
    """A run stopped on a step failure; ``record`` holds the completed steps."""

    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


def build_problem(cfg: ExperimentConfig) -> ProblemSpec:
    if cfg.problem == "allen_cahn":
        return build_allen_cahn(cfg.n, cfg.eps, reaction=cfg.reaction)
    if cfg.problem == "fokker_planck":
        return build_fokker_planck(cfg.n, cfg.d, cfg.sigma, drift_on=cfg.drift)
    return build_nls(cfg.n, cfg.d, cfg.theta, cfg.eps_nl, potential=cfg.potential)


def schedule_for(cfg: ExperimentConfig, problem: ProblemSpec) -> ThresholdSchedule:
    return ThresholdSchedule(k1=cfg.k1, k2=cfg.k2, a=cfg.a, b=cfg.b, g=cfg.g, k=cfg.k, eta=cfg.eta,
                             norm_scale=problem.norm_scale, eps_tol=cfg.eps_tol, rank_cap=cfg.rank_cap)


def make_stepper(cfg: ExperimentConfig, problem: ProblemSpec):
    sched = schedule_for(cfg, problem)
    newton = NewtonConfig(eta=cfg.eta, forcing=cfg.forcing, max_iters=cfg.newton_max_iters,
                          gmres=GmresConfig(restart=cfg.gmres_restart, max_restarts=cfg.gmres_max_restarts),
                          rank_cap=cfg.rank_cap, seed=cfg.seed)

    def base(G, J):
        if cfg.scheme in IMPLICIT:
            return ImplicitStepper(IMPLICIT[cfg.scheme], G, J, sched, newton, compress=cfg.compress)
        return ExplicitStepper(EXPLICIT[cfg.scheme], G, sched)

    if cfg.splitting == "none":
        return base(problem.G, problem.jacobian)
    if not problem.split:
        raise ValueError(f"problem {problem.name} defines no splitting")
    return SplittingStepper(SPLITTINGS[cfg.splitting], problem.split, lambda fl: base(fl.G, fl.jacobian))


def step_times(dt: float, T: float) -> list[float]:
    """Output times of `integrate` (the last step is shortened to land on ``T``)."""
    n = max(1, math.ceil(T / dt - 1e-9))
    return [k * dt for k in range(1, n)] + [T]


# ---------------------------------------------------------------------------
# dense reference with an on-disk cache


def reference_key(cfg: ExperimentConfig) -> str:
    payload = {**cfg.problem_key(), "T": cfg.T, "dt": cfg.dt, "abs_tol": cfg.reference_abs_tol}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:20]


def dense_reference(cfg: ExperimentConfig, problem: ProblemSpec) -> np.ndarray:
    """Reference states at every step time, stacked along axis 0."""
    times = step_times(cfg.dt, cfg.T)
    dtype = np.complex128 if problem.complex_field else np.float64
    check_budget((len(times),) + problem.shape, dtype, "dense reference trajectory")
    path = None
    if cfg.cache_dir:
        path = Path(cfg.cache_dir) / f"ref-{reference_key(cfg)}.npy"
        if path.exists():
            try:
                cached = np.load(path, allow_pickle=False)
                if cached.shape == (len(times),) + problem.shape:
                    return cached
            except (OSError, ValueError):
                pass
            log.warning("ignoring unreadable reference cache %s", path)
    states = np.stack(reference_solution(problem, cfg.T, cfg.reference_abs_tol, t_eval=times))
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npy")
        with os.fdopen(fd, "wb") as fh:
            np.save(fh, states)
        os.replace(tmp, path)
    return states


# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class _CsvSink:
    def __init__(self, path: str | None):
        self._fh = None
        if path:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w", newline="")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(COLUMNS)

    def write(self, row: dict) -> None:
        if self._fh is not None:
            self._writer.writerow([f"{row[c]:.3f}" if c == "wall_ms" else _fmt(row[c]) for c in COLUMNS])
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def norm_guard(f0: TtTensor, factor: float = 1e3) -> Callable[[TtTensor], bool]:
    """Stop condition: the state norm left ``factor * ||f0||`` or became non-finite."""
    limit = factor * tt_norm(f0)

    def diverged(f: TtTensor) -> bool:
        nrm = tt_norm(f)
        return not np.isfinite(nrm) or nrm > limit
    return diverged


def run_experiment(cfg: ExperimentConfig, stop_when: Callable[[TtTensor], bool] | None = None,
                   problem: ProblemSpec | None = None) -> RunRecord:
    """Integrate ``cfg`` and stream one CSV row per step to ``cfg.output_csv``.

    Raises `ExperimentFailure` (carrying the partial record) when a step
    fails; rows written before the failure stay in the CSV.
    """
    t_start = time.perf_counter()
    problem = problem or build_problem(cfg)
    refs = dense_reference(cfg, problem) if cfg.reference == "dense" else None
    stepper = make_stepper(cfg, problem)
    obs = problem.observables
    table: list[dict] = []
    sink = _CsvSink(cfg.output_csv)

    def observe(step: int, f: TtTensor, rep) -> None:
        err = None
        if refs is not None:
            err = problem.norm_scale * float(np.linalg.norm(f.full() - refs[step - 1]))
        row = {"step": step, "t": rep.t, "l2_error": err, "max_rank": rep.max_rank,
               "storage_entries": rep.storage, "newton_iters": rep.newton_iters,
               "gmres_iters": rep.gmres_iters, "e_r": rep.e_r * problem.norm_scale,
               "mass": obs["mass"](f),
               "hamiltonian": obs["hamiltonian"](f) if "hamiltonian" in obs else None,
               "wall_ms": 1e3 * rep.wall_time}
        table.append(row)
        sink.write(row)

    stops = [s for s in (stop_when, _steady_state(cfg, problem)) if s is not None]

    def stop(f):
        return any(s(f) for s in stops)

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            record = integrate(problem.f0, stepper, cfg.dt, cfg.T, observers=(observe,),
                               stop_when=stop if stops else None)
    except IntegrationError as exc:
        exc.record.table = table
        _annotate(exc.record, cfg, t_start)
        raise ExperimentFailure(str(exc), exc.record) from exc
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        record = RunRecord(table=table)
        _annotate(record, cfg, t_start)
        raise ExperimentFailure(f"run aborted after {len(table)} steps: {exc}", record) from exc
    finally:
        sink.close()
    record.table = table
    if cfg.final_state and record.final is not None:
        save_tt(cfg.final_state, record.final)
    _annotate(record, cfg, t_start)
    return record


def _steady_state(cfg: ExperimentConfig, problem: ProblemSpec):
    if cfg.steady_state_tol is None:
        return None

    def settled(f: TtTensor) -> bool:
        return problem.l2(problem.G(f)) < cfg.steady_state_tol
    return settled


def _annotate(record: RunRecord, cfg: ExperimentConfig, t_start: float) -> None:
    record.metadata.update({
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "versions": {"tensorstep": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_total_s": time.perf_counter() - t_start,
        "steps_completed": len(record.table),
    })
