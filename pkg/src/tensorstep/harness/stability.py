"""Explicit-versus-implicit stability comparisons and the inexact-solve floor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..linop import TtLinOp, apply_linop, linop_to_matrix
from ..solvers import GmresConfig, gmres_solve
from ..tt import TtTensor, tt_norm, tt_zeros
from .config import EXPLICIT, IMPLICIT, ConfigError, ExperimentConfig
from .runner import ExperimentFailure, build_problem, run_experiment

GROWTH_LIMIT = 1e3


@dataclass
class RunOutcome:
    scheme: str
    steps: int
    max_growth: float  # max ||f_k|| / ||f_0|| over the run
    diverged: bool
    final_error: float | None = None
    failure: str = ""


@dataclass
class StabilityVerdict:
    explicit: RunOutcome
    implicit: RunOutcome

    @property
    def explicit_diverged(self) -> bool:
        return self.explicit.diverged

    @property
    def implicit_bounded(self) -> bool:
        return not self.implicit.diverged

    def as_dict(self) -> dict:
        return {"explicit_diverged": self.explicit_diverged, "implicit_bounded": self.implicit_bounded,
                "explicit": vars(self.explicit), "implicit": vars(self.implicit)}


def _outcome(cfg: ExperimentConfig) -> RunOutcome:
    problem = build_problem(cfg)
    n0 = tt_norm(problem.f0)
    peak = [1.0]

    def guard(f: TtTensor) -> bool:
        ratio = tt_norm(f) / n0
        if not np.isfinite(ratio):
            peak[0] = np.inf
            return True
        peak[0] = max(peak[0], ratio)
        return ratio > GROWTH_LIMIT

    try:
        rec = run_experiment(cfg, stop_when=guard, problem=problem)
    except ExperimentFailure as exc:
        # a blow-up can surface as a failed step (non-finite SVD input, ...)
        return RunOutcome(cfg.scheme, len(exc.record.table), peak[0], True, failure=str(exc))
    err = rec.table[-1]["l2_error"] if rec.table else None
    return RunOutcome(cfg.scheme, len(rec.table), peak[0], rec.stopped_early, final_error=err)


def stability_compare(cfg_explicit: ExperimentConfig, cfg_implicit: ExperimentConfig) -> StabilityVerdict:
    """Run an explicit and an implicit scheme on the same problem and ``dt``.

    A run counts as diverged once ``||f|| > 1e3 ||f_0||`` (or on a non-finite
    state, or a step failure); it is stopped there.
    """
    if cfg_explicit.scheme not in EXPLICIT:
        raise ConfigError("scheme", f"{cfg_explicit.scheme} is not an explicit scheme")
    if cfg_implicit.scheme not in IMPLICIT:
        raise ConfigError("scheme", f"{cfg_implicit.scheme} is not an implicit scheme")
    if cfg_explicit.problem_key() != cfg_implicit.problem_key():
        raise ConfigError("problem", "the two configurations describe different problems")
    if cfg_explicit.dt != cfg_implicit.dt or cfg_explicit.T != cfg_implicit.T:
        raise ConfigError("dt", "the two configurations must share dt and T")
    return StabilityVerdict(_outcome(cfg_explicit), _outcome(cfg_implicit))


# ---------------------------------------------------------------------------
# inexact linear stepping  A f_k = W f_{k-1}


@dataclass
class LinearStabilityReport:
    norms: list = field(default_factory=list)      # ||f^_k||
    distances: list = field(default_factory=list)  # ||f^_k - f_k|| with f_k exact
    residuals: list = field(default_factory=list)  # ||A f^_k - W f^_{k-1}||
    bound: float = np.nan
    norm_A: float = np.nan
    norm_A_inv: float = np.nan
    contraction: float = np.nan  # ||A^{-1} W||
    restart: int = 0


def inexact_linear_stepping(A: TtLinOp, W: TtLinOp, f0: TtTensor, steps: int, eta: float,
                            restart: int = 30) -> LinearStabilityReport:
    """March ``A f_k = W f_{k-1}`` with TT-GMRES at tolerance ``eta / ||W f_{k-1}||``.

    Each solve then has absolute residual at most ``eta``. The exact sequence
    and the operator norms come from dense matrices, so keep the grid small.
    The returned ``bound`` is ``m ||A|| ||A^-1||^2 eta / (1 - ||A^-1 W||)``.
    """
    Ad, Wd = linop_to_matrix(A), linop_to_matrix(W)
    Ainv = np.linalg.inv(Ad)
    rep = LinearStabilityReport(restart=restart)
    rep.norm_A = float(np.linalg.norm(Ad, 2))
    rep.norm_A_inv = float(np.linalg.norm(Ainv, 2))
    rep.contraction = float(np.linalg.norm(Ainv @ Wd, 2))
    if rep.contraction < 1:
        rep.bound = restart * rep.norm_A * rep.norm_A_inv**2 * eta / (1 - rep.contraction)
    else:
        rep.bound = np.inf
    exact = f0.full().reshape(-1)
    f = f0
    for _ in range(steps):
        rhs = apply_linop(W, f)
        scale = tt_norm(rhs)
        if scale <= eta:
            # the zero tensor already meets the absolute residual eta
            f_new = tt_zeros(f.shape, dtype=f.dtype)
        else:
            cfg = GmresConfig(rel_tol=eta / scale, restart=restart)
            f_new, srep = gmres_solve(A, rhs, None, cfg)
            if not srep.converged:
                raise RuntimeError(f"GMRES did not reach eta={eta:g}: {srep.message}")
        exact = Ainv @ (Wd @ exact)
        dense_new = f_new.full().reshape(-1)
        rep.residuals.append(float(np.linalg.norm(Ad @ dense_new - Wd @ f.full().reshape(-1))))
        rep.distances.append(float(np.linalg.norm(dense_new - exact)))
        rep.norms.append(tt_norm(f_new))
        f = f_new
    return rep
