"""Relaxed TT-GMRES and the inexact Newton method on tensor manifolds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .linop import TtLinOp, apply_linop, estimate_norm
from .tt import (RoundingSpec, TtTensor, tt_inner, tt_norm, tt_round, tt_scale, tt_sum,
                 tt_zeros)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GmresConfig:
    """Settings for `gmres_solve`.

    ``krylov_round`` defaults to a relative tolerance of ``rel_tol / (2 m)``
    per basis vector; ``final_round`` (if set) compresses the returned
    solution before the residual certificate is computed. Without it the
    solution is rounded at ``0.1 rel_tol``, ten times tighter per restart.
    """

    rel_tol: float = 1e-6
    restart: int = 30
    max_restarts: int = 20
    krylov_round: RoundingSpec | None = None
    final_round: RoundingSpec | None = None

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.restart < 1:
            raise ValueError("restart length must be at least 1")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be nonnegative")

    @property
    def basis_round(self) -> RoundingSpec:
        if self.krylov_round is not None:
            return self.krylov_round
        return RoundingSpec(tol_rel=self.rel_tol / (2 * self.restart))


@dataclass
class SolveReport:
    iterations: int = 0
    final_residual: float = math.nan
    residual_history: list = field(default_factory=list)
    max_rank_seen: int = 0
    converged: bool = False
    inner_iterations: int = 0
    message: str = ""


class SolverError(RuntimeError):
    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


def _lstsq(Hm: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    rhs = np.zeros(Hm.shape[0], dtype=Hm.dtype)
    rhs[0] = beta
    y, *_ = np.linalg.lstsq(Hm, rhs, rcond=None)
    return y, float(np.linalg.norm(rhs - Hm @ y))


def gmres_solve(A: TtLinOp | Callable[[TtTensor], TtTensor], b: TtTensor, x0: TtTensor | None = None,
                cfg: GmresConfig = GmresConfig(), real_linear: bool | None = None
                ) -> tuple[TtTensor, SolveReport]:
    """Restarted GMRES with every Krylov vector stored in TT format.

    Each new basis vector is rounded (the relaxed, inexact product), so the
    Arnoldi residual is only an estimate. A cycle therefore ends with an
    exact formal-rank recomputation of ``||A x - b||``, and convergence is
    declared only when that certificate is within ``rel_tol * ||b||``.

    Operators that act on complex conjugates are real-linear; for those the
    Arnoldi process uses the real inner product ``Re <., .>``.
    """
    apply = A if not isinstance(A, TtLinOp) else (lambda v: apply_linop(A, v))
    if real_linear is None:
        real_linear = isinstance(A, TtLinOp) and not A.complex_linear

    def inner(u, v):
        val = tt_inner(u, v)
        return float(np.real(val)) if real_linear else val

    bnorm = tt_norm(b)
    if bnorm == 0:
        raise ValueError("gmres_solve needs a nonzero right-hand side")
    if x0 is None:
        x0 = tt_zeros(b.shape, dtype=b.dtype)
    basis_spec = cfg.basis_round
    target = cfg.rel_tol * bnorm
    report = SolveReport()

    x = x0
    r = tt_sum([(1.0, b), (-1.0, apply(x))])
    beta = tt_norm(r)
    report.residual_history.append(beta)
    report.max_rank_seen = max(x.max_rank, b.max_rank)
    if beta <= target:
        report.final_residual = beta
        report.converged = True
        return x, report

    m = cfg.restart
    for cycle in range(cfg.max_restarts + 1):
        r = tt_round(r, basis_spec)
        beta_r = tt_norm(r)
        V = [tt_scale(1.0 / beta_r, r)]
        dtype = np.float64 if (real_linear or not (b.is_complex or x.is_complex)) else np.complex128
        if not real_linear and isinstance(A, TtLinOp) and A.is_complex:
            dtype = np.complex128
        H = np.zeros((m + 1, m), dtype=dtype)
        y = np.zeros(0, dtype=dtype)
        breakdown_tol = 1e-14 * bnorm
        for j in range(m):
            w = tt_round(apply(V[j]), basis_spec)
            for _ in range(2):  # modified Gram-Schmidt plus one reorthogonalization
                for i in range(j + 1):
                    h = inner(V[i], w)
                    H[i, j] += h
                    w = tt_sum([(1.0, w), (-h, V[i])])
            w = tt_round(w, basis_spec)
            hn = tt_norm(w)
            H[j + 1, j] = hn
            report.iterations += 1
            y, est = _lstsq(H[: j + 2, : j + 1], beta_r)
            report.residual_history.append(est)
            report.max_rank_seen = max(report.max_rank_seen, w.max_rank)
            if hn <= breakdown_tol or est <= 0.5 * target:
                break
            V.append(tt_scale(1.0 / hn, w))
        k = y.shape[0]
        update = tt_sum([(y[i], V[i]) for i in range(k)])
        x = tt_sum([(1.0, x), (1.0, update)])
        if cfg.final_round is not None:
            x = tt_round(x, cfg.final_round)
        else:
            # relative rounding of x costs up to ||A|| tol ||x|| in residual; tighten
            # it on every failed certificate so that floor cannot stall the restarts
            x = tt_round(x, RoundingSpec(tol_rel=0.1 * cfg.rel_tol * 0.1**cycle))
        report.max_rank_seen = max(report.max_rank_seen, x.max_rank)
        r = tt_sum([(1.0, b), (-1.0, apply(x))])
        true_res = tt_norm(r)
        report.residual_history[-1] = true_res
        report.final_residual = true_res
        if true_res <= target:
            report.converged = True
            return x, report
        log.debug("gmres cycle %d: certified residual %.3e > target %.3e", cycle, true_res, target)
    report.message = f"max restarts exhausted, relative residual {report.final_residual / bnorm:.3e}"
    return x, report


@dataclass(frozen=True)
class NewtonConfig:
    """Settings for `newton_solve`.

    ``forcing`` is the relative accuracy of each linear solve: a constant,
    a sequence (last value repeats), or ``"geometric"`` decay ``eta * 2^-j``.
    """

    eps_tol: float = 1e-8
    eta: float = 1e-3
    forcing: str | Sequence[float] = "constant"
    max_iters: int = 50
    norm_iters: int = 8
    gmres: GmresConfig = GmresConfig(rel_tol=5e-4)
    rank_cap: int = 512
    truncate: bool = True
    seed: int = 0  # start vector of the norm estimate

    def __post_init__(self):
        if self.eps_tol <= 0:
            raise ValueError("eps_tol must be positive")
        if not 0 <= self.eta < 1:
            raise ValueError("eta must lie in [0, 1)")
        if not isinstance(self.forcing, str):
            if any(not 0 <= e < 1 for e in self.forcing):
                raise ValueError("every forcing term must lie in [0, 1)")
        elif self.forcing not in ("constant", "geometric"):
            raise ValueError(f"unknown forcing rule {self.forcing!r}")

    def eta_at(self, j: int) -> float:
        if isinstance(self.forcing, str):
            return self.eta if self.forcing == "constant" else self.eta * 2.0 ** (-j)
        seq = list(self.forcing)
        return seq[min(j, len(seq) - 1)]


def newton_solve(H: Callable[[TtTensor], TtTensor], J_at: Callable[[TtTensor], TtLinOp],
                 f0: TtTensor, cfg: NewtonConfig = NewtonConfig()) -> tuple[TtTensor, SolveReport]:
    """Inexact Newton iteration ``f <- T_r(f + s)`` with TT-GMRES inner solves.

    Each linear solve targets relative accuracy ``eta_j / 2``; the update is
    then truncated with absolute tolerance ``||H(f)|| eta_j / (2 ||J||)``,
    which keeps the combined inexactness below ``eta_j ||H(f)||``.
    """
    report = SolveReport()
    f = f0
    res = H(f)
    rnorm = tt_norm(res)
    report.residual_history.append(rnorm)
    report.max_rank_seen = f.max_rank
    if not np.isfinite(rnorm):
        report.message = "non-finite residual at the initial guess"
        report.final_residual = rnorm
        return f, report
    for j in range(cfg.max_iters + 1):
        if rnorm <= cfg.eps_tol:
            report.converged = True
            break
        if j == cfg.max_iters:
            report.message = f"max_iters={cfg.max_iters} exhausted"
            break
        eta = cfg.eta_at(j)
        J = J_at(f)
        gcfg = replace(cfg.gmres, rel_tol=max(eta / 2, 1e-15))
        s, grep = gmres_solve(J, tt_scale(-1.0, res), None, gcfg)
        report.inner_iterations += grep.iterations
        report.max_rank_seen = max(report.max_rank_seen, grep.max_rank_seen)
        if not grep.converged:
            report.message = f"inner GMRES failed at Newton iteration {j}: {grep.message}"
            report.iterations = j
            report.final_residual = rnorm
            return f, report
        step = tt_sum([(1.0, f), (1.0, s)])
        if cfg.truncate:
            jnorm = estimate_norm(J, iters=cfg.norm_iters, seed=cfg.seed) if cfg.norm_iters > 0 else 1.0
            tol = rnorm * eta / (2 * max(jnorm, 1e-300))
            f = tt_round(step, RoundingSpec(tol_abs=tol, rank_cap=cfg.rank_cap))
        else:
            f = tt_round(step, RoundingSpec(rank_cap=cfg.rank_cap))
        res = H(f)
        rnorm = tt_norm(res)
        report.iterations = j + 1
        report.residual_history.append(rnorm)
        report.max_rank_seen = max(report.max_rank_seen, f.max_rank)
        if not np.isfinite(rnorm):
            report.message = "residual became non-finite"
            break
    report.final_residual = rnorm
    return f, report
