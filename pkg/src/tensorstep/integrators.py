"""Step-truncation time integrators.

Explicit schemes (Euler, midpoint, AB2) truncate every evaluation of ``G`` and
the new state with tolerances that scale with powers of ``dt``. Implicit
schemes (Euler, midpoint) solve the root-finding form of the step with the
inexact Newton / TT-GMRES solver, then apply the compression step. Operator
splitting composes exact mode-wise propagators with TT ODE sub-flows.

Tolerances in `ThresholdSchedule` are in problem units (discrete L2 norm);
``norm_scale`` converts them to the tensor 2-norm the TT layer works in.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .dense import matrix_exp
from .linop import identity_op
from .solvers import NewtonConfig, SolveReport, newton_solve
from .tt import (DEFAULT_RANK_CAP, RoundingSpec, TtTensor, mode_apply, tt_norm, tt_round,
                 tt_sum)

EXPLICIT_SCHEMES = ("euler", "midpoint", "ab2")
IMPLICIT_SCHEMES = ("euler", "midpoint")


class StepFailure(RuntimeError):
    def __init__(self, message: str, report: SolveReport | None = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ThresholdSchedule:
    """Truncation and stopping tolerances as functions of ``dt``.

    Explicit Euler: ``e1 = k1 dt`` on ``G(f_k)``, ``e2 = k2 dt^2`` on the
    new state. Explicit midpoint / AB2: ``g dt`` on the first stage, ``b dt^2``
    on the second, ``a dt^3`` on the new state. Implicit schemes of order
    ``p`` stop Newton at ``k dt^(p+1)``; ``eta`` is the Newton forcing term.
    """

    k1: float = 1.0
    k2: float = 1.0
    a: float = 1.0
    b: float = 1.0
    g: float = 1.0
    k: float = 1.0
    eta: float = 1e-3
    norm_scale: float = 1.0
    eps_tol: float | None = None  # fixed Newton tolerance, overrides k
    rank_cap: int = DEFAULT_RANK_CAP

    def __post_init__(self):
        for name in ("k1", "k2", "a", "b", "g", "k", "norm_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"schedule constant {name} must be positive")
        if not 0 <= self.eta < 1:
            raise ValueError("eta must lie in [0, 1)")

    def _tensor_units(self, tol: float) -> float:
        return tol / self.norm_scale

    def euler(self, dt: float) -> tuple[float, float]:
        return self._tensor_units(self.k1 * dt), self._tensor_units(self.k2 * dt**2)

    def midpoint(self, dt: float) -> tuple[float, float, float]:
        """(stage-1, stage-2, final) tolerances."""
        return (self._tensor_units(self.g * dt), self._tensor_units(self.b * dt**2),
                self._tensor_units(self.a * dt**3))

    def newton_tol(self, dt: float, order: int) -> float:
        if self.eps_tol is not None:
            return self._tensor_units(self.eps_tol)
        return self._tensor_units(self.k * dt ** (order + 1))

    def spec(self, tol: float) -> RoundingSpec:
        return RoundingSpec(tol_abs=tol, rank_cap=self.rank_cap)


@dataclass
class StepReport:
    t: float = 0.0
    ranks_after: tuple = ()
    newton_iters: int = 0
    gmres_iters: int = 0
    e_r: float = 0.0
    wall_time: float = 0.0
    residual: float = 0.0
    storage: int = 0

    @property
    def max_rank(self) -> int:
        return max(self.ranks_after) if self.ranks_after else 0

    def merge(self, other: "StepReport") -> None:
        self.newton_iters += other.newton_iters
        self.gmres_iters += other.gmres_iters
        self.e_r = max(self.e_r, other.e_r)
        self.residual = max(self.residual, other.residual)


def _finish(report: StepReport, f: TtTensor) -> StepReport:
    report.ranks_after = f.ranks
    report.storage = f.storage
    return report


# ---------------------------------------------------------------------------
# explicit step-truncation


def step_explicit_st(scheme: str, G: Callable[[TtTensor], TtTensor], f: TtTensor, dt: float,
                     sched: ThresholdSchedule, prev_G: TtTensor | None = None
                     ) -> tuple[TtTensor, StepReport, TtTensor]:
    """One explicit step-truncation step.

    Returns the new state, its report, and the truncated ``G(f_k)`` (which
    AB2 needs as ``prev_G`` on the following step).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    report = StepReport()
    if scheme == "euler":
        e1, e2 = sched.euler(dt)
        g1 = tt_round(G(f), sched.spec(e1))
        new = tt_round(tt_sum([(1.0, f), (dt, g1)]), sched.spec(e2))
        return new, _finish(report, new), g1
    if scheme == "midpoint" or (scheme == "ab2" and prev_G is None):
        e1, e2, e3 = sched.midpoint(dt)
        g1 = tt_round(G(f), sched.spec(e1))
        g2 = tt_round(G(tt_sum([(1.0, f), (0.5 * dt, g1)])), sched.spec(e2))
        new = tt_round(tt_sum([(1.0, f), (dt, g2)]), sched.spec(e3))
        if scheme == "ab2":
            # AB2 needs G(f_k) accurate to O(dt^2) for the next step
            g1 = tt_round(G(f), sched.spec(e2))
        return new, _finish(report, new), g1
    if scheme == "ab2":
        _, e2, e3 = sched.midpoint(dt)
        gk = tt_round(G(f), sched.spec(e2))
        incr = tt_round(tt_sum([(1.5, gk), (-0.5, prev_G)]), sched.spec(e2))
        new = tt_round(tt_sum([(1.0, f), (dt, incr)]), sched.spec(e3))
        return new, _finish(report, new), gk
    raise ValueError(f"unknown explicit scheme {scheme!r}; choose from {EXPLICIT_SCHEMES}")


# ---------------------------------------------------------------------------
# implicit step-truncation


def explicit_midpoint_predictor(G: Callable[[TtTensor], TtTensor], f: TtTensor, dt: float) -> TtTensor:
    """``f + dt G(f + dt/2 G(f))`` at formal rank (no step truncation)."""
    g1 = G(f)
    return tt_sum([(1.0, f), (dt, G(tt_sum([(1.0, f), (0.5 * dt, g1)])))])


def compression_step(f_candidate: TtTensor, f_k: TtTensor, G: Callable[[TtTensor], TtTensor],
                     dt: float, rank_cap: int = DEFAULT_RANK_CAP, cap: float | None = None
                     ) -> tuple[TtTensor, float]:
    """Truncate a converged implicit iterate to the local-error estimate.

    ``e_r = ||f_candidate - Psi(f_k)||`` with ``Psi`` the explicit midpoint
    map; the candidate is then rounded with absolute tolerance ``e_r``, or
    ``cap`` if that is smaller. The returned value is the uncapped ``e_r``.

    When ``dt`` is large compared with the stiff part of ``G`` the explicit
    predictor is poor and ``e_r`` grossly overstates the local error, so the
    implicit step passes its own truncation budget as ``cap``.
    """
    predictor = explicit_midpoint_predictor(G, f_k, dt)
    e_r = tt_norm(tt_sum([(1.0, f_candidate), (-1.0, predictor)]))
    if not np.isfinite(e_r):
        e_r = 0.0
    tol = e_r if cap is None else min(e_r, cap)
    return tt_round(f_candidate, RoundingSpec(tol_abs=tol, rank_cap=rank_cap)), e_r


def implicit_residual(scheme: str, G, J_G, f_k: TtTensor, dt: float):
    """Root-finding map ``H_k`` of an implicit step and its Jacobian builder."""
    if scheme == "euler":
        def H(f):
            return tt_sum([(1.0, f), (-1.0, f_k), (-dt, G(f))])

        def J(f):
            return identity_op(f.shape) + J_G(f).scaled(-dt)
    elif scheme == "midpoint":
        def avg(f):
            return tt_sum([(0.5, f_k), (0.5, f)])

        def H(f):
            return tt_sum([(1.0, f), (-1.0, f_k), (-dt, G(avg(f)))])

        def J(f):
            # chain rule through the averaged argument
            return identity_op(f.shape) + J_G(avg(f)).scaled(-0.5 * dt)
    else:
        raise ValueError(f"unknown implicit scheme {scheme!r}; choose from {IMPLICIT_SCHEMES}")
    return H, J


def step_implicit_st(scheme: str, G, J_G, f_k: TtTensor, dt: float, sched: ThresholdSchedule,
                     newton_cfg: NewtonConfig = NewtonConfig(), compress: bool = True
                     ) -> tuple[TtTensor, StepReport]:
    """One implicit step-truncation step (Newton from ``f_k``, then compression)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    order = 1 if scheme == "euler" else 2
    H, J = implicit_residual(scheme, G, J_G, f_k, dt)
    cfg = replace(newton_cfg, eps_tol=sched.newton_tol(dt, order), eta=sched.eta,
                  rank_cap=sched.rank_cap)
    f_new, nrep = newton_solve(H, J, f_k, cfg)
    report = StepReport(newton_iters=nrep.iterations, gmres_iters=nrep.inner_iterations,
                        residual=nrep.final_residual)
    if not nrep.converged:
        raise StepFailure(f"implicit {scheme} step did not converge: {nrep.message}", nrep)
    if compress and nrep.iterations > 0:
        # with zero Newton iterations the candidate is f_k itself
        f_new, report.e_r = compression_step(f_new, f_k, G, dt, sched.rank_cap,
                                                    cap=cfg.eps_tol)
    return f_new, _finish(report, f_new)


# ---------------------------------------------------------------------------
# steppers (configured step functions)


class ExplicitStepper:
    def __init__(self, scheme: str, G, sched: ThresholdSchedule):
        if scheme not in EXPLICIT_SCHEMES:
            raise ValueError(f"unknown explicit scheme {scheme!r}")
        self.scheme, self.G, self.sched = scheme, G, sched
        self._prev_G = None

    def reset(self):
        self._prev_G = None

    def step(self, f: TtTensor, dt: float) -> tuple[TtTensor, StepReport]:
        new, rep, gk = step_explicit_st(self.scheme, self.G, f, dt, self.sched, self._prev_G)
        if self.scheme == "ab2":
            self._prev_G = gk
        return new, rep


class ImplicitStepper:
    def __init__(self, scheme: str, G, J_G, sched: ThresholdSchedule,
                 newton_cfg: NewtonConfig = NewtonConfig(), compress: bool = True):
        if scheme not in IMPLICIT_SCHEMES:
            raise ValueError(f"unknown implicit scheme {scheme!r}")
        self.scheme, self.G, self.J_G, self.sched = scheme, G, J_G, sched
        self.newton_cfg, self.compress = newton_cfg, compress

    def reset(self):
        pass

    def step(self, f: TtTensor, dt: float) -> tuple[TtTensor, StepReport]:
        return step_implicit_st(self.scheme, self.G, self.J_G, f, dt, self.sched,
                                self.newton_cfg, self.compress)


# ---------------------------------------------------------------------------
# operator splitting


@dataclass(frozen=True)
class SubFlow:
    """One piece of a split right-hand side.

    ``mode_propagator``: ``du/dt = A u`` acting on a single mode, advanced
    exactly with ``exp(t A)``. ``tt_ode``: a general TT ODE ``du/dt = G(u)``
    advanced by a stepper (``stepper`` or the splitting default).
    """

    kind: str
    mode: int | None = None
    generator: np.ndarray | None = None
    G: Callable | None = None
    jacobian: Callable | None = None
    stepper: Any = None
    label: str = ""

    def __post_init__(self):
        if self.kind == "mode_propagator":
            if self.mode is None or self.generator is None:
                raise ValueError("a mode propagator needs a mode and a generator")
            if self.mode < 0:
                raise ValueError("mode must be nonnegative")
        elif self.kind == "tt_ode":
            if self.G is None:
                raise ValueError("a TT ODE sub-flow needs G")
        else:
            raise ValueError(f"unknown sub-flow kind {self.kind!r}")


class _PropagatorCache:
    def __init__(self):
        self._cache: dict = {}

    def get(self, flow: SubFlow, tau: float) -> np.ndarray:
        key = (id(flow.generator), flow.mode, round(tau, 15))
        E = self._cache.get(key)
        if E is None:
            E = matrix_exp(flow.generator, tau)
            self._cache[key] = E
        return E


def _advance(flow: SubFlow, f: TtTensor, tau: float, ode_stepper_for, cache: _PropagatorCache,
             report: StepReport) -> TtTensor:
    if flow.kind == "mode_propagator":
        if flow.mode >= f.d:
            raise IndexError(f"sub-flow mode {flow.mode} out of range")
        return mode_apply(cache.get(flow, tau), f, flow.mode)
    stepper = flow.stepper if flow.stepper is not None else ode_stepper_for(flow)
    new, rep = stepper.step(f, tau)
    report.merge(rep)
    return new


def splitting_step(kind: str, flows: Sequence[SubFlow], f: TtTensor, dt: float,
                   ode_stepper_for: Callable[[SubFlow], Any] | None = None,
                   cache: _PropagatorCache | None = None) -> tuple[TtTensor, StepReport]:
    """Lie-Trotter (sequential) or Strang (symmetric) composition of sub-flows."""
    if not flows:
        raise ValueError("splitting needs at least one sub-flow")
    cache = cache or _PropagatorCache()
    if ode_stepper_for is None:
        def ode_stepper_for(flow):
            raise ValueError(f"sub-flow {flow.label or flow.kind} has no stepper")
    report = StepReport()
    if kind == "lie_trotter":
        for flow in flows:
            f = _advance(flow, f, dt, ode_stepper_for, cache, report)
    elif kind == "strang":
        *head, last = flows
        for flow in head:
            f = _advance(flow, f, 0.5 * dt, ode_stepper_for, cache, report)
        f = _advance(last, f, dt, ode_stepper_for, cache, report)
        for flow in reversed(head):
            f = _advance(flow, f, 0.5 * dt, ode_stepper_for, cache, report)
    else:
        raise ValueError(f"unknown splitting kind {kind!r}; use 'lie_trotter' or 'strang'")
    return f, _finish(report, f)


class SplittingStepper:
    """Splitting driver; TT ODE sub-flows get their stepper from ``make_ode_stepper``."""

    def __init__(self, kind: str, flows: Sequence[SubFlow], make_ode_stepper: Callable[[SubFlow], Any]):
        self.kind = kind
        self.flows = tuple(flows)
        self._make = make_ode_stepper
        self._steppers: dict = {}
        self._cache = _PropagatorCache()

    def _stepper_for(self, flow: SubFlow):
        key = id(flow)
        if key not in self._steppers:
            self._steppers[key] = self._make(flow)
        return self._steppers[key]

    def reset(self):
        for s in self._steppers.values():
            s.reset()

    def step(self, f: TtTensor, dt: float) -> tuple[TtTensor, StepReport]:
        return splitting_step(self.kind, self.flows, f, dt, self._stepper_for, self._cache)


# ---------------------------------------------------------------------------
# time loop


@dataclass
class RunRecord:
    """Step reports of one run, ordered by ``t``.

    ``table`` holds per-step observable rows filled in by callers that track
    more than the stepper reports (errors, mass, ...).
    """

    rows: list = field(default_factory=list)
    final: TtTensor | None = None
    metadata: dict = field(default_factory=dict)
    stopped_early: bool = False
    table: list = field(default_factory=list)


class IntegrationError(RuntimeError):
    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


def integrate(f0: TtTensor, stepper, dt: float, T: float,
              observers: Sequence[Callable[[int, TtTensor, StepReport], Any]] = (),
              stop_when: Callable[[TtTensor], bool] | None = None) -> RunRecord:
    """Advance ``f0`` to ``T`` in ``ceil(T / dt)`` steps.

    The last step is shortened if ``T`` is not a multiple of ``dt``. Each
    observer is called as ``observer(step, f, report)`` after every step.
    ``stop_when(f)`` returning true ends the run early (``stopped_early``).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < dt * (1 - 1e-12):
        raise ValueError(f"T={T} must be at least dt={dt}")
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    record = RunRecord(metadata={"dt": dt, "T": T, "n_steps": n_steps,
                                 "initial_ranks": f0.ranks})
    stepper.reset()
    f = f0
    t = 0.0
    for step in range(1, n_steps + 1):
        h = min(dt, T - t) if step == n_steps else dt
        t0 = time.perf_counter()
        try:
            f, rep = stepper.step(f, h)
        except (StepFailure, RuntimeError, FloatingPointError) as exc:
            record.final = f
            raise IntegrationError(f"step {step} (t={t:.6g}) failed: {exc}", record) from exc
        rep.wall_time = time.perf_counter() - t0
        t = step * dt if step < n_steps else T
        rep.t = t
        record.rows.append(rep)
        for obs in observers:
            obs(step, f, rep)
        if stop_when is not None and stop_when(f):
            record.stopped_early = True
            break
    record.final = f
    return record
