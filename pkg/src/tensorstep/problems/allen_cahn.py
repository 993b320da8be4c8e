"""Allen-Cahn equation ``f_t = eps Lap f + f - f^3`` on the flat torus."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..integrators import SubFlow
from ..linop import DiagTerm, TtLinOp, apply_linop, identity_op, kron_sum_op
from ..tt import RoundingSpec, TtTensor, tt_from_dense, tt_hadamard, tt_round, tt_sum
from .base import PRODUCT_ROUND, ProblemSpec, apply_along, integrate_tt
from .spectral import spectral_grid

IC_ROUND = RoundingSpec(tol_abs=1e-9, tol_rel=1e-9)


def _u(x, y):
    with np.errstate(all="ignore"):
        num = (np.exp(-np.tan(x) ** 2) + np.exp(-np.tan(y) ** 2)) * np.sin(x) * np.sin(y)
        den = 1.0 + np.exp(np.abs(1.0 / np.sin(-x / 2))) + np.exp(np.abs(1.0 / np.sin(-y / 2)))
        val = num / den
    # the denominator blows up where csc is singular; the limit there is 0
    return np.where(np.isfinite(val), val, 0.0)


def allen_cahn_initial(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sum of five scaled copies of a bump ``u`` with sharp features."""
    pi = np.pi
    return (_u(x, y) - _u(x, 2 * y) + _u(3 * x + pi, 3 * y + pi)
            - 2 * _u(4 * x, 4 * y) + 2 * _u(5 * x, 5 * y))


def cubic(f: TtTensor, spec: RoundingSpec = PRODUCT_ROUND) -> TtTensor:
    sq = tt_hadamard(f, f, spec)
    return tt_hadamard(sq, f, spec)


def build_allen_cahn(n: int, eps_diff: float = 0.1, ic_round: RoundingSpec = IC_ROUND,
                     reaction: bool = True, f0: TtTensor | None = None) -> ProblemSpec:
    """Two-dimensional Allen-Cahn problem on an ``n x n`` Fourier grid.

    ``reaction=False`` drops ``f - f^3`` (pure diffusion, used for smoke runs).
    """
    if n < 16:
        raise ValueError(f"Allen-Cahn needs n >= 16, got {n}")
    if eps_diff < 0:
        raise ValueError("diffusion coefficient must be nonnegative")
    grid = spectral_grid("periodic", n)
    grids = (grid, grid)
    shape = (n, n)
    lap = kron_sum_op(shape, [grid.D2, grid.D2], coef=eps_diff)

    def G(f: TtTensor) -> TtTensor:
        parts = [(1.0, apply_linop(lap, f))] if eps_diff else []
        if reaction:
            parts += [(1.0, f), (-1.0, cubic(f))]
        if not parts:
            return f * 0.0
        return tt_round(tt_sum(parts), PRODUCT_ROUND)

    def jacobian(f: TtTensor) -> TtLinOp:
        op = lap if eps_diff else TtLinOp(shape)
        if reaction:
            sq = tt_hadamard(f, f, PRODUCT_ROUND)
            op = op + identity_op(shape) + TtLinOp(shape, (), (DiagTerm(-3.0, sq),))
        return op

    def dense_G(F: np.ndarray) -> np.ndarray:
        out = eps_diff * (apply_along(grid.D2, F, 0) + apply_along(grid.D2, F, 1))
        if reaction:
            out = out + F - F**3
        return out

    if f0 is None:
        X, Y = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
        f0 = tt_from_dense(allen_cahn_initial(X, Y), ic_round)

    split = [SubFlow("mode_propagator", mode=k, generator=eps_diff * grid.D2, label=f"diffusion x{k + 1}")
             for k in range(2)]
    if reaction:
        def G_react(f):
            return tt_round(tt_sum([(1.0, f), (-1.0, cubic(f))]), PRODUCT_ROUND)

        def J_react(f):
            sq = tt_hadamard(f, f, PRODUCT_ROUND)
            return identity_op(shape) + TtLinOp(shape, (), (DiagTerm(-3.0, sq),))

        split.append(SubFlow("tt_ode", G=G_react, jacobian=J_react, label="reaction"))

    def mass(f):
        return float(np.real(integrate_tt(f, grids)))

    spec = ProblemSpec(
        name="allen_cahn", grids=grids, G=G, jacobian=jacobian, f0=f0, dense_G=dense_G,
        split=tuple(split), linear=not reaction,
        params={"n": n, "eps": eps_diff, "reaction": reaction},
    )
    return replace(spec, observables={"mass": mass, "l2_norm": spec.l2})
