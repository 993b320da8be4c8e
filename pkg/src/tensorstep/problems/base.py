"""Problem container, quadrature observables and the dense reference path."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from ..dense import DenseBudgetError, check_budget, dense_rk4_adaptive
from ..linop import TtLinOp
from ..tt import (RoundingSpec, TtTensor, mode_apply, tt_contract_vectors, tt_fiber_weights,
                  tt_hadamard, tt_norm, tt_to_dense)
from .spectral import SpectralGrid

# Relative accuracy of the pointwise products inside right-hand sides.
PRODUCT_ROUND = RoundingSpec(tol_rel=1e-12)


@dataclass(frozen=True)
class ProblemSpec:
    """A semi-discretized PDE ``df/dt = G(f)`` on a tensor-product grid.

    ``dense_G`` is an independent dense implementation of the same right-hand
    side, used as the oracle twin of ``G``. ``split`` lists sub-flows for
    operator splitting (or ``None``). ``observables`` maps names to callables
    ``TtTensor -> float``.
    """

    name: str
    grids: tuple[SpectralGrid, ...]
    G: Callable[[TtTensor], TtTensor]
    jacobian: Callable[[TtTensor], TtLinOp]
    f0: TtTensor
    dense_G: Callable[[np.ndarray], np.ndarray]
    split: tuple | None = None
    observables: Mapping[str, Callable[[TtTensor], float]] = field(default_factory=dict)
    linear: bool = False
    complex_field: bool = False
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.n for g in self.grids)

    @property
    def d(self) -> int:
        return len(self.grids)

    @property
    def cell_volume(self) -> float:
        return math.prod(g.h for g in self.grids)

    @property
    def norm_scale(self) -> float:
        """Factor turning the tensor 2-norm into the discrete L2(Omega) norm."""
        return math.sqrt(self.cell_volume)

    def l2(self, f: TtTensor) -> float:
        return self.norm_scale * tt_norm(f)

    def meshgrid(self) -> list[np.ndarray]:
        return np.meshgrid(*[g.nodes for g in self.grids], indexing="ij")


def integrate_tt(f: TtTensor, grids: Sequence[SpectralGrid]) -> complex | float:
    """Quadrature of ``f`` over the whole domain."""
    val = tt_contract_vectors(f, [g.weights for g in grids])
    return val.item() if hasattr(val, "item") else val


def mass_density(f: TtTensor, grids: Sequence[SpectralGrid]) -> float:
    """Quadrature of ``|f|^2``."""
    return math.prod(g.h for g in grids) * tt_norm(f) ** 2


def marginal_2d(f: TtTensor, modes: tuple[int, int], grids: Sequence[SpectralGrid]) -> np.ndarray:
    """Integrate out every mode except ``modes = (i, j)``.

    The result is indexed as ``[x_i, x_j]`` in the order given.
    """
    i, j = modes
    if f.d < 2:
        raise ValueError("marginal_2d needs at least two modes")
    if i == j:
        raise ValueError("marginal modes must differ")
    if not (0 <= i < f.d and 0 <= j < f.d):
        raise IndexError("marginal mode out of range")
    vecs = [None if k in (i, j) else grids[k].weights for k in range(f.d)]
    rest = tt_contract_vectors(f, vecs)
    M = tt_to_dense(rest)
    if i > j:
        M = M.T
    return np.real_if_close(M, tol=1000)


def hamiltonian_tt(phi: TtTensor, grids: Sequence[SpectralGrid], potential: Sequence[np.ndarray] | None,
                   eps: float) -> float:
    """``int 1/4 |grad phi|^2 + 1/2 V |phi|^2 + eps/4 |phi|^4`` by quadrature.

    ``potential`` lists the per-mode terms of a separable ``V = sum_k W_k(x_k)``.
    """
    kinetic = 0.0
    for k, g in enumerate(grids):
        grad = mode_apply(g.D1, phi, k)
        w = [np.sqrt(gr.weights) for gr in grids]
        w[k] = np.sqrt(g.grad_weights)
        kinetic += tt_norm(tt_fiber_weights(grad, w)) ** 2
    pot = 0.0
    if potential is not None:
        for k, Wk in enumerate(potential):
            w = [np.sqrt(gr.weights) for gr in grids]
            w[k] = np.sqrt(grids[k].weights * np.asarray(Wk))
            pot += tt_norm(tt_fiber_weights(phi, w)) ** 2
    quartic = 0.0
    if eps != 0:
        dens = tt_hadamard(phi.conj(), phi)
        quartic = math.prod(g.h for g in grids) * tt_norm(dens) ** 2
    return 0.25 * kinetic + 0.5 * pot + 0.25 * eps * quartic


def hamiltonian_dense(phi: np.ndarray, grids: Sequence[SpectralGrid], potential, eps: float) -> float:
    """Dense quadrature twin of `hamiltonian_tt`."""
    d = phi.ndim
    vol = math.prod(g.h for g in grids)
    kinetic = 0.0
    for k, g in enumerate(grids):
        grad = np.moveaxis(np.tensordot(g.D1, phi, axes=(1, k)), 0, k)
        w = np.ones(1)
        for m, gr in enumerate(grids):
            wm = g.grad_weights if m == k else gr.weights
            w = np.multiply.outer(w, wm) if w.ndim else wm
        w = w.reshape(grad.shape)
        kinetic += float(np.sum(w * np.abs(grad) ** 2))
    pot = 0.0
    if potential is not None:
        V = np.zeros(phi.shape)
        for k, Wk in enumerate(potential):
            shape = [1] * d
            shape[k] = -1
            V = V + np.asarray(Wk).reshape(shape)
        pot = vol * float(np.sum(V * np.abs(phi) ** 2))
    quartic = vol * float(np.sum(np.abs(phi) ** 4))
    return 0.25 * kinetic + 0.5 * pot + 0.25 * eps * quartic


def reference_solution(problem: ProblemSpec, T: float, abs_tol: float = 1e-12,
                       t_eval: Sequence[float] | None = None):
    """Dense adaptive-RK4 solution of ``problem`` at ``T`` (or at ``t_eval``)."""
    try:
        check_budget(problem.shape, np.complex128 if problem.complex_field else np.float64,
                     "dense reference state")
    except DenseBudgetError as exc:
        raise DenseBudgetError(f"{exc}; try a smaller n or d for the reference run") from None
    f0 = tt_to_dense(problem.f0)
    return dense_rk4_adaptive(problem.dense_G, f0, T, abs_tol, t_eval=t_eval)


def apply_along(M: np.ndarray, F: np.ndarray, axis: int) -> np.ndarray:
    """Dense mode product ``M x_axis F``."""
    return np.moveaxis(np.tensordot(M, F, axes=(1, axis)), 0, axis)


def broadcast_1d(v: np.ndarray, axis: int, d: int) -> np.ndarray:
    shape = [1] * d
    shape[axis] = -1
    return np.asarray(v).reshape(shape)
