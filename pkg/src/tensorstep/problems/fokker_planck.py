"""Fokker-Planck equation with a Lorenz-96-type drift on the flat torus.

``f_t = -sum_i d/dx_i (mu_i f) + sigma^2 / 2 sum_i d^2 f / dx_i^2`` with
``mu_i = (sin x_{i+1} - sin x_{i-2}) (exp(sin x_{i-1}) + 1) - cos x_i`` and
cyclic indices. Every drift term is a product of one-dimensional functions,
so the right-hand side is a sum of ``3 d`` Kronecker products.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..integrators import SubFlow
from ..linop import KronTerm, TtLinOp, apply_linop
from ..tt import RoundingSpec, TtTensor, tt_rank1, tt_round, tt_scale, tt_sum
from .base import PRODUCT_ROUND, ProblemSpec, apply_along, integrate_tt
from .spectral import spectral_grid


def gamma(x):
    return np.sin(x)


def xi(x):
    return np.exp(np.sin(x)) + 1.0


def phi(x):
    return np.cos(x)


def drift(i: int, X: list[np.ndarray]) -> np.ndarray:
    """``mu_i`` evaluated on arrays ``X[k] = x_k`` (0-based, cyclic)."""
    d = len(X)
    return ((gamma(X[(i + 1) % d]) - gamma(X[(i - 2) % d])) * xi(X[(i - 1) % d])
            - phi(X[i]))


def _transport_term(i: int, coef: float, funcs: dict, grid, d: int) -> KronTerm:
    """Kronecker form of ``-d/dx_i (coef * prod_m w_m(x_m) f)``.

    ``funcs`` maps a mode to the product of the 1D functions living on it.
    """
    factors = [None] * d
    for m, w in funcs.items():
        factors[m] = np.diag(w(grid.nodes))
    own = factors[i] if factors[i] is not None else np.eye(grid.n)
    factors[i] = -grid.D1 @ own
    return KronTerm(coef, tuple(factors))


def _product(*fs):
    def w(x):
        out = np.ones_like(x)
        for f in fs:
            out = out * f(x)
        return out
    return w


def _batch_term(i: int, d: int, grid, neighbour: int, sign: float) -> KronTerm:
    # sign * gamma(x_neighbour) * xi(x_{i-1}) inside -d/dx_i ( . f)
    funcs: dict = {}
    for m, fn in ((neighbour % d, gamma), ((i - 1) % d, xi)):
        funcs[m] = _product(funcs[m], fn) if m in funcs else fn
    return _transport_term(i, sign, funcs, grid, d)


def fp_initial_terms(grid, d: int, M: int = 10) -> list[TtTensor]:
    """The ``2M`` separable terms of the initial density (before normalization)."""
    x = grid.nodes
    terms = []
    for j in range(1, M + 1):
        a = (np.sin((2 * j - 1) * x - np.pi / 2) + 1.0) / 2.0 ** (2 * (j - 1))
        b = np.exp(np.cos(2 * j * x + np.pi)) / 2.0 ** (2 * j - 1)
        terms.append(tt_rank1([a] * d))
        terms.append(tt_rank1([b] * d))
    return terms


def build_fokker_planck(n: int, d: int, sigma: float, drift_on: bool = True, M: int = 10,
                        f0: TtTensor | None = None) -> ProblemSpec:
    """Fokker-Planck problem on ``[0, 2pi)^d`` with ``n`` Fourier nodes per mode."""
    if d < 2:
        raise ValueError(f"Fokker-Planck needs d >= 2, got {d}")
    if n < 4:
        raise ValueError("need at least 4 nodes per mode")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    grid = spectral_grid("periodic", n)
    grids = (grid,) * d
    shape = (n,) * d

    tangential = []
    for i in range(d):
        gen = 0.5 * sigma**2 * grid.D2
        if drift_on:
            gen = gen + grid.D1 @ np.diag(phi(grid.nodes))
        tangential.append(gen)
    batch1, batch2 = [], []
    if drift_on:
        for i in range(d):
            batch1.append(_batch_term(i, d, grid, i + 1, 1.0))
            batch2.append(_batch_term(i, d, grid, i - 2, -1.0))

    terms = []
    for i, gen in enumerate(tangential):
        factors = [None] * d
        factors[i] = gen
        terms.append(KronTerm(1.0, tuple(factors)))
    terms += batch1 + batch2
    L = TtLinOp(shape, tuple(terms))

    def G(f: TtTensor) -> TtTensor:
        return tt_round(apply_linop(L, f), PRODUCT_ROUND)

    def jacobian(f: TtTensor) -> TtLinOp:
        return L

    def dense_G(F: np.ndarray) -> np.ndarray:
        X = np.meshgrid(*[grid.nodes] * d, indexing="ij")
        out = np.zeros_like(F)
        for i in range(d):
            if drift_on:
                out = out - apply_along(grid.D1, drift(i, X) * F, i)
            out = out + 0.5 * sigma**2 * apply_along(grid.D2, F, i)
        return out

    if f0 is None:
        raw = tt_round(tt_sum([(1.0, t) for t in fp_initial_terms(grid, d, M)]),
                       RoundingSpec(tol_rel=1e-13))
        total = float(np.real(integrate_tt(raw, grids)))
        f0 = tt_scale(1.0 / total, raw)

    split = [SubFlow("mode_propagator", mode=i, generator=g, label=f"tangential x{i + 1}")
             for i, g in enumerate(tangential)]
    for batch, tag in ((batch1, "a"), (batch2, "b")):
        for i, term in enumerate(batch):
            op = TtLinOp(shape, (term,))
            split.append(SubFlow("tt_ode", G=_linear_rhs(op), jacobian=_const(op),
                                 label=f"transport{tag} x{i + 1}"))

    def mass(f):
        return float(np.real(integrate_tt(f, grids)))

    spec = ProblemSpec(
        name="fokker_planck", grids=grids, G=G, jacobian=jacobian, f0=f0, dense_G=dense_G,
        split=tuple(split), linear=True,
        params={"n": n, "d": d, "sigma": sigma, "drift": drift_on, "M": M},
    )
    return replace(spec, observables={"mass": mass, "l2_norm": spec.l2})


def _linear_rhs(op: TtLinOp):
    def G(f):
        return apply_linop(op, f)
    return G


def _const(op: TtLinOp):
    def J(f):
        return op
    return J
