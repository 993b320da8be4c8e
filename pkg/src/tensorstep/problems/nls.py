"""Nonlinear Schroedinger equation with a mollified double-well potential.

``phi_t = (i/2) Lap phi - i V phi - i eps |phi|^2 phi`` on ``[0, pi]^d`` with
homogeneous Dirichlet data (sine collocation) and ``V = sum_k W(x_k)``.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from ..integrators import SubFlow
from ..linop import DiagTerm, KronTerm, TtLinOp, apply_linop
from ..tt import TtTensor, tt_hadamard, tt_rank1, tt_round, tt_sum
from .base import (PRODUCT_ROUND, ProblemSpec, apply_along, broadcast_1d, hamiltonian_tt,
                   mass_density)
from .spectral import spectral_grid


def mollifier(x: np.ndarray, theta: float) -> np.ndarray:
    """Smooth approximation of ``1 + delta(x) + delta(x - pi)``."""
    c = 1.0 / (math.sqrt(2 * math.pi) * theta)
    return 1.0 + c * (np.exp(-x**2 / (2 * theta**2)) + np.exp(-(x - np.pi) ** 2 / (2 * theta**2)))


def well(x: np.ndarray, theta: float) -> np.ndarray:
    """One-particle double-well potential ``W`` with barriers at 0 and pi."""
    return (1.0 + np.exp(np.cos(x) ** 2) + 0.75 * (1.0 + np.exp(np.sin(x) ** 2))) * mollifier(x, theta)


def pure_state_amplitude(k: int, particles: int) -> float:
    """Amplitude of ``sin(k x)`` giving each factor mass ``particles^(1/particles)``.

    ``(2 k pi - sin(2 pi k)) / (4 k)`` is the integral of ``sin^2(k x)`` over
    ``[0, pi]``; the amplitude is the square root of the ratio.
    """
    return math.sqrt(particles ** (1.0 / particles) * 4 * k / (2 * k * math.pi - math.sin(2 * math.pi * k)))


def build_nls(n: int, d: int, theta: float = 0.1, eps_nl: float = 1e-4, potential: bool = True,
              f0: TtTensor | None = None) -> ProblemSpec:
    """NLS problem with ``n`` interior sine nodes per mode, one mode per particle."""
    if theta <= 0:
        raise ValueError(f"mollifier width theta must be positive, got {theta}")
    if d < 1:
        raise ValueError("need at least one particle")
    grid = spectral_grid("dirichlet", n)
    grids = (grid,) * d
    shape = (n,) * d
    W = well(grid.nodes, theta) if potential else np.zeros(n)
    gen = 0.5j * grid.D2 - 1j * np.diag(W)
    terms = []
    for k in range(d):
        factors = [None] * d
        factors[k] = gen
        terms.append(KronTerm(1.0, tuple(factors)))
    L = TtLinOp(shape, tuple(terms))

    def nonlinear(f: TtTensor) -> TtTensor:
        dens = tt_hadamard(f.conj(), f, PRODUCT_ROUND)
        return tt_hadamard(dens, f, PRODUCT_ROUND)

    def G(f: TtTensor) -> TtTensor:
        parts = [(1.0, apply_linop(L, f))]
        if eps_nl:
            parts.append((-1j * eps_nl, nonlinear(f)))
        return tt_round(tt_sum(parts), PRODUCT_ROUND)

    def nl_jacobian_terms(f: TtTensor) -> tuple[DiagTerm, ...]:
        if not eps_nl:
            return ()
        dens = tt_hadamard(f.conj(), f, PRODUCT_ROUND)
        sq = tt_hadamard(f, f, PRODUCT_ROUND)
        # d/ds of |f|^2 f in direction s is 2|f|^2 s + f^2 conj(s)
        return (DiagTerm(-2j * eps_nl, dens), DiagTerm(-1j * eps_nl, sq, conjugate=True))

    def jacobian(f: TtTensor) -> TtLinOp:
        return TtLinOp(shape, L.kron_terms, nl_jacobian_terms(f))

    def dense_G(F: np.ndarray) -> np.ndarray:
        F = F.astype(complex)
        out = np.zeros_like(F)
        V = np.zeros(F.shape)
        for k in range(d):
            out = out + 0.5j * apply_along(grid.D2, F, k)
            V = V + broadcast_1d(W, k, d)
        return out - 1j * V * F - 1j * eps_nl * np.abs(F) ** 2 * F

    if f0 is None:
        vecs = [pure_state_amplitude(k, d) * np.sin(k * grid.nodes) + 0j for k in range(1, d + 1)]
        f0 = tt_rank1(vecs)

    def G_nl(f):
        return tt_round(tt_sum([(-1j * eps_nl, nonlinear(f))]), PRODUCT_ROUND)

    def J_nl(f):
        return TtLinOp(shape, (), nl_jacobian_terms(f))

    split = [SubFlow("mode_propagator", mode=k, generator=gen, label=f"linear x{k + 1}") for k in range(d)]
    split.append(SubFlow("tt_ode", G=G_nl, jacobian=J_nl, label="interaction"))

    pot = [W] * d if potential else None

    def mass(f):
        return mass_density(f, grids)

    def hamiltonian(f):
        return hamiltonian_tt(f, grids, pot, eps_nl)

    spec = ProblemSpec(
        name="nls", grids=grids, G=G, jacobian=jacobian, f0=f0, dense_G=dense_G,
        split=tuple(split), linear=eps_nl == 0, complex_field=True,
        params={"n": n, "d": d, "theta": theta, "eps": eps_nl, "potential": potential, "W": W},
    )
    return replace(spec, observables={"mass": mass, "hamiltonian": hamiltonian, "l2_norm": spec.l2})
