"""Benchmark PDEs: Allen-Cahn, Fokker-Planck, nonlinear Schroedinger."""

from .allen_cahn import allen_cahn_initial, build_allen_cahn
from .base import (ProblemSpec, hamiltonian_dense, hamiltonian_tt, integrate_tt, marginal_2d,
                   mass_density, reference_solution)
from .fokker_planck import build_fokker_planck, drift
from .nls import build_nls, mollifier, well
from .spectral import SpectralGrid, spectral_grid


def observables(f, problem: ProblemSpec) -> dict:
    """Evaluate every observable the problem defines."""
    return {name: float(fn(f)) for name, fn in problem.observables.items()}


__all__ = [
    "ProblemSpec", "SpectralGrid", "allen_cahn_initial", "build_allen_cahn", "build_fokker_planck",
    "build_nls", "drift", "hamiltonian_dense", "hamiltonian_tt", "integrate_tt", "marginal_2d",
    "mass_density", "mollifier", "observables", "reference_solution", "spectral_grid", "well",
]
