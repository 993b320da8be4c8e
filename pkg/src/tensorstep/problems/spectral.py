"""One-dimensional spectral collocation grids.

``periodic``: ``n`` equispaced nodes on ``[0, 2pi)``, Fourier differentiation.
``dirichlet``: ``n`` interior nodes ``j pi / (n + 1)`` of ``[0, pi]``, sine
expansion (homogeneous Dirichlet data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft


@dataclass(frozen=True)
class SpectralGrid:
    kind: str
    n: int
    nodes: np.ndarray
    weights: np.ndarray  # quadrature weights on ``nodes``
    D1: np.ndarray
    D2: np.ndarray
    # Dirichlet grids differentiate onto the closed grid (endpoints included)
    # so that ``|f'|^2`` can be integrated exactly; periodic grids reuse nodes.
    grad_nodes: np.ndarray
    grad_weights: np.ndarray

    @property
    def h(self) -> float:
        return float(self.weights[0])


def _fourier_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = scipy.fft.fftfreq(n, d=1.0 / n)
    ik = 1j * k
    if n % 2 == 0:
        ik[n // 2] = 0.0  # Nyquist mode has no real derivative
    eye = np.eye(n)
    F = scipy.fft.fft(eye, axis=0)
    D1 = scipy.fft.ifft(ik[:, None] * F, axis=0).real
    D2 = scipy.fft.ifft(-(k**2)[:, None] * F, axis=0).real
    return D1, D2


def _sine_matrices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    j = np.arange(1, n + 1)
    k = np.arange(1, n + 1)
    x = j * np.pi / (n + 1)
    S = np.sin(np.outer(x, k))  # values of sin(k x) at the nodes
    # S is symmetric with S @ S = (n + 1) / 2 * I
    S_inv = S * (2.0 / (n + 1))
    D2 = S @ np.diag(-(k**2).astype(float)) @ S_inv
    D2 = 0.5 * (D2 + D2.T)
    xc = np.arange(0, n + 2) * np.pi / (n + 1)
    C = np.cos(np.outer(xc, k)) * k  # derivative of sin(k x) on the closed grid
    D1 = C @ S_inv
    return x, D1, D2


def spectral_grid(kind: str, n: int) -> SpectralGrid:
    if n < 4:
        raise ValueError(f"need at least 4 points per mode, got {n}")
    if kind == "periodic":
        x = 2 * np.pi * np.arange(n) / n
        D1, D2 = _fourier_matrices(n)
        w = np.full(n, 2 * np.pi / n)
        return SpectralGrid(kind, n, x, w, D1, D2, x, w)
    if kind == "dirichlet":
        x, D1, D2 = _sine_matrices(n)
        h = np.pi / (n + 1)
        w = np.full(n, h)
        xc = np.arange(0, n + 2) * h
        wc = np.full(n + 2, h)
        wc[0] = wc[-1] = h / 2
        return SpectralGrid(kind, n, x, w, D1, D2, xc, wc)
    raise ValueError(f"unknown grid kind {kind!r}; use 'periodic' or 'dirichlet'")
