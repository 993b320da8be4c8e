"""Dense linear-algebra kernels and the brute-force reference integrator.

Everything here works on plain numpy arrays (real64 or complex128). The TT
layer builds on `truncated_svd` and `qr_factor`; the test suite and the
experiment harness use `dense_rk4_adaptive` as the accuracy oracle.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

# Singular values below this multiple of eps * sigma_max * max(m, n) are
# treated as exact zeros when selecting a rank.
_RANK_FLOOR = 1.0

DEFAULT_DENSE_BUDGET = 1 << 30  # bytes
BUDGET_ENV = "TENSORSTEP_DENSE_BUDGET"


class DenseBudgetError(MemoryError):
    """Raised when a dense tensor would exceed the configured memory budget."""


def dense_budget() -> int:
    """Memory budget (bytes) for dense oracle tensors, from the environment."""
    raw = os.environ.get(BUDGET_ENV)
    if raw is None:
        return DEFAULT_DENSE_BUDGET
    try:
        value = int(float(raw))
    except ValueError:
        raise ValueError(f"{BUDGET_ENV}={raw!r} is not a byte count") from None
    if value <= 0:
        raise ValueError(f"{BUDGET_ENV} must be positive, got {value}")
    return value


def check_budget(shape: Sequence[int], dtype, what: str = "dense tensor") -> None:
    nbytes = math.prod(int(n) for n in shape) * np.dtype(dtype).itemsize
    budget = dense_budget()
    if nbytes > budget:
        raise DenseBudgetError(
            f"{what} of shape {tuple(shape)} needs {nbytes} bytes, "
            f"budget is {budget} bytes (set {BUDGET_ENV} to raise it)"
        )


def _require_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def _result_dtype(*arrays) -> np.dtype:
    if any(np.iscomplexobj(a) for a in arrays):
        return np.dtype(np.complex128)
    return np.dtype(np.float64)


@dataclass(frozen=True)
class SvdResult:
    """Truncated SVD ``M ~ U @ diag(singular_values) @ V.conj().T``.

    ``singular_values`` holds only the kept values; ``discarded_energy`` is the
    Frobenius norm of the dropped tail.
    """

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray
    rank_kept: int
    discarded_energy: float

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.conj().T


def truncation_threshold(norm: float, tol_abs: float, tol_rel: float) -> float:
    """Error budget for a truncation of a tensor with Frobenius norm ``norm``.

    Zero tolerances are inactive. When both are active the tighter one binds,
    so the truncation satisfies both bounds at once. With no active tolerance
    the budget is zero (exact-rank truncation).
    """
    active = []
    if tol_abs > 0:
        active.append(tol_abs)
    if tol_rel > 0:
        active.append(tol_rel * norm)
    return min(active) if active else 0.0


def select_rank(s: np.ndarray, threshold: float, max_rank: int | None = None,
                shape: tuple[int, int] | None = None) -> int:
    """Smallest rank whose tail energy is within ``threshold``.

    ``s`` must be sorted nonincreasing. Comparison is inclusive. Values at the
    roundoff level are ignored so exact low-rank inputs keep their exact rank.
    """
    if s.size == 0:
        return 0
    if shape is not None and s[0] > 0:
        floor = _RANK_FLOOR * np.finfo(float).eps * max(shape) * s[0]
        s = np.where(s > floor, s, 0.0)
    # tail[r] = sqrt(sum_{i >= r} s_i^2), tail[len] = 0
    tail = np.sqrt(np.concatenate([np.cumsum((s**2)[::-1])[::-1], [0.0]]))
    rank = int(np.argmax(tail <= threshold))
    if max_rank is not None:
        rank = min(rank, int(max_rank))
    return rank


def truncated_svd(M: np.ndarray, tol_abs: float = 0.0, tol_rel: float = 0.0,
                  max_rank: int | None = None) -> SvdResult:
    """Rank-revealing SVD truncated to the requested accuracy.

    The kept rank is the smallest ``r`` whose discarded tail energy is at most
    the error budget from `truncation_threshold`, capped at ``max_rank``.
    """
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if tol_abs < 0 or tol_rel < 0:
        raise ValueError("tolerances must be nonnegative")
    if max_rank is not None and max_rank < 0:
        raise ValueError("max_rank must be nonnegative")
    _require_finite(M, "matrix")

    try:
        U, s, Vh = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError:
        U, s, Vh = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd")
    norm = float(np.sqrt(np.sum(s**2)))
    threshold = truncation_threshold(norm, tol_abs, tol_rel)
    r = select_rank(s, threshold, max_rank, M.shape)
    discarded = float(np.sqrt(np.sum(s[r:] ** 2)))
    return SvdResult(U[:, :r], s[:r], Vh[:r].conj().T, r, discarded)


def qr_factor(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin Householder QR of a tall (or square) matrix."""
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if M.shape[0] < M.shape[1]:
        raise ValueError(f"qr_factor needs rows >= cols, got {M.shape}")
    _require_finite(M, "matrix")
    Q, R = np.linalg.qr(M, mode="reduced")
    return Q, R


def matrix_exp(A: np.ndarray, t: float = 1.0, normal: bool = False) -> np.ndarray:
    """``exp(t A)``.

    Uses scaling and squaring with Pade approximants. With ``normal=True`` the
    caller asserts that ``A`` is normal and a unitary eigendecomposition is
    used instead.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix_exp needs a square matrix, got {A.shape}")
    _require_finite(A, "matrix")
    tA = t * A
    if normal:
        if np.allclose(tA, tA.conj().T):
            w, V = np.linalg.eigh(tA)
            return (V * np.exp(w)) @ V.conj().T
        T, Z = scipy.linalg.schur(tA.astype(complex), output="complex")
        out = (Z * np.exp(np.diag(T))) @ Z.conj().T
        return out.real if not np.iscomplexobj(tA) else out
    return scipy.linalg.expm(tA)


class StepSizeUnderflow(RuntimeError):
    """The adaptive oracle could not meet its tolerance without vanishing steps."""


def _rk4(G, y, h):
    k1 = G(y)
    k2 = G(y + 0.5 * h * k1)
    k3 = G(y + 0.5 * h * k2)
    k4 = G(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def dense_rk4_adaptive(G: Callable[[np.ndarray], np.ndarray], f0: np.ndarray, T: float,
                       abs_tol: float, t_eval: Sequence[float] | None = None,
                       h0: float | None = None, safety: float = 0.9,
                       growth: tuple[float, float] = (0.2, 5.0)):
    """Classic RK4 with step-doubling error control.

    Each step compares one step of size ``h`` against two of size ``h/2``; the
    difference divided by 15 (the Richardson factor for order 4) estimates the
    local error of the two-half-step solution, measured in the max norm. Steps
    are accepted when the estimate is at most ``abs_tol``.

    Returns ``f(T)``, or a list of states at the times in ``t_eval`` if given.
    """
    if abs_tol <= 0:
        raise ValueError("abs_tol must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    y = np.array(f0, dtype=_result_dtype(f0), copy=True)
    _require_finite(y, "initial state")

    stops = sorted(float(s) for s in (t_eval if t_eval is not None else [T]))
    if stops and (stops[0] < 0 or stops[-1] > T * (1 + 1e-12) + 1e-300):
        raise ValueError("t_eval entries must lie in [0, T]")
    outputs = []
    t = 0.0
    h = h0 if h0 is not None else (T / 100.0 if T > 0 else 0.0)
    h_min = 1e-14 * T
    lo, hi = growth
    for stop in stops:
        while stop - t > 1e-14 * max(1.0, abs(stop)):
            h = min(h, stop - t)
            big = _rk4(G, y, h)
            half = _rk4(G, y, 0.5 * h)
            small = _rk4(G, half, 0.5 * h)
            diff = small - big
            if not np.all(np.isfinite(diff)):
                err = np.inf
            else:
                err = float(np.max(np.abs(diff))) / 15.0 if diff.size else 0.0
            if err <= abs_tol:
                t += h
                y = small
                factor = hi if err == 0 else min(hi, max(lo, safety * (abs_tol / err) ** 0.2))
            else:
                factor = lo if not np.isfinite(err) else min(1.0, max(lo, safety * (abs_tol / err) ** 0.2))
            h = h * factor
            if h < h_min:
                raise StepSizeUnderflow(
                    f"step size {h:.3e} fell below {h_min:.3e} at t={t:.6g}; "
                    "the problem is too stiff for the RK4 oracle at this tolerance"
                )
        outputs.append(y.copy())
    if t_eval is None:
        return outputs[0]
    return outputs
