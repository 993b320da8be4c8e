"""Structured linear operators acting on TT tensors.

An operator is a sum of Kronecker-product terms (one small matrix per mode,
``None`` meaning identity) and pointwise terms ``s -> c * w * s``. A pointwise
term may also act on ``conj(s)``; such operators are only real-linear, which
the Krylov solver detects through `TtLinOp.complex_linear`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tt import RoundingSpec, TtTensor, mode_apply, tt_hadamard, tt_round, tt_scale, tt_sum, tt_to_dense


@dataclass(frozen=True)
class KronTerm:
    coef: complex
    factors: tuple  # per mode: square ndarray or None (identity)


@dataclass(frozen=True)
class DiagTerm:
    coef: complex
    field: TtTensor
    conjugate: bool = False


@dataclass(frozen=True)
class TtLinOp:
    shape: tuple[int, ...]
    kron_terms: tuple[KronTerm, ...] = ()
    diag_terms: tuple[DiagTerm, ...] = ()

    def __post_init__(self):
        for t in self.kron_terms:
            if len(t.factors) != len(self.shape):
                raise ValueError("Kronecker term needs one factor per mode")
            for k, (m, n) in enumerate(zip(t.factors, self.shape)):
                if m is not None and np.shape(m) != (n, n):
                    raise ValueError(f"factor for mode {k} has shape {np.shape(m)}, expected ({n}, {n})")
        for t in self.diag_terms:
            if t.field.shape != self.shape:
                raise ValueError(f"pointwise field shape {t.field.shape} != operator shape {self.shape}")

    @property
    def complex_linear(self) -> bool:
        return not any(t.conjugate for t in self.diag_terms)

    @property
    def is_complex(self) -> bool:
        for t in self.kron_terms:
            if np.iscomplexobj(t.coef) and np.imag(t.coef) != 0:
                return True
            if any(m is not None and np.iscomplexobj(m) for m in t.factors):
                return True
        for t in self.diag_terms:
            if (np.iscomplexobj(t.coef) and np.imag(t.coef) != 0) or t.field.is_complex:
                return True
        return False

    def __add__(self, other: "TtLinOp") -> "TtLinOp":
        if self.shape != other.shape:
            raise ValueError("operator shapes differ")
        return TtLinOp(self.shape, self.kron_terms + other.kron_terms, self.diag_terms + other.diag_terms)

    def scaled(self, alpha) -> "TtLinOp":
        return TtLinOp(
            self.shape,
            tuple(KronTerm(alpha * t.coef, t.factors) for t in self.kron_terms),
            tuple(DiagTerm(alpha * t.coef, t.field, t.conjugate) for t in self.diag_terms),
        )

    def __call__(self, f: TtTensor) -> TtTensor:
        return apply_linop(self, f)


def identity_op(shape: Sequence[int], coef=1.0) -> TtLinOp:
    return TtLinOp(tuple(shape), (KronTerm(coef, (None,) * len(shape)),))


def kron_sum_op(shape: Sequence[int], matrices: Sequence[np.ndarray | None], coef=1.0) -> TtLinOp:
    """``coef * sum_k I x .. x M_k x .. x I`` (skipping ``None`` entries)."""
    d = len(shape)
    terms = []
    for k, M in enumerate(matrices):
        if M is None:
            continue
        factors = [None] * d
        factors[k] = np.asarray(M)
        terms.append(KronTerm(coef, tuple(factors)))
    return TtLinOp(tuple(shape), tuple(terms))


def diag_op(field: TtTensor, coef=1.0, conjugate: bool = False) -> TtLinOp:
    return TtLinOp(field.shape, (), (DiagTerm(coef, field, conjugate),))


def _apply_kron(term: KronTerm, f: TtTensor) -> TtTensor:
    out = f
    for k, M in enumerate(term.factors):
        if M is not None:
            out = mode_apply(M, out, k)
    return out


def apply_linop(A: TtLinOp, f: TtTensor, spec: RoundingSpec | None = None) -> TtTensor:
    """Exact operator application at formal rank.

    Ranks add over terms; pointwise terms multiply the operand ranks by the
    field ranks. ``spec`` (optional) rounds the final sum.
    """
    if f.shape != A.shape:
        raise ValueError(f"operator of shape {A.shape} cannot act on tensor of shape {f.shape}")
    parts = []
    for t in A.kron_terms:
        parts.append((t.coef, _apply_kron(t, f)))
    for t in A.diag_terms:
        operand = f.conj() if t.conjugate else f
        parts.append((t.coef, tt_hadamard(t.field, operand)))
    if not parts:
        out = tt_scale(0.0, f)
    else:
        out = tt_sum(parts)
    if spec is not None:
        out = tt_round(out, spec)
    return out


def adjoint(A: TtLinOp) -> TtLinOp:
    """Adjoint with respect to ``Re <., .>``; for complex-linear ``A`` this is
    the usual conjugate transpose."""
    kron = tuple(
        KronTerm(np.conj(t.coef), tuple(None if m is None else np.asarray(m).conj().T for m in t.factors))
        for t in A.kron_terms
    )
    diag = []
    for t in A.diag_terms:
        if t.conjugate:
            # s -> c w conj(s) is self-adjoint under the real inner product
            diag.append(t)
        else:
            diag.append(DiagTerm(np.conj(t.coef), t.field.conj(), False))
    return TtLinOp(A.shape, kron, tuple(diag))


def estimate_norm(A: TtLinOp, iters: int = 8, seed: int = 0,
                  spec: RoundingSpec = RoundingSpec(tol_rel=1e-3, max_rank=32)) -> float:
    """Power-iteration estimate of the spectral norm ``||A||`` (via ``A^H A``).

    Iterates are kept low rank; the estimate is a lower bound that converges
    from below.
    """
    from .tt import tt_norm, tt_random

    rng = np.random.default_rng(seed)
    complex_ = A.is_complex or not A.complex_linear
    x = tt_random(A.shape, [1] * (len(A.shape) - 1), rng, complex_=complex_)
    x = tt_scale(1.0 / tt_norm(x), x)
    AH = adjoint(A)
    est = 0.0
    for _ in range(iters):
        y = apply_linop(A, x, spec)
        ny = tt_norm(y)
        est = ny
        if ny == 0:
            return 0.0
        z = apply_linop(AH, y, spec)
        nz = tt_norm(z)
        if nz == 0:
            break
        x = tt_scale(1.0 / nz, z)
    return float(est)


# ---------------------------------------------------------------------------
# dense oracles


def linop_apply_dense(A: TtLinOp, F: np.ndarray) -> np.ndarray:
    """Apply ``A`` to a dense tensor; the brute-force twin of `apply_linop`."""
    F = np.asarray(F)
    if F.shape != A.shape:
        raise ValueError("shape mismatch")
    out = np.zeros(F.shape, dtype=np.result_type(F.dtype, np.complex128 if A.is_complex else np.float64))
    for t in A.kron_terms:
        G = F
        for k, M in enumerate(t.factors):
            if M is not None:
                G = np.moveaxis(np.tensordot(M, G, axes=(1, k)), 0, k)
        out = out + t.coef * G
    for t in A.diag_terms:
        W = tt_to_dense(t.field)
        out = out + t.coef * W * (np.conj(F) if t.conjugate else F)
    return out


def linop_to_matrix(A: TtLinOp) -> np.ndarray:
    """Dense matrix of a complex-linear operator in C-order vectorization."""
    if not A.complex_linear:
        raise ValueError("operator is only real-linear; it has no complex matrix")
    N = int(np.prod(A.shape))
    dtype = np.complex128 if A.is_complex else np.float64
    out = np.zeros((N, N), dtype=dtype)
    for t in A.kron_terms:
        K = np.ones((1, 1))
        for M, n in zip(t.factors, A.shape):
            K = np.kron(K, np.eye(n) if M is None else M)
        out = out + t.coef * K
    for t in A.diag_terms:
        out = out + t.coef * np.diag(tt_to_dense(t.field).reshape(-1))
    return out
