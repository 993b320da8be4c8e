"""Tensor-train format, rounding and rank-raising arithmetic.

A TT tensor of order ``d`` is a chain of cores ``G_k`` with shape
``(r_{k-1}, n_k, r_k)`` and ``r_0 = r_d = 1``. Arithmetic (`tt_axpy`,
`tt_sum`, `tt_hadamard`) works at formal rank and never rounds implicitly;
`tt_round` is the only truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dense import check_budget, qr_factor, truncated_svd, truncation_threshold

DEFAULT_RANK_CAP = 512


class RankCapError(RuntimeError):
    """A truncation needed more rank than the configured safety cap."""


@dataclass(frozen=True)
class RoundingSpec:
    """Accuracy request for `tt_round` / `tt_from_dense`.

    ``max_rank`` truncates silently (it is part of the request). ``rank_cap``
    is a safety net: if meeting the tolerance would need more rank than that,
    rounding raises `RankCapError` instead of silently losing accuracy.
    """

    tol_abs: float = 0.0
    tol_rel: float = 0.0
    max_rank: int | None = None
    rank_cap: int = DEFAULT_RANK_CAP

    def __post_init__(self):
        if self.tol_abs < 0 or self.tol_rel < 0:
            raise ValueError("rounding tolerances must be nonnegative")
        if not (np.isfinite(self.tol_abs) and np.isfinite(self.tol_rel)):
            raise ValueError("rounding tolerances must be finite")
        if self.max_rank is not None and self.max_rank < 1:
            raise ValueError("max_rank must be at least 1")

    def bound(self, norm: float) -> float:
        return truncation_threshold(norm, self.tol_abs, self.tol_rel)


def _dtype_of(arrays) -> np.dtype:
    return np.dtype(np.complex128) if any(np.iscomplexobj(a) for a in arrays) else np.dtype(np.float64)


class TtTensor:
    """Immutable tensor in TT format.

    ``orth`` records a known orthogonality state: ``"left"`` means every core
    but the last is left-orthonormal, ``"right"`` that every core but the
    first is right-orthonormal.
    """

    __slots__ = ("cores", "orth")

    def __init__(self, cores: Iterable[np.ndarray], orth: str = "none", copy: bool = False):
        cores = list(cores)
        if not cores:
            raise ValueError("a TT tensor needs at least one core")
        dtype = _dtype_of(cores)
        out = []
        for k, c in enumerate(cores):
            c = np.array(c, dtype=dtype, copy=copy) if copy or np.asarray(c).dtype != dtype else np.asarray(c)
            if c.ndim != 3:
                raise ValueError(f"core {k} has shape {c.shape}, expected (r, n, r')")
            if k > 0 and c.shape[0] != out[-1].shape[2]:
                raise ValueError(
                    f"rank mismatch between cores {k - 1} and {k}: "
                    f"{out[-1].shape[2]} != {c.shape[0]}"
                )
            c.flags.writeable = False
            out.append(c)
        if out[0].shape[0] != 1 or out[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        if orth not in ("none", "left", "right"):
            raise ValueError(f"unknown orthogonality flag {orth!r}")
        self.cores = tuple(out)
        self.orth = orth

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    @property
    def dtype(self) -> np.dtype:
        return self.cores[0].dtype

    @property
    def is_complex(self) -> bool:
        return np.issubdtype(self.dtype, np.complexfloating)

    @property
    def storage(self) -> int:
        return sum(c.size for c in self.cores)

    def __repr__(self):
        return f"TtTensor(shape={self.shape}, ranks={self.ranks}, dtype={self.dtype})"

    # Arithmetic sugar; all of it is exact formal-rank arithmetic.
    def __add__(self, other: "TtTensor") -> "TtTensor":
        return tt_axpy(1.0, self, 1.0, other)

    def __sub__(self, other: "TtTensor") -> "TtTensor":
        return tt_axpy(1.0, self, -1.0, other)

    def __neg__(self) -> "TtTensor":
        return tt_scale(-1.0, self)

    def __mul__(self, alpha) -> "TtTensor":
        return tt_scale(alpha, self)

    __rmul__ = __mul__

    def conj(self) -> "TtTensor":
        if not self.is_complex:
            return self
        return TtTensor([c.conj() for c in self.cores], orth=self.orth)

    def astype(self, dtype) -> "TtTensor":
        return TtTensor([c.astype(dtype) for c in self.cores], orth=self.orth)

    def full(self) -> np.ndarray:
        return tt_to_dense(self)

    def norm(self) -> float:
        return tt_norm(self)


# ---------------------------------------------------------------------------
# construction


def tt_zeros(shape: Sequence[int], dtype=np.float64) -> TtTensor:
    return TtTensor([np.zeros((1, n, 1), dtype=dtype) for n in shape])


def tt_ones(shape: Sequence[int], dtype=np.float64) -> TtTensor:
    return TtTensor([np.ones((1, n, 1), dtype=dtype) for n in shape])


def tt_rank1(vectors: Sequence[np.ndarray]) -> TtTensor:
    """Outer product of one vector per mode."""
    return TtTensor([np.asarray(v).reshape(1, -1, 1) for v in vectors])


def tt_random(shape: Sequence[int], ranks: Sequence[int], rng: np.random.Generator,
              complex_: bool = False) -> TtTensor:
    """Random TT tensor with Gaussian cores. ``ranks`` lists the d-1 interior ranks."""
    r = [1, *ranks, 1]
    if len(r) != len(shape) + 1:
        raise ValueError("need len(shape) - 1 interior ranks")
    cores = []
    for k, n in enumerate(shape):
        c = rng.standard_normal((r[k], n, r[k + 1]))
        if complex_:
            c = c + 1j * rng.standard_normal((r[k], n, r[k + 1]))
        cores.append(c)
    return TtTensor(cores)


def tt_from_dense(f: np.ndarray, spec: RoundingSpec = RoundingSpec()) -> TtTensor:
    """TT-SVD of a dense tensor.

    The global error budget is split evenly (in the 2-norm sense) across the
    ``d - 1`` unfoldings, so the reconstruction error is within budget.
    """
    f = np.asarray(f)
    if f.ndim == 0:
        raise ValueError("tt_from_dense needs at least one mode")
    if not np.all(np.isfinite(f)):
        raise ValueError("tensor contains non-finite entries")
    dtype = np.complex128 if np.iscomplexobj(f) else np.float64
    f = f.astype(dtype, copy=False)
    shape = f.shape
    d = len(shape)
    if d == 1:
        return TtTensor([f.reshape(1, -1, 1).copy()])
    budget = spec.bound(float(np.linalg.norm(f)))
    delta = budget / math.sqrt(d - 1)
    cores = []
    rest = f.reshape(1, -1)
    r_prev = 1
    for k in range(d - 1):
        mat = rest.reshape(r_prev * shape[k], -1)
        res = truncated_svd(mat, tol_abs=delta, max_rank=spec.max_rank)
        r = max(res.rank_kept, 1)
        if res.rank_kept == 0:
            U = np.zeros((mat.shape[0], 1), dtype=dtype)
            U[0, 0] = 1.0
            rest = np.zeros((1, mat.shape[1]), dtype=dtype)
        else:
            U = res.U
            rest = res.singular_values[:, None] * res.V.conj().T
        _check_cap(r, spec, k)
        cores.append(U.reshape(r_prev, shape[k], r))
        r_prev = r
    cores.append(rest.reshape(r_prev, shape[-1], 1))
    return TtTensor(cores, orth="left")


def _check_cap(rank: int, spec: RoundingSpec, edge: int) -> None:
    if rank > spec.rank_cap:
        raise RankCapError(
            f"edge {edge} needs rank {rank} to meet the tolerance, above the cap "
            f"{spec.rank_cap}; loosen the tolerance or raise rank_cap"
        )


def tt_to_dense(f: TtTensor) -> np.ndarray:
    """Contract all cores into a dense array (lexicographic / C order)."""
    check_budget(f.shape, f.dtype, "dense tensor")
    out = f.cores[0].reshape(f.shape[0], -1)
    for c in f.cores[1:]:
        r, n, r2 = c.shape
        out = (out @ c.reshape(r, n * r2)).reshape(-1, r2)
    return out.reshape(f.shape)


# ---------------------------------------------------------------------------
# orthogonalization and rounding


def _left_orthogonalize(cores: list[np.ndarray], upto: int) -> list[np.ndarray]:
    """QR sweep from the left; cores ``0..upto-1`` become left-orthonormal."""
    cores = list(cores)
    for k in range(upto):
        r, n, r2 = cores[k].shape
        mat = cores[k].reshape(r * n, r2)
        if mat.shape[0] >= mat.shape[1]:
            Q, R = qr_factor(mat)
        else:
            Q, R = np.linalg.qr(mat, mode="reduced")
        cores[k] = Q.reshape(r, n, Q.shape[1])
        nxt = cores[k + 1]
        cores[k + 1] = np.tensordot(R, nxt, axes=(1, 0))
    return cores


def _right_orthogonalize(cores: list[np.ndarray], downto: int = 0) -> list[np.ndarray]:
    """QR sweep from the right; cores ``downto+1..d-1`` become right-orthonormal."""
    cores = list(cores)
    for k in range(len(cores) - 1, downto, -1):
        r, n, r2 = cores[k].shape
        mat = cores[k].reshape(r, n * r2).T
        if mat.shape[0] >= mat.shape[1]:
            Q, R = qr_factor(mat)
        else:
            Q, R = np.linalg.qr(mat, mode="reduced")
        cores[k] = Q.T.reshape(Q.shape[1], n, r2)
        cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
    return cores


def tt_orthogonalize(f: TtTensor, side: str = "left") -> TtTensor:
    if side == "left":
        return TtTensor(_left_orthogonalize(list(f.cores), f.d - 1), orth="left")
    if side == "right":
        return TtTensor(_right_orthogonalize(list(f.cores)), orth="right")
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def tt_round(f: TtTensor, spec: RoundingSpec) -> TtTensor:
    """Truncate ``f`` to the lowest ranks meeting ``spec``.

    Right-to-left QR sweep, then a left-to-right SVD sweep with the error
    budget split as ``budget / sqrt(d - 1)`` per unfolding.
    """
    if f.d == 1:
        return f
    cores = f.cores if f.orth == "right" else _right_orthogonalize(list(f.cores))
    cores = list(cores)
    norm = float(np.linalg.norm(cores[0]))
    if not np.isfinite(norm):
        # an infinite tolerance would silently truncate everything to zero
        raise FloatingPointError(f"cannot round a tensor with non-finite norm ({norm})")
    delta = spec.bound(norm) / math.sqrt(f.d - 1)
    for k in range(f.d - 1):
        r, n, r2 = cores[k].shape
        mat = cores[k].reshape(r * n, r2)
        res = truncated_svd(mat, tol_abs=delta, max_rank=spec.max_rank)
        rk = res.rank_kept
        if rk == 0:
            # zero tensor: keep a rank-1 zero representation
            U = np.zeros((r * n, 1), dtype=mat.dtype)
            U[0, 0] = 1.0
            carry = np.zeros((1, r2), dtype=mat.dtype)
            rk = 1
        else:
            U = res.U
            carry = res.singular_values[:, None] * res.V.conj().T
        _check_cap(rk, spec, k)
        cores[k] = U.reshape(r, n, rk)
        cores[k + 1] = np.tensordot(carry, cores[k + 1], axes=(1, 0))
    return TtTensor(cores, orth="left")


# ---------------------------------------------------------------------------
# arithmetic


def _check_same_shape(f: TtTensor, g: TtTensor) -> None:
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")


def tt_scale(alpha, f: TtTensor) -> TtTensor:
    cores = list(f.cores)
    # scale the last core so left-orthogonality survives
    cores[-1] = alpha * cores[-1]
    return TtTensor(cores, orth="left" if f.orth == "left" else "none")


def tt_sum(terms: Sequence[tuple[complex, TtTensor]]) -> TtTensor:
    """Exact linear combination ``sum_i c_i f_i`` at formal rank (ranks add)."""
    terms = [(c, t) for c, t in terms]
    if not terms:
        raise ValueError("tt_sum needs at least one term")
    shape = terms[0][1].shape
    for _, t in terms[1:]:
        if t.shape != shape:
            raise ValueError(f"shape mismatch: {shape} vs {t.shape}")
    if len(terms) == 1:
        c, t = terms[0]
        return tt_scale(c, t)
    dtype = _dtype_of([t.cores[0] for _, t in terms] + [np.asarray([c for c, _ in terms])])
    d = len(shape)
    if d == 1:
        core = sum(c * t.cores[0] for c, t in terms)
        return TtTensor([np.asarray(core, dtype=dtype)])
    cores = []
    # first core: horizontal concatenation
    cores.append(np.concatenate([t.cores[0] for _, t in terms], axis=2).astype(dtype, copy=False))
    for k in range(1, d - 1):
        rl = [t.cores[k].shape[0] for _, t in terms]
        rr = [t.cores[k].shape[2] for _, t in terms]
        core = np.zeros((sum(rl), shape[k], sum(rr)), dtype=dtype)
        i = j = 0
        for (_, t), a, b in zip(terms, rl, rr):
            core[i:i + a, :, j:j + b] = t.cores[k]
            i += a
            j += b
        cores.append(core)
    cores.append(np.concatenate([c * t.cores[-1] for c, t in terms], axis=0).astype(dtype, copy=False))
    return TtTensor(cores)


def tt_axpy(alpha, f: TtTensor, beta, g: TtTensor) -> TtTensor:
    """``alpha f + beta g`` at formal rank ``ranks(f) + ranks(g)``."""
    _check_same_shape(f, g)
    return tt_sum([(alpha, f), (beta, g)])


def tt_inner(f: TtTensor, g: TtTensor) -> complex | float:
    """``<f, g> = sum conj(f) * g``."""
    _check_same_shape(f, g)
    env = np.ones((1, 1), dtype=np.result_type(f.dtype, g.dtype))
    for a, b in zip(f.cores, g.cores):
        # env[i, j] -> sum over mode of conj(a)[i, n, p] env[i, j] b[j, n, q]
        tmp = np.tensordot(env, b, axes=(1, 0))  # (ra, n, rb')
        env = np.tensordot(a.conj(), tmp, axes=([0, 1], [0, 1]))
    val = env[0, 0]
    if not (np.iscomplexobj(f.cores[0]) or np.iscomplexobj(g.cores[0])):
        return float(val.real)
    return complex(val)


def tt_norm(f: TtTensor) -> float:
    """Frobenius (tensor 2-) norm, computed stably through an orthogonal sweep."""
    if f.orth == "left":
        return float(np.linalg.norm(f.cores[-1]))
    if f.orth == "right":
        return float(np.linalg.norm(f.cores[0]))
    cores = _left_orthogonalize(list(f.cores), f.d - 1)
    return float(np.linalg.norm(cores[-1]))


def tt_real_inner(f: TtTensor, g: TtTensor) -> float:
    """``Re <f, g>``, the inner product of the underlying real vector space."""
    return float(np.real(tt_inner(f, g)))


def tt_hadamard(f: TtTensor, g: TtTensor, spec: RoundingSpec | None = None) -> TtTensor:
    """Elementwise product; interior ranks multiply unless ``spec`` rounds."""
    _check_same_shape(f, g)
    cores = []
    for a, b in zip(f.cores, g.cores):
        ra, n, ra2 = a.shape
        rb, _, rb2 = b.shape
        c = np.einsum("inj,knl->iknjl", a, b).reshape(ra * rb, n, ra2 * rb2)
        cores.append(c)
    out = TtTensor(cores)
    if spec is not None:
        out = tt_round(out, spec)
    return out


def mode_apply(M: np.ndarray, f: TtTensor, mode: int) -> TtTensor:
    """Contract matrix ``M`` into mode ``mode`` of ``f``; ranks are unchanged.

    ``M`` may be rectangular (``m x n_mode``), which resamples that mode.
    """
    M = np.asarray(M)
    if not 0 <= mode < f.d:
        raise IndexError(f"mode {mode} out of range for order-{f.d} tensor")
    if M.ndim != 2 or M.shape[1] != f.shape[mode]:
        raise ValueError(f"matrix of shape {M.shape} cannot act on mode of size {f.shape[mode]}")
    cores = list(f.cores)
    cores[mode] = np.einsum("mn,inj->imj", M, cores[mode])
    return TtTensor(cores)


def tt_fiber_weights(f: TtTensor, weights: Sequence[np.ndarray]) -> TtTensor:
    """Scale every mode by a diagonal weight vector (rank preserving)."""
    cores = [c * np.asarray(w)[None, :, None] for c, w in zip(f.cores, weights)]
    return TtTensor(cores)


def tt_contract_vectors(f: TtTensor, vectors: Sequence[np.ndarray | None]) -> TtTensor | complex:
    """Contract selected modes with vectors; ``None`` keeps a mode.

    Returns a scalar if every mode is contracted, otherwise the TT tensor of
    the remaining modes.
    """
    if len(vectors) != f.d:
        raise ValueError("need one entry per mode")
    kept = []
    carry = None  # matrix absorbed into the next kept core (or the result)
    for c, v in zip(f.cores, vectors):
        if carry is not None:
            c = np.tensordot(carry, c, axes=(1, 0))
            carry = None
        if v is None:
            kept.append(c)
        else:
            m = np.tensordot(c, np.asarray(v), axes=(1, 0))  # (r, r')
            if kept:
                kept[-1] = np.tensordot(kept[-1], m, axes=(2, 0))
            else:
                carry = m
    if not kept:
        return carry[0, 0]
    if carry is not None:
        kept[-1] = np.tensordot(kept[-1], carry, axes=(2, 0))
    return TtTensor(kept)
