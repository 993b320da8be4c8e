import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tt
from tensorstep.linop import (DiagTerm, KronTerm, TtLinOp, adjoint, apply_linop, diag_op,
                              estimate_norm, identity_op, kron_sum_op, linop_apply_dense,
                              linop_to_matrix)
from tensorstep.tt import RoundingSpec, tt_axpy, tt_norm, tt_real_inner


def _operator(rng, shape, cplx=False, conj_term=False):
    def mat(n):
        M = rng.standard_normal((n, n))
        return M + 1j * rng.standard_normal((n, n)) if cplx else M
    terms = [KronTerm(0.7, tuple(mat(n) for n in shape)),
             KronTerm(-1.3, tuple(mat(n) if k == 1 else None for k, n in enumerate(shape)))]
    diags = [DiagTerm(0.4, random_tt(rng, shape, 2, cplx))]
    if conj_term:
        diags.append(DiagTerm(0.25j, random_tt(rng, shape, 2, True), conjugate=True))
    return TtLinOp(tuple(shape), tuple(terms), tuple(diags))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), cplx=st.booleans())
def test_apply_is_linear(seed, cplx):
    rng = np.random.default_rng(seed)
    shape = (3, 4, 3)
    A = _operator(rng, shape, cplx)
    f, g = random_tt(rng, shape, 2, cplx), random_tt(rng, shape, 3, cplx)
    alpha, beta = 1.7, -0.6
    lhs = apply_linop(A, tt_axpy(alpha, f, beta, g)).full()
    rhs = alpha * apply_linop(A, f).full() + beta * apply_linop(A, g).full()
    scale = np.linalg.norm(rhs) + 1.0
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale


@pytest.mark.parametrize("cplx,conj_term", [(False, False), (True, False), (True, True)])
def test_apply_matches_dense_twin(rng, cplx, conj_term):
    shape = (4, 3, 5)
    A = _operator(rng, shape, cplx, conj_term)
    f = random_tt(rng, shape, 3, cplx or conj_term)
    assert np.allclose(apply_linop(A, f).full(), linop_apply_dense(A, f.full()), atol=1e-12)


def test_matrix_matches_apply(rng):
    shape = (3, 4)
    A = _operator(rng, shape, True)
    f = random_tt(rng, shape, 2, True)
    M = linop_to_matrix(A)
    assert np.allclose(M @ f.full().reshape(-1), apply_linop(A, f).full().reshape(-1))
    with pytest.raises(ValueError):
        linop_to_matrix(_operator(rng, shape, True, conj_term=True))


@pytest.mark.parametrize("conj_term", [False, True])
def test_adjoint_identity(rng, conj_term):
    shape = (3, 4, 2)
    A = _operator(rng, shape, True, conj_term)
    x, y = random_tt(rng, shape, 2, True), random_tt(rng, shape, 2, True)
    lhs = tt_real_inner(apply_linop(A, x), y)
    rhs = tt_real_inner(x, apply_linop(adjoint(A), y))
    assert lhs == pytest.approx(rhs, rel=1e-11)


def test_norm_estimate_is_close_lower_bound(rng):
    n = 10
    D = np.diag(np.linspace(-4.0, -0.5, n))
    A = identity_op((n, n)) + kron_sum_op((n, n), [D, D], coef=-0.3)
    exact = np.linalg.norm(linop_to_matrix(A), 2)
    est = estimate_norm(A, iters=30, spec=RoundingSpec(tol_rel=1e-10))
    assert est <= exact * (1 + 1e-10)
    assert est >= 0.95 * exact
    # the default eight iterations land in the right ballpark
    assert estimate_norm(A) >= 0.5 * exact


def test_helpers_and_validation(rng):
    shape = (3, 3)
    f = random_tt(rng, shape, 2)
    assert np.allclose(apply_linop(identity_op(shape, 2.0), f).full(), 2 * f.full())
    w = random_tt(rng, shape, 1)
    assert np.allclose(apply_linop(diag_op(w, 3.0), f).full(), 3 * w.full() * f.full())
    empty = TtLinOp(shape)
    assert tt_norm(apply_linop(empty, f)) == 0.0
    with pytest.raises(ValueError):
        TtLinOp(shape, (KronTerm(1.0, (np.eye(2), None)),))
    with pytest.raises(ValueError):
        TtLinOp(shape, (KronTerm(1.0, (None,)),))
    with pytest.raises(ValueError):
        apply_linop(identity_op((3, 4)), f)
    A = identity_op(shape) + diag_op(w)
    assert len(A.kron_terms) == 1 and len(A.diag_terms) == 1
    assert np.allclose(A.scaled(-2.0)(f).full(), -2 * (f.full() + w.full() * f.full()))
