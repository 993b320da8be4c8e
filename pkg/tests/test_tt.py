import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tt
from tensorstep.tt import (RankCapError, RoundingSpec, TtTensor, mode_apply, tt_axpy,
                           tt_contract_vectors, tt_fiber_weights, tt_from_dense, tt_hadamard,
                           tt_inner, tt_norm, tt_ones, tt_rank1, tt_real_inner, tt_round, tt_scale,
                           tt_sum, tt_to_dense, tt_zeros)

shapes = st.lists(st.integers(2, 6), min_size=2, max_size=4).map(tuple)


@settings(max_examples=80, deadline=None)
@given(shape=shapes, rank=st.integers(1, 6), seed=st.integers(0, 2**31),
       tol_abs=st.sampled_from([0.0, 1e-6, 1e-2, 1.0]), tol_rel=st.sampled_from([0.0, 1e-8, 1e-3, 0.2]),
       cplx=st.booleans())
def test_rounding_contract(shape, rank, seed, tol_abs, tol_rel, cplx):
    f = random_tt(np.random.default_rng(seed), shape, rank, cplx)
    F = f.full()
    g = tt_round(f, RoundingSpec(tol_abs, tol_rel))
    err = np.linalg.norm(g.full() - F)
    assert err <= max(tol_abs, tol_rel * np.linalg.norm(F)) + 1e-12 * np.linalg.norm(F)


@settings(max_examples=40, deadline=None)
@given(shape=shapes, rank=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_rounding_idempotent_and_nonexpansive(shape, rank, seed):
    f = random_tt(np.random.default_rng(seed), shape, rank)
    spec = RoundingSpec(tol_rel=0.05)
    g = tt_round(f, spec)
    h = tt_round(g, spec)
    nf = tt_norm(f)
    assert h.ranks == g.ranks
    assert np.linalg.norm(h.full() - g.full()) <= 1e-12 * nf
    assert tt_norm(g) <= nf + spec.bound(nf)


def test_round_recovers_exact_rank(rng):
    f = random_tt(rng, (5, 6, 7, 4), 2)
    doubled = tt_sum([(1.0, f), (2.0, f)])
    assert doubled.ranks == (1, 4, 4, 4, 1)
    g = tt_round(doubled, RoundingSpec())
    assert g.ranks == (1, 2, 2, 2, 1)
    assert np.allclose(g.full(), 3 * f.full(), atol=1e-12 * tt_norm(f))


def test_round_zero_and_max_rank(rng):
    z = tt_round(tt_zeros((3, 4, 5)), RoundingSpec(tol_rel=1e-3))
    assert tt_norm(z) == 0.0
    assert z.ranks == (1, 1, 1, 1)
    f = random_tt(rng, (6, 6, 6), 5)
    g = tt_round(f, RoundingSpec(max_rank=2))
    assert g.max_rank == 2


def test_rank_cap_raises(rng):
    f = random_tt(rng, (8, 8, 8), 6)
    with pytest.raises(RankCapError, match="cap"):
        tt_round(f, RoundingSpec(rank_cap=3))
    # a silent max_rank request below the cap is fine
    assert tt_round(f, RoundingSpec(max_rank=3, rank_cap=3)).max_rank == 3


def test_from_dense_round_trip(rng):
    F = rng.standard_normal((4, 5, 3, 2))
    f = tt_from_dense(F)
    assert np.allclose(tt_to_dense(f), F, atol=1e-12)
    G = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    assert np.allclose(tt_from_dense(G).full(), G)
    assert tt_from_dense(np.arange(5.0)).shape == (5,)


def test_from_dense_tolerance(rng):
    # separable plus small noise
    F = np.einsum("i,j,k->ijk", *[rng.standard_normal(6) for _ in range(3)]) + 1e-4 * rng.standard_normal((6, 6, 6))
    f = tt_from_dense(F, RoundingSpec(tol_abs=1e-2))
    assert f.max_rank == 1
    assert np.linalg.norm(f.full() - F) <= 1e-2


def test_arithmetic_matches_dense(rng):
    f = random_tt(rng, (3, 4, 5), 3, complex_=True)
    g = random_tt(rng, (3, 4, 5), 2, complex_=True)
    F, Gd = f.full(), g.full()
    assert np.allclose((f + g).full(), F + Gd)
    assert np.allclose((f - g).full(), F - Gd)
    assert np.allclose((-f).full(), -F)
    assert np.allclose((2j * f).full(), 2j * F)
    assert np.allclose(tt_axpy(0.5, f, -3.0, g).full(), 0.5 * F - 3 * Gd)
    assert np.allclose(tt_scale(1.5, f).full(), 1.5 * F)
    # conjugate-linear in the first slot
    assert tt_inner(f, g) == pytest.approx(np.vdot(F, Gd))
    assert tt_inner(2j * f, g) == pytest.approx(-2j * np.vdot(F, Gd))
    assert tt_real_inner(f, g) == pytest.approx(np.vdot(F, Gd).real)
    assert tt_norm(f) == pytest.approx(np.linalg.norm(F))
    assert np.allclose(f.conj().full(), F.conj())


def test_sum_ranks_add(rng):
    f = random_tt(rng, (4, 4, 4), 2)
    g = random_tt(rng, (4, 4, 4), 3)
    assert tt_sum([(1.0, f), (1.0, g)]).ranks == (1, 5, 5, 1)
    with pytest.raises(ValueError):
        tt_sum([(1.0, f), (1.0, random_tt(rng, (4, 4, 5), 2))])


def test_hadamard_rank_product_and_values(rng):
    f = random_tt(rng, (4, 5, 6), 2)
    g = random_tt(rng, (4, 5, 6), 3)
    h = tt_hadamard(f, g)
    assert h.ranks == (1, 6, 6, 1)
    assert np.allclose(h.full(), f.full() * g.full())
    # squares of a rank-2 tensor have rank at most 3 (symmetric products)
    sq = tt_hadamard(f, f, RoundingSpec(tol_rel=1e-12))
    assert sq.max_rank <= 3


def test_mode_apply_rectangular(rng):
    f = random_tt(rng, (4, 5, 3), 2)
    M = rng.standard_normal((7, 5))
    g = mode_apply(M, f, 1)
    assert g.shape == (4, 7, 3)
    assert g.ranks == f.ranks
    assert np.allclose(g.full(), np.einsum("mj,ijk->imk", M, f.full()))
    with pytest.raises(ValueError):
        mode_apply(M, f, 0)
    with pytest.raises(IndexError):
        mode_apply(M, f, 3)


def test_contract_vectors_and_weights(rng):
    f = random_tt(rng, (3, 4, 5, 2), 3)
    F = f.full()
    v = [rng.standard_normal(n) for n in f.shape]
    total = tt_contract_vectors(f, v)
    assert total == pytest.approx(np.einsum("ijkl,i,j,k,l->", F, *v))
    part = tt_contract_vectors(f, [v[0], None, v[2], None])
    assert np.allclose(part.full(), np.einsum("ijkl,i,k->jl", F, v[0], v[2]))
    w = tt_fiber_weights(f, v)
    assert np.allclose(w.full(), F * np.einsum("i,j,k,l->ijkl", *v))


def test_tensor_is_immutable(rng):
    f = random_tt(rng, (3, 3), 2)
    with pytest.raises(ValueError):
        f.cores[0][0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        TtTensor([np.ones((2, 3, 1))])
    with pytest.raises(ValueError):
        TtTensor([np.ones((1, 3, 2)), np.ones((3, 3, 1))])


def test_small_constructors():
    assert tt_norm(tt_ones((2, 3, 4))) == pytest.approx(np.sqrt(24))
    r1 = tt_rank1([np.array([1.0, 2.0]), np.array([3.0, 4.0, 5.0])])
    assert np.array_equal(r1.full(), np.outer([1, 2], [3, 4, 5]))
    assert r1.storage == 5


def test_rounding_spec_validation():
    with pytest.raises(ValueError):
        RoundingSpec(tol_abs=-1.0)
    with pytest.raises(ValueError):
        RoundingSpec(tol_rel=np.inf)
    with pytest.raises(ValueError):
        RoundingSpec(max_rank=0)
