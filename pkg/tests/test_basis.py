"""Basis enumeration, ranking, and ladder-operator tests."""

import itertools
from math import comb

import numpy as np
import pytest

from bosetherm.basis import apply_two_body, enumerate_basis, hilbert_dimension


def test_flagship_dimension():
    assert enumerate_basis(6, 11).dimension == 8008


def test_single_particle_basis_is_unit_vectors():
    table = enumerate_basis(1, 5)
    assert table.dimension == 5
    assert np.array_equal(np.sort(table.occupations.sum(axis=1)), np.ones(5))
    assert np.array_equal(table.occupations.sum(axis=0), np.ones(5))


def test_enumeration_matches_exhaustive_oracle():
    table = enumerate_basis(4, 7)
    assert table.dimension == comb(10, 4) == 210
    oracle = sorted(s for s in itertools.product(range(5), repeat=7) if sum(s) == 4)
    assert np.array_equal(table.occupations, np.array(oracle))


@pytest.mark.parametrize("n,m", [(2, 3), (3, 5), (4, 7), (1, 4)])
def test_dimension_formula_and_strict_order(n, m):
    table = enumerate_basis(n, m)
    assert table.dimension == hilbert_dimension(n, m)
    rows = [tuple(r) for r in table.occupations]
    assert rows == sorted(rows)
    assert len(set(rows)) == table.dimension
    assert (table.occupations.sum(axis=1) == n).all()


def test_rank_endpoints():
    table = enumerate_basis(4, 7)
    assert table.rank(table.occupations[0]) == 0
    assert table.rank(table.occupations[-1]) == table.dimension - 1
    first = np.zeros(7, dtype=int)
    first[-1] = 4
    assert np.array_equal(table.unrank(0), first)


def test_rank_unrank_roundtrip_everywhere():
    table = enumerate_basis(4, 7)
    for i in range(table.dimension):
        state = table.unrank(i)
        assert table.rank(state) == i
        assert np.array_equal(state, table.occupations[i])
    table35 = enumerate_basis(3, 5)
    for i, state in enumerate(table35.occupations):
        assert table35.rank(state) == i


def test_rank_rows_matches_scalar_rank():
    table = enumerate_basis(3, 5)
    ranks = table.rank_rows(table.occupations)
    assert np.array_equal(ranks, np.arange(table.dimension))


def test_rejects_invalid_construction():
    with pytest.raises(ValueError):
        enumerate_basis(0, 5)
    with pytest.raises(ValueError):
        enumerate_basis(5, 0)
    with pytest.raises(ValueError):
        enumerate_basis(80, 80)  # dimension overflows int64


def test_rank_rejects_wrong_particle_total():
    table = enumerate_basis(3, 5)
    with pytest.raises(ValueError):
        table.rank(np.array([1, 1, 0, 0, 0]))
    with pytest.raises(ValueError):
        table.rank(np.array([4, -1, 0, 0, 0]))


def test_unrank_rejects_out_of_range():
    table = enumerate_basis(3, 5)
    with pytest.raises(ValueError):
        table.unrank(table.dimension)
    with pytest.raises(ValueError):
        table.unrank(-1)


def test_two_body_pair_hop_amplitude():
    state = np.zeros(4, dtype=int)
    state[0] = 2
    image, amp = apply_two_body(state, 1, 1, 0, 0)
    assert np.array_equal(image, [0, 2, 0, 0])
    assert amp == 2.0


def test_two_body_number_operator_identity():
    for n1 in range(2, 6):
        state = np.array([n1, 1, 0])
        image, amp = apply_two_body(state, 0, 0, 0, 0)
        assert np.array_equal(image, state)
        assert amp == n1 * (n1 - 1)


def test_two_body_empty_annihilation_returns_none():
    assert apply_two_body(np.array([1, 0, 0]), 0, 0, 1, 1) is None
    assert apply_two_body(np.array([0, 1, 0]), 1, 1, 0, 1) is None


def test_two_body_rejects_bad_level():
    with pytest.raises(ValueError):
        apply_two_body(np.array([1, 1, 0]), 0, 0, 0, 3)
    with pytest.raises(ValueError):
        apply_two_body(np.array([1, 1, 0]), -1, 0, 0, 1)


def test_two_body_conserves_particles_with_positive_amplitude():
    table = enumerate_basis(3, 4)
    rng = np.random.default_rng(5)
    for _ in range(200):
        k = rng.integers(table.dimension)
        s = rng.integers(0, 4, size=4)
        result = apply_two_body(table.occupations[k], *s)
        if result is None:
            continue
        image, amp = result
        assert image.sum() == 3
        assert amp > 0


def test_single_term_plus_reverse_is_symmetric():
    # one ordered term plus its adjoint ordering gives a symmetric matrix,
    # which is what the pair-exchange symmetry of the couplings guarantees
    table = enumerate_basis(3, 4)
    d = table.dimension

    def term_matrix(s1, s2, s3, s4):
        h = np.zeros((d, d))
        for k in range(d):
            result = apply_two_body(table.occupations[k], s1, s2, s3, s4)
            if result is not None:
                image, amp = result
                h[table.rank(image), k] += amp
        return h

    for tup in [(0, 1, 2, 3), (1, 1, 0, 2), (0, 2, 2, 0), (3, 2, 1, 0)]:
        a = term_matrix(*tup)
        b = term_matrix(*tup[::-1])
        assert np.allclose(a + b, (a + b).T, atol=1e-12)
        assert np.allclose(a, b.T, atol=1e-12)
