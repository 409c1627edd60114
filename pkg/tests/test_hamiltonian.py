"""Spectrum sampling, coupling tensor, and dense assembly tests."""

import numpy as np
import pytest

from bosetherm.hamiltonian import (
    assemble,
    build_h0,
    load_cache,
    sample_couplings,
    sample_spectrum,
    save_cache,
)
from bosetherm.basis import enumerate_basis

from conftest import brute_force_matrix


def test_deterministic_spectrum():
    spec = sample_spectrum(11, "deterministic")
    assert np.array_equal(spec.energies, np.arange(11.0))


def test_random_spectrum_spacings_bounded():
    spec = sample_spectrum(11, "random", 42)
    spacings = np.diff(spec.energies)
    assert spec.energies[0] == 0.0
    assert (spacings > 0).all()
    assert (spacings >= 0.5).all() and (spacings <= 1.5).all()


def test_random_spectrum_mean_spacing_is_unit():
    # Monte Carlo over seeds: 1e3 draws, mean spacing 1.0 +/- 0.01
    total = 0.0
    count = 0
    for seed in range(1000):
        spacings = np.diff(sample_spectrum(11, "random", seed).energies)
        total += spacings.sum()
        count += spacings.size
    assert abs(total / count - 1.0) < 0.01


def test_spectrum_rejects_bad_input():
    with pytest.raises(ValueError):
        sample_spectrum(1, "deterministic")
    with pytest.raises(ValueError):
        sample_spectrum(5, "fancy")


def test_zero_strength_couplings_vanish():
    coup = sample_couplings(5, 0.0, 1)
    assert not coup.matrix.any()


def test_coupling_variance_matches_strength():
    # all canonical entries at M = 11: P(P+1)/2 = 2211 independent draws
    coup = sample_couplings(11, 0.1, 7)
    p = coup.pair_count
    canonical = coup.matrix[np.triu_indices(p)]
    assert canonical.size == p * (p + 1) // 2
    assert abs(canonical.var() / 0.01 - 1.0) < 0.10


def test_coupling_symmetry_aliasing():
    coup = sample_couplings(6, 0.2, 3)
    assert coup.entry(1, 2, 3, 4) == coup.entry(3, 4, 1, 2)
    assert coup.entry(2, 1, 3, 4) == coup.entry(1, 2, 4, 3)
    assert coup.entry(0, 0, 5, 1) == coup.entry(1, 5, 0, 0)


def test_coupling_scales_exactly_with_strength():
    a = sample_couplings(7, 0.1, 9)
    b = sample_couplings(7, 0.4, 9)
    assert np.allclose(b.matrix, 4.0 * a.matrix, rtol=0, atol=0)


def test_h0_condensed_states():
    basis = enumerate_basis(6, 11)
    spec = sample_spectrum(11, "deterministic")
    e0 = build_h0(basis, spec)
    bottom = np.zeros(11, dtype=int)
    bottom[0] = 6
    top = np.zeros(11, dtype=int)
    top[-1] = 6
    assert e0[basis.rank(bottom)] == 0.0
    assert e0[basis.rank(top)] == 60.0


def test_h0_matches_per_state_sum():
    basis = enumerate_basis(4, 7)
    spec = sample_spectrum(7, "random", 20)
    e0 = build_h0(basis, spec)
    expected = np.array(
        [sum(spec.energies[s] * n for s, n in enumerate(occ)) for occ in basis.occupations]
    )
    assert np.allclose(e0, expected, rtol=0, atol=1e-12)


def test_zero_interaction_gives_diagonal_matrix():
    basis = enumerate_basis(3, 5)
    spec = sample_spectrum(5, "random", 4)
    bundle = assemble(basis, spec, sample_couplings(5, 0.0, 4))
    assert np.array_equal(bundle.matrix, np.diag(bundle.e0))


@pytest.mark.parametrize("n,m,seed", [(2, 3, 0), (3, 4, 1)])
def test_assembly_matches_brute_force_operator_sum(n, m, seed):
    basis = enumerate_basis(n, m)
    spec = sample_spectrum(m, "random", seed)
    coup = sample_couplings(m, 0.3, seed + 50)
    bundle = assemble(basis, spec, coup)
    oracle = brute_force_matrix(basis, spec, coup)
    assert np.abs(bundle.matrix - oracle).max() < 1e-12


def test_assembled_matrix_is_exactly_symmetric(run47):
    h = run47["bundle"].matrix
    assert np.array_equal(h, h.T)


def test_diagonal_equals_unperturbed_energy(run47):
    bundle = run47["bundle"]
    assert np.array_equal(np.diag(bundle.matrix), bundle.e0)


def test_trace_matches_unperturbed_center(run47):
    bundle = run47["bundle"]
    trace_mean = np.trace(bundle.matrix) / bundle.basis.dimension
    assert abs(trace_mean - bundle.e0.mean()) <= 1e-8 * max(1.0, abs(bundle.e0.mean()))


def test_offdiagonal_scales_linearly_with_coupling():
    basis = enumerate_basis(3, 5)
    spec = sample_spectrum(5, "random", 8)
    h1 = assemble(basis, spec, sample_couplings(5, 0.1, 77)).matrix.copy()
    h3 = assemble(basis, spec, sample_couplings(5, 0.3, 77)).matrix.copy()
    np.fill_diagonal(h1, 0.0)
    np.fill_diagonal(h3, 0.0)
    assert np.allclose(h3, 3.0 * h1, rtol=1e-13, atol=1e-15)


def test_cache_roundtrip_bit_exact(tmp_path, run47):
    bundle = run47["bundle"]
    path = tmp_path / "bundle.npz"
    save_cache(path, bundle, eigenvalues=run47["decomposition"].eigenvalues)
    loaded, extra = load_cache(path)
    assert np.array_equal(loaded.matrix, bundle.matrix)
    assert np.array_equal(loaded.e0, bundle.e0)
    assert np.array_equal(loaded.spectrum.energies, bundle.spectrum.energies)
    assert np.array_equal(loaded.couplings.matrix, bundle.couplings.matrix)
    assert loaded.spectrum.mode == bundle.spectrum.mode
    assert np.array_equal(extra["eigenvalues"], run47["decomposition"].eigenvalues)
