"""Shared fixtures: small systems that exercise the full pipeline quickly."""

from __future__ import annotations

import numpy as np
import pytest

from bosetherm import (
    assemble,
    build_all_records,
    diagonalize,
    enumerate_basis,
    sample_couplings,
    sample_spectrum,
    scaling_inputs,
)


@pytest.fixture(scope="session")
def basis47():
    return enumerate_basis(4, 7)


@pytest.fixture(scope="session")
def basis35():
    return enumerate_basis(3, 5)


@pytest.fixture(scope="session")
def run47():
    """Full desk-scale pipeline at (4, 7), random spectrum, V = 0.3."""
    basis = enumerate_basis(4, 7)
    spectrum = sample_spectrum(7, "random", 101)
    couplings = sample_couplings(7, 0.3, 202)
    bundle = assemble(basis, spectrum, couplings)
    decomposition = diagonalize(bundle)
    records = build_all_records(decomposition, bundle)
    return {
        "basis": basis,
        "spectrum": spectrum,
        "couplings": couplings,
        "bundle": bundle,
        "decomposition": decomposition,
        "records": records,
        "inputs": scaling_inputs(bundle),
    }


def brute_force_matrix(basis, spectrum, couplings):
    """Independent oracle: per-state application of every ordered operator
    tuple, with the same 1/M two-body normalization and diagonal-free
    convention as the production assembly."""
    from bosetherm.basis import apply_two_body

    d, m = basis.dimension, basis.m
    h = np.zeros((d, d))
    for k in range(d):
        occ = basis.occupations[k]
        for s1 in range(m):
            for s2 in range(m):
                for s3 in range(m):
                    for s4 in range(m):
                        result = apply_two_body(occ, s1, s2, s3, s4)
                        if result is None:
                            continue
                        image, amp = result
                        h[basis.rank(image), k] += amp * couplings.entry(s1, s2, s3, s4) / m
    np.fill_diagonal(h, 0.0)
    h = (h + h.T) / 2.0
    h[np.diag_indices(d)] = basis.occupations @ spectrum.energies
    return h
