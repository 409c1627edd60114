"""Random single-particle spectra, two-body Gaussian couplings, dense assembly.

The many-body operator is the mean-field part (diagonal in the Fock basis)
plus a two-body term summed over all ordered level tuples (s1, s2, s3, s4)
and normalized by 1/M.  One independent Gaussian amplitude is drawn per
unordered pair-of-pairs {(s1<=s2), (s3<=s4)}; every symmetry image aliases
the same draw, which is the minimal scheme yielding a real symmetric
matrix.  The 1/M normalization keeps the interaction strength parameter on
the scale where V ~ 0.1 is weakly chaotic and V ~ 0.4 strongly chaotic for
half-filled systems (the relative temperature shift it produces matches
the reference values this package is validated against).  All interaction
contributions to the diagonal are discarded, so H_kk equals the
unperturbed energy exactly and the trace/variance identities used in the
self-tests hold at machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import BasisTable, enumerate_basis, hilbert_dimension

__all__ = [
    "SingleParticleSpectrum",
    "CouplingTensor",
    "HamiltonianBundle",
    "IntegrityError",
    "sample_spectrum",
    "sample_couplings",
    "build_h0",
    "assemble",
    "save_cache",
    "load_cache",
]

_CACHE_FORMAT_VERSION = 1
_ASYMMETRY_RTOL = 1e-10


class IntegrityError(RuntimeError):
    """A structural guarantee of the assembled operator was violated."""


@dataclass(frozen=True)
class SingleParticleSpectrum:
    """Strictly increasing level energies with unit mean spacing."""

    energies: np.ndarray
    mode: str
    seed: int | None = None

    def __post_init__(self) -> None:
        e = np.asarray(self.energies, dtype=np.float64)
        if e.ndim != 1 or e.size < 2:
            raise ValueError("spectrum needs at least two levels")
        if not (np.diff(e) > 0).all():
            raise ValueError("level energies must be strictly increasing")
        object.__setattr__(self, "energies", e)

    @property
    def m(self) -> int:
        return int(self.energies.size)


def sample_spectrum(m: int, mode: str = "random", seed: int | None = None) -> SingleParticleSpectrum:
    """Draw level energies: 0, 1, ..., m-1 (deterministic) or unit-mean
    random spacings uniform on [0.5, 1.5] starting from 0 (random)."""
    if m < 2:
        raise ValueError(f"need m >= 2 levels, got {m}")
    if mode == "deterministic":
        energies = np.arange(m, dtype=np.float64)
    elif mode == "random":
        rng = np.random.default_rng(seed)
        spacings = rng.uniform(0.5, 1.5, size=m - 1)
        energies = np.concatenate(([0.0], np.cumsum(spacings)))
    else:
        raise ValueError(f"unknown spectrum mode {mode!r}")
    return SingleParticleSpectrum(energies=energies, mode=mode, seed=seed)


def _pair_list(m: int) -> np.ndarray:
    """All unordered level pairs (a <= b), lexicographic, shape (P, 2)."""
    return np.array([(a, b) for a in range(m) for b in range(a, m)], dtype=np.int64)


@dataclass(frozen=True)
class CouplingTensor:
    """Gaussian two-body amplitudes, one draw per unordered pair-of-pairs.

    ``matrix[p, q]`` is the amplitude for creating pair p after
    annihilating pair q, with pairs indexed by ``pairs`` (a <= b,
    lexicographic).  The matrix is symmetric, which makes the assembled
    operator real symmetric.
    """

    m: int
    strength: float
    seed: int | None
    matrix: np.ndarray
    pairs: np.ndarray

    @property
    def pair_count(self) -> int:
        return int(self.pairs.shape[0])

    def pair_index(self, a: int, b: int) -> int:
        lo, hi = (a, b) if a <= b else (b, a)
        if not 0 <= lo <= hi < self.m:
            raise ValueError(f"level pair ({a}, {b}) outside [0, {self.m})")
        # pairs with first element < lo, then offset within the lo block
        return lo * self.m - lo * (lo - 1) // 2 + (hi - lo)

    def entry(self, s1: int, s2: int, s3: int, s4: int) -> float:
        """Tensor element for the ordered tuple (s1, s2, s3, s4)."""
        return float(self.matrix[self.pair_index(s1, s2), self.pair_index(s3, s4)])


def sample_couplings(m: int, strength: float, seed: int | None = None) -> CouplingTensor:
    """Draw the i.i.d. N(0, strength^2) canonical amplitudes.

    The standard-normal draws depend only on (m, seed); the strength is a
    pure scale factor, so runs sharing a seed scale exactly with it.
    """
    if strength < 0:
        raise ValueError(f"coupling strength must be >= 0, got {strength}")
    pairs = _pair_list(m)
    p = pairs.shape[0]
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((p, p))
    upper = np.triu(draws)
    matrix = strength * (upper + np.triu(draws, 1).T)
    return CouplingTensor(m=m, strength=float(strength), seed=seed, matrix=matrix, pairs=pairs)


def build_h0(basis: BasisTable, spectrum: SingleParticleSpectrum) -> np.ndarray:
    """Unperturbed energies E0_k = sum_s eps_s n_s(k) for every basis state."""
    if spectrum.m != basis.m:
        raise ValueError(f"spectrum has {spectrum.m} levels, basis has {basis.m}")
    return basis.occupations @ spectrum.energies


@dataclass(frozen=True)
class HamiltonianBundle:
    """Assembled dense symmetric operator with its ingredients."""

    basis: BasisTable
    spectrum: SingleParticleSpectrum
    couplings: CouplingTensor
    e0: np.ndarray
    matrix: np.ndarray


def _pair_images(basis: BasisTable, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Targets and amplitudes of adding each pair to every (n-2)-state.

    Returns (targets, amps) of shape (P, D2): adding pair p to intermediate
    state j lands on basis state targets[p, j] with ladder amplitude
    amps[p, j].  D2 is the (n-2)-particle dimension.
    """
    n, m = basis.n, basis.m
    if n - 2 >= 1:
        occ2 = enumerate_basis(n - 2, m).occupations
    else:
        occ2 = np.zeros((1, m), dtype=np.int64)  # vacuum
    d2 = occ2.shape[0]
    p = pairs.shape[0]
    targets = np.empty((p, d2), dtype=np.int64)
    amps = np.empty((p, d2), dtype=np.float64)
    for ip, (a, b) in enumerate(pairs):
        imgs = occ2.copy()
        # create b first, then a; one sqrt of the integer product
        product = imgs[:, b] + 1
        imgs[:, b] += 1
        product = product * (imgs[:, a] + 1)
        imgs[:, a] += 1
        targets[ip] = basis.rank_rows(imgs)
        amps[ip] = np.sqrt(product.astype(np.float64))
    return targets, amps


def assemble(
    basis: BasisTable,
    spectrum: SingleParticleSpectrum,
    couplings: CouplingTensor,
) -> HamiltonianBundle:
    """Assemble the dense symmetric matrix H0 + V over the Fock basis.

    The two-body sum over ordered tuples (normalized by 1/M) is accumulated
    pairwise: every matrix element factors through an (n-2)-particle
    intermediate state, so each intermediate contributes an outer product
    of pair-creation amplitudes weighted by the coupling matrix.
    Ordered-tuple multiplicity (2 per off-diagonal pair) is folded into the
    amplitudes.  Diagonal interaction terms are discarded, asymmetry beyond
    rounding is an integrity error, and the result is symmetrized as a
    safety net.
    """
    if spectrum.m != basis.m or couplings.m != basis.m:
        raise ValueError("basis, spectrum, and couplings disagree on the level count")
    e0 = build_h0(basis, spectrum)
    dim = basis.dimension
    h = np.zeros((dim, dim), dtype=np.float64)

    if basis.n >= 2 and couplings.strength > 0:
        pairs = couplings.pairs
        targets, amps = _pair_images(basis, pairs)
        mult = np.where(pairs[:, 0] == pairs[:, 1], 1.0, 2.0)
        weighted = mult[:, None] * amps
        w = couplings.matrix / basis.m  # 1/M operator normalization
        flat = h.reshape(-1)
        chunk = max(1, 2_000_000 // (pairs.shape[0] ** 2))
        for lo in range(0, targets.shape[1], chunk):
            sl = slice(lo, lo + chunk)
            c = weighted[:, sl]
            vals = np.einsum("pj,pq,qj->pqj", c, w, c, optimize=True)
            idx = targets[:, None, sl] * dim + targets[None, :, sl]
            np.add.at(flat, idx.reshape(-1), vals.reshape(-1))

        np.fill_diagonal(h, 0.0)
        off_scale = np.abs(h).max()
        if off_scale > 0:
            skew = h - h.T
            np.abs(skew, out=skew)
            asym = skew.max()
            del skew
            if asym > _ASYMMETRY_RTOL * off_scale:
                raise IntegrityError(
                    f"assembly asymmetry {asym:.3e} exceeds {_ASYMMETRY_RTOL:.0e} "
                    f"of the largest off-diagonal magnitude {off_scale:.3e}"
                )
        h = (h + h.T) * 0.5

    h[np.diag_indices(dim)] = e0
    return HamiltonianBundle(basis=basis, spectrum=spectrum, couplings=couplings, e0=e0, matrix=h)


def cache_key(n: int, m: int, strength: float, seed: int) -> str:
    return f"N{n}_M{m}_V{strength:g}_seed{seed}_fmt{_CACHE_FORMAT_VERSION}"


def save_cache(path: str | Path, bundle: HamiltonianBundle, **extra: np.ndarray) -> None:
    """Write a bit-exact binary snapshot of a bundle (plus extra arrays)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        format_version=np.int64(_CACHE_FORMAT_VERSION),
        n=np.int64(bundle.basis.n),
        m=np.int64(bundle.basis.m),
        strength=np.float64(bundle.couplings.strength),
        spectrum_mode=np.str_(bundle.spectrum.mode),
        spectrum_seed=np.int64(-1 if bundle.spectrum.seed is None else bundle.spectrum.seed),
        couplings_seed=np.int64(-1 if bundle.couplings.seed is None else bundle.couplings.seed),
        energies=bundle.spectrum.energies,
        coupling_matrix=bundle.couplings.matrix,
        e0=bundle.e0,
        matrix=bundle.matrix,
        **extra,
    )


def load_cache(path: str | Path) -> tuple[HamiltonianBundle, dict[str, np.ndarray]]:
    """Rebuild a bundle from a cache file; returns (bundle, extra arrays)."""
    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != _CACHE_FORMAT_VERSION:
            raise ValueError(f"cache format {version}, expected {_CACHE_FORMAT_VERSION}")
        n, m = int(data["n"]), int(data["m"])
        spectrum_seed = int(data["spectrum_seed"])
        couplings_seed = int(data["couplings_seed"])
        spectrum = SingleParticleSpectrum(
            energies=data["energies"],
            mode=str(data["spectrum_mode"]),
            seed=None if spectrum_seed < 0 else spectrum_seed,
        )
        basis = enumerate_basis(n, m)
        couplings = CouplingTensor(
            m=m,
            strength=float(data["strength"]),
            seed=None if couplings_seed < 0 else couplings_seed,
            matrix=data["coupling_matrix"],
            pairs=_pair_list(m),
        )
        bundle = HamiltonianBundle(
            basis=basis,
            spectrum=spectrum,
            couplings=couplings,
            e0=data["e0"],
            matrix=data["matrix"],
        )
        known = {
            "format_version", "n", "m", "strength", "spectrum_mode",
            "spectrum_seed", "couplings_seed", "energies", "coupling_matrix",
            "e0", "matrix",
        }
        extra = {k: data[k] for k in data.files if k not in known}
    return bundle, extra
