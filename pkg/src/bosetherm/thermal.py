"""Temperature assignment for eigenstates: bare and dressed fits, shift laws.

An eigenstate gets two Bose-Einstein fits: one at its eigenvalue (bare)
and one at its dressed energy, the mean unperturbed energy of its
components.  The dressing raises the temperature wherever the density of
states grows with energy; the Gaussian-DOS closed forms predict both the
energy shift and the interaction-induced relative temperature shift from
two variances that need no diagonalization.  An eigenstate is flagged
chaotic (thermal candidate) when the coupling strength exceeds its
effective local level spacing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bed import BedSolution, energy_domain, occupations_bed, solve_bed
from .hamiltonian import HamiltonianBundle, SingleParticleSpectrum
from .spectral import EigenstateRecord, dos_moments, mean_sf_variance

__all__ = [
    "ScalingInputs",
    "ThermalRecord",
    "WindowOnd",
    "scaling_inputs",
    "dressed_bed",
    "delta_alpha_analytic",
    "temperature_shift_analytic",
    "gaussian_dos_temperature",
    "classify",
    "build_thermal_record",
    "window_average_ond",
    "bed_occupation_curve",
    "write_report_csv",
    "write_sweep_csv",
]


@dataclass(frozen=True)
class ScalingInputs:
    """Variance bookkeeping feeding the Gaussian shift formulas."""

    sigma0_sq: float
    mean_sf_var: float
    e_center: float

    def __post_init__(self) -> None:
        if self.sigma0_sq < 0 or self.mean_sf_var < 0:
            raise ValueError("variances must be non-negative")


def scaling_inputs(bundle: HamiltonianBundle) -> ScalingInputs:
    """Unperturbed DOS moments and mean SF variance, straight off the matrix."""
    dos0 = dos_moments(bundle.e0, kind="unperturbed")
    return ScalingInputs(
        sigma0_sq=dos0.variance,
        mean_sf_var=mean_sf_variance(bundle),
        e_center=dos0.center,
    )


def delta_alpha_analytic(e_alpha: float, inputs: ScalingInputs) -> float:
    """Gaussian-DOS estimate of the dressing shift at a given eigenenergy."""
    total = inputs.mean_sf_var + inputs.sigma0_sq
    if total == 0.0:
        return 0.0
    return inputs.mean_sf_var / total * (inputs.e_center - e_alpha)


def temperature_shift_analytic(inputs: ScalingInputs) -> float:
    """Energy-independent relative temperature shift, mean SF variance over
    the unperturbed DOS variance."""
    if inputs.sigma0_sq <= 0:
        raise ValueError("unperturbed DOS variance must be positive")
    return inputs.mean_sf_var / inputs.sigma0_sq


def gaussian_dos_temperature(e: float, inputs: ScalingInputs, which: str = "unperturbed") -> float:
    """Thermodynamic temperature of a Gaussian DOS, sigma^2 / (E_c - E)."""
    if which == "unperturbed":
        var = inputs.sigma0_sq
    elif which == "perturbed":
        var = inputs.sigma0_sq + inputs.mean_sf_var
    else:
        raise ValueError(f"unknown DOS kind {which!r}")
    if e == inputs.e_center:
        raise ValueError("temperature pole: energy equals the spectrum center")
    return var / (inputs.e_center - e)


def classify(record: EigenstateRecord, strength: float) -> bool:
    """Chaotic (thermal candidate) iff the coupling exceeds the effective
    local spacing of the eigenstate."""
    return strength > record.dloc


def dressed_bed(
    record: EigenstateRecord, spectrum: SingleParticleSpectrum, n: int
) -> tuple[BedSolution | None, BedSolution | None]:
    """Bose-Einstein fits at the eigenvalue and at the dressed energy.

    A side whose energy falls outside the solvable interval is returned as
    None (marked infeasible, never clamped); solver non-convergence inside
    the interval propagates.
    """
    dom = energy_domain(n, spectrum)

    def attempt(energy: float) -> BedSolution | None:
        if not dom.e_min < energy < dom.e_max:
            return None
        return solve_bed(n, energy, spectrum)

    return attempt(record.energy), attempt(record.e_dres)


@dataclass(frozen=True)
class ThermalRecord:
    """Bare and dressed fits plus measured and analytic shift diagnostics."""

    record: EigenstateRecord
    bare: BedSolution | None
    dressed: BedSolution | None
    delta_alpha_analytic: float
    dt_over_t: float
    dt_over_t_analytic: float
    chaotic: bool


def build_thermal_record(
    record: EigenstateRecord,
    spectrum: SingleParticleSpectrum,
    n: int,
    inputs: ScalingInputs,
    strength: float,
) -> ThermalRecord:
    """Assemble the full thermal diagnostic row for one eigenstate."""
    bare, dressed = dressed_bed(record, spectrum, n)
    if bare is not None and dressed is not None and dressed.beta != 0.0:
        dt_over_t = bare.beta / dressed.beta - 1.0
    else:
        dt_over_t = math.nan
    return ThermalRecord(
        record=record,
        bare=bare,
        dressed=dressed,
        delta_alpha_analytic=delta_alpha_analytic(record.energy, inputs),
        dt_over_t=dt_over_t,
        dt_over_t_analytic=temperature_shift_analytic(inputs),
        chaotic=classify(record, strength),
    )


@dataclass(frozen=True)
class WindowOnd:
    """Per-level mean and spread of occupation numbers in an energy window."""

    e_star: float
    requested: int
    mean: np.ndarray
    std: np.ndarray
    alphas: np.ndarray
    short_window: bool

    @property
    def count(self) -> int:
        return int(self.alphas.size)


def window_average_ond(records: list[EigenstateRecord], e_star: float, w: int) -> WindowOnd:
    """Average the occupation numbers of the w eigenstates nearest e_star.

    Falls back to every available record (flagged short) when fewer than w
    exist; w = 1 reduces to the single-eigenstate distribution.
    """
    if w < 1:
        raise ValueError(f"window size must be >= 1, got {w}")
    if not records:
        raise ValueError("no records to average")
    energies = np.array([r.energy for r in records])
    order = np.argsort(np.abs(energies - e_star), kind="stable")
    short = len(records) < w
    chosen = order[: min(w, len(records))]
    onds = np.stack([records[i].ond for i in chosen])
    std = onds.std(axis=0, ddof=1) if chosen.size > 1 else np.zeros(onds.shape[1])
    return WindowOnd(
        e_star=e_star,
        requested=w,
        mean=onds.mean(axis=0),
        std=std,
        alphas=np.array(sorted(records[i].alpha for i in chosen)),
        short_window=short,
    )


def bed_occupation_curve(
    solution: BedSolution | None, spectrum: SingleParticleSpectrum
) -> np.ndarray:
    """Occupations of a fit, or NaNs when the side was infeasible."""
    if solution is None:
        return np.full(spectrum.m, np.nan)
    if solution.beta == 0.0:
        return occupations_bed(0.0, math.nan, spectrum, z=solution.z)
    return occupations_bed(solution.beta, solution.mu, spectrum)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_report_csv(path: str | Path, rows: list[ThermalRecord]) -> None:
    """Machine-readable thermal table, one row per eigenstate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "alpha", "E_alpha", "E_dres",
                "beta_bare", "z_bare", "T_bare",
                "beta_dres", "z_dres", "T_dres",
                "dt_over_t", "dt_over_t_analytic",
                "delta_alpha", "delta_alpha_analytic",
                "npc", "dloc", "chaotic", "bare_feasible", "dres_feasible",
            ]
        )
        for t in rows:
            r = t.record
            bare = t.bare
            dres = t.dressed
            writer.writerow(
                [
                    r.alpha, _fmt(r.energy), _fmt(r.e_dres),
                    _fmt(bare.beta) if bare else "", _fmt(bare.z) if bare else "",
                    _fmt(bare.temperature) if bare else "",
                    _fmt(dres.beta) if dres else "", _fmt(dres.z) if dres else "",
                    _fmt(dres.temperature) if dres else "",
                    _fmt(t.dt_over_t), _fmt(t.dt_over_t_analytic),
                    _fmt(r.delta_alpha), _fmt(t.delta_alpha_analytic),
                    _fmt(r.npc), _fmt(r.dloc),
                    int(t.chaotic), int(bare is not None), int(dres is not None),
                ]
            )


def write_sweep_csv(path: str | Path, energies: np.ndarray, solutions: list[BedSolution]) -> None:
    """Fugacity and inverse-temperature curves over an energy grid."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["E", "beta", "z"])
        for e, sol in zip(energies, solutions):
            writer.writerow([_fmt(e), _fmt(sol.beta), _fmt(sol.z)])
