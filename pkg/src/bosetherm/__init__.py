"""Eigenstate thermometry for randomly interacting bosons.

Build the Fock basis of N bosons on M levels, assemble a mean-field plus
random-two-body Hamiltonian, diagonalize it, and decide per eigenstate
whether a Bose-Einstein temperature can be assigned: bare and dressed
fits, analytic shift estimates, and disorder-ensemble fluctuation
statistics.
"""

from .basis import BasisTable, apply_two_body, enumerate_basis, hilbert_dimension
from .bed import (
    BedConvergenceError,
    BedSolution,
    EnergyDomain,
    energy_domain,
    occupations_bed,
    solve_bed,
    solve_mu_given_beta,
)
from .fluct import (
    EnsembleError,
    EnsembleResult,
    EnsembleSpec,
    critical_npc,
    gaussian_fit,
    relative_fluctuations,
    run_ensemble,
    scaling_curve,
    statistical_equivalence,
)
from .hamiltonian import (
    CouplingTensor,
    HamiltonianBundle,
    IntegrityError,
    SingleParticleSpectrum,
    assemble,
    build_h0,
    sample_couplings,
    sample_spectrum,
)
from .spectral import (
    DosSummary,
    EigenDecomposition,
    EigenstateRecord,
    SpectralProfile,
    build_all_records,
    build_record,
    diagonalize,
    dos_moments,
    f_function,
    mean_sf_variance,
    moving_window_average,
    participation_ratio,
    strength_function,
    unperturbed_width,
)
from .thermal import (
    ScalingInputs,
    ThermalRecord,
    build_thermal_record,
    classify,
    delta_alpha_analytic,
    dressed_bed,
    gaussian_dos_temperature,
    scaling_inputs,
    temperature_shift_analytic,
    window_average_ond,
)

__version__ = "0.1.0"
