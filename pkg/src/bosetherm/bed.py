"""Finite-N Bose-Einstein constraint solver over a discrete level spectrum.

Given particle number N and a target energy E, find (beta, mu) such that
the Bose-Einstein occupations n_s = 1/(exp(beta*(eps_s - mu)) - 1) carry
exactly N particles and energy E.  Energies below the uniform-filling
point give beta > 0 (mu below the bottom level); energies above it give
beta < 0 (mu above the top level, the negative-temperature half of the
bounded spectrum); the uniform point itself is an exact closed-form
branch with beta = 0 and fugacity z = N/(N+M).

The solver nests a bracketed monotone mu-solve inside a bisection on
beta, then polishes with a damped two-dimensional Newton step; iterates
never leave the pole-free feasible region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .hamiltonian import SingleParticleSpectrum

__all__ = [
    "BedSolution",
    "EnergyDomain",
    "BedConvergenceError",
    "occupations_bed",
    "solve_mu_given_beta",
    "solve_bed",
    "energy_domain",
]

PARTICLE_TOL = 1e-8
ENERGY_RTOL = 1e-8
_MU_TOL = 1e-10
_MAX_BISECT = 200
_MAX_NEWTON = 50
_MAX_EXPAND = 200


class BedConvergenceError(RuntimeError):
    """Solver ran out of budget; carries the last iterate and residuals."""

    def __init__(self, message: str, beta: float, mu: float, residual_n: float, residual_e: float):
        super().__init__(
            f"{message} (last iterate beta={beta:.6e}, mu={mu:.6e}, "
            f"residuals n={residual_n:.3e}, E={residual_e:.3e})"
        )
        self.beta = beta
        self.mu = mu
        self.residual_n = residual_n
        self.residual_e = residual_e


@dataclass(frozen=True)
class BedSolution:
    """Converged (beta, mu, z) triple for one target energy."""

    beta: float
    mu: float
    z: float
    target_energy: float
    residual_n: float
    residual_e: float
    iterations: int
    branch: str  # "below-center" (beta > 0), "infinite-T" (beta = 0), "above-center"

    @property
    def temperature(self) -> float:
        return math.inf if self.beta == 0.0 else 1.0 / self.beta


@dataclass(frozen=True)
class EnergyDomain:
    """Landmark energies bracketing the solvable range."""

    e_min: float
    e_uniform: float
    e_max: float


def energy_domain(n: int, spectrum: SingleParticleSpectrum) -> EnergyDomain:
    """Condensed, uniform-filling, and top-condensed energies for n bosons."""
    e = spectrum.energies
    return EnergyDomain(
        e_min=n * float(e[0]),
        e_uniform=n * float(e.mean()),
        e_max=n * float(e[-1]),
    )


def occupations_bed(
    beta: float, mu: float, spectrum: SingleParticleSpectrum, z: float | None = None
) -> np.ndarray:
    """Bose-Einstein occupations per level; beta = 0 is the uniform limit.

    For beta != 0 every argument beta*(eps_s - mu) must be positive, i.e.
    mu below the bottom level (beta > 0) or above the top one (beta < 0);
    at or across the pole raises ValueError.  For beta = 0 the occupations
    are the uniform limit z/(1-z) and require the fugacity.
    """
    e = spectrum.energies
    if beta == 0.0:
        if z is None:
            raise ValueError("beta = 0 needs the fugacity z to fix the uniform occupation")
        if not 0.0 < z < 1.0:
            raise ValueError(f"fugacity must lie in (0, 1) at beta = 0, got {z}")
        return np.full(e.size, z / (1.0 - z))
    x = beta * (e - mu)
    if x.min() <= 0.0:
        raise ValueError(
            f"occupation pole: beta*(eps-mu) must be positive for every level "
            f"(min argument {x.min():.3e})"
        )
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(x)


def _occ_unsafe(beta: float, mu: float, e: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(beta * (e - mu))


def solve_mu_given_beta(beta: float, n: int, spectrum: SingleParticleSpectrum) -> float:
    """Chemical potential carrying exactly n particles at fixed beta != 0.

    The particle count is strictly monotone in mu on the admissible side of
    the pole (mu < eps_1 for beta > 0, mu > eps_M for beta < 0), so the
    root is bracketed by geometric expansion and closed by Brent's method.
    """
    if beta == 0.0:
        raise ValueError("beta = 0 has no mu; use the closed-form uniform branch")
    e = spectrum.energies
    pole = float(e[0]) if beta > 0 else float(e[-1])
    sign = 1.0 if beta > 0 else -1.0  # mu = pole - sign*t, t > 0

    def count(t: float) -> float:
        return float(_occ_unsafe(beta, pole - sign * t, e).sum()) - n

    # seed the pole distance from the single dominant level: n_edge ~ 1/(|beta| t)
    t0 = 1.0 / (abs(beta) * n)
    t_lo, t_hi = t0, t0
    for _ in range(_MAX_EXPAND):
        if count(t_lo) >= 0.0:
            break
        t_lo /= 8.0
    else:
        raise BedConvergenceError("mu bracket (pole side) not found", beta, pole - sign * t_lo, count(t_lo), math.nan)
    for _ in range(_MAX_EXPAND):
        if count(t_hi) <= 0.0:
            break
        t_hi *= 8.0
    else:
        raise BedConvergenceError("mu bracket (far side) not found", beta, pole - sign * t_hi, count(t_hi), math.nan)
    t = brentq(count, t_lo, t_hi, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    mu = pole - sign * t
    if abs(count(t)) > _MU_TOL * max(1.0, n):
        raise BedConvergenceError("inner mu solve missed the particle count", beta, mu, count(t), math.nan)
    return mu


def _energy_at(beta: float, n: int, spectrum: SingleParticleSpectrum) -> tuple[float, float]:
    mu = solve_mu_given_beta(beta, n, spectrum)
    occ = _occ_unsafe(beta, mu, spectrum.energies)
    return float(spectrum.energies @ occ), mu


def _newton_polish(
    beta: float,
    mu: float,
    n: int,
    energy: float,
    spectrum: SingleParticleSpectrum,
    max_steps: int,
) -> tuple[float, float, int]:
    """Damped 2-D Newton on (particle, energy) residuals, kept feasible."""
    e = spectrum.energies
    pole = float(e[0]) if beta > 0 else float(e[-1])
    sign = 1.0 if beta > 0 else -1.0
    e_scale = max(1.0, abs(energy))

    def residuals(b: float, m: float) -> tuple[np.ndarray, np.ndarray]:
        occ = _occ_unsafe(b, m, e)
        return occ, np.array([occ.sum() - n, e @ occ - energy])

    occ, res = residuals(beta, mu)
    steps = 0
    for _ in range(max_steps):
        if abs(res[0]) <= 0.1 * PARTICLE_TOL and abs(res[1]) <= 0.1 * ENERGY_RTOL * e_scale:
            break
        g = occ * (1.0 + occ)  # -dn/dx for x = beta*(eps - mu)
        j = np.array(
            [
                [-(g * (e - mu)).sum(), beta * g.sum()],
                [-(g * e * (e - mu)).sum(), beta * (g * e).sum()],
            ]
        )
        try:
            step = np.linalg.solve(j, -res)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        best = None
        for _ in range(30):
            b_new = beta + lam * step[0]
            m_new = mu + lam * step[1]
            feasible = (b_new * (1.0 if sign > 0 else -1.0) > 0.0) and (sign * (pole - m_new) > 0.0)
            if feasible:
                occ_new, res_new = residuals(b_new, m_new)
                if np.abs(res_new).max() < np.abs(res).max():
                    best = (b_new, m_new, occ_new, res_new)
                    break
            lam /= 2.0
        if best is None:
            break
        beta, mu, occ, res = best
        steps += 1
    return beta, mu, steps


def solve_bed(n: int, energy: float, spectrum: SingleParticleSpectrum) -> BedSolution:
    """Solve the two Bose-Einstein constraints at a prescribed energy.

    Bisects the monotone energy-of-beta curve on the branch selected by the
    sign of (e_uniform - energy), then Newton-polishes the pair.  Budget:
    200 bisections plus 50 Newton steps; residual targets 1e-8 absolute in
    particles, 1e-8 relative in energy.
    """
    dom = energy_domain(n, spectrum)
    if not dom.e_min < energy < dom.e_max:
        raise ValueError(
            f"energy {energy} outside the solvable interval ({dom.e_min}, {dom.e_max})"
        )
    if energy == dom.e_uniform:
        z = n / (n + spectrum.m)
        occ = occupations_bed(0.0, math.nan, spectrum, z=z)
        return BedSolution(
            beta=0.0,
            mu=math.nan,
            z=z,
            target_energy=energy,
            residual_n=float(occ.sum() - n),
            residual_e=float(spectrum.energies @ occ - energy),
            iterations=0,
            branch="infinite-T",
        )

    positive = energy < dom.e_uniform
    branch = "below-center" if positive else "above-center"
    iterations = 0

    # bracket: energy-of-beta decreases in beta on both branches
    if positive:
        lo, e_lo = 0.0, dom.e_uniform
        hi = 1.0
        for _ in range(_MAX_EXPAND):
            e_hi, _ = _energy_at(hi, n, spectrum)
            iterations += 1
            if e_hi < energy:
                break
            lo, e_lo = hi, e_hi
            hi *= 2.0
        else:
            raise BedConvergenceError("no upper beta bracket", hi, math.nan, math.nan, e_hi - energy)
    else:
        hi, e_hi = 0.0, dom.e_uniform
        lo = -1.0
        for _ in range(_MAX_EXPAND):
            e_lo, _ = _energy_at(lo, n, spectrum)
            iterations += 1
            if e_lo > energy:
                break
            hi, e_hi = lo, e_lo
            lo *= 2.0
        else:
            raise BedConvergenceError("no lower beta bracket", lo, math.nan, math.nan, e_lo - energy)

    # phase 1: bisect to a loose width, Newton finishes from there
    width_goal = 1e-6 * max(1.0, abs(hi), abs(lo))
    remaining = _MAX_BISECT
    while hi - lo > width_goal and remaining > 0:
        mid = 0.5 * (lo + hi)
        e_mid, _ = _energy_at(mid, n, spectrum)
        iterations += 1
        remaining -= 1
        if e_mid >= energy:
            lo = mid
        else:
            hi = mid

    beta = 0.5 * (lo + hi)
    if beta == 0.0:  # never bisect onto the pole of the inner solve
        beta = hi / 2.0 if positive else lo / 2.0
    mu = solve_mu_given_beta(beta, n, spectrum)
    beta, mu, steps = _newton_polish(beta, mu, n, energy, spectrum, _MAX_NEWTON)
    iterations += steps

    occ = _occ_unsafe(beta, mu, spectrum.energies)
    res_n = float(occ.sum() - n)
    res_e = float(spectrum.energies @ occ - energy)
    e_scale = max(1.0, abs(energy))

    if abs(res_n) > PARTICLE_TOL or abs(res_e) > ENERGY_RTOL * e_scale:
        # spend what is left of the bisection budget, then one more polish
        while hi - lo > 0 and remaining > 0:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            e_mid, _ = _energy_at(mid, n, spectrum)
            iterations += 1
            remaining -= 1
            if e_mid >= energy:
                lo = mid
            else:
                hi = mid
        beta = 0.5 * (lo + hi)
        mu = solve_mu_given_beta(beta, n, spectrum)
        beta, mu, steps = _newton_polish(beta, mu, n, energy, spectrum, 10)
        iterations += steps
        occ = _occ_unsafe(beta, mu, spectrum.energies)
        res_n = float(occ.sum() - n)
        res_e = float(spectrum.energies @ occ - energy)
        if abs(res_n) > PARTICLE_TOL or abs(res_e) > ENERGY_RTOL * e_scale:
            raise BedConvergenceError("constraint residuals above target", beta, mu, res_n, res_e)

    return BedSolution(
        beta=beta,
        mu=mu,
        z=float(math.exp(beta * mu)),
        target_energy=energy,
        residual_n=res_n,
        residual_e=res_e,
        iterations=iterations,
        branch=branch,
    )
