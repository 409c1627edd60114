"""Disorder-ensemble engine: pooled occupation fluctuations and their scaling.

Runs many independent realizations of the random spectrum and couplings,
retains eigenstate records in requested energy windows (or everywhere),
and distills the statistics: relative occupation fluctuations per level,
Gaussian fits with a chi-square goodness score, the critical participation
ratio where the local-spacing criterion crosses the coupling strength, and
the decay of the mean fluctuation with participation ratio.

Per-realization seeds are hashed deterministically from the master seed
and the realization index, so results are reproducible and independent of
worker scheduling; merged output is sorted before any aggregation.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import norm as _norm

from .basis import BasisTable, enumerate_basis
from .hamiltonian import assemble, sample_couplings, sample_spectrum
from .spectral import EigenstateRecord, build_all_records, diagonalize
from .thermal import ThermalRecord, build_thermal_record, scaling_inputs

__all__ = [
    "EnsembleSpec",
    "EnsembleEntry",
    "RealizationSummary",
    "EnsembleResult",
    "EnsembleError",
    "FluctuationSamples",
    "GaussianFit",
    "ScalingReport",
    "KsComparison",
    "derive_seeds",
    "run_realization",
    "run_ensemble",
    "relative_fluctuations",
    "close_eigenstate_samples",
    "disorder_samples",
    "gaussian_fit",
    "critical_npc",
    "scaling_curve",
    "statistical_equivalence",
    "write_samples_csv",
    "write_scaling_csv",
]

_LEVEL_MEAN_FLOOR = 1e-12
_KS_CRITICAL_1PCT = 1.628  # c(alpha) for the two-sample statistic at 1%


class EnsembleError(RuntimeError):
    """More than the tolerated fraction of realizations failed."""


def derive_seeds(master_seed: int, realization: int) -> tuple[int, int]:
    """Deterministic (spectrum, couplings) seeds for one realization."""
    state = np.random.SeedSequence([int(master_seed), int(realization)]).generate_state(2)
    return int(state[0]), int(state[1])


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything needed to reproduce an ensemble run bit for bit.

    ``windows`` retains the w eigenstates closest to each target energy;
    ``retain_all`` additionally keeps every eigenstate (window = None) for
    cloud statistics.  Thermal fits are solved for window entries only,
    and only when ``solve_thermal`` is on; the all-state cloud never pays
    for them.  ``vary_spectrum`` controls whether each realization draws a
    fresh level spectrum (the default) or the whole ensemble shares
    realization 0's spectrum and only the couplings vary, which isolates
    pure interaction-disorder fluctuations.
    """

    n: int
    m: int
    strength: float
    realizations: int
    master_seed: int
    windows: tuple[tuple[float, int], ...] = ()
    spectrum_mode: str = "random"
    retain_all: bool = False
    solve_thermal: bool = True
    vary_spectrum: bool = True

    def __post_init__(self) -> None:
        if self.realizations < 1:
            raise ValueError("need at least one realization")
        if not self.windows and not self.retain_all:
            raise ValueError("no windows requested and retain_all is off: nothing to retain")
        for e_star, w in self.windows:
            if w < 1:
                raise ValueError(f"window at E*={e_star} has size {w} < 1")


@dataclass(frozen=True)
class EnsembleEntry:
    """One retained eigenstate of one realization."""

    realization: int
    window: int | None
    record: EigenstateRecord
    thermal: ThermalRecord | None = None


@dataclass(frozen=True)
class RealizationSummary:
    realization: int
    spectrum_seed: int
    couplings_seed: int
    ok: bool
    sigma0_sq: float = math.nan
    mean_sf_var: float = math.nan
    e_center: float = math.nan
    error: str = ""


@dataclass(frozen=True)
class EnsembleResult:
    spec: EnsembleSpec
    entries: list[EnsembleEntry]
    summaries: list[RealizationSummary]

    @property
    def failures(self) -> list[RealizationSummary]:
        return [s for s in self.summaries if not s.ok]

    def window_records(self, window: int) -> list[EigenstateRecord]:
        return [e.record for e in self.entries if e.window == window]

    def window_entries(self, window: int) -> list[EnsembleEntry]:
        return [e for e in self.entries if e.window == window]


@lru_cache(maxsize=4)
def _cached_basis(n: int, m: int) -> BasisTable:
    return enumerate_basis(n, m)


def run_realization(spec: EnsembleSpec, realization: int) -> tuple[RealizationSummary, list[EnsembleEntry]]:
    """Full single-realization pipeline with seeds derived from the spec."""
    spectrum_seed, couplings_seed = derive_seeds(spec.master_seed, realization)
    if not spec.vary_spectrum:
        spectrum_seed, _ = derive_seeds(spec.master_seed, 0)
    basis = _cached_basis(spec.n, spec.m)
    spectrum = sample_spectrum(spec.m, spec.spectrum_mode, spectrum_seed)
    couplings = sample_couplings(spec.m, spec.strength, couplings_seed)
    bundle = assemble(basis, spectrum, couplings)
    inputs = scaling_inputs(bundle)
    decomposition = diagonalize(bundle)
    records = build_all_records(decomposition, bundle)
    energies = np.array([r.energy for r in records])

    entries: list[EnsembleEntry] = []

    def retain(record: EigenstateRecord, window: int | None) -> None:
        thermal = (
            build_thermal_record(record, spectrum, spec.n, inputs, spec.strength)
            if spec.solve_thermal and window is not None
            else None
        )
        entries.append(
            EnsembleEntry(realization=realization, window=window, record=record, thermal=thermal)
        )

    if spec.retain_all:
        for record in records:
            retain(record, None)
    for iw, (e_star, w) in enumerate(spec.windows):
        order = np.argsort(np.abs(energies - e_star), kind="stable")
        chosen = sorted(int(i) for i in order[: min(w, len(records))])
        for i in chosen:
            retain(records[i], iw)

    summary = RealizationSummary(
        realization=realization,
        spectrum_seed=spectrum_seed,
        couplings_seed=couplings_seed,
        ok=True,
        sigma0_sq=inputs.sigma0_sq,
        mean_sf_var=inputs.mean_sf_var,
        e_center=inputs.e_center,
    )
    return summary, entries


def _realization_task(args: tuple[EnsembleSpec, int]) -> tuple[RealizationSummary, list[EnsembleEntry]]:
    spec, realization = args
    try:
        return run_realization(spec, realization)
    except Exception as exc:  # recorded and skipped per the failure policy
        spectrum_seed, couplings_seed = derive_seeds(spec.master_seed, realization)
        return (
            RealizationSummary(
                realization=realization,
                spectrum_seed=spectrum_seed,
                couplings_seed=couplings_seed,
                ok=False,
                error=f"{type(exc).__name__}: {exc}",
            ),
            [],
        )


def run_ensemble(spec: EnsembleSpec, workers: int = 1) -> EnsembleResult:
    """Run every realization, merge deterministically, enforce failure policy.

    Realizations are independent; with workers > 1 they run in separate
    processes.  Entries are sorted on (realization, window, alpha) before
    aggregation so the merge order can never affect a report.
    """
    tasks = [(spec, i) for i in range(spec.realizations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_realization_task, tasks, chunksize=1))
    else:
        results = [_realization_task(t) for t in tasks]

    summaries = [s for s, _ in results]
    entries = [e for _, chunk in results for e in chunk]
    entries.sort(key=lambda e: (e.realization, -1 if e.window is None else e.window, e.record.alpha))

    failed = [s for s in summaries if not s.ok]
    if len(failed) > 0.05 * spec.realizations:
        details = "; ".join(f"#{s.realization}: {s.error}" for s in failed[:5])
        raise EnsembleError(
            f"{len(failed)}/{spec.realizations} realizations failed (>5%): {details}"
        )
    return EnsembleResult(spec=spec, entries=entries, summaries=summaries)


@dataclass(frozen=True)
class FluctuationSamples:
    """Relative occupation fluctuations of a window, per level.

    ``values[i, s]`` is (n_s - <n_s>)/<n_s> for record i; levels whose
    window mean is below the floor are excluded and listed separately.
    """

    values: np.ndarray
    level_means: np.ndarray
    excluded_levels: tuple[int, ...]
    realizations: np.ndarray
    alphas: np.ndarray
    energies: np.ndarray
    npcs: np.ndarray

    def per_level(self, s: int) -> np.ndarray:
        if s in self.excluded_levels:
            raise ValueError(f"level {s} was excluded (window mean below floor)")
        return self.values[:, s]

    def pooled(self) -> np.ndarray:
        keep = [s for s in range(self.values.shape[1]) if s not in self.excluded_levels]
        return self.values[:, keep].ravel()


def relative_fluctuations(
    records: list[EigenstateRecord], realizations: list[int] | None = None
) -> FluctuationSamples:
    """Per-level relative deviations from the window-mean occupations."""
    if len(records) < 2:
        raise ValueError("need at least 2 records per window")
    onds = np.stack([r.ond for r in records])
    means = onds.mean(axis=0)
    excluded = tuple(int(s) for s in np.flatnonzero(means < _LEVEL_MEAN_FLOOR))
    values = np.full_like(onds, np.nan)
    keep = means >= _LEVEL_MEAN_FLOOR
    values[:, keep] = (onds[:, keep] - means[keep]) / means[keep]
    return FluctuationSamples(
        values=values,
        level_means=means,
        excluded_levels=excluded,
        realizations=np.array(realizations if realizations is not None else [-1] * len(records)),
        alphas=np.array([r.alpha for r in records]),
        energies=np.array([r.energy for r in records]),
        npcs=np.array([r.npc for r in records]),
    )


def close_eigenstate_samples(result: EnsembleResult, window: int) -> FluctuationSamples:
    """Window fluctuations relative to each realization's own window mean.

    Every realization contributes one close-eigenstate sample set; the
    sets are pooled.  Realizations with fewer than two retained states in
    the window are skipped.
    """
    by_realization: dict[int, list[EnsembleEntry]] = {}
    for e in result.window_entries(window):
        by_realization.setdefault(e.realization, []).append(e)
    parts = []
    for realization in sorted(by_realization):
        chunk = by_realization[realization]
        if len(chunk) < 2:
            continue
        parts.append(relative_fluctuations([e.record for e in chunk],
                                           realizations=[realization] * len(chunk)))
    if not parts:
        raise ValueError(f"window {window} has no realization with >= 2 retained states")
    excluded = tuple(sorted({s for p in parts for s in p.excluded_levels}))
    return FluctuationSamples(
        values=np.vstack([p.values for p in parts]),
        level_means=np.mean([p.level_means for p in parts], axis=0),
        excluded_levels=excluded,
        realizations=np.concatenate([p.realizations for p in parts]),
        alphas=np.concatenate([p.alphas for p in parts]),
        energies=np.concatenate([p.energies for p in parts]),
        npcs=np.concatenate([p.npcs for p in parts]),
    )


def disorder_samples(result: EnsembleResult, window: int) -> FluctuationSamples:
    """Window fluctuations of one eigenstate per realization, relative to
    the across-realization mean (the disorder-ensemble counterpart)."""
    e_star = result.spec.windows[window][0]
    picks: list[tuple[int, EigenstateRecord]] = []
    by_realization: dict[int, list[EigenstateRecord]] = {}
    for e in result.window_entries(window):
        by_realization.setdefault(e.realization, []).append(e.record)
    for realization in sorted(by_realization):
        records = by_realization[realization]
        best = min(records, key=lambda r: abs(r.energy - e_star))
        picks.append((realization, best))
    if len(picks) < 2:
        raise ValueError(f"window {window} spans fewer than 2 realizations")
    return relative_fluctuations([r for _, r in picks], realizations=[i for i, _ in picks])


@dataclass(frozen=True)
class GaussianFit:
    """Maximum-likelihood normal fit with a chi-square/dof goodness score."""

    mean: float
    sigma: float
    chi2_dof: float
    bins: int
    degenerate: bool = False


def _sturges(n: int) -> int:
    return int(math.ceil(math.log2(n))) + 1


def gaussian_fit(samples: np.ndarray, bins: int | None = None) -> GaussianFit:
    """Fit a normal distribution and score it on an equal-width histogram.

    The score is Pearson chi-square per degree of freedom against the
    fitted normal, on Sturges-count bins by default; adjacent bins are
    merged until every expected count reaches 5.  Zero-variance input is
    flagged degenerate and left unscored.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if x.size < 30:
        raise ValueError(f"need at least 30 samples, got {x.size}")
    mean = float(x.mean())
    sigma = float(x.std())
    if sigma == 0.0:
        return GaussianFit(mean=mean, sigma=0.0, chi2_dof=math.nan, bins=0, degenerate=True)
    nbins = bins if bins is not None else _sturges(x.size)
    counts, edges = np.histogram(x, bins=nbins)
    expected = x.size * np.diff(_norm.cdf(edges, loc=mean, scale=sigma))

    # merge bins until every expected count is usable for Pearson's test
    merged_obs: list[float] = []
    merged_exp: list[float] = []
    acc_o, acc_e = 0.0, 0.0
    for o, e in zip(counts, expected):
        acc_o += float(o)
        acc_e += float(e)
        if acc_e >= 5.0:
            merged_obs.append(acc_o)
            merged_exp.append(acc_e)
            acc_o, acc_e = 0.0, 0.0
    if acc_e > 0.0 and merged_exp:
        merged_obs[-1] += acc_o
        merged_exp[-1] += acc_e
    obs = np.array(merged_obs)
    exp = np.array(merged_exp)
    chi2 = float(((obs - exp) ** 2 / exp).sum())
    dof = max(1, obs.size - 3)
    return GaussianFit(mean=mean, sigma=sigma, chi2_dof=chi2 / dof, bins=obs.size)


def critical_npc(npc: np.ndarray, dloc: np.ndarray, strength: float, nbins: int = 20) -> float:
    """Participation ratio where the binned median local spacing crosses the
    coupling strength.

    The cloud is binned logarithmically in participation ratio; each bin is
    summarized by its median point, and the crossing of the median local
    spacing through the coupling strength is interpolated log-log.
    """
    npc = np.asarray(npc, dtype=np.float64)
    dloc = np.asarray(dloc, dtype=np.float64)
    if npc.size != dloc.size or npc.size == 0:
        raise ValueError("need matching non-empty npc and dloc arrays")
    if strength <= 0:
        raise ValueError("coupling strength must be positive")
    if not (dloc.min() < strength < dloc.max()):
        raise ValueError(
            f"cloud does not span the crossing: dloc in [{dloc.min():.3g}, {dloc.max():.3g}], "
            f"strength {strength}"
        )
    edges = np.geomspace(npc.min(), npc.max() * (1 + 1e-12), nbins + 1)
    xs: list[float] = []
    ys: list[float] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (npc >= lo) & (npc < hi)
        if not mask.any():
            continue
        xs.append(float(np.median(npc[mask])))
        ys.append(float(np.median(dloc[mask])))
    for (x1, y1), (x2, y2) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
        if y1 == strength:
            return x1
        if (y1 - strength) * (y2 - strength) < 0:
            t = (math.log(strength) - math.log(y1)) / (math.log(y2) - math.log(y1))
            return float(math.exp(math.log(x1) + t * (math.log(x2) - math.log(x1))))
    if ys and ys[-1] == strength:
        return xs[-1]
    raise ValueError(
        f"no median crossing of strength {strength}: bin medians range "
        f"[{min(ys):.3g}, {max(ys):.3g}]"
    )


@dataclass(frozen=True)
class ScalingReport:
    """Mean relative fluctuation versus renormalized participation ratio."""

    n_cr: float
    bin_x: np.ndarray  # mean npc/n_cr of the groups in each bin
    bin_fluct: np.ndarray
    bin_count: np.ndarray
    exponent: float | None
    amplitude: float | None
    group_npc: np.ndarray | None = field(repr=False, default=None)
    group_fluct: np.ndarray | None = field(repr=False, default=None)


def scaling_curve(
    entries: list[EnsembleEntry],
    n_cr: float,
    group_size: int = 20,
    nbins: int = 12,
) -> ScalingReport:
    """Group eigenstates into energy windows, pool their relative
    fluctuations, and fit the supercritical power-law decay.

    Groups are consecutive runs of ``group_size`` eigenstates (energy
    ordered, per realization).  Each contributes one point: its mean
    participation ratio and the mean absolute relative occupation
    fluctuation pooled over levels.  Points are binned in npc/n_cr and a
    power law in npc is fitted to the bins above the crossing; fewer than
    3 supercritical bins leaves the exponent unfitted.
    """
    if n_cr <= 0:
        raise ValueError("n_cr must be positive")
    by_realization: dict[int, list[EigenstateRecord]] = {}
    for e in entries:
        by_realization.setdefault(e.realization, []).append(e.record)

    group_npc: list[float] = []
    group_fluct: list[float] = []
    for records in by_realization.values():
        records = sorted(records, key=lambda r: r.energy)
        for lo in range(0, len(records) - group_size + 1, group_size):
            chunk = records[lo : lo + group_size]
            onds = np.stack([r.ond for r in chunk])
            means = onds.mean(axis=0)
            keep = means >= _LEVEL_MEAN_FLOOR
            if not keep.any():
                continue
            rel = np.abs(onds[:, keep] - means[keep]) / means[keep]
            group_fluct.append(float(rel.mean()))
            group_npc.append(float(np.mean([r.npc for r in chunk])))
    if not group_npc:
        raise ValueError(f"no complete groups of {group_size} eigenstates")

    gn = np.array(group_npc)
    gf = np.array(group_fluct)
    x = gn / n_cr
    edges = np.geomspace(x.min(), x.max() * (1 + 1e-12), nbins + 1)
    bin_x: list[float] = []
    bin_f: list[float] = []
    bin_c: list[int] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (x >= lo) & (x < hi)
        if not mask.any():
            continue
        bin_x.append(float(x[mask].mean()))
        bin_f.append(float(gf[mask].mean()))
        bin_c.append(int(mask.sum()))

    bx = np.array(bin_x)
    bf = np.array(bin_f)
    super_mask = bx > 1.0
    exponent = amplitude = None
    if super_mask.sum() >= 3:
        log_npc = np.log(bx[super_mask] * n_cr)
        slope, intercept = np.polyfit(log_npc, np.log(bf[super_mask]), 1)
        exponent = float(slope)
        amplitude = float(math.exp(intercept))
    return ScalingReport(
        n_cr=n_cr,
        bin_x=bx,
        bin_fluct=bf,
        bin_count=np.array(bin_c),
        exponent=exponent,
        amplitude=amplitude,
        group_npc=gn,
        group_fluct=gf,
    )


@dataclass(frozen=True)
class KsComparison:
    statistic: float
    critical_1pct: float
    equivalent: bool


def statistical_equivalence(a: np.ndarray, b: np.ndarray) -> KsComparison:
    """Two-sample Kolmogorov-Smirnov comparison at the 1% level."""
    from scipy.stats import ks_2samp

    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    stat = float(ks_2samp(a, b).statistic)
    critical = _KS_CRITICAL_1PCT * math.sqrt((a.size + b.size) / (a.size * b.size))
    return KsComparison(statistic=stat, critical_1pct=critical, equivalent=stat < critical)


def write_samples_csv(path: str | Path, samples: FluctuationSamples) -> None:
    """Raw fluctuation samples, one row per (level, record); levels 1-based."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["s", "value", "realization", "alpha"])
        for s in range(samples.values.shape[1]):
            if s in samples.excluded_levels:
                continue
            for i in range(samples.values.shape[0]):
                writer.writerow(
                    [s + 1, repr(float(samples.values[i, s])),
                     int(samples.realizations[i]), int(samples.alphas[i])]
                )


def write_scaling_csv(path: str | Path, report: ScalingReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["npc_over_ncr", "mean_fluct", "count"])
        for x, f, c in zip(report.bin_x, report.bin_fluct, report.bin_count):
            writer.writerow([repr(float(x)), repr(float(f)), int(c)])
