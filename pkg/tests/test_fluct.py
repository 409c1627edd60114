"""Ensemble engine, fluctuation statistics, and scaling-law tests."""

import csv
import math

import numpy as np
import pytest

from bosetherm.fluct import (
    EnsembleEntry,
    EnsembleSpec,
    close_eigenstate_samples,
    critical_npc,
    derive_seeds,
    disorder_samples,
    gaussian_fit,
    relative_fluctuations,
    run_ensemble,
    run_realization,
    scaling_curve,
    statistical_equivalence,
    write_samples_csv,
    write_scaling_csv,
)
from bosetherm.spectral import EigenstateRecord


def make_record(alpha, energy, npc, ond):
    ond = np.asarray(ond, dtype=float)
    return EigenstateRecord(
        alpha=alpha, energy=energy, npc=npc, delta0=1.0, dloc=1.0 / npc,
        e_dres=energy, delta_alpha=0.0, ond=ond,
    )


@pytest.fixture(scope="module")
def ensemble47():
    spec = EnsembleSpec(
        n=4, m=7, strength=0.4, realizations=100, master_seed=4747,
        windows=((5.0, 20),), retain_all=True, solve_thermal=False,
    )
    return run_ensemble(spec)


def test_seed_derivation_deterministic_and_distinct():
    assert derive_seeds(7, 0) == derive_seeds(7, 0)
    assert derive_seeds(7, 0) != derive_seeds(7, 1)
    assert derive_seeds(7, 0) != derive_seeds(8, 0)


def test_single_realization_matches_ensemble_element():
    spec = EnsembleSpec(n=3, m=5, strength=0.3, realizations=3, master_seed=99,
                        windows=((4.0, 5),))
    result = run_ensemble(spec)
    summary, entries = run_realization(spec, 1)
    from_ensemble = [e for e in result.entries if e.realization == 1]
    assert len(entries) == len(from_ensemble)
    for a, b in zip(sorted(entries, key=lambda e: e.record.alpha), from_ensemble):
        assert a.record.alpha == b.record.alpha
        assert a.record.energy == b.record.energy
        assert np.array_equal(a.record.ond, b.record.ond)


def test_ensemble_determinism_bit_identical():
    spec = EnsembleSpec(n=3, m=5, strength=0.3, realizations=4, master_seed=123,
                        windows=((3.0, 6),), retain_all=True)
    a = run_ensemble(spec)
    b = run_ensemble(spec)
    assert len(a.entries) == len(b.entries)
    for ea, eb in zip(a.entries, b.entries):
        assert (ea.realization, ea.window, ea.record.alpha) == (eb.realization, eb.window, eb.record.alpha)
        assert ea.record.energy == eb.record.energy
        assert np.array_equal(ea.record.ond, eb.record.ond)
    for sa, sb in zip(a.summaries, b.summaries):
        assert sa == sb


def test_ensemble_worker_count_does_not_change_results():
    spec = EnsembleSpec(n=3, m=5, strength=0.3, realizations=4, master_seed=321,
                        windows=((3.0, 6),))
    serial = run_ensemble(spec, workers=1)
    parallel = run_ensemble(spec, workers=2)
    assert len(serial.entries) == len(parallel.entries)
    for ea, eb in zip(serial.entries, parallel.entries):
        assert ea.record.energy == eb.record.energy
        assert np.array_equal(ea.record.ond, eb.record.ond)


def test_window_retention_count(ensemble47):
    # every realization retains exactly the requested window size
    entries = ensemble47.window_entries(0)
    assert len(entries) == 100 * 20


def test_relative_fluctuations_of_identical_records():
    records = [make_record(i, 1.0, 5.0, [2.0, 1.0, 1.0]) for i in range(4)]
    samples = relative_fluctuations(records)
    assert np.allclose(samples.values, 0.0)
    assert samples.excluded_levels == ()


def test_relative_fluctuations_zero_mean_by_construction(ensemble47):
    samples = close_eigenstate_samples(ensemble47, 0)
    # per realization and level the samples average to zero
    for realization in (0, 7, 41):
        mask = samples.realizations == realization
        assert np.abs(samples.values[mask].mean(axis=0)).max() < 1e-12


def test_relative_fluctuations_excludes_empty_levels():
    records = [make_record(i, 1.0, 5.0, [2.0, 1.0, 0.0]) for i in range(3)]
    samples = relative_fluctuations(records)
    assert samples.excluded_levels == (2,)
    with pytest.raises(ValueError):
        samples.per_level(2)
    assert samples.pooled().size == 6


def test_relative_fluctuations_needs_two_records():
    with pytest.raises(ValueError):
        relative_fluctuations([make_record(0, 1.0, 5.0, [1.0, 1.0])])


def test_mean_estimate_variance_shrinks_with_window_size(ensemble47):
    # subsampling: per-level window means scatter less for W=20 than W=5
    entries = ensemble47.window_entries(0)
    by_realization: dict[int, list] = {}
    for e in entries:
        by_realization.setdefault(e.realization, []).append(e.record)

    def mean_scatter(w):
        means = []
        for records in by_realization.values():
            records = sorted(records, key=lambda r: r.energy)
            for lo in range(0, len(records) - w + 1, w):
                means.append(np.mean([r.ond for r in records[lo:lo + w]], axis=0))
        return np.var(np.array(means), axis=0).mean()

    assert mean_scatter(20) < mean_scatter(5)


def test_gaussian_fit_recovers_synthetic_parameters():
    rng = np.random.default_rng(77)
    samples = rng.normal(0.0, 0.1, size=10_000)
    fit = gaussian_fit(samples)
    assert fit.mean == pytest.approx(0.0, abs=0.003)
    assert fit.sigma == pytest.approx(0.1, rel=0.03)
    assert fit.chi2_dof < 2.0


def test_gaussian_fit_flags_uniform_as_worse():
    rng = np.random.default_rng(78)
    sigma = 0.1
    gauss = rng.normal(0.0, sigma, size=5000)
    uniform = rng.uniform(-sigma * math.sqrt(3), sigma * math.sqrt(3), size=5000)
    fit_g = gaussian_fit(gauss)
    fit_u = gaussian_fit(uniform)
    assert fit_u.sigma == pytest.approx(sigma, rel=0.05)
    assert fit_u.chi2_dof > 3.0 * fit_g.chi2_dof


def test_gaussian_fit_verdict_stable_across_bin_counts():
    rng = np.random.default_rng(79)
    gauss = rng.normal(0.0, 0.2, size=4000)
    uniform = rng.uniform(-1.0, 1.0, size=4000)
    sturges = None
    for bins in (None, int(math.sqrt(4000)), 25):
        fg = gaussian_fit(gauss, bins=bins)
        fu = gaussian_fit(uniform, bins=bins)
        assert fg.chi2_dof < 2.0
        assert fu.chi2_dof > 2.0
        if bins is None:
            sturges = fg.bins
    assert sturges is not None


def test_gaussian_fit_input_guards():
    with pytest.raises(ValueError):
        gaussian_fit(np.zeros(10))
    degenerate = gaussian_fit(np.zeros(100))
    assert degenerate.degenerate
    assert math.isnan(degenerate.chi2_dof)


def test_critical_npc_closed_form():
    # cloud with dloc = c / npc exactly; odd counts per bin keep the
    # medians on the curve, so the crossing is exact
    c = 40.0
    edges = np.geomspace(10.0, 1000.0, 21)
    centers = np.sqrt(edges[:-1] * edges[1:])
    npc = np.concatenate([[x / 1.01, x, x * 1.01] for x in centers])
    dloc = c / npc
    n_cr = critical_npc(npc, dloc, strength=0.4, nbins=20)
    assert n_cr == pytest.approx(c / 0.4, rel=1e-9)


def test_critical_npc_monotone_in_strength():
    rng = np.random.default_rng(12)
    npc = rng.uniform(5.0, 2000.0, size=4000)
    dloc = 30.0 / npc * rng.lognormal(0.0, 0.3, size=4000)
    weak = critical_npc(npc, dloc, 0.1)
    strong = critical_npc(npc, dloc, 0.4)
    assert strong < weak


def test_critical_npc_no_crossing_reports_medians():
    npc = np.linspace(10, 100, 50)
    dloc = 5.0 / npc  # all far below the strength
    with pytest.raises(ValueError):
        critical_npc(npc, dloc, 10.0)


def test_critical_npc_split_half_stability(ensemble47):
    cloud = [e.record for e in ensemble47.entries if e.window is None]
    npc = np.array([r.npc for r in cloud])
    dloc = np.array([r.dloc for r in cloud])
    realizations = np.array([e.realization for e in ensemble47.entries if e.window is None])
    half_a = realizations % 2 == 0
    n_a = critical_npc(npc[half_a], dloc[half_a], 0.4)
    n_b = critical_npc(npc[~half_a], dloc[~half_a], 0.4)
    assert abs(n_a - n_b) <= 0.2 * max(n_a, n_b)


def test_scaling_curve_closed_form():
    # two records per group with ond = base*(1 +/- delta): the pooled mean
    # absolute fluctuation is exactly delta = 2/sqrt(npc); one group per
    # bin keeps the binned curve exactly on the power law
    nbins = 24
    edges = np.geomspace(10.0, 4000.0, nbins + 1)
    npcs = np.sqrt(edges[:-1] * edges[1:])
    entries = []
    alpha = 0
    base = np.array([3.0, 2.0, 1.0])
    for i, npc in enumerate(npcs):
        delta = 2.0 / math.sqrt(npc)
        for sign in (+1.0, -1.0):
            entries.append(EnsembleEntry(
                realization=i, window=None,
                record=make_record(alpha, float(alpha), float(npc), base * (1 + sign * delta)),
            ))
            alpha += 1
    report = scaling_curve(entries, n_cr=100.0, group_size=2, nbins=nbins)
    assert report.exponent == pytest.approx(-0.5, abs=1e-9)
    assert report.amplitude == pytest.approx(2.0, rel=1e-9)
    # subcritical side sits on the same curve here; the report bins are
    # exactly the group points
    assert np.allclose(report.bin_fluct, 2.0 / np.sqrt(report.bin_x * 100.0), rtol=1e-12)


def test_scaling_curve_requires_three_supercritical_bins():
    entries = []
    base = np.array([2.0, 1.0])
    for i, npc in enumerate([5.0, 10.0, 20.0]):
        for j, sign in enumerate((1.0, -1.0)):
            entries.append(EnsembleEntry(
                realization=i, window=None,
                record=make_record(2 * i + j, float(i), npc, base * (1 + sign * 0.1)),
            ))
    report = scaling_curve(entries, n_cr=1000.0, group_size=2, nbins=6)
    assert report.exponent is None


def test_disorder_and_close_eigenstate_fluctuations_equivalent(ensemble47):
    close = close_eigenstate_samples(ensemble47, 0).pooled()
    disorder = disorder_samples(ensemble47, 0).pooled()
    comparison = statistical_equivalence(close, disorder)
    assert comparison.statistic < comparison.critical_1pct
    assert comparison.equivalent


def test_failure_policy_tolerates_rare_failures(monkeypatch):
    import bosetherm.fluct as fluct_module

    original = fluct_module.run_realization

    def flaky(spec, realization):
        if realization == 2:
            raise RuntimeError("synthetic failure")
        return original(spec, realization)

    monkeypatch.setattr(fluct_module, "run_realization", flaky)
    spec = EnsembleSpec(n=3, m=5, strength=0.2, realizations=30, master_seed=5,
                        windows=((3.0, 4),))
    result = run_ensemble(spec)
    assert [s.realization for s in result.failures] == [2]
    assert "synthetic failure" in result.failures[0].error

    spec_small = EnsembleSpec(n=3, m=5, strength=0.2, realizations=4, master_seed=5,
                              windows=((3.0, 4),))
    with pytest.raises(fluct_module.EnsembleError):
        run_ensemble(spec_small)


def test_samples_csv_schema(tmp_path, ensemble47):
    samples = close_eigenstate_samples(ensemble47, 0)
    path = tmp_path / "samples.csv"
    write_samples_csv(path, samples)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0].keys()) == {"s", "value", "realization", "alpha"}
    levels = {int(r["s"]) for r in rows}
    assert levels == {s + 1 for s in range(7) if s not in samples.excluded_levels}
    expected = samples.values.shape[0] * (7 - len(samples.excluded_levels))
    assert len(rows) == expected


def test_scaling_csv_schema(tmp_path, ensemble47):
    cloud = [e for e in ensemble47.entries if e.window is None]
    npc = np.array([e.record.npc for e in cloud])
    dloc = np.array([e.record.dloc for e in cloud])
    n_cr = critical_npc(npc, dloc, 0.4)
    report = scaling_curve(cloud, n_cr, group_size=20)
    path = tmp_path / "scaling.csv"
    write_scaling_csv(path, report)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0].keys()) == {"npc_over_ncr", "mean_fluct", "count"}
    centers = [float(r["npc_over_ncr"]) for r in rows]
    assert centers == sorted(centers)
