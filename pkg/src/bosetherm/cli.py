"""Command-line front end: generate, analyze, ensemble, report.

Every subcommand validates its configuration, writes its data files into
the output directory, and records a manifest with the config echo, the
derived seeds, and a sha256 digest of every file it emitted.  Data files
are deterministic functions of the configuration; manifests additionally
carry timestamps.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .basis import enumerate_basis, hilbert_dimension
from .bed import energy_domain, solve_bed
from .fluct import (
    EnsembleSpec,
    close_eigenstate_samples,
    critical_npc,
    derive_seeds,
    disorder_samples,
    gaussian_fit,
    run_ensemble,
    scaling_curve,
    statistical_equivalence,
    write_samples_csv,
    write_scaling_csv,
)
from .hamiltonian import assemble, cache_key, load_cache, sample_couplings, sample_spectrum, save_cache
from .spectral import (
    EigenDecomposition,
    build_all_records,
    diagonalize,
    mean_sf_variance,
    sf_moment_residuals,
    write_records_csv,
)
from .thermal import (
    bed_occupation_curve,
    build_thermal_record,
    delta_alpha_analytic,
    scaling_inputs,
    window_average_ond,
    write_report_csv,
    write_sweep_csv,
)

_FULL_SIZE_GATE = 3003  # ensemble dimension above this needs --full-size


@dataclass
class RunConfig:
    """Validated configuration for one subcommand invocation."""

    subcommand: str
    n: int = 5
    m: int = 9
    v: float = 0.4
    spectrum: str = "random"
    seed: int = 0
    out: str = "runs"
    threads: int = 1
    window_energies: tuple[float, ...] = ()
    window_size: int = 20
    single: bool = False
    realizations: int = 100
    full_size: bool = False
    full_spectrum: bool = False
    sweep_points: int = 201
    bins: int = 12

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError("--n must be >= 1")
        if self.m < 2:
            raise ValueError("--m must be >= 2")
        if self.v < 0:
            raise ValueError("--v must be >= 0")
        if self.spectrum not in ("deterministic", "random"):
            raise ValueError("--spectrum must be deterministic or random")
        if self.threads < 1:
            raise ValueError("--threads must be >= 1")
        if self.window_size < 1:
            raise ValueError("--window-size must be >= 1")
        if self.realizations < 1:
            raise ValueError("--realizations must be >= 1")
        if self.sweep_points < 2:
            raise ValueError("--sweep-points must be >= 2")
        if self.bins < 2:
            raise ValueError("--bins must be >= 2")
        if self.subcommand == "ensemble" and self.window_energies and self.effective_window_size < 2:
            raise ValueError("ensemble fluctuation windows need --window-size >= 2")

    @property
    def effective_window_size(self) -> int:
        return 1 if self.single else self.window_size


def _parse_config_file(path: str) -> dict[str, str]:
    """Read a key = value file; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_CONFIG_COERCE = {
    "n": int, "m": int, "seed": int, "threads": int, "window_size": int,
    "realizations": int, "sweep_points": int, "bins": int,
    "v": float,
    "single": lambda s: s.lower() in ("1", "true", "yes"),
    "full_size": lambda s: s.lower() in ("1", "true", "yes"),
    "full_spectrum": lambda s: s.lower() in ("1", "true", "yes"),
    "spectrum": str, "out": str,
    "window_energy": lambda s: tuple(float(x) for x in s.split(",") if x.strip()),
}


def _build_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, and flags (flags win)."""
    config = RunConfig(subcommand=args.subcommand)
    if getattr(args, "config", None):
        try:
            raw = _parse_config_file(args.config)
        except OSError as exc:
            raise ValueError(f"cannot read config file: {exc}") from exc
        for key, text in raw.items():
            if key not in _CONFIG_COERCE:
                raise ValueError(f"unknown config key {key!r} in {args.config}")
            value = _CONFIG_COERCE[key](text)
            if key == "window_energy":
                config.window_energies = value
            else:
                setattr(config, key, value)
    for key in ("n", "m", "v", "spectrum", "seed", "out", "threads", "window_size",
                "realizations", "sweep_points", "bins"):
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(config, key, flag)
    for key in ("single", "full_size", "full_spectrum"):
        if getattr(args, key, False):
            setattr(config, key, True)
    if getattr(args, "window_energy", None):
        config.window_energies = tuple(args.window_energy)
    config.validate()
    return config


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(outdir: Path, config: RunConfig, files: list[Path], seeds: dict[str, int]) -> Path:
    manifest = {
        "tool": "bosetherm",
        "version": __version__,
        "subcommand": config.subcommand,
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": asdict(config),
        "derived_seeds": seeds,
        "outputs": {f.name: _sha256(f) for f in sorted(files)},
    }
    path = outdir / f"{config.subcommand}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _cache_path(config: RunConfig) -> Path:
    return Path(config.out) / f"cache_{cache_key(config.n, config.m, config.v, config.seed)}.npz"


def _default_windows(e_min: float, e_max: float) -> tuple[float, ...]:
    span = e_max - e_min
    return (e_min + 0.2 * span, e_min + 0.5 * span)


def cmd_generate(config: RunConfig) -> int:
    """Sample, assemble, diagonalize one realization; cache everything."""
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    spectrum_seed, couplings_seed = derive_seeds(config.seed, 0)
    basis = enumerate_basis(config.n, config.m)
    spectrum = sample_spectrum(config.m, config.spectrum, spectrum_seed)
    couplings = sample_couplings(config.m, config.v, couplings_seed)
    bundle = assemble(basis, spectrum, couplings)
    inputs = scaling_inputs(bundle)
    decomposition = diagonalize(bundle)
    path = _cache_path(config)
    save_cache(
        path,
        bundle,
        eigenvalues=decomposition.eigenvalues,
        eigenvectors=decomposition.eigenvectors,
        sigma0_sq=np.float64(inputs.sigma0_sq),
        mean_sf_var=np.float64(inputs.mean_sf_var),
        e_center=np.float64(inputs.e_center),
    )
    _write_manifest(outdir, config, [path],
                    {"spectrum_seed": spectrum_seed, "couplings_seed": couplings_seed})
    print(f"generated {path.name}: dimension {basis.dimension}, "
          f"{decomposition.eigenvalues.size} eigenvalues")
    return 0


def cmd_analyze(config: RunConfig) -> int:
    """Emit the figure-backing data files from a cached realization."""
    outdir = Path(config.out)
    path = _cache_path(config)
    if not path.exists():
        print(f"error: cache {path} not found; run generate first", file=sys.stderr)
        return 2
    bundle, extra = load_cache(path)
    decomposition = EigenDecomposition(
        eigenvalues=extra["eigenvalues"], eigenvectors=extra["eigenvectors"]
    )
    inputs = scaling_inputs(bundle)
    records = build_all_records(decomposition, bundle)
    spectrum = bundle.spectrum
    dom = energy_domain(config.n, spectrum)
    files: list[Path] = []

    # (a) fugacity / inverse-temperature sweep
    sweep_path = outdir / "bed_sweep.csv"
    energies = np.linspace(dom.e_min, dom.e_max, config.sweep_points + 2)[1:-1]
    solutions = [solve_bed(config.n, float(e), spectrum) for e in energies]
    write_sweep_csv(sweep_path, energies, solutions)
    files.append(sweep_path)

    # full per-eigenstate record table
    records_path = outdir / "records.csv"
    write_records_csv(records_path, records)
    files.append(records_path)

    # (b) per-window mean occupations with bare/dressed curves
    window_energies = config.window_energies or _default_windows(dom.e_min, dom.e_max)
    w = config.effective_window_size
    thermal_rows = []
    for iw, e_star in enumerate(window_energies):
        window = window_average_ond(records, e_star, w)
        chosen = [records[a] for a in window.alphas]
        e_bare = float(np.mean([r.energy for r in chosen]))
        e_dres = float(np.mean([r.e_dres for r in chosen]))
        bare = solve_bed(config.n, e_bare, spectrum) if dom.e_min < e_bare < dom.e_max else None
        dres = solve_bed(config.n, e_dres, spectrum) if dom.e_min < e_dres < dom.e_max else None
        curve_bare = bed_occupation_curve(bare, spectrum)
        curve_dres = bed_occupation_curve(dres, spectrum)
        wpath = outdir / f"ond_window_{iw}.csv"
        with open(wpath, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["s", "eps_s", "mean_n", "std_n", "bed_bare", "bed_dressed"])
            for s in range(config.m):
                writer.writerow(
                    [s + 1, repr(float(spectrum.energies[s])), repr(float(window.mean[s])),
                     repr(float(window.std[s])), repr(float(curve_bare[s])),
                     repr(float(curve_dres[s]))]
                )
        files.append(wpath)
        for r in chosen:
            thermal_rows.append(build_thermal_record(r, spectrum, config.n, inputs, config.v))

    # (c) windowed energy shift with the Gaussian-estimate overlay
    shift_path = outdir / "energy_shift.csv"
    half = [r for r in records if config.full_spectrum or r.energy < inputs.e_center]
    half.sort(key=lambda r: r.energy)
    with open(shift_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["E_alpha", "delta_alpha_mean", "delta_alpha_std", "delta_alpha_analytic"])
        for lo in range(0, len(half) - config.window_size + 1, config.window_size):
            chunk = half[lo : lo + config.window_size]
            e_mean = float(np.mean([r.energy for r in chunk]))
            deltas = np.array([r.delta_alpha for r in chunk])
            writer.writerow(
                [repr(e_mean), repr(float(deltas.mean())),
                 repr(float(deltas.std(ddof=1)) if deltas.size > 1 else 0.0),
                 repr(delta_alpha_analytic(e_mean, inputs))]
            )
    files.append(shift_path)

    # (d) machine-readable thermal table over the window states
    report_path = outdir / "thermal_report.csv"
    write_report_csv(report_path, thermal_rows)
    files.append(report_path)

    _write_manifest(outdir, config, files, dict(zip(("spectrum_seed", "couplings_seed"),
                                                    derive_seeds(config.seed, 0))))
    print(f"analyzed {path.name}: {len(files)} data files in {outdir}")
    return 0


def cmd_ensemble(config: RunConfig) -> int:
    """Run the disorder ensemble and emit fluctuation and scaling reports."""
    dim = hilbert_dimension(config.n, config.m)
    if dim > _FULL_SIZE_GATE and not config.full_size:
        print(
            f"error: dimension {dim} exceeds the desk-scale gate {_FULL_SIZE_GATE}; "
            "pass --full-size to run anyway",
            file=sys.stderr,
        )
        return 2
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = EnsembleSpec(
        n=config.n,
        m=config.m,
        strength=config.v,
        realizations=config.realizations,
        master_seed=config.seed,
        windows=tuple((e, config.effective_window_size) for e in config.window_energies),
        spectrum_mode=config.spectrum,
        retain_all=True,
        solve_thermal=False,
    )
    result = run_ensemble(spec, workers=config.threads)
    files: list[Path] = []

    cloud = [e.record for e in result.entries if e.window is None]
    npc = np.array([r.npc for r in cloud])
    dloc = np.array([r.dloc for r in cloud])
    n_cr: float | None
    n_cr_error = ""
    try:
        n_cr = critical_npc(npc, dloc, config.v)
    except ValueError as exc:
        n_cr = None
        n_cr_error = str(exc)

    report = scaling_curve(
        [e for e in result.entries if e.window is None],
        n_cr if n_cr is not None else 1.0,
        group_size=config.window_size,
        nbins=config.bins,
    )
    scaling_path = outdir / "scaling_bins.csv"
    write_scaling_csv(scaling_path, report)
    files.append(scaling_path)

    window_summaries = []
    for iw, e_star in enumerate(config.window_energies):
        entries = result.window_entries(iw)
        samples = close_eigenstate_samples(result, iw)
        spath = outdir / f"fluct_samples_w{iw}.csv"
        write_samples_csv(spath, samples)
        files.append(spath)
        fits = {}
        for s in range(config.m):
            if s in samples.excluded_levels:
                fits[f"n_{s + 1}"] = None
                continue
            fit = gaussian_fit(samples.per_level(s))
            fits[f"n_{s + 1}"] = {"mean": fit.mean, "sigma": fit.sigma, "chi2_dof": fit.chi2_dof}
        try:
            ks = statistical_equivalence(samples.pooled(), disorder_samples(result, iw).pooled())
            ks_summary = {
                "statistic": ks.statistic,
                "critical_1pct": ks.critical_1pct,
                "equivalent": ks.equivalent,
            }
        except ValueError as exc:
            ks_summary = {"error": str(exc)}
        window_summaries.append(
            {
                "window": iw,
                "e_star": e_star,
                "size": config.effective_window_size,
                "samples": int(np.sum(np.isfinite(samples.values))),
                "gaussian_fits": fits,
                "ks_vs_disorder": ks_summary,
                "entry_count": len(entries),
            }
        )

    summary = {
        "n": config.n,
        "m": config.m,
        "v": config.v,
        "realizations": config.realizations,
        "master_seed": config.seed,
        "failed_realizations": [s.realization for s in result.failures],
        "n_cr": n_cr,
        "n_cr_error": n_cr_error,
        "scaling_normalized": n_cr is not None,
        "exponent": report.exponent,
        "amplitude": report.amplitude,
        "windows": window_summaries,
    }
    summary_path = outdir / "ensemble_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files.append(summary_path)

    _write_manifest(outdir, config, files, {"master_seed": config.seed})
    print(f"ensemble done: {config.realizations} realizations, "
          f"N_cr={n_cr if n_cr is not None else 'not found'}, exponent={report.exponent}")
    return 0


def cmd_report(config: RunConfig) -> int:
    """Collate identity residuals and headline measurements into one JSON."""
    outdir = Path(config.out)
    cache = _cache_path(config)
    needed = {
        "cache": cache,
        "thermal_report": outdir / "thermal_report.csv",
        "ensemble_summary": outdir / "ensemble_summary.json",
    }
    missing = [f"{name}: {p}" for name, p in needed.items() if not p.exists()]
    if missing:
        print("error: missing inputs:\n  " + "\n  ".join(missing), file=sys.stderr)
        return 2

    bundle, extra = load_cache(cache)
    decomposition = EigenDecomposition(
        eigenvalues=extra["eigenvalues"], eigenvectors=extra["eigenvectors"]
    )
    evals = decomposition.eigenvalues
    e0 = bundle.e0
    trace_rel = abs(evals.mean() - e0.mean()) / max(1.0, abs(e0.mean()))
    msv = mean_sf_variance(bundle)
    var_rel = abs(evals.var() - (e0.var() + msv)) / max(1.0, evals.var())
    sf1, sf2 = sf_moment_residuals(decomposition, bundle)
    records = build_all_records(decomposition, bundle)
    ond_dev = max(abs(float(r.ond.sum()) - config.n) for r in records)

    with open(needed["thermal_report"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    dt_measured = [float(r["dt_over_t"]) for r in rows
                   if r["dt_over_t"] and math.isfinite(float(r["dt_over_t"]))]
    dt_analytic = float(rows[0]["dt_over_t_analytic"]) if rows else math.nan

    ensemble = json.loads(needed["ensemble_summary"].read_text())

    report = {
        "identity_residuals": {
            "trace_center_rel": trace_rel,
            "dos_variance_rel": var_rel,
            "sf_first_moment_rel_max": sf1,
            "sf_second_moment_rel_max": sf2,
            "ond_sum_abs_dev_max": ond_dev,
        },
        "temperature_shift": {
            "dt_over_t_analytic": dt_analytic,
            "dt_over_t_measured_mean": float(np.mean(dt_measured)) if dt_measured else None,
            "dt_over_t_measured_count": len(dt_measured),
        },
        "ensemble": {
            "n_cr": ensemble.get("n_cr"),
            "exponent": ensemble.get("exponent"),
            "amplitude": ensemble.get("amplitude"),
            "ks_windows": [w.get("ks_vs_disorder") for w in ensemble.get("windows", [])],
        },
    }
    report_path = outdir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_manifest(outdir, config, [report_path], {})
    print(f"report written to {report_path}")
    return 0


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file; flags win")
    parser.add_argument("--n", type=int, help="particle count")
    parser.add_argument("--m", type=int, help="level count")
    parser.add_argument("--v", type=float, help="two-body coupling strength")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--spectrum", choices=("deterministic", "random"),
                        help="single-particle spectrum mode")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, help="worker bound for ensemble runs")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bosetherm",
        description="Eigenstate thermometry for randomly interacting bosons",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_gen = sub.add_parser("generate", help="build and diagonalize one realization")
    _add_shared_flags(p_gen)

    p_ana = sub.add_parser("analyze", help="emit figure data from a cached realization")
    _add_shared_flags(p_ana)
    p_ana.add_argument("--window-energy", type=float, action="append",
                       help="window center energy (repeatable)")
    p_ana.add_argument("--window-size", type=int, help="eigenstates per window")
    p_ana.add_argument("--single", action="store_true", help="single-eigenstate windows (W=1)")
    p_ana.add_argument("--full-spectrum", action="store_true",
                       help="include the decreasing-DOS half in the shift table")
    p_ana.add_argument("--sweep-points", type=int, help="energy grid points for the sweep")

    p_ens = sub.add_parser("ensemble", help="run a disorder ensemble")
    _add_shared_flags(p_ens)
    p_ens.add_argument("--realizations", type=int, help="number of disorder realizations")
    p_ens.add_argument("--window-energy", type=float, action="append",
                       help="window center energy (repeatable)")
    p_ens.add_argument("--window-size", type=int, help="eigenstates per window/group")
    p_ens.add_argument("--single", action="store_true", help="single-eigenstate windows")
    p_ens.add_argument("--bins", type=int, help="scaling-curve bin count")
    p_ens.add_argument("--full-size", action="store_true",
                       help="allow dimensions above the desk-scale gate")

    p_rep = sub.add_parser("report", help="collate measurements for CI")
    _add_shared_flags(p_rep)

    args = parser.parse_args(argv)
    try:
        config = _build_config(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    start = time.perf_counter()
    handler = {
        "generate": cmd_generate,
        "analyze": cmd_analyze,
        "ensemble": cmd_ensemble,
        "report": cmd_report,
    }[config.subcommand]
    code = handler(config)
    if code == 0:
        print(f"[{config.subcommand}] {time.perf_counter() - start:.2f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
