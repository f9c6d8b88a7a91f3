"""``qmem`` command line: simulate, reconstruct, benchmark, analyze.

Exit codes: 0 success, 1 computation error, 2 invalid config / parse error,
3 I/O failure, 4 reconstruction hit max_iterations (outputs still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy.stats import poisson

from . import __version__
from . import fockspace as fs
from .benchmark import (
    CLASSICAL_LIMIT,
    NOCLONING_LIMIT,
    BenchmarkConfig,
    degraded_photon_distribution,
    full_report,
    noise_for_fidelity_target,
    poisson_fit,
    write_fidelity_csv,
    write_tv_csv,
)
from .gaussian_sim import (
    CONVENTION,
    ConfigError,
    DetectionChain,
    QuadratureDataset,
    SimulationConfig,
    metadata_path,
    simulate_experiment,
    write_metadata,
)
from .tomography import ReconstructionConfig, reconstruct

log = logging.getLogger("qmemtomo")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_IO, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4
SCHEMA_VERSIONS = {"1"}


class UsageError(ValueError):
    pass


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    version = str(data.get("schema_version", "1"))
    if version not in SCHEMA_VERSIONS:
        raise ConfigError(f"{path}: unsupported schema_version {version!r}")
    return data


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, (float, np.floating)) else str(v)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) for v in row])


def _load_datasets(paths) -> QuadratureDataset:
    parts = [QuadratureDataset.from_csv(p) for p in paths]
    return parts[0] if len(parts) == 1 else QuadratureDataset.concat(parts)


def _recon_config(data: dict, args) -> ReconstructionConfig:
    d = dict(data.get("reconstruction", data))
    d = {k: v for k, v in d.items() if k in ReconstructionConfig.__dataclass_fields__}
    for key, attr in (("dim", "dim"), ("max_iterations", "max_iterations"), ("ll_rel_tolerance", "tolerance"), ("phase_bins", "phase_bins")):
        v = getattr(args, attr, None)
        if v is not None:
            d[key] = v
    try:
        return ReconstructionConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"reconstruction config: {exc}") from None


def cmd_simulate(args) -> int:
    if not args.config:
        raise UsageError("simulate needs --config")
    data = _read_json(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    if "seed" not in data:
        raise ConfigError("seed is mandatory for simulate")
    cfg = SimulationConfig.from_dict(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for role, ds in simulate_experiment(cfg).items():
        path = out / f"{role}.csv"
        ds.to_csv(path)
        meta = {
            "seed": cfg.seed,
            "n_per_role": ds.counts,
            "convention": CONVENTION,
            "config": cfg.to_dict(),
        }
        write_metadata(metadata_path(path), meta)
        log.info("wrote %s (%d records)", path, len(ds))
    return EXIT_OK


def _calibrated(ds: QuadratureDataset) -> QuadratureDataset:
    vac = ds.select("vacuum")
    if len(vac) < 2:
        return ds
    return ds.with_values((ds.value - vac.value.mean()) / vac.value.std(ddof=1))


def cmd_reconstruct(args) -> int:
    data = _read_json(args.config) if args.config else {}
    rcfg = _recon_config(data, args)
    ds = _calibrated(_load_datasets(args.datasets))
    roles = [r for r in ds.roles if r != "vacuum"]
    role = args.role or (roles[0] if len(roles) == 1 else None)
    if role is None:
        raise UsageError(f"dataset holds roles {roles}; choose one with --role")
    records = ds.select(role)
    if len(records) == 0:
        raise UsageError(f"no records with role {role!r}")
    res = reconstruct(records, rcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fs.save_density_matrix(res.rho, out / f"rho_{role}.json")
    _write_rows(out / f"convergence_{role}.csv", ["iteration", "log_likelihood"], res.trace_rows())
    log.info("%s: <N> = %.4f after %d iterations", role, res.rho.mean_photon_number(), res.iterations_used)
    if not res.converged:
        log.warning("reconstruction did not converge within %d iterations", rcfg.max_iterations)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_benchmark(args) -> int:
    data = _read_json(args.config) if args.config else {}
    det = data.get("detection", {})
    try:
        chain = DetectionChain(**det)
    except TypeError as exc:
        raise ConfigError(f"detection: {exc}") from None
    rcfg = _recon_config(data["reconstruction"], args) if "reconstruction" in data else None
    if rcfg is None and getattr(args, "dim", None):
        rcfg = ReconstructionConfig(dim=args.dim)
    label = args.label or data.get("label", "")
    bcfg = BenchmarkConfig(reconstruction=rcfg, window=float(data.get("window", 0.1)), label=label)
    report = full_report(_load_datasets(args.input), _load_datasets(args.output), chain, bcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    write_tv_csv([report], out / "tv.csv")
    write_fidelity_csv([report], out / "fidelity.csv")
    for rho, name in zip((r.rho for r in report.reconstructions), ("rho_input.json", "rho_output.json")):
        fs.save_density_matrix(rho, out / name)
    log.info(
        "F=%.4f  T+ + T-=%.4f  V+ V-=%.4f  TV pass=%s",
        report.fidelity, report.T_sum, report.V_product, report.tv_nocloning_pass,
    )
    return EXIT_NOT_CONVERGED if report.partial else EXIT_OK


def cmd_analyze(args) -> int:
    rhos = [fs.load_density_matrix(p) for p in args.matrices]
    if len(rhos) == 2 and rhos[0].dim != rhos[1].dim:
        raise UsageError(f"dimension mismatch: {rhos[0].dim} vs {rhos[1].dim}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for rho, tag in zip(rhos, ("in", "out")):
        nbar = rho.mean_photon_number()
        half = args.half_width or (2.0 * math.sqrt(max(nbar, 0.0)) + 6.5)
        grid = np.linspace(-half, half, args.points)
        fs.save_wigner_csv(out / f"wigner_{tag}.csv", grid, grid, fs.wigner(rho, grid, grid))
        mean, tv = poisson_fit(fs.photon_distribution(rho))
        summary[tag] = {"mean_photon_number": mean, "poisson_tv_distance": tv}

    rho_in = rhos[0]
    alpha = rho_in.expect_a()
    gain = 1.0
    if len(rhos) == 2:
        a_out = abs(rhos[1].expect_a())
        gain = a_out / abs(alpha) if abs(alpha) > 1e-9 else 1.0
        summary["fidelity"] = fs.fidelity(rhos[0], rhos[1])
        print(_fmt(summary["fidelity"]))
    overlays = {}
    for name, target in (("classical", CLASSICAL_LIMIT), ("nocloning", NOCLONING_LIMIT)):
        xi = noise_for_fidelity_target(alpha, gain, target)
        overlays[name] = xi
    summary["overlay_xi"] = overlays
    summary["overlay_gain"] = gain

    nmax = max(r.dim for r in rhos)
    need = fs.default_dim(gain**2 * abs(alpha) ** 2 + max(overlays.values()) / 2.0 + 5.0 * math.sqrt(max(overlays.values())))
    rows_dim = max(nmax, need)
    columns = {}
    for rho, tag in zip(rhos, ("in", "out")):
        p = np.zeros(rows_dim)
        p[: rho.dim] = fs.photon_distribution(rho)
        columns[f"p_{tag}"] = p
        mean = summary[tag]["mean_photon_number"]
        columns[f"poisson_{tag}"] = poisson.pmf(np.arange(rows_dim), mean)
    for name, xi in overlays.items():
        columns[f"{name}_limit"] = degraded_photon_distribution(alpha, gain, xi, rows_dim)
    header = ["n"] + list(columns)
    rows = [[n] + [float(columns[c][n]) for c in columns] for n in range(rows_dim)]
    _write_rows(out / "photon_distribution.csv", header, rows)
    (out / "analysis.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="RNG seed (u64)", default=argparse.SUPPRESS)
    common.add_argument("--out", help="output directory", default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="qmem", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate input/echo/vacuum/reference pulse trains")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", parents=[common], help="maximum-likelihood density matrix")
    p.add_argument("datasets", nargs="+", help="dataset CSV files (merged)")
    p.add_argument("--role", choices=["input", "output", "vacuum", "reference"])
    p.add_argument("--dim", type=int)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--phase-bins", type=int)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("benchmark", parents=[common], help="fidelity and T-V benchmark report")
    p.add_argument("--input", nargs="+", required=True, help="input dataset CSV files (with vacuum records)")
    p.add_argument("--output", nargs="+", required=True, help="echo dataset CSV files (with vacuum records)")
    p.add_argument("--dim", type=int)
    p.add_argument("--label")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("analyze", parents=[common], help="Wigner function, photon statistics, fidelity")
    p.add_argument("matrices", nargs="+", help="one or two density-matrix JSON files")
    p.add_argument("--points", type=int, default=121)
    p.add_argument("--half-width", type=float)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("out", "."), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.command == "analyze" and not 1 <= len(args.matrices) <= 2:
        parser.error("analyze takes one or two matrices")
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, UsageError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        # malformed dataset / matrix files surface as ValueError from the readers
        log.error("%s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
