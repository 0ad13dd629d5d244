"""Command-line entry point: experiment orchestration and plotting.

Each subcommand maps one of the studied experiments to a reproducible run:
``closed`` (Rabi vs Trotter), ``noisy`` (dissipative circuit + processing
pipeline), ``heom`` (reference dynamics), ``fit-heom``, ``calib-line``,
``ttm-extend``, ``identity-scan``, and ``plot``.  Every run writes CSVs at
17 significant digits plus a manifest recording config, seed, and version,
so re-running with the same inputs is byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calib import fit_heom_params, linear_fit
from .circuit import identity_gate_scan, run_dynamics
from .config import ConfigError, RunConfig
from .heom import heom_population_trace
from .postproc import (equilibrium_correct, fit_damped_oscillation,
                       leak_renormalize, zero_time_normalize)
from .qdyn import EnergyModel, gibbs_population, rabi_population
from .ttm import (CANONICAL_INITIAL_STATES, TrajectorySet, build_dynamical_maps,
                  extend_dynamics, save_superop_set, transfer_tensors)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(out_dir: Path, subcommand: str, cfg: RunConfig,
                    seed: int | None) -> None:
    manifest = {
        "tool": "dimerlab",
        "version": __version__,
        "subcommand": subcommand,
        "seed": seed,
        "config": {k: cfg.values[k] for k in sorted(cfg.values)},
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _time_grid(cfg: RunConfig) -> np.ndarray:
    return np.linspace(0.0, cfg["run.t_max"], cfg["run.n_points"])


def _run_noisy_pipeline(cfg: RunConfig):
    """Raw run plus the processing chain; returns all pipeline stages."""
    params = cfg.system_params()
    shots = cfg["run.shots"] if cfg["run.mode"] == "shots" else None
    raw = run_dynamics(params, cfg["run.delta_q"], cfg.trotter_schedule(),
                       cfg.noise_config(), _time_grid(cfg),
                       shots=shots, seed=cfg["run.seed"])
    leak = leak_renormalize(raw)
    norm = zero_time_normalize(leak)
    fit = fit_damped_oscillation(norm)
    q = gibbs_population(params, cfg["bath.kT"], EnergyModel.SITE_ENERGIES)
    fixed = equilibrium_correct(norm, fit.alpha, q)
    return raw, leak, norm, fit, fixed


def cmd_closed(cfg: RunConfig, out_dir: Path) -> None:
    params = cfg.system_params()
    grid = _time_grid(cfg)
    from .circuit import NOISELESS
    trace = run_dynamics(params, 0.0, cfg.trotter_schedule(), NOISELESS, grid)
    exact = rabi_population(params, grid)
    _write_csv(out_dir / "trace.csv", ["t", "p1_raw", "p2_raw", "p1_exact"],
               zip(grid, trace.p1, trace.p2, exact))


def cmd_noisy(cfg: RunConfig, out_dir: Path) -> None:
    raw, leak, norm, fit, fixed = _run_noisy_pipeline(cfg)
    _write_csv(out_dir / "trace.csv",
               ["t", "p1_raw", "p2_raw", "p1_leak", "p1_norm", "p1_fixed"],
               zip(raw.times, raw.p1, raw.p2, leak.p1, norm.p1, fixed.p1))
    with open(out_dir / "fit.json", "w") as fh:
        json.dump({"alpha": fit.alpha, "omega": fit.omega,
                   "amplitude": fit.amplitude, "phase": fit.phase,
                   "baseline": fit.baseline,
                   "residual_rms": fit.residual_rms}, fh, indent=2)
        fh.write("\n")


def cmd_heom(cfg: RunConfig, out_dir: Path) -> None:
    grid = _time_grid(cfg)
    trace = heom_population_trace(cfg.system_params(), cfg.bath_params(),
                                  cfg.heom_config(), grid)
    _write_csv(out_dir / "trace.csv", ["t", "p1_raw", "p2_raw"],
               zip(grid, trace.p1, trace.p2))


def _calib_trace(cfg: RunConfig, delta_q: float):
    params = cfg.system_params()
    grid = np.linspace(0.0, cfg["calib.t_max"], cfg["calib.n_points"])
    raw = run_dynamics(params, delta_q, cfg.trotter_schedule(),
                       cfg.noise_config(), grid)
    norm = zero_time_normalize(leak_renormalize(raw))
    fit = fit_damped_oscillation(norm)
    q = gibbs_population(params, cfg["bath.kT"], EnergyModel.SITE_ENERGIES)
    return equilibrium_correct(norm, fit.alpha, q)


def cmd_fit_heom(cfg: RunConfig, out_dir: Path) -> None:
    qtrace = _calib_trace(cfg, cfg["run.delta_q"])
    fixed = (cfg["system.epsilon"], cfg["bath.gamma"], cfg["bath.kT"])
    result = fit_heom_params(qtrace, fixed, cfg.search_grid(),
                             cfg.calib_heom_config())
    with open(out_dir / "fit.json", "w") as fh:
        json.dump({"lambda_h": result.lambda_h, "j_h": result.j_h,
                   "residual": result.residual}, fh, indent=2)
        fh.write("\n")
    _write_csv(out_dir / "grid.csv", ["lambda_h", "j_h", "residual"],
               result.grid_diagnostics)


def cmd_calib_line(cfg: RunConfig, out_dir: Path) -> None:
    fixed = (cfg["system.epsilon"], cfg["bath.gamma"], cfg["bath.kT"])
    rows = []
    for delta in cfg.delta_list():
        qtrace = _calib_trace(cfg, delta)
        result = fit_heom_params(qtrace, fixed, cfg.search_grid(),
                                 cfg.calib_heom_config())
        rows.append((delta, result.lambda_h, result.j_h, result.residual))
    _write_csv(out_dir / "calib.csv",
               ["delta_q", "lambda_h", "j_h", "residual"], rows)
    lam_line = linear_fit([(r[0], r[1]) for r in rows])
    j_line = linear_fit([(r[0], r[2]) for r in rows])
    with open(out_dir / "line.json", "w") as fh:
        json.dump({"lambda": {"slope": lam_line.slope,
                              "intercept": lam_line.intercept,
                              "r_squared": lam_line.r_squared},
                   "j": {"slope": j_line.slope,
                         "intercept": j_line.intercept,
                         "r_squared": j_line.r_squared}}, fh, indent=2)
        fh.write("\n")


def cmd_ttm_extend(cfg: RunConfig, out_dir: Path) -> None:
    params = cfg.system_params()
    t0, dt, n_train = cfg["ttm.train_t0"], cfg["ttm.train_dt"], cfg["ttm.train_n"]
    train_grid = t0 + dt * np.arange(n_train + 1)
    trajectories = []
    for rho0 in CANONICAL_INITIAL_STATES:
        trace = run_dynamics(params, cfg["run.delta_q"], cfg.trotter_schedule(),
                             cfg.noise_config(), train_grid, initial_rho=rho0)
        trajectories.append(trace.rho_series)
    trajs = TrajectorySet(dt=dt, t0=t0, trajectories=trajectories)
    maps = build_dynamical_maps(trajs)
    tensors = transfer_tensors(maps)
    n_target = round((cfg["ttm.extend_t_max"] - t0) / dt)
    extended, _raw = extend_dynamics(tensors, trajectories[0], n_target)
    times = t0 + dt * np.arange(n_target + 1)
    rows = []
    for t, rho in zip(times, extended):
        rows.append((t, rho[0, 0].real, rho[0, 0].imag, rho[0, 1].real,
                     rho[0, 1].imag, rho[1, 0].real, rho[1, 0].imag,
                     rho[1, 1].real, rho[1, 1].imag))
    _write_csv(out_dir / "extended.csv",
               ["t", "re00", "im00", "re01", "im01",
                "re10", "im10", "re11", "im11"], rows)
    save_superop_set(out_dir / "maps.txt", maps.dt, maps.maps)
    save_superop_set(out_dir / "tensors.txt", tensors.dt, tensors.tensors)


def cmd_identity_scan(cfg: RunConfig, out_dir: Path) -> None:
    bloch = identity_gate_scan(cfg["scan.kind"], cfg["scan.reps"],
                               (cfg["scan.theta"], cfg["scan.phi"]),
                               cfg.noise_config())
    rows = [(r + 1, v[0], v[1], v[2], float(np.linalg.norm(v)))
            for r, v in enumerate(bloch)]
    _write_csv(out_dir / "bloch.csv", ["rep", "x", "y", "z", "r"], rows)


class CsvFormatError(ValueError):
    pass


def _read_trace_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}:1: empty CSV") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, "
                    f"got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return header, np.array(rows)


_PLOT_PREFERENCE = ("p1_fixed", "p1_norm", "p1_raw", "p1_ttm", "re00", "p1")


def plot_traces(inputs: list[Path], out_file: Path) -> None:
    """Deterministic vector line plot of one series per input CSV."""
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "dimerlab"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in inputs:
        header, data = _read_trace_csv(Path(path))
        if header[0] != "t":
            raise CsvFormatError(f"{path}: first column must be 't'")
        column = next((c for c in _PLOT_PREFERENCE if c in header), header[1])
        ax.plot(data[:, 0], data[:, header.index(column)],
                label=Path(path).stem)
    ax.set_xlabel("t")
    ax.set_ylabel("population")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_file, format="svg", metadata={"Date": None})
    plt.close(fig)


_SUBCOMMANDS = {
    "closed": cmd_closed,
    "noisy": cmd_noisy,
    "heom": cmd_heom,
    "fit-heom": cmd_fit_heom,
    "calib-line": cmd_calib_line,
    "ttm-extend": cmd_ttm_extend,
    "identity-scan": cmd_identity_scan,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dimerlab",
        description="Noisy two-qubit dimer simulation laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE")
    plot = sub.add_parser("plot")
    plot.add_argument("inputs", nargs="+")
    plot.add_argument("--out", type=str, required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0

    try:
        if args.subcommand == "plot":
            plot_traces([Path(p) for p in args.inputs], Path(args.out))
            return 0
        overrides = {}
        for item in args.override:
            if "=" not in item:
                raise ConfigError(f"override must be KEY=VALUE, got {item!r}")
            key, val = item.split("=", 1)
            overrides[key.strip()] = val.strip()
        if args.config:
            cfg = RunConfig.from_file(args.config, overrides)
        else:
            cfg = RunConfig(overrides)
        if args.seed is not None:
            cfg.set("run.seed", args.seed)
    except (ConfigError, FileNotFoundError, CsvFormatError) as exc:
        print(f"dimerlab: {exc}", file=sys.stderr)
        return 1

    try:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _SUBCOMMANDS[args.subcommand](cfg, out_dir)
        _write_manifest(out_dir, args.subcommand, cfg, cfg["run.seed"])
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"dimerlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
