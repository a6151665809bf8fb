"""Command-line front end for the four study workflows.

Subcommands: coherence (analytic decay of the neighborhood-resolved
coherences), steady-state (exact window-averaged excitation density over a
drive/detuning grid), trajectories (the same grid estimated by jump Monte
Carlo), meanfield (phase diagram, bistable cut, critical point).

All inputs are in units of gamma (gamma = 1 internally); times in 1/gamma.
Parameters come from a JSON config file (--config), with built-in defaults
underneath and --seed/--threads overriding on top. A JSON manifest written
next to each CSV carries the fully resolved configuration; passing a
manifest back via --config reproduces the CSV byte for byte.

CSV layout: '#'-prefixed comment lines (metadata, then 'columns: ...'),
followed by comma-delimited data rows, 17 significant digits, empty string
for absent values.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .coherence import exact_mode_series, initial_coherence, mode_series
from .lattice import LatticeSpec
from .master_equation import DEFAULT_DT, scan_steady_state, window_times
from .meanfield import (
    MeanFieldParams,
    SIGN_CONVENTIONS,
    ORACLE_VERIFIED,
    fixed_points_cubic,
    refine_critical_point,
    scan_phase_diagram,
)
from .operators import COLLECTIVE, MODELS, SINGLE, ModelParams, check_model
from .trajectories import run_ensemble

DEFAULTS: dict[str, dict] = {
    "coherence": {
        "d": 1,
        "V": 10.0,
        "gamma": 1.0,
        "omega_a": 0.0,
        "t_max": 2.0,
        "n_times": 201,
        "models": [SINGLE, COLLECTIVE],
        "verify_N": None,   # periodic chain length for the exact cross-check columns
        "dt": DEFAULT_DT,
    },
    "steady-state": {
        "N": 4,
        "boundary": "periodic",
        "V": 10.0,
        "gamma": 1.0,
        "omega_a": 0.0,
        "delta_min": -30.0,
        "delta_max": 10.0,
        "n_delta": 41,
        "omega_min": None,  # None: omega_max / n_omega, so the grid covers (0, omega_max]
        "omega_max": 10.0,
        "n_omega": 21,
        "model": "both",
        "t_final": 5.0,
        "dt": DEFAULT_DT,
    },
    "trajectories": {
        "N": 4,
        "boundary": "periodic",
        "V": 10.0,
        "gamma": 1.0,
        "omega_a": 0.0,
        "delta_min": -30.0,
        "delta_max": 10.0,
        "n_delta": 9,
        "omega_min": None,
        "omega_max": 10.0,
        "n_omega": 3,
        "model": "both",
        "n_traj": 300,
        "seed": 7041,
        "threads": 1,
        "t_final": 5.0,
        "dt": DEFAULT_DT,
    },
    "meanfield": {
        "d": 1,
        "V": 10.0,
        "gamma": 1.0,
        "delta_min": -30.0,
        "delta_max": 10.0,
        "n_delta": 201,
        "omega_min": 0.0,
        "omega_max": 10.0,
        "n_omega": 201,
        "sign_convention": ORACLE_VERIFIED,
        "model": COLLECTIVE,
        "cut_omega": 2.5,
        "cut_n_delta": 401,
        "refine_critical": True,
        "critical_omega_start": 2.5,
    },
}


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if not np.isfinite(x):
        return ""
    return format(x, ".17g")


def write_csv(path: Path, meta: dict, columns: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, val in meta.items():
            fh.write(f"# {key}: {val}\n")
        fh.write(f"# columns: {','.join(columns)}\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_manifest(path: Path, command: str, config: dict, outputs: list[str],
                   wall_time: float, extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "config": config,
        "outputs": outputs,
        "wall_time_s": round(wall_time, 3),
        "version": __version__,
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path: str | Path) -> tuple[dict, str | None]:
    """Read a config file; a manifest (output of a previous run) is accepted
    and unwrapped. Returns (config, embedded command or None)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    if "config" in doc and "command" in doc:
        return doc["config"], doc["command"]
    return doc, None


def resolve_config(command: str, file_cfg: dict | None, overrides: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    if file_cfg:
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    return cfg


def _omega_grid(cfg) -> np.ndarray:
    lo = cfg["omega_min"]
    if lo is None:
        lo = cfg["omega_max"] / cfg["n_omega"]
    return np.linspace(lo, cfg["omega_max"], cfg["n_omega"])


def _delta_grid(cfg) -> np.ndarray:
    return np.linspace(cfg["delta_min"], cfg["delta_max"], cfg["n_delta"])


def _models(cfg) -> tuple[str, ...]:
    m = cfg["model"]
    if m == "both":
        return (SINGLE, COLLECTIVE)
    check_model(m)
    return (m,)


def cmd_coherence(cfg: dict, out_dir: Path) -> list[Path]:
    t0 = time.monotonic()
    d = int(cfg["d"])
    if d < 1:
        raise ValueError("d must be >= 1")
    for m in cfg["models"]:
        check_model(m)
    t = np.linspace(0.0, float(cfg["t_max"]), int(cfg["n_times"]))

    per_model: dict[str, np.ndarray] = {}
    for m in cfg["models"]:
        state = initial_coherence(d, cfg["omega_a"], cfg["V"], cfg["gamma"], m)
        per_model[m] = mode_series(state, t)

    columns = ["t", "abs_X_single", "abs_X_collective"]
    n_modes = 2 * d + 1
    for m in (SINGLE, COLLECTIVE):
        columns += [f"abs_X_{m}_xi{xi}" for xi in range(n_modes)]

    dev: dict[str, np.ndarray] = {}
    if cfg["verify_N"] is not None:
        n_sites = int(cfg["verify_N"])
        if d != 1:
            raise ValueError("the exact cross-check runs on a chain (d = 1)")
        lat = LatticeSpec(1, (n_sites,), "periodic")
        mp = ModelParams(omega_a=cfg["omega_a"], V=cfg["V"], gamma=cfg["gamma"])
        for m in cfg["models"]:
            exact = exact_mode_series(lat, mp, m, t, dt=cfg["dt"])
            dev[m] = np.max(np.abs(exact - per_model[m]), axis=0)
        columns += [f"dev_{m}" for m in cfg["models"]]

    rows = []
    for it, ti in enumerate(t):
        row = [ti]
        for m in (SINGLE, COLLECTIVE):
            row.append(abs(per_model[m][:, it].sum()) if m in per_model else None)
        for m in (SINGLE, COLLECTIVE):
            if m in per_model:
                row += list(np.abs(per_model[m][:, it]))
            else:
                row += [None] * n_modes
        for m in cfg["models"]:
            if m in dev:
                row.append(dev[m][it])
        rows.append(row)

    csv_path = out_dir / "coherence.csv"
    write_csv(csv_path, {"command": "coherence", "d": d, "V": cfg["V"],
                         "gamma": cfg["gamma"], "omega_a": cfg["omega_a"]}, columns, rows)
    manifest = out_dir / "coherence_manifest.json"
    write_manifest(manifest, "coherence", cfg, [csv_path.name], time.monotonic() - t0)
    return [csv_path, manifest]


def _grid_rows(deltas, omegas, cell):
    rows = []
    for i, D in enumerate(deltas):
        for j, O in enumerate(omegas):
            rows.append([D, O] + cell(i, j))
    return rows


def _contrast(n_c, n_s):
    if n_c is None or n_s is None or not np.isfinite(n_c) or not np.isfinite(n_s):
        return None
    if abs(n_s) < 1e-12:
        return None
    return (n_c - n_s) / n_s


def cmd_steady_state(cfg: dict, out_dir: Path) -> list[Path]:
    t0 = time.monotonic()
    n_sites = int(cfg["N"])
    if n_sites > 10:
        raise ValueError(
            "exact integration is limited to N <= 10; use the trajectories "
            "command for larger systems"
        )
    lat = LatticeSpec(1, (n_sites,), cfg["boundary"])
    mp = ModelParams(omega_a=cfg["omega_a"], V=cfg["V"], gamma=cfg["gamma"])
    deltas, omegas = _delta_grid(cfg), _omega_grid(cfg)
    scan = scan_steady_state(
        lat, mp, deltas, omegas, models=_models(cfg),
        t_final=cfg["t_final"], dt=cfg["dt"],
    )

    def cell(i, j):
        n_s = scan.n_single[i, j]
        n_c = scan.n_collective[i, j]
        return [n_s, n_c, _contrast(n_c, n_s)]

    columns = ["Delta", "Omega", "n_ss_single", "n_ss_collective", "delta_n_ss"]
    csv_path = out_dir / "steady_state.csv"
    write_csv(csv_path, {"command": "steady-state", "N": n_sites, "V": cfg["V"],
                         "gamma": cfg["gamma"]}, columns, _grid_rows(deltas, omegas, cell))
    manifest = out_dir / "steady_state_manifest.json"
    write_manifest(
        manifest, "steady-state", cfg, [csv_path.name], time.monotonic() - t0,
        extra={
            "lattice": {"dimension": 1, "extents": [n_sites], "boundary": cfg["boundary"]},
            "integrator": {"dt": cfg["dt"], "t_final": cfg["t_final"],
                           "window": [float(window_times(cfg["gamma"])[0]),
                                      float(window_times(cfg["gamma"])[-1])]},
            "errors": scan.errors,
        },
    )
    return [csv_path, manifest]


def cmd_trajectories(cfg: dict, out_dir: Path) -> list[Path]:
    t0 = time.monotonic()
    n_sites = int(cfg["N"])
    lat = LatticeSpec(1, (n_sites,), cfg["boundary"])
    deltas, omegas = _delta_grid(cfg), _omega_grid(cfg)
    models = _models(cfg)
    gamma = cfg["gamma"]
    tw = window_times(gamma)
    sample_times = np.union1d(np.linspace(0.0, cfg["t_final"], 51), tw)
    psi0 = np.zeros(1 << n_sites, dtype=complex)
    psi0[0] = 1.0

    # independent, reproducible seed per (cell, model) cell derived from the
    # master seed; a shared seed would correlate neighboring cells
    n_cells = len(deltas) * len(omegas) * len(models)
    cell_seeds = np.random.SeedSequence(int(cfg["seed"])).generate_state(
        n_cells, dtype=np.uint64
    )

    stats: dict[str, dict[tuple[int, int], tuple[float, float]]] = {m: {} for m in models}
    idx = 0
    for m in models:
        for i, D in enumerate(deltas):
            for j, O in enumerate(omegas):
                mp = ModelParams(omega_a=cfg["omega_a"], V=cfg["V"], gamma=gamma,
                                 Omega=float(O), Delta=float(D))
                ens = run_ensemble(
                    lat, mp, m, psi0, int(cfg["n_traj"]), int(cell_seeds[idx]),
                    t_final=cfg["t_final"], dt=cfg["dt"],
                    sample_times=sample_times, threads=int(cfg["threads"]),
                )
                stats[m][(i, j)] = ens.window_statistics(tw)
                idx += 1

    def cell(i, j):
        n_s, e_s = stats.get(SINGLE, {}).get((i, j), (None, None))
        n_c, e_c = stats.get(COLLECTIVE, {}).get((i, j), (None, None))
        return [n_s, e_s, n_c, e_c, _contrast(n_c, n_s)]

    columns = ["Delta", "Omega", "n_ss_single", "stderr_single",
               "n_ss_collective", "stderr_collective", "delta_n_ss"]
    csv_path = out_dir / "trajectories.csv"
    write_csv(csv_path, {"command": "trajectories", "N": n_sites, "V": cfg["V"],
                         "gamma": gamma, "n_traj": cfg["n_traj"],
                         "master_seed": cfg["seed"]}, columns,
              _grid_rows(deltas, omegas, cell))
    manifest = out_dir / "trajectories_manifest.json"
    write_manifest(
        manifest, "trajectories", cfg, [csv_path.name], time.monotonic() - t0,
        extra={"master_seed": int(cfg["seed"]),
               "lattice": {"dimension": 1, "extents": [n_sites], "boundary": cfg["boundary"]}},
    )
    return [csv_path, manifest]


def cmd_meanfield(cfg: dict, out_dir: Path) -> list[Path]:
    t0 = time.monotonic()
    if cfg["sign_convention"] not in SIGN_CONVENTIONS:
        raise ValueError(f"sign_convention must be one of {SIGN_CONVENTIONS}")
    check_model(cfg["model"])
    params = MeanFieldParams(0.0, 0.0, cfg["gamma"], int(cfg["d"]), cfg["V"])
    deltas, omegas = _delta_grid(cfg), _omega_grid(cfg)
    cells = scan_phase_diagram(deltas, omegas, params,
                               cfg["sign_convention"], cfg["model"])

    rows = []
    for c in cells:
        branches = sorted(f.state.n for f in c.fixed_points if f.stable and f.physical)
        b1 = branches[0] if branches else None
        b2 = branches[-1] if len(branches) > 1 else None
        rows.append([c.Delta, c.Omega, c.stable_count, b1, b2])
    columns = ["Delta", "Omega", "stable_count", "n_ss_branch1", "n_ss_branch2"]
    pd_path = out_dir / "meanfield_phase_diagram.csv"
    write_csv(pd_path, {"command": "meanfield", "d": cfg["d"], "V": cfg["V"],
                        "gamma": cfg["gamma"], "sign_convention": cfg["sign_convention"],
                        "model": cfg["model"]}, columns, rows)

    cut_deltas = np.linspace(cfg["delta_min"], cfg["delta_max"], int(cfg["cut_n_delta"]))
    cut_rows = []
    for D in cut_deltas:
        p = MeanFieldParams(float(D), float(cfg["cut_omega"]), cfg["gamma"],
                            int(cfg["d"]), cfg["V"])
        fps = fixed_points_cubic(p, cfg["sign_convention"], cfg["model"])
        stab = sorted(f.state.n for f in fps if f.stable and f.physical)
        unst = sorted(f.state.n for f in fps if not f.stable and f.physical)
        cut_rows.append([
            D,
            stab[0] if stab else None,
            stab[-1] if len(stab) > 1 else None,
            unst[0] if unst else None,
        ])
    cut_path = out_dir / "meanfield_cut.csv"
    write_csv(cut_path, {"command": "meanfield", "cut_omega": cfg["cut_omega"],
                         "d": cfg["d"], "V": cfg["V"]},
              ["Delta", "n_stable_low", "n_stable_high", "n_unstable"], cut_rows)

    crit: list[dict] = []
    crit_error = None
    if cfg["refine_critical"]:
        try:
            Dc, Oc = refine_critical_point(
                params, cfg["sign_convention"], cfg["model"],
                delta_range=(cfg["delta_min"], cfg["delta_max"]),
                omega_range=(cfg["critical_omega_start"], cfg["omega_max"]),
            )
            crit.append({"Delta": Dc, "Omega": Oc, "tol": 1e-3 * cfg["gamma"]})
        except ValueError as exc:
            crit_error = str(exc)
    crit_path = out_dir / "meanfield_critical_points.json"
    with open(crit_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"critical_points": crit, "error": crit_error}, fh, indent=2)
        fh.write("\n")

    manifest = out_dir / "meanfield_manifest.json"
    write_manifest(manifest, "meanfield", cfg,
                   [pd_path.name, cut_path.name, crit_path.name],
                   time.monotonic() - t0)
    return [pd_path, cut_path, crit_path, manifest]


COMMANDS = {
    "coherence": cmd_coherence,
    "steady-state": cmd_steady_state,
    "trajectories": cmd_trajectories,
    "meanfield": cmd_meanfield,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ryddecay",
        description="Radiative decay in interacting Rydberg lattices: "
                    "single-atom vs collective dissipation (units of gamma).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} workflow")
        p.add_argument("--config", type=str, default=None,
                       help="JSON config (a manifest from a previous run also works)")
        p.add_argument("--out", type=str, default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (trajectories)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (trajectories)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_cfg, embedded = (None, None)
        if args.config:
            file_cfg, embedded = load_config(args.config)
            if embedded is not None and embedded != args.command:
                raise ValueError(
                    f"manifest was written by '{embedded}', not '{args.command}'"
                )
        overrides = {}
        if args.command == "trajectories":
            overrides = {"seed": args.seed, "threads": args.threads}
        cfg = resolve_config(args.command, file_cfg, overrides)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](cfg, out_dir)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
