"""``afc-sim`` command line: spectrum, evolve, wigner, revivals, sweep.

Every output file starts with a ``#`` line carrying the tool version, the
SHA-256 of the config file and the seed. Numbers are written with 12
significant digits, so identical inputs give identical bytes.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure. On
failure one JSON object is written to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import detect_revivals, revival_fidelities, wigner
from .config import ConfigError, RunConfig, load_config
from .dynamics import (DensityState, build_liouvillian, evolve_closed, evolve_lindblad_dense, evolve_trajectories,
                       initial_state)
from .engineer import CombTemplate, sweep_lambda
from .model import assemble_hamiltonian, enumerate_basis, jump_operators
from .spectrum import sector_spectrum, spacing_stats

COMMANDS = ("spectrum", "evolve", "wigner", "revivals", "sweep")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


class _Writer:
    def __init__(self, out: Path, cfg: RunConfig):
        self.out = out
        self.header = f"# afc-sim {__version__} config_sha256={cfg.digest} seed={cfg.seed}\n"
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, columns, rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="\n") as fh:
            fh.write(self.header)
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        return path

    def json(self, name: str, payload) -> Path:
        path = self.out / name
        with open(path, "w") as fh:
            fh.write(self.header)
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        return path


def _merge_tol(cfg: RunConfig) -> float:
    tol = cfg["spectrum"]["merge_tol_mhz"]
    return 0.25 * cfg.comb.delta_nu if tol is None else tol


def _lambda(cfg: RunConfig):
    return cfg["comb"]["lambda_mhz"] if cfg["comb"]["envelope"] == "gaussian" else None


def _t_rev(cfg: RunConfig) -> float:
    basis = enumerate_basis(cfg.comb, 1, 1)
    H = assemble_hamiltonian(cfg.comb, basis)
    return spacing_stats(sector_spectrum(H, basis, 1), _merge_tol(cfg)).t_rev


def _evolve(cfg: RunConfig, t_grid, threads: int):
    comb = cfg.comb
    basis = enumerate_basis(comb, cfg.photon_cutoff, cfg.exc_cutoff)
    H = assemble_hamiltonian(comb, basis)
    psi0 = initial_state(basis, cfg.cavity)
    me = cfg["method"]
    if me["kind"] == "closed":
        return evolve_closed(H, psi0, t_grid, rtol=me["rtol"] or 1e-9)
    jumps = jump_operators(comb, basis)
    if me["kind"] == "dense":
        if basis.size > me["max_dense_dim"]:
            raise ConfigError("method.kind", f"basis size {basis.size} exceeds max_dense_dim {me['max_dense_dim']}")
        L = build_liouvillian(H, jumps, cfg.losses, me["dephasing_convention"], max_dim=me["max_dense_dim"])
        return evolve_lindblad_dense(L, DensityState.from_pure(psi0), t_grid, rtol=me["rtol"] or 1e-8)
    return evolve_trajectories(H, jumps, cfg.losses, psi0, t_grid, me["n_traj"], cfg.seed, threads=threads,
                               dephasing_convention=me["dephasing_convention"])


def cmd_spectrum(cfg: RunConfig, w: _Writer, threads: int):
    sectors = cfg["spectrum"]["sectors"]
    top = max(max(sectors), 2)
    if min(sectors) < 0:
        raise ConfigError("spectrum.sectors", "sectors must be non-negative")
    basis = enumerate_basis(cfg.comb, top, top)
    H = assemble_hamiltonian(cfg.comb, basis)
    spectra = {k: sector_spectrum(H, basis, k) for k in sorted(set(sectors) | {1, 2})}
    rows = [(k, e) for k in sectors for e in spectra[k].eigenvalues_mhz]
    w.csv("spectrum.csv", ("sector", "eigenvalue_mhz"), rows)
    tol = _merge_tol(cfg)
    s1 = spacing_stats(spectra[1], tol)
    s2 = spacing_stats(spectra[2], tol)
    w.csv("stats.csv", ("lambda_mhz", "mean_mhz", "std1_mhz", "std2_mhz", "t_rev_ns"),
          [(_lambda(cfg), s1.mean, s1.std, s2.std, s1.t_rev)])


def _time_grid(cfg: RunConfig):
    t = cfg["time"]
    return np.linspace(0.0, t["t_end_ns"], t["n_snapshots"])


def cmd_evolve(cfg: RunConfig, w: _Writer, threads: int):
    traj = _evolve(cfg, _time_grid(cfg), threads)
    if traj.photon_number_sem is not None:
        w.csv("evolve.csv", ("t_ns", "photon_number", "photon_number_sem"),
              zip(traj.times, traj.photon_number, traj.photon_number_sem))
    else:
        w.csv("evolve.csv", ("t_ns", "photon_number"), zip(traj.times, traj.photon_number))
    if cfg["output"]["cavity_states"]:
        w.json("cavity_states.json", cavity_states_payload(traj))


def cavity_states_payload(traj) -> dict:
    """Snapshots as ``{"times_ns", "dim", "states"}``; each state is the
    row-major list of ``[re, im]`` pairs of the cavity density matrix."""
    states = []
    for rho in traj.cavity_states:
        flat = rho.matrix.ravel()
        states.append([[float(_fmt(z.real)), float(_fmt(z.imag))] for z in flat])
    return {"times_ns": [float(_fmt(t)) for t in traj.times],
            "dim": traj.cavity_states[0].cutoff,
            "states": states}


def cmd_wigner(cfg: RunConfig, w: _Writer, threads: int):
    wc = cfg["wigner"]
    t_end = wc["time_ns"]
    grid = np.array([0.0, t_end]) if t_end > 0 else np.array([0.0])
    traj = _evolve(cfg, grid, threads)
    result = wigner(traj.cavity_states[-1], (wc["re_min"], wc["re_max"]), (wc["im_min"], wc["im_max"]),
                    wc["resolution"])
    rows = [(x, y, result.values[j, i])
            for j, y in enumerate(result.im_axis) for i, x in enumerate(result.re_axis)]
    w.csv("wigner.csv", ("re_alpha", "im_alpha", "w"), rows)


def cmd_revivals(cfg: RunConfig, w: _Writer, threads: int):
    rc = cfg["revivals"]
    t_rev = rc["t_rev_ns"] or _t_rev(cfg)
    n = rc["n_revivals"]
    span = 1.25 * n
    grid = np.linspace(0.0, span * t_rev, int(round(span * rc["points_per_revival"])) + 1)
    traj = _evolve(cfg, grid, threads)
    revivals = detect_revivals(traj.times, traj.photon_number, t_rev, n)
    rows = [(r.k, r.t_peak, r.photon_number, f, kind)
            for r, f, kind in revival_fidelities(traj, cfg.cavity, revivals, rc["fidelity_convention"])]
    w.csv("revivals.csv", ("k", "t_peak_ns", "photon_number", "fidelity", "fidelity_kind"), rows)


def cmd_sweep(cfg: RunConfig, w: _Writer, threads: int):
    c, sw = cfg["comb"], cfg["sweep"]
    template = CombTemplate(c["m"], c["delta_nu_mhz"], c["nu_c_mhz"], c["n_prime"], c["omega0_mhz"])
    grid = np.linspace(sw["lambda_min_mhz"], sw["lambda_max_mhz"], sw["n_points"])
    rates = None if cfg.losses.is_lossless else cfg.losses
    records = sweep_lambda(template, grid, cfg.cavity, exc_cutoff=cfg.exc_cutoff, rates=rates,
                           n_revivals=sw["n_revivals"], points_per_revival=sw["points_per_revival"],
                           merge_tol=_merge_tol(cfg), evolve=sw["evolve"], threads=threads)
    n = sw["n_revivals"]
    cols = ["lambda_mhz", "mean1_mhz", "std1_mhz", "std2_mhz", "t_rev_ns"] + [f"f{k}" for k in range(1, n + 1)]
    rows = []
    for r in records:
        fids = list(r.fidelities) + [None] * (n - len(r.fidelities))
        rows.append([r.lambda_mhz, r.mean1_mhz, r.std1_mhz, r.std2_mhz, r.t_rev_ns] + fids + [r.error or ""])
    w.csv("sweep.csv", cols + ["error"], rows)


HANDLERS = {"spectrum": cmd_spectrum, "evolve": cmd_evolve, "wigner": cmd_wigner,
            "revivals": cmd_revivals, "sweep": cmd_sweep}


def _threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("AFC_SIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("AFC_SIM_THREADS", f"not an integer: {env!r}") from None
    return 1


def _fail(kind: str, code: int, exc: Exception, field: str | None = None) -> int:
    payload = {"error": kind, "message": str(exc)}
    if field:
        payload["field"] = field
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def run(command: str, config_path, out_dir=".", seed: int | None = None, threads: int | None = None) -> int:
    if command not in HANDLERS:
        return _fail("usage", 2, ValueError(f"unknown subcommand {command!r}"))
    try:
        cfg = load_config(config_path)
        if seed is not None:
            if seed < 0:
                raise ConfigError("seed", "must be non-negative")
            cfg.seed = seed
        n_threads = _threads(threads)
    except ConfigError as exc:
        return _fail("config", 2, exc, exc.field)
    try:
        HANDLERS[command](cfg, _Writer(Path(out_dir), cfg), n_threads)
    except ConfigError as exc:
        return _fail("config", 2, exc, exc.field)
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", 3, exc)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="afc-sim", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="overrides [method] seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: $AFC_SIM_THREADS or 1)")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
