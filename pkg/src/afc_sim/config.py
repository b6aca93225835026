"""INI run configuration.

Grammar: Python ``configparser`` INI, one ``[section]`` per block, ``key =
value`` lines, ``#`` or ``;`` comments. Keys are case-sensitive and every
key must appear in ``SCHEMA``; lists are comma separated. Frequencies are
linear MHz, times ns.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

import numpy as np

from .dynamics import prepare_cavity_state
from .model import (CombSpec, GaussianEnvelope, LossRates, UniformEnvelope, ValidationError, build_comb)


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _complexes(text: str) -> list[complex]:
    return [complex(x.strip().replace(" ", "")) for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {value!r}")
        return value
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "comb": {
        "m": (int, 7),
        "delta_nu_mhz": (float, 40.0),
        "nu_c_mhz": (float, 3000.0),
        "n_prime": (int, 10),
        "envelope": (_choice("uniform", "gaussian"), "gaussian"),
        "omega0_mhz": (float, 30.0),
        "lambda_mhz": (float, 190.0),
    },
    "basis": {
        "photon_cutoff": (int, None),
        "exc_cutoff": (int, None),
    },
    "state": {
        "kind": (_choice("fock", "coherent", "cat", "superposition"), "fock"),
        "alpha": (complex, 1.0),
        "beta": (complex, 2.0),
        "coeffs": (_complexes, [0, 1, 1]),
        "photon_cutoff": (int, None),
        "tail_tol": (float, 1e-8),
    },
    "losses": {
        "kappa_mhz": (float, 0.0),
        "gamma_h_mhz": (float, 0.0),
        "gamma_p_mhz": (float, 0.0),
    },
    "time": {
        "t_end_ns": (float, 150.0),
        "n_snapshots": (int, 601),
    },
    "method": {
        "kind": (_choice("closed", "dense", "trajectories"), "closed"),
        "n_traj": (int, 1000),
        "seed": (int, 0),
        "dephasing_convention": (_choice("literal", "half"), "literal"),
        "rtol": (float, None),
        "max_dense_dim": (int, 200),
    },
    "spectrum": {
        "sectors": (_ints, [1, 2]),
        "merge_tol_mhz": (float, None),
    },
    "wigner": {
        "time_ns": (float, 0.0),
        "re_min": (float, -4.0),
        "re_max": (float, 4.0),
        "im_min": (float, -4.0),
        "im_max": (float, 4.0),
        "resolution": (int, 81),
    },
    "revivals": {
        "n_revivals": (int, 4),
        "points_per_revival": (int, 200),
        "t_rev_ns": (float, None),
        "fidelity_convention": (_choice("root", "squared"), "root"),
    },
    "sweep": {
        "lambda_min_mhz": (float, 100.0),
        "lambda_max_mhz": (float, 1000.0),
        "n_points": (int, 46),
        "evolve": (_bool, True),
        "n_revivals": (int, 4),
        "points_per_revival": (int, 200),
    },
    "output": {
        "cavity_states": (_bool, False),
    },
}


@dataclass
class RunConfig:
    sections: dict
    digest: str
    comb: CombSpec
    losses: LossRates
    cavity: np.ndarray
    photon_cutoff: int
    exc_cutoff: int
    seed: int = 0

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", f"malformed file: {exc}") from None
    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(name, "unknown section")
    for name, keys in SCHEMA.items():
        values = {k: default for k, (_, default) in keys.items()}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in keys:
                    raise ConfigError(f"{name}.{key}", "unknown key")
                try:
                    values[key] = keys[key][0](raw)
                except ValueError as exc:
                    raise ConfigError(f"{name}.{key}", str(exc)) from None
        sections[name] = values
    return _validate(sections, hashlib.sha256(text.encode()).hexdigest())


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def _validate(sections: dict, digest: str) -> RunConfig:
    c = sections["comb"]
    try:
        env = (UniformEnvelope(c["omega0_mhz"]) if c["envelope"] == "uniform"
               else GaussianEnvelope(c["omega0_mhz"], c["lambda_mhz"]))
        comb = build_comb(c["m"], c["delta_nu_mhz"], c["nu_c_mhz"], c["n_prime"], env)
    except ValidationError as exc:
        key = {"delta_nu": "delta_nu_mhz", "omega0": "omega0_mhz"}.get(exc.field, exc.field)
        raise ConfigError(f"comb.{key}", str(exc).split(": ", 1)[-1]) from None
    lo = sections["losses"]
    try:
        losses = LossRates(lo["kappa_mhz"], lo["gamma_h_mhz"], lo["gamma_p_mhz"])
    except ValidationError as exc:
        raise ConfigError(f"losses.{exc.field}_mhz", str(exc).split(": ", 1)[-1]) from None

    st = sections["state"]
    try:
        cavity = prepare_cavity_state(st["kind"], st["photon_cutoff"], alpha=st["alpha"], beta=st["beta"],
                                      coeffs=st["coeffs"], tail_tol=st["tail_tol"])
    except ValueError as exc:
        raise ConfigError("state", str(exc)) from None
    top = int(np.flatnonzero(np.abs(cavity) > 0).max())
    b = sections["basis"]
    exc_cutoff = max(top, 1) if b["exc_cutoff"] is None else b["exc_cutoff"]
    photon_cutoff = exc_cutoff if b["photon_cutoff"] is None else b["photon_cutoff"]
    if exc_cutoff < 0 or photon_cutoff < 0:
        raise ConfigError("basis", "cutoffs must be non-negative")
    if top > min(exc_cutoff, photon_cutoff):
        raise ConfigError("basis.exc_cutoff", f"initial cavity state reaches Fock level {top}")

    t = sections["time"]
    if not t["t_end_ns"] > 0:
        raise ConfigError("time.t_end_ns", "must be positive")
    if t["n_snapshots"] < 2:
        raise ConfigError("time.n_snapshots", "need at least two snapshots")
    me = sections["method"]
    if me["n_traj"] < 1:
        raise ConfigError("method.n_traj", "must be positive")
    if me["seed"] < 0:
        raise ConfigError("method.seed", "must be non-negative")
    sw = sections["sweep"]
    if not 0 < sw["lambda_min_mhz"] <= sw["lambda_max_mhz"]:
        raise ConfigError("sweep.lambda_min_mhz", "need 0 < lambda_min_mhz <= lambda_max_mhz")
    if sw["n_points"] < 1:
        raise ConfigError("sweep.n_points", "must be positive")
    w = sections["wigner"]
    if w["resolution"] < 2:
        raise ConfigError("wigner.resolution", "need at least two points per axis")
    if w["time_ns"] < 0:
        raise ConfigError("wigner.time_ns", "must be non-negative")
    return RunConfig(sections, digest, comb, losses, cavity, photon_cutoff, exc_cutoff, seed=me["seed"])
