"""
Experiment configuration: a strict JSON document with named sections.

Unknown keys are rejected. Errors carry the dotted key path and, when the
key can be found in the source text, its line number.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .hilbert import StateVector
from .models import ChainParams, TrappedIonParams

SECTIONS = ("model", "protocol", "analysis", "sweep", "trajectories", "output", "target")
TARGET_KINDS = ("single", "complement_range", "complement_single")

ANALYSIS_DEFAULTS = {"tol_closed": 1e-3, "degeneracy_tol": 1e-9, "rel_tol": 1e-2}
OUTPUT_DEFAULTS = {"format": "csv", "path": "results"}
TRAJECTORY_DEFAULTS = {"M": 10000, "base_seed": 0}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.line = line
        self.message = message
        where = f"line {line}, " if line else ""
        super().__init__(f"config error ({where}{path or '<root>'}): {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration plus the fully resolved dict (defaults filled in)."""

    resolved: dict
    model: ChainParams | TrappedIonParams

    def section(self, name: str) -> dict | None:
        return self.resolved.get(name)

    def require(self, name: str) -> dict:
        sec = self.resolved.get(name)
        if sec is None:
            raise ConfigError(name, f"section '{name}' is required for this command")
        return sec

    def psi0(self) -> StateVector:
        spec = self.require("protocol").get("psi0")
        return parse_psi0(spec, slave_dim(self.model), warn=False)

    def require_key(self, section: str, key: str):
        sec = self.require(section)
        if sec.get(key) is None:
            raise ConfigError(f"{section}.{key}", "value is required for this command")
        return sec[key]


def slave_dim(model: ChainParams | TrappedIonParams) -> int:
    return 1 if isinstance(model, ChainParams) else model.slave_dim


class _Checker:
    def __init__(self, text: str):
        self.text = text

    def line_of(self, path: str) -> int | None:
        pos = 0
        for key in path.split("."):
            if key.isdigit():
                continue
            m = re.compile(r'"%s"\s*:' % re.escape(key)).search(self.text, pos)
            if m is None:
                return None
            pos = m.start()
        return self.text.count("\n", 0, pos) + 1 if path else None

    def fail(self, path: str, message: str):
        raise ConfigError(path, message, self.line_of(path))

    def obj(self, value, path: str, allowed: tuple[str, ...]) -> dict:
        if not isinstance(value, dict):
            self.fail(path, f"expected an object, got {type(value).__name__}")
        for key in value:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, f"unknown key '{key}'")
        return value

    def number(self, value, path: str, lo: float | None = None, strict_lo: bool = False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            self.fail(path, "value must be finite")
        if lo is not None and (value < lo or (strict_lo and value == lo)):
            self.fail(path, f"must be {'>' if strict_lo else '>='} {lo}, got {value}")
        return float(value)

    def integer(self, value, path: str, lo: int | None = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            else:
                self.fail(path, f"expected an integer, got {value!r}")
        if lo is not None and value < lo:
            self.fail(path, f"must be >= {lo}, got {value}")
        return int(value)

    def complex_number(self, value, path: str) -> complex:
        if isinstance(value, list) and len(value) == 2:
            return complex(self.number(value[0], path), self.number(value[1], path))
        return complex(self.number(value, path))

    def grid(self, value, path: str, lo: float | None = None) -> list[float]:
        if not isinstance(value, list) or not value:
            self.fail(path, "expected a non-empty list of numbers")
        g = [self.number(v, f"{path}.{i}", lo) for i, v in enumerate(value)]
        if any(b <= a for a, b in zip(g, g[1:])):
            self.fail(path, "grid must be strictly ascending")
        return g


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    return parse_config(text)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from exc
    c = _Checker(text)
    c.obj(raw, "", SECTIONS)
    resolved: dict[str, Any] = {}

    if "model" not in raw:
        c.fail("model", "section 'model' is required")
    model_sec = c.obj(raw["model"], "model", ("chain", "trapped_ion"))
    if len(model_sec) != 1:
        c.fail("model", "exactly one of 'chain' or 'trapped_ion' must be given")
    if "chain" in model_sec:
        ch = c.obj(model_sec["chain"], "model.chain", ("couplings",))
        coup = ch.get("couplings")
        if not isinstance(coup, list) or not coup:
            c.fail("model.chain.couplings", "expected a non-empty list of couplings")
        couplings = [c.complex_number(v, f"model.chain.couplings.{i}") for i, v in enumerate(coup)]
        model: ChainParams | TrappedIonParams = ChainParams(tuple(couplings))
        resolved["model"] = {
            "chain": {"couplings": [v.real if v.imag == 0 else [v.real, v.imag] for v in couplings]}
        }
    else:
        keys = ("omega", "kappa", "p", "q", "eta1", "eta2", "n_max", "omega_phase", "kappa_phase")
        ti = c.obj(model_sec["trapped_ion"], "model.trapped_ion", keys)
        base = "model.trapped_ion"
        for k in ("omega", "kappa", "p", "q", "eta1", "eta2", "n_max"):
            if k not in ti:
                c.fail(f"{base}.{k}", "value is required")
        vals = {
            "omega": c.number(ti["omega"], f"{base}.omega", 0.0),
            "kappa": c.number(ti["kappa"], f"{base}.kappa", 0.0),
            "p": c.integer(ti["p"], f"{base}.p"),
            "q": c.integer(ti["q"], f"{base}.q"),
            "eta1": c.number(ti["eta1"], f"{base}.eta1", 0.0),
            "eta2": c.number(ti["eta2"], f"{base}.eta2", 0.0),
            "n_max": c.integer(ti["n_max"], f"{base}.n_max", 0),
            "omega_phase": c.number(ti.get("omega_phase", 0.0), f"{base}.omega_phase"),
            "kappa_phase": c.number(ti.get("kappa_phase", 0.0), f"{base}.kappa_phase"),
        }
        try:
            model = TrappedIonParams(**vals)
        except ValueError as exc:
            c.fail(f"{base}.n_max", str(exc))
        resolved["model"] = {"trapped_ion": vals}

    sdim = slave_dim(model)
    master_dim = model.levels if isinstance(model, ChainParams) else 3

    if "protocol" in raw:
        pr = c.obj(raw["protocol"], "protocol", ("master_index", "tau", "N", "psi0"))
        mi = c.integer(pr.get("master_index", 0), "protocol.master_index", 0)
        if mi >= master_dim:
            c.fail("protocol.master_index", f"must be < {master_dim}")
        tau = c.number(pr["tau"], "protocol.tau", 0.0) if "tau" in pr else None
        n_steps = c.integer(pr["N"], "protocol.N", 1) if "N" in pr else None
        psi0 = pr.get("psi0", "fock:0")
        try:
            parse_psi0(psi0, sdim, warn=False)
        except ValueError as exc:
            c.fail("protocol.psi0", str(exc))
        resolved["protocol"] = {"master_index": mi, "tau": tau, "N": n_steps, "psi0": psi0}

    an = c.obj(raw.get("analysis", {}), "analysis", tuple(ANALYSIS_DEFAULTS))
    resolved["analysis"] = {
        k: c.number(an.get(k, d), f"analysis.{k}", 0.0, strict_lo=True)
        for k, d in ANALYSIS_DEFAULTS.items()
    }
    for k in ("tol_closed", "degeneracy_tol"):
        if resolved["analysis"][k] >= 1:
            c.fail(f"analysis.{k}", "must be < 1")

    if "sweep" in raw:
        sw = c.obj(raw["sweep"], "sweep", ("kappa_grid", "lambda_grid", "tau_grid"))
        resolved["sweep"] = {
            k: (c.grid(sw[k], f"sweep.{k}", 0.0) if k in sw else None)
            for k in ("kappa_grid", "lambda_grid", "tau_grid")
        }

    if "trajectories" in raw:
        tr = c.obj(raw["trajectories"], "trajectories", tuple(TRAJECTORY_DEFAULTS))
        resolved["trajectories"] = {
            "M": c.integer(tr.get("M", TRAJECTORY_DEFAULTS["M"]), "trajectories.M", 100),
            "base_seed": c.integer(
                tr.get("base_seed", TRAJECTORY_DEFAULTS["base_seed"]), "trajectories.base_seed", 0
            ),
        }

    out = c.obj(raw.get("output", {}), "output", tuple(OUTPUT_DEFAULTS))
    fmt = out.get("format", OUTPUT_DEFAULTS["format"])
    if fmt not in ("csv", "json"):
        c.fail("output.format", f"must be 'csv' or 'json', got {fmt!r}")
    opath = out.get("path", OUTPUT_DEFAULTS["path"])
    if not isinstance(opath, str) or not opath:
        c.fail("output.path", "expected a non-empty string")
    resolved["output"] = {"format": fmt, "path": opath}

    if "target" in raw:
        tg = c.obj(raw["target"], "target", ("kind", "n_bar", "q", "branch", "kappa_ratio", "tau"))
        kind = tg.get("kind")
        if kind not in TARGET_KINDS:
            c.fail("target.kind", f"must be one of {', '.join(TARGET_KINDS)}, got {kind!r}")
        t = {"kind": kind}
        if kind == "complement_range":
            if "q" not in tg:
                c.fail("target.q", "value is required for kind 'complement_range'")
            t["q"] = c.integer(tg["q"], "target.q", 1)
        else:
            if "n_bar" not in tg:
                c.fail("target.n_bar", f"value is required for kind '{kind}'")
            t["n_bar"] = c.integer(tg["n_bar"], "target.n_bar", 0)
            if t["n_bar"] >= sdim:
                c.fail("target.n_bar", f"must be < Slave dimension {sdim}")
        t["branch"] = c.integer(tg.get("branch", 0), "target.branch", 0)
        t["kappa_ratio"] = c.number(tg.get("kappa_ratio", 100.0), "target.kappa_ratio", 0.0, True)
        t["tau"] = c.number(tg["tau"], "target.tau", 0.0, True) if "tau" in tg else None
        resolved["target"] = t

    return ExperimentConfig(resolved, model)


_FOCK = re.compile(r"^fock:(\d+)$")
_UNIFORM = re.compile(r"^uniform:(\d+)\.\.(\d+)$")


def parse_psi0(spec, dim: int, warn: bool = True) -> StateVector:
    """
    Slave initial state from ``"fock:n"``, ``"uniform:a..b"`` (inclusive) or
    an explicit amplitude list (entries are numbers or ``[re, im]`` pairs).
    """
    amps = np.zeros(dim, dtype=complex)
    if isinstance(spec, str):
        m = _FOCK.match(spec)
        u = _UNIFORM.match(spec)
        if m:
            n = int(m.group(1))
            if n >= dim:
                raise ValueError(f"Fock index {n} out of range for Slave dimension {dim}")
            amps[n] = 1.0
            return StateVector(amps)
        if u:
            a, b = int(u.group(1)), int(u.group(2))
            if a > b or b >= dim:
                raise ValueError(f"uniform range {a}..{b} invalid for Slave dimension {dim}")
            amps[a : b + 1] = 1.0
            return StateVector.from_amplitudes(amps)
        raise ValueError(f"unrecognised psi0 spec {spec!r}")
    if not isinstance(spec, list) or len(spec) != dim:
        raise ValueError(f"psi0 amplitude list must have {dim} entries")
    for i, v in enumerate(spec):
        if isinstance(v, list) and len(v) == 2 and all(_is_num(x) for x in v):
            amps[i] = complex(v[0], v[1])
        elif _is_num(v):
            amps[i] = v
        else:
            raise ValueError(f"psi0 entry {i} is not a number or [re, im] pair")
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise ValueError("psi0 amplitudes are all zero")
    if warn and abs(norm - 1.0) > 1e-12:
        warnings.warn(f"psi0 has norm {norm:.6g}; normalizing", stacklevel=2)
    return StateVector.from_amplitudes(amps)


def _is_num(v) -> bool:
    return not isinstance(v, bool) and isinstance(v, (int, float)) and math.isfinite(v)


def dump_config(resolved: dict) -> str:
    return json.dumps(resolved, sort_keys=True, indent=2)
