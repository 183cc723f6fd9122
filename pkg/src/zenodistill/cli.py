"""
Command-line entry point.

    zenodistill {distill,channels,steer,sweep,trajectories} --config cfg.json
                [--out DIR] [--seed INT] [--format csv|json]

Every output file starts with ``#`` comment lines holding the resolved
configuration. Floats are written in scientific notation with 17
significant digits so that reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_psi0
from .distillation import (
    DistillationExtinguished,
    apply_conditional,
    asymptotic_projector,
    channel_report,
    conditional_propagator,
    spectral_decompose,
)
from .hilbert import NumericalError
from .models import ChainParams, TrappedIonParams, build_chain, build_trapped_ion, lamb_dicke_f
from .steering import (
    SteeringError,
    design_qnd_tau,
    find_eta_zero,
    fine_tuning_check,
    hierarchy_sweep,
    predict_target_projector,
    zeno_sweep,
)
from .trajectory import estimate_success_rate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXTINGUISHED = 3
EXIT_NUMERICAL = 4


def fmt_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.16e}"
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else float(f"{v:.16e}")
    return v


def write_table(
    out_dir: Path,
    stem: str,
    columns: Sequence[str],
    rows: Sequence[Sequence],
    config: ExperimentConfig,
    command: str,
    fmt: str,
    extra_header: Sequence[str] = (),
) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = dump_config(config.resolved)
    if fmt == "json":
        path = out_dir / f"{stem}.json"
        doc = {
            "command": command,
            "config": config.resolved,
            "notes": list(extra_header),
            "columns": list(columns),
            "rows": [[_json_value(v) for v in row] for row in rows],
        }
        with open(path, "w", newline="\n") as fh:
            fh.write(json.dumps(doc, indent=1))
            fh.write("\n")
        return path
    path = out_dir / f"{stem}.csv"
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# zenodistill {__version__} {command}\n")
        for line in resolved.splitlines():
            fh.write(f"# {line}\n")
        for note in extra_header:
            fh.write(f"# {note}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt_value(v) for v in row) + "\n")
    return path


def build_model(cfg: ExperimentConfig):
    if isinstance(cfg.model, ChainParams):
        return build_chain(cfg.model)
    return build_trapped_ion(cfg.model)


def _propagator(cfg: ExperimentConfig):
    tau = cfg.require_key("protocol", "tau")
    mi = cfg.require("protocol")["master_index"]
    return conditional_propagator(build_model(cfg), mi, tau)


def cmd_distill(cfg: ExperimentConfig, out_dir: Path, fmt: str) -> list[Path]:
    steps = cfg.require_key("protocol", "N")
    v = _propagator(cfg)
    psi0 = cfg.psi0()
    analysis = cfg.resolved["analysis"]
    run = apply_conditional(v, psi0, steps)

    asym = asymptotic_projector(spectral_decompose(v), analysis["degeneracy_tol"])
    chi = asym.projector @ psi0.amplitudes
    chi_norm = np.linalg.norm(chi)
    chi = chi / chi_norm if chi_norm > 0 else chi

    dim = psi0.dim
    columns = ["step", "step_success_prob", "cumulative_success", "fidelity_asymptotic"]
    columns += [f"fidelity_n{n}" for n in range(dim)]

    def row(step, prob, cum, state):
        amps = state.amplitudes
        pops = np.abs(amps) ** 2
        return [step, prob, cum, float(abs(np.vdot(chi, amps)) ** 2), *pops]

    rows = [row(0, 1.0, 1.0, psi0)]
    cum = 1.0
    for i, (p, s) in enumerate(zip(run.step_success_probs, run.conditioned_states), start=1):
        cum *= p
        rows.append(row(i, p, cum, s))
    notes = [
        f"asymptotic subspace: dominant |gamma| = {fmt_value(asym.dominant_modulus)}, "
        f"rank {asym.rank}, single_state = {fmt_value(asym.is_single_state)}"
    ]
    paths = [write_table(out_dir, "distill_steps", columns, rows, cfg, "distill", fmt, notes)]

    final = run.final_state.amplitudes
    frows = [[n, a.real, a.imag, abs(a) ** 2] for n, a in enumerate(final)]
    paths.append(
        write_table(out_dir, "distill_final_state", ["n", "re", "im", "population"], frows, cfg,
                    "distill", fmt)
    )
    return paths


def _channel_couplings(model, n: int) -> tuple[float, float]:
    if isinstance(model, TrappedIonParams):
        return abs(model.kappa_n(n)), abs(model.omega_n(n))
    c = model.couplings
    return (abs(c[1]) if len(c) > 1 else 0.0), abs(c[0])


def _channel_rows(model, report, targets=None):
    rows = []
    for ch in report:
        kappa_n, omega_n = _channel_couplings(model, ch.label)
        row = [ch.label, ch.survival_probability, ch.phase, ch.classification, kappa_n, omega_n]
        if targets is not None:
            row.append(ch.label in targets)
        rows.append(row)
    return rows


CHANNEL_COLUMNS = ["n", "survival_prob", "phase", "classification", "kappa_n", "omega_n"]


def cmd_channels(cfg: ExperimentConfig, out_dir: Path, fmt: str) -> list[Path]:
    v = _propagator(cfg)
    report = channel_report(spectral_decompose(v), cfg.resolved["analysis"]["tol_closed"])
    rows = _channel_rows(cfg.model, report)
    return [write_table(out_dir, "channels", CHANNEL_COLUMNS, rows, cfg, "channels", fmt)]


def _steer_tau_range(params: TrappedIonParams, q: int, rel_tol: float) -> float:
    tau = 1.0 / params.omega
    for k in range(1000):
        cand = (1.0 + 0.1 * k) / params.omega
        if fine_tuning_check(cand, params.omega, params.eta1, q, rel_tol).ok:
            return cand
    return tau


def cmd_steer(cfg: ExperimentConfig, out_dir: Path, fmt: str) -> list[Path]:
    target = cfg.require("target")
    if not isinstance(cfg.model, TrappedIonParams):
        raise ConfigError("model", "steering requires a 'trapped_ion' model")
    base = cfg.model
    analysis = cfg.resolved["analysis"]
    kind = target["kind"]
    if base.omega <= 0:
        raise ConfigError("model.trapped_ion.omega", "steering requires omega > 0")

    if kind == "single":
        n_bar = target["n_bar"]
        params = base.replace(kappa=0.0, p=0)
        tau = target["tau"] or design_qnd_tau(n_bar, params.omega, params.eta1)
    elif kind == "complement_range":
        q = target["q"]
        params = base.replace(p=0, q=q, kappa=target["kappa_ratio"] * base.omega)
        if params.n_max < q + 2:
            raise ConfigError("target.q", f"n_max = {params.n_max} too small for q = {q}")
        tau = target["tau"] or _steer_tau_range(params, q, analysis["rel_tol"])
    else:
        n_bar = target["n_bar"]
        eta2 = find_eta_zero(n_bar, target["branch"])
        params = base.replace(p=0, q=0, eta2=eta2, kappa=target["kappa_ratio"] * base.omega)
        rate = abs(params.omega * lamb_dicke_f(0, n_bar, params.eta1))
        if rate < 1e-12:
            raise SteeringError(
                f"dark target: f_0({n_bar}, eta1) = 0, channel {n_bar} cannot be opened"
            )
        tau = target["tau"] or np.pi / (2.0 * rate)

    plan = predict_target_projector(params, tau, analysis["tol_closed"], analysis["rel_tol"])

    dim = params.slave_dim
    proto = cfg.resolved.get("protocol") or {}
    new_cfg = copy.deepcopy(cfg.resolved)
    new_cfg.pop("target", None)
    new_cfg["model"] = {
        "trapped_ion": {
            "omega": params.omega, "kappa": params.kappa, "p": params.p, "q": params.q,
            "eta1": params.eta1, "eta2": params.eta2, "n_max": params.n_max,
            "omega_phase": params.omega_phase, "kappa_phase": params.kappa_phase,
        }
    }
    new_cfg["protocol"] = {
        "master_index": 0,
        "tau": float(plan.tau),
        "N": proto.get("N") or 50,
        "psi0": proto.get("psi0") or f"uniform:0..{min(5, dim - 1)}",
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_path = out_dir / "steer_config.json"
    with open(cfg_path, "w", newline="\n") as fh:
        fh.write(json.dumps(new_cfg, sort_keys=True, indent=2))
        fh.write("\n")

    notes = [
        f"target kind: {kind}",
        f"designed tau = {fmt_value(plan.tau)}",
        f"designed kappa = {fmt_value(params.kappa)}",
        f"designed eta2 = {fmt_value(params.eta2)}",
        "target_indices = " + " ".join(str(n) for n in plan.target_indices),
    ] + [f"warning: {w}" for w in plan.warnings]
    rows = _channel_rows(params, plan.predicted_report, set(plan.target_indices))
    columns = CHANNEL_COLUMNS + ["target"]
    path = write_table(out_dir, "steer_plan", columns, rows, cfg, "steer", fmt, notes)
    return [path, cfg_path]


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path, fmt: str) -> list[Path]:
    sweep = cfg.require("sweep")
    kappa_grid = sweep.get("kappa_grid")
    if kappa_grid is None:
        raise ConfigError("sweep.kappa_grid", "value is required for this command")
    model = cfg.model
    if isinstance(model, ChainParams) and sweep.get("lambda_grid") is not None:
        taus = sweep.get("tau_grid")
        if taus is None:
            taus = [cfg.require_key("protocol", "tau")]
        if len(model.couplings) < 3:
            raise ConfigError("model.chain.couplings", "hierarchy sweep needs at least 3 couplings")
        rows = hierarchy_sweep(model, kappa_grid, sweep["lambda_grid"], taus)
        columns = ["kappa", "lambda", "tau", "survival", "transfer"]
    else:
        tau = cfg.require_key("protocol", "tau")
        if isinstance(model, ChainParams) and len(model.couplings) < 2:
            raise ConfigError("model.chain.couplings", "Zeno sweep needs at least 2 couplings")
        rows = zeno_sweep(model, kappa_grid, tau)
        columns = ["kappa", "n", "survival_prob", "lower_bound"]
    return [write_table(out_dir, "sweep", columns, [list(r) for r in rows], cfg, "sweep", fmt)]


def cmd_trajectories(cfg: ExperimentConfig, out_dir: Path, fmt: str) -> list[Path]:
    tr = cfg.require("trajectories")
    steps = cfg.require_key("protocol", "N")
    tau = cfg.require_key("protocol", "tau")
    mi = cfg.require("protocol")["master_index"]
    est = estimate_success_rate(
        build_model(cfg), mi, cfg.psi0(), tau, steps, tr["M"], tr["base_seed"]
    )
    columns = ["steps", "num_trajectories", "successes", "empirical_rate", "analytic_rate",
               "z_score", "base_seed"]
    row = [steps, est.num_trajectories, est.successes, est.empirical_rate, est.analytic_rate,
           est.z_score, est.base_seed]
    paths = [write_table(out_dir, "trajectories", columns, [row], cfg, "trajectories", fmt)]
    orows = [
        [i, o.seed, o.success, o.steps_completed, o.outcomes[-1]]
        for i, o in enumerate(est.outcomes)
    ]
    paths.append(
        write_table(out_dir, "trajectory_outcomes",
                    ["index", "seed", "success", "steps_completed", "last_outcome"],
                    orows, cfg, "trajectories", fmt)
    )
    return paths


COMMANDS = {
    "distill": cmd_distill,
    "channels": cmd_channels,
    "steer": cmd_steer,
    "sweep": cmd_sweep,
    "trajectories": cmd_trajectories,
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="zenodistill",
        description="Measurement-conditioned distillation steered by Zeno couplings",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", help="output directory (overrides output.path)")
    ap.add_argument("--seed", type=int, help="overrides trajectories.base_seed")
    ap.add_argument("--format", choices=("csv", "json"), help="overrides output.format")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.section("protocol"):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                parse_psi0(cfg.resolved["protocol"]["psi0"], cfg.psi0().dim)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
        if args.seed is not None:
            cfg.resolved.setdefault("trajectories", {"M": 10000, "base_seed": 0})
            cfg.resolved["trajectories"]["base_seed"] = args.seed
        if args.format:
            cfg.resolved["output"]["format"] = args.format
        if args.out:
            cfg.resolved["output"]["path"] = args.out
        out_dir = Path(cfg.resolved["output"]["path"])
        paths = COMMANDS[args.command](cfg, out_dir, cfg.resolved["output"]["format"])
    except DistillationExtinguished as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXTINGUISHED
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        # ConfigError, SteeringError and parameter validation all land here
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
