"""Command-line interface: reproducible runs, certificates and CSV output.

Exit codes: 0 success / condition holds, 1 witness found or bound missed,
2 usage or configuration error, 3 certification hypotheses unmet,
4 Newton failure during a simulation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys as _sys
import time
from pathlib import Path

import numpy as np

from . import __version__, balance, experiments, kernels, mobility, model
from .model import ConfigError
from .solver import NewtonError, SolverConfig, simulate

EXIT_OK = 0
EXIT_WITNESS = 1
EXIT_USAGE = 2
EXIT_HYPOTHESES = 3
EXIT_SOLVER = 4

DIAGNOSTICS_SCHEMA = "# crossdiff-csv diagnostics v1"
TRAJECTORY_SCHEMA = "# crossdiff-csv trajectory v1"
SWEEP_SCHEMA = "# crossdiff-csv sweep v1"


def _fmt(x) -> str:
    """Shortest round-trip decimal form; keeps CSV bodies byte-reproducible."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_manifest(outdir: Path, args, config_path=None, seed=None, extra=None):
    manifest = {
        "command": " ".join(_sys.argv) if _sys.argv else "",
        "subcommand": args.command,
        "seed": seed,
        "out_dir": str(outdir),
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "versions": {
            "crossdiff": __version__,
            "numpy": np.__version__,
            "python": _sys.version.split()[0],
            "kernel_backend": kernels.BACKEND,
        },
    }
    if config_path is not None:
        text = Path(config_path).read_text()
        manifest["config_path"] = str(config_path)
        manifest["config_sha256"] = hashlib.sha256(text.encode()).hexdigest()
    if extra:
        manifest.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _outdir(args, run_cfg=None) -> Path:
    """Output directory: --out, then the config, then $CROSSDIFF_OUT, then ./out."""
    out = args.out or (run_cfg.out if run_cfg and run_cfg.out != "out" else None) \
        or os.environ.get("CROSSDIFF_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args):
    cfg = model.parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def write_diagnostics_csv(path: Path, series) -> None:
    n = series.setup.system.n
    cols = ["step", "t", "H", "production"] + [f"mass_{i + 1}" for i in range(n)]
    cols += ["min_u", "max_u", "newton_iters", "residual"]
    lines = [DIAGNOSTICS_SCHEMA, ",".join(cols)]
    for k in range(series.t.size):
        row = [str(k), _fmt(series.t[k]), _fmt(series.entropy[k])]
        row.append(_fmt(series.production[k - 1]) if k > 0 else _fmt(0.0))
        row += [_fmt(series.mass[k, i]) for i in range(n)]
        row += [_fmt(series.min_u[k]), _fmt(series.max_u[k])]
        row.append(str(int(series.newton_iters[k - 1])) if k > 0 else "0")
        row.append(_fmt(series.residuals[k - 1]) if k > 0 else _fmt(0.0))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_trajectory_csv(path: Path, series) -> None:
    if series.states is None:
        raise ValueError("trajectory CSV needs store_trajectory=True")
    n = series.setup.system.n
    cols = ["t", "x"] + [f"u_{i + 1}" for i in range(n)]
    lines = [TRAJECTORY_SCHEMA, ",".join(cols)]
    for state in series.states:
        for j, xj in enumerate(state.x):
            row = [_fmt(state.t), _fmt(xj)]
            row += [_fmt(state.u[j, i]) for i in range(n)]
            lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _certificate_text(cert) -> str:
    lines = ["detailed balance certificate",
             f"  pairwise support condition: {'holds' if cert.a1_holds else 'FAILS'}",
             f"  cycle product condition:    {'holds' if cert.a2_holds else 'FAILS'}"]
    if cert.holds:
        pi = cert.measure.pi
        lines.append(f"  classes (1-based): "
                     f"{[tuple(i + 1 for i in cls) for cls in cert.measure.classes]}")
        lines.append(f"  invariant measure pi: {np.array2string(pi, precision=12)}")
    elif isinstance(cert.witness, balance.PairWitness):
        wtn = cert.witness
        lines.append(f"  witness pair: a[{wtn.i + 1},{wtn.j + 1}] = {wtn.forward} but "
                     f"a[{wtn.j + 1},{wtn.i + 1}] = {wtn.backward}")
    elif isinstance(cert.witness, balance.CycleWitness):
        wtn = cert.witness
        cyc = "->".join(str(i + 1) for i in wtn.nodes + (wtn.nodes[0],))
        lines.append(f"  witness cycle {cyc}: forward product {wtn.forward}, "
                     f"backward product {wtn.backward}")
    return "\n".join(lines)


def _certificate_json(cert) -> dict:
    data = {"a1_holds": cert.a1_holds, "a2_holds": cert.a2_holds,
            "detailed_balance": cert.holds}
    if cert.holds:
        data["pi"] = cert.measure.pi.tolist()
        data["classes"] = [list(cls) for cls in cert.measure.classes]
    elif cert.witness is not None:
        wtn = cert.witness
        if isinstance(wtn, balance.PairWitness):
            data["witness"] = {"kind": "pair", "i": wtn.i, "j": wtn.j,
                               "forward": wtn.forward, "backward": wtn.backward}
        else:
            data["witness"] = {"kind": "cycle", "nodes": list(wtn.nodes),
                               "forward": wtn.forward, "backward": wtn.backward}
    return data


def cmd_check_balance(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    cert = balance.check_conditions(cfg.system.a)
    text = _certificate_text(cert)
    print(text)
    outdir = _outdir(args, cfg)
    (outdir / "balance_certificate.txt").write_text(text + "\n")
    (outdir / "balance_certificate.json").write_text(
        json.dumps(_certificate_json(cert), indent=2) + "\n")
    _write_manifest(outdir, args, config_path=args.config, seed=cfg.seed)
    return EXIT_OK if cert.holds else EXIT_WITNESS


def cmd_certify(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    pi, _ = balance.working_weights(cfg.system.a)
    try:
        report = mobility.certify_lower_bound(cfg.system, pi, args.lemma,
                                              samples=args.samples, seed=cfg.seed,
                                              jobs=args.jobs)
    except ValueError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    print(f"bound {report.bound}: {report.verdict}")
    if report.hypotheses_met:
        print(f"  samples: {report.samples}, min slack: {report.min_slack:.3e}, "
              f"tight fraction: {report.tight_fraction:.3g}")
        for wtn in report.witnesses[:3]:
            print(f"  witness u={wtn.u}, z={wtn.z}, lhs={wtn.lhs:.6g}, rhs={wtn.rhs:.6g}")
    else:
        print(f"  {report.reason}")
    outdir = _outdir(args, cfg)
    payload = {
        "bound": report.bound, "verdict": report.verdict, "reason": report.reason,
        "samples": report.samples, "seed": report.seed,
        "min_slack": None if np.isnan(report.min_slack) else report.min_slack,
        "tight_fraction": report.tight_fraction,
        "witnesses": [{"u": wtn.u.tolist(), "z": wtn.z.tolist(),
                       "lhs": wtn.lhs, "rhs": wtn.rhs} for wtn in report.witnesses],
    }
    (outdir / "certification.json").write_text(json.dumps(payload, indent=2) + "\n")
    _write_manifest(outdir, args, config_path=args.config, seed=cfg.seed,
                    extra={"bound": args.lemma, "samples": args.samples})
    if not report.hypotheses_met:
        return EXIT_HYPOTHESES
    return EXIT_OK if report.passed else EXIT_WITNESS


def cmd_simulate(args) -> int:
    try:
        cfg = _load(args)
        if cfg.domain is None or cfg.initial is None:
            raise ConfigError("simulate needs [domain] and [initial] sections")
    except ConfigError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    pi, cert = balance.working_weights(cfg.system.a)
    u0 = cfg.initial
    if cfg.domain.eps > 0.0:
        u0 = model.cutoff_initial_data(u0, cfg.domain.eps)
    outdir = _outdir(args, cfg)
    try:
        sc = SolverConfig(system=cfg.system, domain=cfg.domain, pi=pi,
                          store_trajectory=True)
        series = simulate(sc, u0)
    except ValueError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except NewtonError as exc:
        print(f"solver failure: {exc}", file=_sys.stderr)
        dump = {"error": str(exc), "residual_norm": exc.residual_norm}
        if exc.w is not None:
            dump["w"] = np.asarray(exc.w).tolist()
        (outdir / "newton_failure.json").write_text(json.dumps(dump, indent=2) + "\n")
        return EXIT_SOLVER
    write_diagnostics_csv(outdir / "diagnostics.csv", series)
    write_trajectory_csv(outdir / "trajectory.csv", series)
    _write_manifest(outdir, args, config_path=args.config, seed=cfg.seed,
                    extra={"detailed_balance": cert.holds,
                           "pi": pi.tolist(), "c_f": series.c_f,
                           "steps": int(series.steps)})
    print(f"completed {series.steps} steps to t = {series.t[-1]:.6g}; "
          f"entropy {series.entropy[0]:.6g} -> {series.entropy[-1]:.6g}; "
          f"min slack {series.min_entropy_slack:.3e}")
    return EXIT_OK


def cmd_counterexample(args) -> int:
    variant = {"1": "vanishing_a0", "2": "positive_a0"}[args.variant]
    try:
        c = experiments.CounterexampleConfig(variant=variant, eps_profile=args.eps,
                                             a20=args.a20, a30=args.a30)
    except ValueError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    cells = args.cells or experiments.counterexample_grid_cells(c)
    x = (np.arange(cells) + 0.5) / cells
    sysm = experiments.counterexample_system(c)
    u0 = experiments.counterexample_initial_data(c, x)
    pi = np.ones(3)
    produced = experiments.entropy_production(sysm, pi, u0.sample(x), 1.0 / cells)
    bound = experiments.counterexample_production_bound(c)
    reference = experiments.counterexample_production_reference(c)
    met = produced >= bound
    print(f"variant {args.variant} ({variant}), eps_profile = {c.eps_profile}, "
          f"cells = {cells}")
    print(f"  dH/dt[u0] = {produced:.6g}  (closed form {reference:.6g})")
    print(f"  proved lower bound = {bound:.6g}  ->  {'met' if met else 'NOT met'}")
    outdir = _outdir(args)
    payload = {"variant": variant, "eps_profile": c.eps_profile, "a20": c.a20,
               "a30": c.a30, "cells": cells, "production": produced,
               "reference": reference, "bound": bound, "bound_met": bool(met)}
    (outdir / "counterexample.json").write_text(json.dumps(payload, indent=2) + "\n")
    if args.steps:
        dom = model.DomainConfig(cells=cells, T=args.steps * args.tau, tau=args.tau,
                                 eps=args.sim_eps)
        try:
            series = experiments.counterexample_series(c, dom)
        except NewtonError as exc:
            print(f"solver failure in short simulation: {exc}", file=_sys.stderr)
            return EXIT_SOLVER
        write_diagnostics_csv(outdir / "diagnostics.csv", series)
        print(f"  short run: entropy {series.entropy[0]:.6g} -> "
              f"{series.entropy[-1]:.6g} over {series.steps} steps")
    _write_manifest(outdir, args, seed=0, extra=payload)
    return EXIT_OK if met else EXIT_WITNESS


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args)
        values = [float(tok) for tok in args.values.split(",")]
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    try:
        rows = experiments.regime_sweep(cfg.system, args.knob, values,
                                        dom=cfg.domain, u0=cfg.initial,
                                        jobs=args.jobs)
    except ValueError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    cols = ["knob", "value", "detailed_balance", "eta0", "eta1", "eta2", "s0",
            "applicable", "dhdt0", "min_slack", "entropy_increased", "completed"]
    lines = [SWEEP_SCHEMA, ",".join(cols)]
    for row in rows:
        lines.append(",".join([
            row.knob, _fmt(row.value), _fmt(row.detailed_balance),
            _fmt(row.eta0), _fmt(row.eta1), _fmt(row.eta2),
            _fmt(row.s0) if row.s0 is not None else "",
            "|".join(row.applicable),
            _fmt(row.dhdt0), _fmt(row.min_slack),
            _fmt(row.entropy_increased), _fmt(row.completed),
        ]))
    outdir = _outdir(args, cfg)
    (outdir / "sweep.csv").write_text("\n".join(lines) + "\n")
    for line in lines[1:]:
        print(line)
    _write_manifest(outdir, args, config_path=args.config, seed=cfg.seed,
                    extra={"knob": args.knob, "values": values})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossdiff",
        description="entropy-structure analysis and entropy-stable simulation "
                    "of n-species cross-diffusion systems")
    sub = parser.add_subparsers(dest="command", required=True)

    pb = sub.add_parser("check-balance", help="detailed-balance certificate")
    pb.add_argument("config")
    pb.add_argument("--out", default=None)
    pb.add_argument("--seed", type=int, default=None)
    pb.set_defaults(func=cmd_check_balance)

    pc = sub.add_parser("certify", help="randomized quadratic-form bound check")
    pc.add_argument("config")
    pc.add_argument("--lemma", required=True,
                    help=f"bound identifier, one of {', '.join(mobility.BOUND_IDS)}")
    pc.add_argument("--samples", type=int, default=10_000)
    pc.add_argument("--seed", type=int, default=None)
    pc.add_argument("--jobs", type=int, default=1)
    pc.add_argument("--out", default=None)
    pc.set_defaults(func=cmd_certify)

    ps = sub.add_parser("simulate", help="run the implicit entropy-variable scheme")
    ps.add_argument("config")
    ps.add_argument("--out", default=None)
    ps.add_argument("--seed", type=int, default=None)
    ps.set_defaults(func=cmd_simulate)

    px = sub.add_parser("counterexample", help="entropy-increase scenarios")
    px.add_argument("--variant", choices=("1", "2"), required=True)
    px.add_argument("--eps", type=float, required=True,
                    help="ramp width of the initial data, in (0, 0.5)")
    px.add_argument("--a20", type=float, default=1.0)
    px.add_argument("--a30", type=float, default=1.0)
    px.add_argument("--cells", type=int, default=None)
    px.add_argument("--steps", type=int, default=0,
                    help="also run this many implicit steps")
    px.add_argument("--tau", type=float, default=1e-4)
    px.add_argument("--sim-eps", type=float, default=1e-6)
    px.add_argument("--out", default="out")
    px.set_defaults(func=cmd_counterexample)

    pw = sub.add_parser("sweep", help="regime sweep over one knob")
    pw.add_argument("config")
    pw.add_argument("--knob", required=True,
                    help="s, sigma, a[i,j], a0[i], b[i,j], b0[i], or eps_profile")
    pw.add_argument("--values", required=True, help="comma-separated values")
    pw.add_argument("--jobs", type=int, default=1)
    pw.add_argument("--out", default=None)
    pw.add_argument("--seed", type=int, default=None)
    pw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:  # piping into head etc.
        return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
