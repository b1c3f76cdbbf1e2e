"""Command-line entry point: kernel / simulate / compare / verify."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ScenarioConfig, load_config, serialize_config


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.out:
        cfg.out_dir = args.out
    if args.svg:
        cfg.svg = True
    cfg.validate()
    return cfg


def _cmd_kernel(args) -> int:
    from .scenarios import run_kernel
    cfg = _load(args)
    report = run_kernel(cfg, cfg.out_dir)
    print(f"kernel solved on n={report['n']} grid up to t={report['t_end']:.3f}")
    print(f"max relative error vs series: {report['sup_rel_error']:.3e}")
    print(f"inverse fixed-point residual: {report['inverse_fixed_point_residual']:.3e}")
    return 0


def _cmd_simulate(args) -> int:
    from .scenarios import run_simulation
    cfg = _load(args)
    if cfg.scenario == "sweep":
        return _cmd_compare(args)
    report = run_simulation(cfg, cfg.out_dir)
    print(f"scenario {report['scenario']} to t={report['t_end']:.3f}: "
          f"||p|| {report['l2_initial']:.4e} -> {report['l2_final']:.4e} "
          f"(ratio {report['l2_ratio']:.3f}), max|u| = {report['max_abs_u']:.3f}")
    return 0


def _cmd_compare(args) -> int:
    from .scenarios import run_compare
    cfg = _load(args)
    results = run_compare(cfg, cfg.out_dir)
    for name in ("closed", "baseline"):
        r = results[name]
        print(f"{name}: final/initial = {r['l2_ratio']:.3f}, max|u| = {r['max_abs_u']:.2f}")
    for ic, r in results["sweep"].items():
        print(f"sweep {ic}: final/initial = {r['l2_ratio']:.3f}")
    return 0


def _cmd_verify(args) -> int:
    from .verification import run_all
    cfg = _load(args)
    results = run_all(cfg, echo=True)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = [
        {"name": r.name, "passed": bool(r.passed), "value": float(r.value),
         "detail": r.detail, "runtime_s": round(r.runtime, 3)}
        for r in results
    ]
    (out / "verification.json").write_text(json.dumps(payload, indent=2))
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed; "
          f"report written to {out / 'verification.json'}")
    return 1 if n_fail else 0


def _cmd_print_config(args) -> int:
    print(serialize_config(ScenarioConfig()), end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ptstring",
        description="Prescribed-time boundary control of a flexible string: "
                    "kernel synthesis, simulation, and verification.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("kernel", _cmd_kernel, "solve the gain kernel and export fields"),
        ("simulate", _cmd_simulate, "run one scenario and export trajectories"),
        ("compare", _cmd_compare, "closed loop vs baseline plus an IC sweep"),
        ("verify", _cmd_verify, "run the acceptance checks and emit a report"),
        ("print-config", _cmd_print_config, "print the default configuration"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="path to a key-value config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--svg", action="store_true", help="also render SVG plots")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
