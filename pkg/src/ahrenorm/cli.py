"""Command line entry point: ahrenorm {mass, entropy, yamabe, flow, verify}."""

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import conformal as C
from . import entropy as EN
from . import flow as FL
from . import mass as MS
from . import metric as M
from .report import (EXIT_ERROR, EXIT_FLAGGED, EXIT_OK, ConfigError, RunConfig, RunRecord, Timer, clean,
                     format_table, output_dir, write_csv)
from .suites import SUITES


def _stem(cmd, cfg):
    name = cfg.metric.get("name", "metric")
    return f"{cmd}-{name}" if cmd != "verify" else f"verify-{cfg.suite}"


def _record(cmd, cfg):
    return RunRecord(cmd, clean(cfg.to_dict()), version=__version__)


def cmd_mass(cfg, out=None):
    rec = _record("mass", cfg)
    g = cfg.build_metric()
    ref = cfg.build_reference(g)
    rep = MS.volume_renormalized_mass(g, ref)
    rec.outputs = {"mass": {"m_vr": rep.m_vr, "err_estimate": rep.err_estimate, "s_action": rep.s_action,
                            "scal_defect_integral": rep.scal_defect_integral, "beta": rep.beta,
                            "model": rep.extrapolation_model, "defect_rate": rep.defect_rate, "flags": rep.flags}}
    rec.verdicts = {"divergent": rep.divergent}
    if rep.divergent:
        rec.exit_code = EXIT_FLAGGED
    if out:
        path = os.path.join(out, _stem("mass", cfg) + ".csv")
        rep.write_csv(path)
        rec.files.append(path)
    return rec


def cmd_entropy(cfg, out=None):
    rec = _record("entropy", cfg)
    g = cfg.build_metric()
    ref = cfg.build_reference(g)
    sol = EN.solve_entropy_minimizer(g, ref, nodes=int(cfg.grid["nodes"]), r_max=min(float(cfg.grid["R_max"]), 30.0),
                                     tol=cfg.tolerances["newton"])
    rep = sol.mass_report
    rec.outputs = {"entropy": {"mu": sol.mu, "residual": sol.residual_norm, "bound_lo": sol.bound_lo,
                               "bound_hi": sol.bound_hi, "uniqueness_gap": sol.uniqueness_gap,
                               "decay_rate": sol.decay_fit.rate, "s_action": sol.s_action_used, "flags": sol.flags},
                   "mass": {"m_vr": rep.m_vr, "err_estimate": rep.err_estimate}}
    tol = cfg.tolerances["mu"] * 10 + 3 * rep.err_estimate
    rec.verdicts = {"mu_plus_mass": sol.mu + rep.m_vr, "sandwich": bool(-rep.m_vr - tol <= sol.mu <= rep.s_action + tol)}
    if sol.flags or rep.divergent:
        rec.exit_code = EXIT_FLAGGED
    if out:
        path = os.path.join(out, _stem("entropy", cfg) + ".csv")
        write_csv(path, {"r": sol.grid.r, "f": sol.f_nodes, "u": sol.u_nodes})
        rec.files.append(path)
    return rec


def cmd_yamabe(cfg, out=None):
    rec = _record("yamabe", cfg)
    g = cfg.build_metric()
    ref = cfg.build_reference(g)
    sol = C.yamabe_normalize(g, ref, nodes=int(cfg.grid["nodes"]), r_max=min(float(cfg.grid["R_max"]), 30.0),
                             tol=cfg.tolerances["newton"])
    rec.outputs = {"yamabe": {"residual": sol.residual_norm, "truncation": sol.truncation,
                              "decay_rate": sol.decay_fit.rate, "w_max": float(np.max(np.abs(sol.w_nodes)))}}
    h = sol.normalized_metric()
    rr = np.linspace(0.5, 0.6 * h.r_model, 200)
    n = g.n
    rec.outputs["yamabe"]["scal_deviation"] = float(np.max(np.abs(M.scalar_curvature(h, rr) + n * (n - 1))))
    if out:
        path = os.path.join(out, _stem("yamabe", cfg) + ".csv")
        write_csv(path, {"r": sol.grid.r, "w": sol.w_nodes, "phi": sol.phi_nodes})
        rec.files.append(path)
    return rec


def cmd_flow(cfg, out=None):
    rec = _record("flow", cfg)
    g = cfg.build_metric()
    ref = cfg.build_reference(g)
    sched = {"dt": 0.01, "t_end": 0.2, "record_every": 0.05, **cfg.schedule}
    method = sched.pop("method", "bdf2")
    nodes = int(sched.pop("nodes", 160))
    try:
        trace = FL.run_flow(g, ref, sched, X=min(float(cfg.grid["R_max"]), 20.0), nodes=nodes, method=method,
                            mu_tol=cfg.tolerances["mu"], drift_tol=cfg.tolerances["drift"])
    except FL.FlowBlowUp as exc:
        rec.exit_code = EXIT_ERROR
        rec.error = str(exc)
        trace = exc.trace
    if trace is not None:
        rec.outputs = {"flow": {"records": trace.records, "flags": trace.flags,
                                "monotone_violations": trace.monotone_violations}}
        if trace.mu_series:
            rec.verdicts = FL.monotonicity_report(trace, cfg.tolerances["mu"])
            if rec.verdicts["verdict"] == "failed" and rec.exit_code == EXIT_OK:
                rec.exit_code = EXIT_FLAGGED
        if trace.flags and rec.exit_code == EXIT_OK:
            rec.exit_code = EXIT_FLAGGED
        if out:
            path = os.path.join(out, _stem("flow", cfg) + ".jsonl")
            trace.write_jsonl(path)
            rec.files.append(path)
            if trace.final is not None:
                path = os.path.join(out, _stem("flow", cfg) + "-final.csv")
                write_csv(path, trace.final.fields_table())
                rec.files.append(path)
    return rec


def cmd_verify(suite, cfg=None, out=None, scale=1.0):
    if suite not in SUITES:
        raise ConfigError(f"suite: unknown suite {suite!r} (choose from {', '.join(SUITES)})")
    cfg = cfg or RunConfig.from_dict({})
    cfg.suite = suite
    rec = _record("verify", cfg)
    rows = SUITES[suite](cfg, scale)
    rec.table = rows
    rec.verdicts = {"all_pass": all(r.passed for r in rows if not r.flagged),
                    "flagged": [r.check for r in rows if r.flagged]}
    if not rec.verdicts["all_pass"]:
        rec.exit_code = EXIT_ERROR
    elif rec.verdicts["flagged"]:
        rec.exit_code = EXIT_FLAGGED
    return rec


COMMANDS = {"mass": cmd_mass, "entropy": cmd_entropy, "yamabe": cmd_yamabe, "flow": cmd_flow}


def _run_one(cmd, cfg_path, out, scale, suite):
    """Run one job; returns (exit code, printable text). Never raises."""
    try:
        cfg = RunConfig.load(cfg_path) if cfg_path else RunConfig.from_dict({})
        if scale != 1.0:
            cfg = cfg.scaled(scale)
        directory = output_dir(out, cfg)
        with Timer() as t:
            if cmd == "verify":
                rec = cmd_verify(suite or cfg.suite, cfg, directory, scale)
            else:
                rec = COMMANDS[cmd](cfg, directory)
        rec.wall_clock = t.elapsed
        path = rec.write(directory, _stem(cmd, cfg))
        lines = []
        if rec.table:
            lines.append(format_table(rec.table))
        if rec.error:
            lines.append(f"error: {rec.error}")
        lines.append(f"{cmd}: exit {rec.exit_code}; record written to {path}")
        if cmd != "verify":
            lines.append(_summary(rec))
        return rec.exit_code, "\n".join(lines)
    except ConfigError as exc:
        return EXIT_ERROR, f"config error: {exc}"
    except (M.MetricError, ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        return EXIT_ERROR, f"{cmd} failed: {type(exc).__name__}: {exc}"


def _summary(rec):
    parts = []
    for block in rec.outputs.values():
        if isinstance(block, dict):
            for k in ("m_vr", "mu", "residual", "err_estimate"):
                if k in block and isinstance(block[k], float):
                    parts.append(f"{k}={block[k]:.12g}")
    return "  ".join(parts)


def build_parser():
    p = argparse.ArgumentParser(prog="ahrenorm", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "verify"):
        s = sub.add_parser(name)
        if name == "verify":
            s.add_argument("suite", nargs="?", default="", help=", ".join(SUITES))
        s.add_argument("--config", action="append", default=[], metavar="PATH",
                       help="JSON run configuration; repeat for a batch")
        s.add_argument("--out", metavar="DIR", help="output directory (default $%s or ./runs)" % "AHRENORM_OUT")
        s.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel jobs for a batch")
        s.add_argument("--tol-scale", type=float, default=1.0, metavar="X", help="multiply all tolerances")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    configs = args.config or [None]
    suite = getattr(args, "suite", "")
    if args.command == "verify" and not suite and not any(configs):
        print("verify: name a suite (" + ", ".join(SUITES) + ")", file=sys.stderr)
        return EXIT_ERROR
    if args.jobs < 1 or not (args.tol_scale > 0 and math.isfinite(args.tol_scale)):
        print("--jobs must be >= 1 and --tol-scale positive", file=sys.stderr)
        return EXIT_ERROR
    jobs = [(args.command, c, args.out, args.tol_scale, suite) for c in configs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    for code, text in results:
        print(text, file=sys.stdout if code != EXIT_ERROR else sys.stderr)
    codes = [c for c, _ in results]
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_FLAGGED if EXIT_FLAGGED in codes else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
