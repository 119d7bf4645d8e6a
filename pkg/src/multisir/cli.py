"""Command-line entry point: ``multisir analyze|simulate|sweep|verify|plot``.

Exit codes: 0 ok, 2 configuration error, 3 theorem not applicable,
4 verification mismatch, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from multisir import __version__
from multisir.config import ExperimentConfig, load_config
from multisir.errors import ConfigError, DomainTooSmallError, InsufficientDataError, MultiSirError, NumericalError
from multisir.experiments import (
    ScenarioConfig,
    attach_measurements,
    cascade_harness,
    default_sweep_range,
    regime_constants,
    sweep_regimes,
    verify_prediction,
)
from multisir.files import RunManifest, read_snapshot, read_sweep_csv, sweep_csv, sweep_plot_data, write_snapshot
from multisir.metrics import analyze
from multisir.plotting import plot_fronts, plot_profiles, plot_sweep
from multisir.sequence import PropagationOutcome, compute_sequence
from multisir.sim import Trajectory, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INAPPLICABLE = 3
EXIT_MISMATCH = 4
EXIT_NUMERICAL = 5


def _r6(v) -> str:
    return "-" if v is None else f"{v:.6g}"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def tie_warnings(outcome: PropagationOutcome) -> List[str]:
    return [
        f"WARNING: speed tie at step {t.step} between strains "
        f"{', '.join(str(k) for k in t.strains)} (relative tolerance {t.tolerance:g}); "
        "lowest-numbered strain taken, theorem not applicable"
        for t in outcome.ties
    ]


def format_outcome(outcome: PropagationOutcome, cfg: ExperimentConfig) -> str:
    """Human-readable table of the propagation sequences, rounded to 6 digits."""
    lines = []
    warnings = tie_warnings(outcome)
    if warnings:
        bar = "!" * 72
        lines += [bar, *warnings, bar, ""]
    lines.append(f"strains: {cfg.model.n}    S0 = {_r6(cfg.model.s0)}")
    lines.append(f"{'step':>4}  {'strain':>6}  {'speed':>12}  {'plateau':>12}  {'S before':>12}  {'S after':>12}")
    for i, k in enumerate(outcome.indices):
        lines.append(
            f"{i + 1:>4}  {k:>6}  {_r6(outcome.speeds[i]):>12}  {_r6(outcome.values[i]):>12}  "
            f"{_r6(outcome.levels[i]):>12}  {_r6(outcome.levels[i + 1]):>12}"
        )
    lines.append(f"p = {outcome.p}    S_inf = {_r6(outcome.s_infinity)}")
    lines.append("extinct strains: " + (", ".join(map(str, outcome.extinct)) or "none"))
    for c in outcome.hyp_separation:
        lines.append(f"  separation step {c.step} strain {c.strain}: {_r6(c.lhs)} < {_r6(c.rhs)}  "
                     f"{'ok' if c.ok else 'FAILS'}")
    for c in outcome.hyp_subcritical:
        lines.append(f"  subcritical strain {c.strain}: alpha*S_p - mu = {_r6(c.growth)}  "
                     f"{'ok' if c.ok else 'FAILS'}")
    lines.append(f"separation: {'ok' if outcome.separation_ok else 'FAILS'}    "
                 f"subcriticality: {'ok' if outcome.subcritical_ok else 'FAILS'}    "
                 f"ties: {len(outcome.ties)}")
    lines.append(f"theorem applicable: {'yes' if outcome.theorem_applicable else 'NO'}")
    return "\n".join(lines) + "\n"


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigError("--out", "an output directory is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out: Path, manifest: RunManifest, name: str, text: str) -> Path:
    path = out / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    manifest.add_output(name)
    return path


def _manifest(command: str, cfg: ExperimentConfig, args) -> RunManifest:
    inputs = [str(args.config)] if getattr(args, "config", None) else []
    return RunManifest(command=command, config_hash=cfg.hash, version=__version__, inputs=inputs)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    outcome = compute_sequence(cfg.model, cfg.measure.tie_tol)
    for w in tie_warnings(outcome):
        print(w, file=sys.stderr)
    text = outcome.to_json(indent=2, sort_keys=True) + "\n"
    if args.json:
        sys.stdout.write(text)
    else:
        sys.stdout.write(format_outcome(outcome, cfg))
    if args.out:
        out = _out_dir(args)
        manifest = _manifest("analyze", cfg, args)
        _write(out, manifest, "outcome.json", text)
        manifest.finish("ok")
        manifest.write(out / "manifest.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    manifest = _manifest("simulate", cfg, args)
    _write(out, manifest, "config.json", _dump(cfg.to_dict()))
    outcome = compute_sequence(cfg.model, cfg.measure.tie_tol)
    _write(out, manifest, "outcome.json", outcome.to_json(indent=2, sort_keys=True) + "\n")
    traj = Trajectory(model=cfg.model, grid=cfg.sim.grid, config=cfg.sim,
                      bumps=cfg.init.resolved(cfg.sim.grid, cfg.model),
                      dt=cfg.sim.stepping(cfg.model)[0])
    x = cfg.sim.grid.x
    (out / "snapshots").mkdir(exist_ok=True)
    code, reason = EXIT_OK, None
    try:
        for i, snap in enumerate(run(cfg.sim, cfg.model, cfg.init)):
            name = f"snapshots/snapshot_{i:05d}.csv"
            write_snapshot(out / name, x, snap.state, cfg.hash)
            manifest.add_output(name)
            traj.snapshots.append(snap)
    except NumericalError as exc:
        code, reason = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
        traj.aborted = reason
        print(f"simulation aborted: {reason}", file=sys.stderr)

    if traj.snapshots:
        final = traj.final
        manifest.add_output("profiles.svg")
        plot_profiles(x, final.S, final.I, final.R, final.t, out / "profiles.svg")
    if code == EXIT_OK:
        try:
            report = analyze(traj, outcome, cfg.measure)
        except InsufficientDataError as exc:
            code, reason = EXIT_NUMERICAL, f"measurement failed: {exc}"
            print(reason, file=sys.stderr)
        else:
            _write(out, manifest, "report.json", report.to_json() + "\n")
            _write(out, manifest, "comparison.csv", report.comparison_csv())
            if report.tracks:
                manifest.add_output("fronts.svg")
                plot_fronts(list(report.tracks.values()), out / "fronts.svg")
            print(_summary(report))
    manifest.finish("ok" if code == EXIT_OK else "aborted", reason)
    manifest.write(out / "manifest.json")
    return code


def _summary(report) -> str:
    lines = [f"{'strain':>6}  {'verdict':>10}  {'c analytic':>12}  {'c measured':>12}  "
             f"{'rho analytic':>12}  {'rho measured':>12}"]
    for r in report.strains:
        lines.append(f"{r.strain:>6}  {r.verdict:>10}  {_r6(r.analytic_speed):>12}  {_r6(r.speed):>12}  "
                     f"{_r6(r.analytic_plateau):>12}  {_r6(r.plateau):>12}")
    lines.append(f"S_inf analytic {_r6(report.analytic_s_infinity)}  measured {_r6(report.s_infinity)}")
    return "\n".join(lines)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg.model.n != 2:
        raise ConfigError("model.strains", f"a sweep needs exactly 2 strains, got {cfg.model.n}")
    settings = cfg.sweep
    if settings is None:
        raise ConfigError("sweep", "missing required section for the sweep command")
    p1, p2 = cfg.model.strains
    try:
        consts = regime_constants(p1, p2)
    except MultiSirError as exc:
        raise ConfigError("model.strains", str(exc)) from exc
    lo, hi = default_sweep_range(consts)
    lo = settings.s0_min if settings.s0_min is not None else lo
    hi = settings.s0_max if settings.s0_max is not None else hi
    grid = np.linspace(lo, hi, settings.points)
    out = _out_dir(args)
    manifest = _manifest("sweep", cfg, args)
    result = sweep_regimes(p1, p2, grid, refine=settings.refine, refine_factor=settings.refine_factor,
                              tie_tol=cfg.measure.tie_tol, jobs=args.jobs)
    if settings.simulate_per_regime:
        attach_measurements(result, cfg.sim, cfg.init, cfg.measure,
                            per_regime=settings.simulate_per_regime, jobs=args.jobs)
    c = result.constants
    consts_doc = {
        "relabelled": c.relabelled,
        "r_lower": c.r_lower,
        "s_lower": c.s_lower,
        "s_upper": c.s_upper,
        "eps": c.eps,
        "eps_formula": "applicable" if c.eps_applicable else "out of range (gap edge from direct scan)",
        "gap_upper": c.gap_upper,
        "threshold1": c.threshold1,
        "boundaries": c.boundaries(),
        "points": len(result.points),
        "disagreements_outside_gap": [p.s0 for p in result.disagreements()],
    }
    _write(out, manifest, "constants.json", _dump(_finite(consts_doc)))
    _write(out, manifest, "sweep.csv", sweep_csv(result))
    _write(out, manifest, "sweep.dat", sweep_plot_data(result))
    manifest.add_output("sweep.svg")
    plot_sweep(result.s0, result.s_inf, [p.regime for p in result.points], out / "sweep.svg",
               measured=[p.s_inf_measured for p in result.points])
    manifest.finish("ok")
    manifest.write(out / "manifest.json")
    print(f"{len(result.points)} points; boundaries: {', '.join(_r6(b) for b in c.boundaries())}; "
          f"label disagreements outside the gap: {len(result.disagreements())}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.harness:
        res = cascade_harness(n_instances=args.instances, seed=args.seed)
        print(f"equal-diffusivity cascade harness: {len(res.violations)} violations in "
              f"{len(res.instances)} instances ({res.draws} draws, seed {args.seed})")
        return EXIT_OK if res.passed else EXIT_MISMATCH
    if not args.config:
        raise ConfigError("--config", "verify needs --config (or --harness)")
    cfg = load_config(args.config)
    scenario = ScenarioConfig(cfg.model, cfg.sim, cfg.init, cfg.measure, name=Path(args.config).stem)
    manifest = _manifest("verify", cfg, args)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    try:
        rep = verify_prediction(scenario, keep_trajectory=out is not None)
    except (NumericalError, InsufficientDataError) as exc:
        reason = f"{type(exc).__name__}: {exc}"
        print(f"verification aborted: {reason}", file=sys.stderr)
        if out is not None:
            manifest.finish("aborted", reason)
            manifest.write(out / "manifest.json")
        return EXIT_NUMERICAL
    if out is not None:
        _write(out, manifest, "verify.json", json.dumps(_finite(rep.to_dict()), indent=2, sort_keys=True) + "\n")
        if rep.report is not None:
            _write(out, manifest, "comparison.csv", rep.report.comparison_csv())
            if rep.report.tracks:
                manifest.add_output("fronts.svg")
                plot_fronts(list(rep.report.tracks.values()), out / "fronts.svg")
        if rep.trajectory is not None:
            f = rep.trajectory.final
            manifest.add_output("profiles.svg")
            plot_profiles(rep.trajectory.x, f.S, f.I, f.R, f.t, out / "profiles.svg")
        manifest.finish(rep.status, rep.reason or None)
        manifest.write(out / "manifest.json")
    if rep.status == "inapplicable":
        for w in tie_warnings(rep.outcome):
            print(w, file=sys.stderr)
        print(f"theorem not applicable: {rep.reason}")
        return EXIT_INAPPLICABLE
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<14} {c.detail}")
    print(f"status: {rep.status}")
    return EXIT_OK if rep.passed else EXIT_MISMATCH


def cmd_plot(args) -> int:
    src = Path(args.input)
    out = _out_dir(args)
    if src.is_dir():
        files = sorted(src.glob("snapshot_*.csv"))
        if not files:
            raise ConfigError(str(src), "directory holds no snapshot_*.csv files")
        src = files[-1]
    if not src.is_file():
        raise ConfigError("--input", f"no such file: {src}")
    with src.open() as fh:
        first = fh.readline()
    if first.startswith("# t="):
        snap = read_snapshot(src)
        path = plot_profiles(snap.x, snap.S, snap.I, snap.R, snap.t, out / f"{src.stem}.svg")
    else:
        rows = read_sweep_csv(src)
        if not rows:
            raise ConfigError(str(src), "sweep CSV has no data rows")
        path = plot_sweep([r.s0 for r in rows], [r.s_inf_analytic for r in rows],
                          [r.regime for r in rows], out / f"{src.stem}.svg",
                          measured=[r.s_inf_measured for r in rows])
    print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment document")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized property harnesses")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (sweep only)")

    parser = argparse.ArgumentParser(prog="multisir", description="Multi-strain spatial SIR predictions and simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="propagation sequences and hypothesis verdicts")
    p.add_argument("--json", action="store_true", help="print the JSON outcome instead of the table")
    p.set_defaults(func=cmd_analyze, needs_config=True)

    p = sub.add_parser("simulate", parents=[common], help="run the PDE and measure fronts")
    p.set_defaults(func=cmd_simulate, needs_config=True)

    p = sub.add_parser("sweep", parents=[common], help="two-strain regime map over S0")
    p.set_defaults(func=cmd_sweep, needs_config=True)

    p = sub.add_parser("verify", parents=[common], help="simulate and compare with the predictions")
    p.add_argument("--harness", choices=["cascade"],
                   help="run the randomized equal-diffusivity cascade harness instead of a config")
    p.add_argument("--instances", type=int, default=100)
    p.set_defaults(func=cmd_verify, needs_config=False)

    p = sub.add_parser("plot", parents=[common], help="render a sweep CSV or snapshot CSV to SVG")
    p.add_argument("--input", required=True, help="sweep CSV, snapshot CSV or snapshot directory")
    p.set_defaults(func=cmd_plot, needs_config=False)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.needs_config and not args.config:
        print("configuration error: --config: required for this command", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("configuration error: --jobs: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainTooSmallError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NumericalError, InsufficientDataError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
