"""Command-line front end: run scenarios, list builtins, re-check bundles.

Exit codes: 0 success, 1 failed check, 2 configuration problems,
3 numerical aborts.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io as bundle_io
from .equilibrium import KS_CRITICAL_1PCT, ks_statistic, marginal_cdf
from .errors import ConfigError, NumericalAbort
from .scenarios import (
    BUILTIN_DESCRIPTIONS,
    builtin_names,
    get_builtin,
    load_config,
    run_scenario,
)

OUT_ROOT_VAR = "PILOTWAVE_OUT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pilotwave",
        description="deterministic pilot-wave scenario runner")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    parser.add_argument("--verbose", action="store_true", help="per-stage progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a builtin scenario or a config file")
    p_run.add_argument("target", help="builtin scenario name or path to a config file")
    p_run.add_argument("--out", help="bundle parent directory "
                       f"(default ${OUT_ROOT_VAR} or ./runs)")
    p_run.add_argument("--seed", type=int, help="override the sampling seed")
    p_run.add_argument("--traj", type=int, help="override the ensemble size")

    sub.add_parser("list", help="list builtin scenarios")

    p_check = sub.add_parser("check", help="recompute a statistic from a bundle")
    p_check.add_argument("what", choices=["manifest", "equivariance", "conditional"])
    p_check.add_argument("--bundle", required=True, help="bundle directory")

    p_rd = sub.add_parser("render-data", help="export density tables from a bundle")
    p_rd.add_argument("--bundle", required=True, help="bundle directory")
    p_rd.add_argument("--out", help="output directory (default: inside the bundle)")
    return parser


def _out_root(args) -> str:
    if args.out:
        return args.out
    return os.environ.get(OUT_ROOT_VAR, "runs")


def _cmd_run(args, echo) -> int:
    if os.path.exists(args.target):
        cfg = load_config(args.target)
    elif args.target in builtin_names():
        cfg = get_builtin(args.target)
    else:
        raise ConfigError(f"{args.target!r} is neither a config file nor a builtin "
                          f"(builtins: {', '.join(builtin_names())})")
    cfg = cfg.with_sampling(seed=args.seed, n=args.traj)
    bundle_dir = os.path.join(_out_root(args), cfg.name)
    result = run_scenario(cfg, out_dir=bundle_dir, echo=echo)
    failed = [r.name for r in result.reports if not r.passed]
    if not args.quiet:
        print(f"bundle written to {bundle_dir}")
        if result.reports:
            print(f"statistics: {len(result.reports) - len(failed)}/"
                  f"{len(result.reports)} passed")
        for name in failed:
            print(f"  failed: {name}")
    return 0


def _cmd_list() -> int:
    for name in builtin_names():
        print(f"{name:32s} {BUILTIN_DESCRIPTIONS[name]}")
    return 0


def _check_manifest(bundle: str) -> int:
    problems = bundle_io.verify_manifest(bundle)
    if problems:
        for p in problems:
            print(f"mismatch: {p}")
        return 1
    manifest = bundle_io.read_manifest(bundle)
    print(f"manifest ok: {len(manifest['files'])} files verified")
    return 0


def _field_steps(bundle: str) -> list[int]:
    fields_dir = os.path.join(bundle, "fields")
    if not os.path.isdir(fields_dir):
        raise bundle_io.MissingArtifact(f"no fields directory in {bundle}")
    steps = []
    for fn in os.listdir(fields_dir):
        if fn.endswith(bundle_io.SIDECAR_SUFFIX):
            steps.append(int(fn[len("step_"):-len(bundle_io.SIDECAR_SUFFIX)]))
    return sorted(steps)


def _endpoint_steps(bundle: str) -> list[int]:
    ep_dir = os.path.join(bundle, "endpoints")
    if not os.path.isdir(ep_dir):
        raise bundle_io.MissingArtifact(f"no endpoints directory in {bundle}")
    return sorted(int(fn[len("step_"):-len(".csv")]) for fn in os.listdir(ep_dir)
                  if fn.endswith(".csv"))


def _check_equivariance(bundle: str) -> int:
    field_steps = set(_field_steps(bundle))
    common = [s for s in _endpoint_steps(bundle) if s > 0 and s in field_steps]
    if not common:
        raise bundle_io.MissingArtifact("no endpoint step with a matching field dump")
    worst = 0
    for step in common:
        f = bundle_io.read_field(os.path.join(bundle, "fields", f"step_{step:04d}"))
        pts = bundle_io.read_endpoints(os.path.join(bundle, "endpoints",
                                                    f"step_{step:04d}.csv"))
        critical = KS_CRITICAL_1PCT / np.sqrt(len(pts))
        axes = ("x",) if f.is_1d else ("x", "y")
        for axis, ax_name in enumerate(axes):
            points, cdf = marginal_cdf(f, axis)
            stat = ks_statistic(pts[:, axis], points, cdf)
            ok = stat < critical
            worst = max(worst, 0 if ok else 1)
            print(f"step {step} {ax_name}: KS={stat:.5f} "
                  f"critical={critical:.5f} n={len(pts)} "
                  f"{'pass' if ok else 'FAIL'}")
    return worst


def _check_conditional(bundle: str) -> int:
    stats_path = os.path.join(bundle, "stats.json")
    reports = bundle_io.read_json(stats_path)
    conditional = [r for r in reports if r["name"].startswith("conditional-")]
    if not conditional:
        raise bundle_io.MissingArtifact("bundle holds no conditional statistics")
    bad = 0
    for r in conditional:
        ok = bool(r["passed"])
        bad = max(bad, 0 if ok else 1)
        print(f"{r['name']}: KS={r['statistic']:.5f} critical={r['critical']:.5f} "
              f"n={r['n']} {'pass' if ok else 'FAIL'}")
    return bad


def _cmd_render_data(args) -> int:
    bundle = args.bundle
    out_dir = args.out or os.path.join(bundle, "render")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for step in _field_steps(bundle):
        f = bundle_io.read_field(os.path.join(bundle, "fields", f"step_{step:04d}"))
        rho = f.density()
        path = os.path.join(out_dir, f"density_{step:04d}.csv")
        if f.is_1d:
            header = "x,density"
            rows = np.column_stack([f.grid.points, rho])
        else:
            header = "y\\x," + ",".join(repr(float(x)) for x in f.grid.x.points)
            rows = np.column_stack([f.grid.y.points, rho.T])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        written.append(path)
    print(f"wrote {len(written)} density tables to {out_dir}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    echo = None
    if getattr(args, "verbose", False) and not args.quiet:
        echo = lambda msg: print(msg, file=sys.stderr)
    try:
        if args.command == "run":
            return _cmd_run(args, echo)
        if args.command == "list":
            return _cmd_list()
        if args.command == "check":
            if args.what == "manifest":
                return _check_manifest(args.bundle)
            if args.what == "equivariance":
                return _check_equivariance(args.bundle)
            return _check_conditional(args.bundle)
        return _cmd_render_data(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
