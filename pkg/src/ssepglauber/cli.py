"""Command-line entry point."""
from __future__ import annotations

import argparse
import csv
import json
import sys

from .errors import BudgetExceededError, ConfigError, SSEPError, UnknownPresetError
from .model import ModelParams
from .presets import EXIT_CONFIG, PRESETS, load_manifest, parse_config, parse_value, run_preset

EPILOG = """\
CSV outputs
  run:     <run-dir>/results.csv      one row per check; columns are the union of
                                      the keys reported by the preset, the first
                                      being "check"
           <run-dir>/plotdata/*.csv   plot-ready tables with a header row
  greens:  x1,...,xd,value            Green function on the torus
  flow:    direction,i1,...,id,value  edge value from box site i to i + e_direction
                                      (box indices 0..2*ell-2)
  alpha:   t,s,alpha                  limiting covariance kernel
  rate:    key,value                  rate function and its inputs
  trajectory files (kmc): seed,n,d,t,gamma,M,QV[,functional...]

manifest.json fields
  preset, parameters, master_seed, replicas, tool_version,
  wall_clock_seconds, event_count, criteria[{name, kind, statistic, bound,
  pass, details}], exit_code, run_dir

exit codes: 0 pass, 2 statistical failure, 3 identity failure, 4 configuration error
"""


def _model_args(p: argparse.ArgumentParser, n=256, d=1):
    p.add_argument("--n", type=int, default=n)
    p.add_argument("--d", type=int, default=d)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)


def _floats(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def _writer(path):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    return fh, csv.writer(fh)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssepglauber", description=__doc__, epilog=EPILOG,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset", epilog=EPILOG,
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("preset", help=", ".join(sorted(PRESETS)))
    run.add_argument("--config", help="file of 'key = value' lines")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--out", default="runs", help="parent directory for run directories")

    rep = sub.add_parser("report", help="summarize a run directory")
    rep.add_argument("run_dir")

    gr = sub.add_parser("greens", help="Green function table", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    gr.add_argument("--n", type=int, required=True)
    gr.add_argument("--d", type=int, required=True)
    gr.add_argument("--out", help="CSV path (default stdout)")
    gr.add_argument("--binary", help="also write the flat binary table here")

    fl = sub.add_parser("flow", help="minimal-energy flow on a box", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    fl.add_argument("--ell", type=int, required=True)
    fl.add_argument("--d", type=int, required=True)
    fl.add_argument("--out")
    fl.add_argument("--binary")

    al = sub.add_parser("alpha", help="limiting covariance alpha(t, s)", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    al.add_argument("--t", type=_floats, required=True)
    al.add_argument("--s", type=_floats)
    al.add_argument("--epsilon", type=float)
    al.add_argument("--tol", type=float, default=1e-6)
    _model_args(al)

    rt = sub.add_parser("rate", help="Gaussian rate function at given times", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    rt.add_argument("--times", type=_floats, required=True)
    rt.add_argument("--gamma", type=_floats, required=True)
    rt.add_argument("--epsilon", type=float)
    _model_args(rt)
    return parser


def _cmd_run(args) -> int:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg.update(parse_config(fh.read()))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = parse_value(value)
    manifest = run_preset(args.preset, cfg, out_root=args.out)
    _print_criteria(manifest.as_dict())
    print(f"run directory: {manifest.run_dir}")
    return manifest.exit_code


def _print_criteria(m: dict):
    print(f"preset {m['preset']}  seed {m['master_seed']}  {m['wall_clock_seconds']:.1f}s")
    for c in m["criteria"]:
        flag = "PASS" if c["pass"] else "FAIL"
        print(f"  {flag}  [{c['kind']}] {c['name']}: {json.dumps(c['statistic'])} vs {json.dumps(c['bound'])}")
    print(f"exit code {m['exit_code']}")


def _cmd_report(args) -> int:
    m = load_manifest(args.run_dir)
    _print_criteria(m)
    return int(m["exit_code"])


def _cmd_greens(args) -> int:
    from .greens import green_csv_rows, green_function, save_table

    table = green_function(args.n, args.d)
    fh, w = _writer(args.out)
    w.writerow([*(f"x{i + 1}" for i in range(args.d)), "value"])
    w.writerows(green_csv_rows(table))
    if fh is not sys.stdout:
        fh.close()
    if args.binary:
        save_table(args.binary, table.flat(), args.n, args.d)
    return 0


def _cmd_flow(args) -> int:
    from .greens import build_flow, flow_csv_rows, flow_payload, save_table

    flow = build_flow(args.ell, args.d)
    fh, w = _writer(args.out)
    w.writerow(["direction", *(f"i{i + 1}" for i in range(args.d)), "value"])
    w.writerows(flow_csv_rows(flow))
    if fh is not sys.stdout:
        fh.close()
    if args.binary:
        save_table(args.binary, flow_payload(flow), 2 * args.ell - 1, args.d, args.ell)
    print(f"# energy {flow.energy!r} residual {flow.residual():.3e}", file=sys.stderr)
    return 0


def _cmd_alpha(args) -> int:
    from .limits import CovarianceModel

    params = ModelParams(args.n, args.d, args.a, args.b, args.lam)
    s_values = args.s or args.t
    model = CovarianceModel(params, epsilon=args.epsilon, tol=args.tol,
                            horizon=max(max(args.t), max(s_values)))
    w = csv.writer(sys.stdout)
    w.writerow(["t", "s", "alpha"])
    if args.s is None:
        for t in args.t:
            for s in args.t:
                w.writerow([t, s, repr(model.alpha(t, s))])
    else:
        if len(args.s) != len(args.t):
            raise ConfigError("--t and --s must have the same length")
        for t, s in zip(args.t, args.s):
            w.writerow([t, s, repr(model.alpha(t, s))])
    return 0


def _cmd_rate(args) -> int:
    from .mdp import RateProblem, rate_I

    params = ModelParams(args.n, args.d, args.a, args.b, args.lam)
    problem = RateProblem(args.times, args.gamma, params=params, epsilon=args.epsilon)
    w = csv.writer(sys.stdout)
    w.writerow(["key", "value"])
    w.writerow(["rate", repr(rate_I(problem))])
    w.writerow(["times", " ".join(map(repr, problem.times.tolist()))])
    w.writerow(["gamma", " ".join(map(repr, problem.gamma.tolist()))])
    return 0


COMMANDS = {"run": _cmd_run, "report": _cmd_report, "greens": _cmd_greens, "flow": _cmd_flow,
            "alpha": _cmd_alpha, "rate": _cmd_rate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UnknownPresetError, BudgetExceededError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SSEPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
