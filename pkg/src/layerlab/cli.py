"""Command line interface: ``layerlab run | modes | scan | selftest``.

Exit codes: 0 ok, 2 schema error, 3 solver failure, 4 invariant failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from ._logging import configure
from .cross_section import dirichlet_modes
from .exceptions import LayerlabError, SchemaError

log = logging.getLogger(__name__)

EXIT_OK, EXIT_SCHEMA, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4


def parse_domain(spec):
    """Cross-section from ``shape:key=value,...`` or a JSON object.

    Examples: ``interval:length=3.14159,cells=200``, ``rectangle:width=1,height=1,h=0.005``,
    ``disk:radius=1,h=0.005``.
    """
    spec = spec.strip()
    if spec.startswith("{"):
        try:
            d = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid domain JSON: {exc.msg}", "") from exc
    else:
        shape, _, rest = spec.partition(":")
        d = {"shape": shape}
        for item in filter(None, rest.split(",")):
            key, eq, val = item.partition("=")
            if not eq:
                raise SchemaError(f"expected key=value, got {item!r}", f"/{key}")
            d[key.strip()] = int(val) if key.strip() == "cells" else float(val)
    from .scenarios import SCHEMA, make_domain
    import jsonschema
    v = jsonschema.Draft202012Validator(SCHEMA["properties"]["cross_section"])
    err = jsonschema.exceptions.best_match(v.iter_errors(d))
    if err is not None:
        ptr = "/" + "/".join(str(p) for p in err.absolute_path)
        raise SchemaError(err.message, ptr if ptr != "/" else "")
    return make_domain(d)


def _cmd_run(args):
    from .runner import run
    from .scenarios import resolve
    scenario = resolve(args.scenario)
    out = args.out or scenario.get("output") or os.path.join("results", scenario["name"])
    rec = run(scenario, out, export_metric=args.export_metric,
              export_matrices=args.export_matrices, workers=args.workers)
    print(json.dumps({"scenario": rec.scenario, "out": out,
                      "files": [m["file"] for m in rec.manifest] + ["results.json"]}, sort_keys=True))
    return EXIT_OK


def _cmd_modes(args):
    domain = parse_domain(args.domain)
    modes = dirichlet_modes(domain, args.count)
    payload = {"domain": args.domain, "count": args.count,
               "energies": [float(e) for e in modes.energies],
               "residuals": [float(r) for r in modes.residuals]}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        if args.csv:
            base = os.path.splitext(args.out)[0]
            for k in range(args.count):
                np.savetxt(f"{base}_mode{k + 1}.csv", np.atleast_2d(modes.mode_grid(k)),
                           delimiter=",", fmt="%.17g")
    print(text)
    return EXIT_OK


def _cmd_scan(args):
    from .runner import build_pipeline, write_scan_outputs
    from .scenarios import make_thresholds, resolve
    from .weyl import certify_scan
    scenario = resolve(args.scenario)
    if args.steps < 1:
        raise SchemaError("steps must be at least 1", "/steps")
    pipe = build_pipeline(scenario)
    E1 = pipe.modes.E1
    lo, hi = args.lambda_min, args.lambda_max
    if args.relative:
        lo, hi = lo + E1, hi + E1
    lambdas = np.linspace(lo, hi, args.steps) if args.steps > 1 else np.array([lo])
    sc = scenario.get("scan", {})
    report = certify_scan(pipe.forms, pipe.modes, lambdas, make_thresholds(scenario),
                          region=sc.get("region"), dispersion=sc.get("dispersion", "continuum"),
                          workers=args.workers,
                          metadata={"scenario": scenario["name"], "grid": list(pipe.grid.node_shape),
                                    "spacing": list(pipe.grid.spacing)})
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_scan_outputs(report, lambda name: os.path.join(args.out, name), scenario["name"])
        with open(os.path.join(args.out, "scan.json"), "w") as fh:
            fh.write(report.to_json(indent=2) + "\n")
    if not args.quiet:
        print(json.dumps({"E1": E1, "lambda": report.lambdas, "decision": report.decisions},
                         sort_keys=True))
    return EXIT_OK


def _cmd_selftest(args):
    from .selftest import selftest
    ok, lines = selftest(args.inject_fault)
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.summary_out:
        with open(args.summary_out, "w") as fh:
            fh.write(text)
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser():
    p = argparse.ArgumentParser(prog="layerlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"layerlab {__version__}")
    p.add_argument("--log-level", default="WARNING", help="logging level for JSON log lines on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write results")
    r.add_argument("--scenario", required=True, help="scenario JSON file or bundled scenario name")
    r.add_argument("--out", help="output directory")
    r.add_argument("--export-metric", action="store_true", help="also write the metric as a binary grid file")
    r.add_argument("--export-matrices", action="store_true", help="also write K and M in coordinate format")
    r.add_argument("--workers", type=int, default=None)
    r.set_defaults(func=_cmd_run)

    m = sub.add_parser("modes", help="Dirichlet eigenpairs of a cross-section")
    m.add_argument("--domain", required=True, help="e.g. interval:length=3.14159,cells=200")
    m.add_argument("--count", type=int, default=6)
    m.add_argument("--out", help="write energies as JSON")
    m.add_argument("--csv", action="store_true", help="with --out, also write mode grids as CSV")
    m.set_defaults(func=_cmd_modes)

    s = sub.add_parser("scan", help="Weyl certification scan over a lambda range")
    s.add_argument("--scenario", required=True)
    s.add_argument("--lambda-min", type=float, required=True)
    s.add_argument("--lambda-max", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--relative", action="store_true", help="lambda bounds are offsets from E1")
    s.add_argument("--out", help="directory for scan.json, scan.csv and quotients.svg")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=_cmd_scan)

    t = sub.add_parser("selftest", help="smoke-scale invariant suite")
    t.add_argument("--inject-fault", default=None, help="corrupt one check's input (fault injection)")
    t.add_argument("--summary-out", help="also write the summary to this file")
    t.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure(getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        return args.func(args)
    except LayerlabError as exc:
        log.error("error", extra={"data": {"type": type(exc).__name__, "message": str(exc),
                                           "code": exc.code}})
        sys.stderr.write(f"layerlab: {type(exc).__name__}: {exc}\n")
        return exc.exit_status
    except FileNotFoundError as exc:
        sys.stderr.write(f"layerlab: {exc}\n")
        return EXIT_SCHEMA
    except ValueError as exc:
        sys.stderr.write(f"layerlab: invalid input: {exc}\n")
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
