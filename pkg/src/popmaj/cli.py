"""Command-line interface: ``popmaj graph|simulate|sweep|verify|bd``.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 verification
result differs from ``--expect``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, experiments, graph as graphs, protocols, verifier
from .protocols import Configuration

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_graph(text: str) -> graphs.InteractionGraph:
    """``family:key=value,...``, an inline JSON descriptor, or an edge-list file."""
    if text.lstrip().startswith("{"):
        return graphs.from_descriptor(json.loads(text))
    if Path(text).is_file():
        return graphs.from_descriptor({"file": text})
    family, _, rest = text.partition(":")
    desc = {"family": family}
    for part in filter(None, rest.split(",")):
        key, eq, val = part.partition("=")
        if not eq:
            raise UsageError(f"graph parameter {part!r} is not key=value")
        desc[key.strip()] = _value(val.strip())
    return graphs.from_descriptor(desc)


# ---------------------------------------------------------------- graph

def cmd_graph(args) -> int:
    params = {k: v for k, v in (("n", args.n), ("m", args.m), ("n1", args.n1), ("n2", args.n2),
                                ("bridge", args.bridge), ("chord", args.chord)) if v is not None}
    g = graphs.from_descriptor({"family": args.family, **params})
    text = graphs.to_edge_list(g)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        c = graphs.connectivity(g)
        print(f"wrote {args.out}: n={g.n}, arcs={g.num_arcs}, symmetric={g.symmetric_arcs}, "
              f"weak={c.weak}, strong={c.strong}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- simulate / sweep

def _spec_from_args(args) -> experiments.ExperimentSpec:
    spec = experiments.load_spec(args.spec)
    doc = spec.to_dict()
    for key in ("trials", "seed", "max_steps"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    return experiments.ExperimentSpec.from_dict(doc)


def _report(cells, paths) -> None:
    for c in cells:
        s = c.summary
        ci = s["wilson95"]
        ci_text = f"[{ci[0]:.4f}, {ci[1]:.4f}]" if ci else "n/a"
        freq = f"{s['win_freq']:.4f}" if s["win_freq"] is not None else "n/a"
        print(f"cell {c.index} {json.dumps(c.params, sort_keys=True)}: trials={s['trials']} "
              f"win={freq} {ci_text} outcomes={s['outcomes']} median_steps={s['steps_median']} "
              f"cap_hits={s['cap_hits']}")
    for kind, path in paths.items():
        print(f"{kind}: {path}")


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    if spec.sweep:
        print("note: spec declares a sweep; simulate runs the base cell only", file=sys.stderr)
    cells = [experiments.simulate(spec)]
    paths = experiments.write_outputs(spec, cells, args.out_dir, args.plot_data)
    _report(cells, paths)
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _spec_from_args(args)
    cells = experiments.sweep(spec)
    paths = experiments.write_outputs(spec, cells, args.out_dir, args.plot_data)
    _report(cells, paths)
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in experiments.preset_names():
        spec = experiments.load_spec(name)
        print(f"{name}: {spec.description}")
    return EXIT_OK


# ---------------------------------------------------------------- verify

def _verify_instances(args, p):
    if args.graph:
        gs = [parse_graph(args.graph)]
    elif args.nmax:
        gs = [g for n in range(2, args.nmax + 1) for g in graphs.connected_undirected_graphs(n)]
    else:
        raise UsageError("verify needs --graph or --nmax")
    for g in gs:
        if args.coloring == "all":
            for v in verifier.verify_all_colorings(g, p, args.node_limit):
                yield g, v.inputs, v.passed, None
        else:
            inputs = list(args.coloring)
            if len(inputs) != g.n:
                raise UsageError(f"coloring has {len(inputs)} symbols for {g.n} vertices")
            c0 = Configuration.from_inputs(p, inputs)
            v = verifier.stably_computes_majority(g, p, c0, args.node_limit)
            yield g, tuple(inputs), v.passed, v


def cmd_verify(args) -> int:
    p = protocols.load(args.protocol)
    if args.coloring != "all" and args.nmax and not args.graph:
        raise UsageError("an explicit --coloring needs --graph")
    instances = []
    failures = 0
    for g, inputs, passed, verdict in _verify_instances(args, p):
        failures += not passed
        entry = {"graph": g.descriptor or {"n": g.n, "arcs": [list(a) for a in g.arcs]},
                 "coloring": "".join(inputs), "verdict": "pass" if passed else "fail"}
        if verdict is not None:
            entry.update(verdict.to_dict())
        instances.append(entry)
    report = {
        "protocol": p.name,
        "instances": len(instances),
        "failures": failures,
        "verdict": "pass" if failures == 0 else "fail",
    }
    if args.coloring != "all" or args.details:
        report["results"] = instances
    else:
        report["failed"] = [e for e in instances if e["verdict"] == "fail"][:50]
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    if args.expect and args.expect != report["verdict"]:
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------- bd

def cmd_bd(args) -> int:
    if args.quantity == "prob":
        spec = analysis.BirthDeathSpec(args.m, args.p, args.q)
        value = analysis.absorption_probability(spec, args.i, args.allow_symmetric)
    else:
        spec = analysis.BirthDeathSpec(args.m, args.p, args.q, barrier0=analysis.REFLECTING)
        value = analysis.expected_time_reflecting(spec, args.i, args.allow_symmetric)
    out = {"quantity": args.quantity, "m": args.m, "p": args.p, "q": args.q, "i": args.i,
           "value": value}
    if args.mc:
        rng = np.random.Generator(np.random.PCG64(args.seed))
        if args.quantity == "prob":
            est = analysis.mc_absorption(spec, args.i, args.mc, rng)
        else:
            est = analysis.mc_expected_time(spec, args.i, args.mc, rng)
        out["monte_carlo"] = {"mean": est.mean, "se": est.se, "trials": est.trials,
                              "method": est.method, "prng": "numpy-PCG64", "seed": args.seed}
    print(json.dumps(out, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="popmaj", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gp = sub.add_parser("graph", help="generate graphs")
    gsub = gp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    gen = gsub.add_parser("gen", help="write a generated graph as an edge list")
    gen.add_argument("family", choices=sorted(graphs.FAMILIES))
    gen.add_argument("--n", type=int)
    gen.add_argument("--m", type=int)
    gen.add_argument("--n1", type=int)
    gen.add_argument("--n2", type=int)
    gen.add_argument("--bridge", choices=graphs.BRIDGE_MODES)
    gen.add_argument("--chord", type=int)
    gen.add_argument("--out")
    gen.set_defaults(func=cmd_graph)

    for name, func, text in (("simulate", cmd_simulate, "run one experiment cell"),
                             ("sweep", cmd_sweep, "run every cell of a sweep")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("spec", help="spec file or preset name")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--max-steps", type=int)
        sp.add_argument("--out-dir", help="output directory (default: $POPMAJ_OUTPUT_DIR or .)")
        sp.add_argument("--plot-data", action="store_true", help="also write tidy long-format CSV")
        sp.set_defaults(func=func)

    pr = sub.add_parser("presets", help="list bundled experiment presets")
    pr.set_defaults(func=cmd_presets)

    vp = sub.add_parser("verify", help="exhaustive stable-computation check")
    vp.add_argument("--protocol", default="ambassador", help="built-in name or table file")
    vp.add_argument("--graph", help="family:key=value,..., JSON descriptor or edge-list file")
    vp.add_argument("--coloring", default="all", help="input string such as 'grr', or 'all'")
    vp.add_argument("--nmax", type=int, help="all connected undirected graphs on 2..nmax vertices")
    vp.add_argument("--node-limit", type=int, default=verifier.DEFAULT_NODE_LIMIT)
    vp.add_argument("--expect", choices=("pass", "fail"))
    vp.add_argument("--details", action="store_true", help="list every instance")
    vp.add_argument("--out")
    vp.set_defaults(func=cmd_verify)

    bp = sub.add_parser("bd", help="birth-death closed forms")
    bp.add_argument("quantity", choices=("prob", "time"))
    bp.add_argument("--m", type=int, required=True)
    bp.add_argument("--p", type=float, required=True)
    bp.add_argument("--q", type=float, required=True)
    bp.add_argument("--i", type=int, required=True)
    bp.add_argument("--mc", type=int, default=0, help="Monte Carlo trials for a cross-check")
    bp.add_argument("--seed", type=int, default=0)
    bp.add_argument("--allow-symmetric", action="store_true")
    bp.set_defaults(func=cmd_bd)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, experiments.SpecError, graphs.GraphError, protocols.ProtocolError,
            protocols.InvalidStateError, verifier.PreconditionError, ValueError) as exc:
        print(f"popmaj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError) as exc:
        print(f"popmaj: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
