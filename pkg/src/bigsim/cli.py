"""Command-line front end: validate inputs, run the centralized oracle,
run distributed simulations, diff the two, and report traffic statistics.

Exit codes: 0 success, 1 domain failure (invalid input, mismatch,
non-quiescence), 2 usage error (argparse default).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .bigraph import Bigraph, validate
from .embedding import enumerate_embeddings
from .sim import NonQuiescent, Scenario, Simulator


def _load_bigraph(path):
    with open(path) as f:
        return Bigraph.from_json(json.load(f))


def _apply_partition_flag(scenario, flag):
    if flag is None:
        return
    if flag == "finest" or flag == "by-root":
        scenario.config.partition = flag
    elif flag.startswith("by-control="):
        ctrls = [c for c in flag.split("=", 1)[1].split(",") if c]
        scenario.config.partition = {"by-control": ctrls}
    elif flag.startswith("file:"):
        with open(flag[5:]) as f:
            scenario.config.partition = json.load(f)
    else:
        raise SystemExit(2)


def _seed_override(scenario):
    seed = os.environ.get("DBAM_SEED")
    if seed is not None:
        scenario.config.seed = int(seed)


def cmd_validate(args):
    b = _load_bigraph(args.bigraph)
    problems = validate(b)
    for p in problems:
        print(p)
    if problems:
        return 1
    print("valid")
    return 0


def cmd_embed(args):
    guest = _load_bigraph(args.guest)
    host = _load_bigraph(args.host)
    for b, label in ((guest, "guest"), (host, "host")):
        problems = validate(b)
        if problems:
            print(f"invalid {label}: {problems}", file=sys.stderr)
            return 1
    embs = enumerate_embeddings(guest, host)
    if args.json:
        print(json.dumps([e.to_json() for e in embs], sort_keys=True))
    else:
        for e in embs:
            print(e)
    print(f"count: {len(embs)}")
    return 0


def _run_simulator(args):
    scenario = Scenario.load(args.scenario)
    _apply_partition_flag(scenario, args.partition)
    _seed_override(scenario)
    sim = Simulator(scenario)
    reactions = args.reactions if args.reactions is not None else None
    try:
        report = sim.run(reactions=reactions)
    except NonQuiescent:
        sim.quiesced = False
        report = sim.report()
    return sim, report


def cmd_run(args):
    sim, report = _run_simulator(args)
    if args.trace:
        with open(args.trace, "w") as f:
            f.write(sim.tracer.text())
    if args.json:
        print(json.dumps(report, sort_keys=True, default=str))
    else:
        print(f"quiescent: {report['quiescent']}")
        print(f"ticks: {report['ticks']}")
        print(f"committed reactions: {len(report['commits'])}")
        for pid, counts in sorted(report["available_per_process"].items()):
            row = " ".join(f"{g}={n}" for g, n in sorted(counts.items()))
            print(f"  process {pid}: {row}")
        for i, epoch in enumerate(report["traffic"]):
            print(f"  epoch {i}: messages={epoch['messages']} "
                  f"transmitted={epoch['total']}")
    if args.until_quiescent and not report["quiescent"]:
        return 1
    return 0


def cmd_compare(args):
    sim, report = _run_simulator(args)
    if not report["quiescent"]:
        print("simulation did not quiesce", file=sys.stderr)
        return 1
    if args.inject_corruption:
        for name in sorted(sim.procs[sim.pids[0]].guests):
            if sim.inject_corruption(name):
                break
    diff = sim.compare()
    ok = True
    out = {}
    for name, entry in sorted(diff.items()):
        ok = ok and entry["match"]
        if args.json:
            out[name] = {
                "match": entry["match"],
                "missing": [str(e) for e in entry["missing"]],
                "extra": [str(e) for e in entry["extra"]],
                "holders": {str(e): pids for e, pids in
                            sorted(entry["holders"].items(),
                                   key=lambda kv: kv[0].sort_key())},
            }
        else:
            print(f"guest {name}: {'match' if entry['match'] else 'MISMATCH'}")
            for e, pids in sorted(entry["holders"].items(),
                                  key=lambda kv: kv[0].sort_key()):
                print(f"  {e} held by {pids}")
            for e in entry["missing"]:
                print(f"  missing: {e}")
            for e in entry["extra"]:
                print(f"  extra: {e}")
    if args.json:
        print(json.dumps(out, sort_keys=True))
    return 0 if ok else 1


def cmd_stats(args):
    sim, report = _run_simulator(args)
    repeats = sim.stats.repeated_edge_transmissions()
    if args.json:
        print(json.dumps({"traffic": report["traffic"],
                          "repeated_edge_transmissions": len(repeats)},
                         sort_keys=True, default=str))
    else:
        for i, epoch in enumerate(report["traffic"]):
            per_guest = " ".join(f"{g}={n}" for g, n in
                                 sorted(epoch["per_guest"].items()))
            print(f"epoch {i}: messages={epoch['messages']} "
                  f"total={epoch['total']} {per_guest}")
        print(f"repeated (edge, link) transmissions: {len(repeats)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bigsim",
        description="bigraph embeddings: centralized oracle and "
                    "distributed simulator")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", help="check a bigraph file")
    p.add_argument("--bigraph", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("embed", help="enumerate all embeddings")
    p.add_argument("--guest", required=True)
    p.add_argument("--host", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_embed)

    def sim_args(p):
        p.add_argument("--scenario", required=True)
        p.add_argument("--partition",
                       help="finest|by-root|by-control=<c,..>|file:<path>")
        p.add_argument("--reactions", type=int, default=None)
        p.add_argument("--json", action="store_true")

    p = sub.add_parser("run", help="run a distributed scenario")
    sim_args(p)
    p.add_argument("--until-quiescent", action="store_true")
    p.add_argument("--trace")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("compare",
                       help="distributed availables vs the oracle")
    sim_args(p)
    p.add_argument("--inject-corruption", action="store_true",
                   help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("stats", help="run and report traffic statistics")
    sim_args(p)
    p.set_defaults(fn=cmd_stats)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
