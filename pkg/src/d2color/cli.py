"""Command-line front end: gen / run / verify / bench.

Exit codes: 0 success, 1 verification failure, 2 clash or protocol violation,
3 usage error.
"""

from __future__ import annotations

import argparse
import sys

from . import proto_arbitrary, proto_tree_par, proto_tree_seq
from .engine import ClashDetected, ProtocolViolation
from .scenarios import TABLE1_NEXT_SCHEDULE, builtin_topology
from .topology import (
    TopologyError,
    assign_identities,
    generate_random_tree,
    load_topology,
    metrics,
    save_topology,
)
from .traceio import TraceFormatError, read_trace, write_trace
from .verifier import verify_run

PROTOCOLS = ("seq_tree", "par_tree", "arbitrary")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(3, f"{self.prog}: error: {message}\n")


def _load_source(args):
    if args.builtin:
        return builtin_topology(args.builtin)
    return load_topology(args.topology)


def auto_budget(n: int, delta: int) -> int:
    # generous cover for both traversal protocols plus the END wave
    return 64 + 8 * (n + 1) * (delta + 2)


def cmd_gen(args) -> int:
    if args.builtin:
        topo = builtin_topology(args.builtin)
    else:
        topo = generate_random_tree(args.n, args.max_degree, args.seed)
    if args.identity_mode != "default":
        topo = assign_identities(topo, args.identity_mode, args.identity_seed)
    if not 1 <= args.root <= topo.n:
        print(f"root must be in 1..{topo.n}", file=sys.stderr)
        return 3
    mets = metrics(topo, args.root)
    if args.out:
        save_topology(topo, args.out)
        print(f"wrote {args.out}")
    print(f"n={topo.n} delta={mets.delta} depth={mets.depth} kind={topo.kind}")
    return 0


def build_simulation(topology, args):
    if args.protocol == "seq_tree":
        return proto_tree_seq.make_simulation(
            topology,
            args.root,
            start_round=args.start_round,
            policy=args.clash_policy,
            next_child_order=args.next_child,
            seed=args.seed,
        )
    if args.protocol == "par_tree":
        return proto_tree_par.make_simulation(
            topology,
            args.root,
            start_round=args.start_round,
            policy=args.clash_policy,
            end_phase=args.end_phase,
            root_always_ends=args.root_always_ends,
            sibling_end_parallel=args.sibling_end_parallel,
        )
    schedule = TABLE1_NEXT_SCHEDULE if args.pin_table1_choices else None
    return proto_arbitrary.make_simulation(
        topology,
        args.root,
        start_round=args.start_round,
        policy=args.clash_policy,
        next_schedule=schedule,
    )


def cmd_run(args) -> int:
    topology = _load_source(args)
    if args.protocol in ("seq_tree", "par_tree") and topology.kind != "tree":
        print("tree protocols require a tree topology", file=sys.stderr)
        return 3
    if not 1 <= args.root <= topology.n:
        print(f"root must be in 1..{topology.n}", file=sys.stderr)
        return 3
    mets = metrics(topology, args.root)
    budget = args.max_rounds if args.max_rounds is not None else auto_budget(topology.n, mets.delta)
    sim = build_simulation(topology, args)
    try:
        trace = sim.run(budget)
    except ClashDetected as exc:
        sim.trace.status = "clash"
        sim.trace.rounds = sim.clock + 1
        sim.trace.claimed_by = sim.claimer()
        if args.trace_out:
            write_trace(sim.trace, args.trace_out)
        for ev in exc.events:
            print(
                f"clash round={ev.round} kind={ev.clash_kind} victim={ev.victim} "
                f"participants={sorted(ev.participants)}",
                file=sys.stderr,
            )
        return 2
    except ProtocolViolation as exc:
        print(f"protocol violation: {exc}", file=sys.stderr)
        return 2

    if args.join_parent is not None:
        try:
            outcome = proto_tree_par.execute_join(sim, args.join_parent)
            topology = outcome.topology
            print(
                f"join: process {outcome.joiner_index} id={outcome.joiner_identity} "
                f"color={outcome.color} at round {outcome.round}"
            )
        except proto_tree_par.JoinError as exc:
            print(f"join failed: {exc}", file=sys.stderr)
            return 2

    if args.topology_out:
        save_topology(topology, args.topology_out)

    if args.trace_out:
        write_trace(trace, args.trace_out)
    counts = trace.broadcast_counts()
    palette = len(set(trace.final_colors().values()))
    print(
        f"status={trace.status} rounds={trace.rounds} claimed_by={trace.claimed_by} "
        f"palette={palette}"
    )
    print("broadcasts=" + (",".join(f"{k}:{v}" for k, v in sorted(counts.items())) or "none"))
    return 0


def cmd_verify(args) -> int:
    try:
        trace = read_trace(args.trace)
        topology = load_topology(args.topology)
    except (TraceFormatError, TopologyError, OSError) as exc:
        print(f"cannot load inputs: {exc}", file=sys.stderr)
        return 3
    report = verify_run(topology, trace)
    print(report.to_text(), end="")
    return 0 if report.ok() else 1


def cmd_bench(args) -> int:
    sizes = [int(v) for v in args.sizes.split(",")]
    seeds = [int(v) for v in args.seeds.split(",")]
    print("protocol\tn\tdelta\tdepth\trounds\tclaim_round\tbroadcasts\tratio\tbound_ok")
    worst = 0.0
    for n in sizes:
        for seed in seeds:
            topo = generate_random_tree(n, args.max_degree, seed)
            degs = [topo.degree(i) for i in range(1, n + 1)]
            root = degs.index(max(degs)) + 1
            mets = metrics(topo, root)
            budget = auto_budget(n, mets.delta)
            for proto in args.protocols.split(","):
                ns = argparse.Namespace(
                    protocol=proto, root=root, start_round=0, clash_policy="fail_fast",
                    next_child="min", seed=seed, end_phase=True, root_always_ends=False,
                    sibling_end_parallel=False, pin_table1_choices=False,
                )
                sim = build_simulation(topo, ns)
                trace = sim.run(budget)
                report = verify_run(topo, trace)
                claim = report.completion_round or 0
                dd = mets.delta * mets.depth
                ratio = claim / dd if dd else 0.0
                worst = max(worst, ratio)
                total = sum(trace.broadcast_counts().values())
                bound_ok = all(b.ok for b in report.bound_checks)
                print(
                    f"{proto}\t{n}\t{mets.delta}\t{mets.depth}\t{trace.rounds}"
                    f"\t{claim}\t{total}\t{ratio:.3f}\t{'yes' if bound_ok else 'no'}"
                )
    print(f"# worst observed/(d*delta) ratio: {worst:.3f}")
    return 0


def main(argv=None) -> int:
    parser = _Parser(prog="d2color")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a topology file")
    gen.add_argument("--tree", action="store_true", help="generate a random tree")
    gen.add_argument("--builtin", choices=("singleton", "path3", "star4", "table1", "binary15"))
    gen.add_argument("--n", type=int, default=10)
    gen.add_argument("--max-degree", type=int, default=4)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--root", type=int, default=1)
    gen.add_argument("--identity-mode", default="default",
                     choices=("default", "global_unique", "distance2_unique_with_reuse"))
    gen.add_argument("--identity-seed", type=int, default=0)
    gen.add_argument("-o", "--out")
    gen.set_defaults(fn=cmd_gen)

    run = sub.add_parser("run", help="execute a protocol scenario")
    run.add_argument("--topology")
    run.add_argument("--builtin", choices=("singleton", "path3", "star4", "table1", "binary15"))
    run.add_argument("--protocol", required=True, choices=PROTOCOLS)
    run.add_argument("--root", type=int, default=1)
    run.add_argument("--start-round", type=int, default=0)
    run.add_argument("--max-rounds", type=int, default=None)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--next-child", default="min", choices=("min", "random"))
    run.add_argument("--end-phase", action=argparse.BooleanOptionalAction, default=True)
    run.add_argument("--root-always-ends", action="store_true")
    run.add_argument("--sibling-end-parallel", action="store_true")
    run.add_argument("--clash-policy", default="fail_fast",
                     choices=("fail_fast", "record_and_corrupt"))
    run.add_argument("--pin-table1-choices", action="store_true")
    run.add_argument("--join-parent", type=int, default=None)
    run.add_argument("--trace-out")
    run.add_argument("--topology-out",
                     help="write the final topology (reflects a --join-parent)")
    run.set_defaults(fn=cmd_run)

    ver = sub.add_parser("verify", help="verify a trace against its topology")
    ver.add_argument("--trace", required=True)
    ver.add_argument("--topology", required=True)
    ver.set_defaults(fn=cmd_verify)

    bench = sub.add_parser("bench", help="sweep tree sizes and report scaling")
    bench.add_argument("--sizes", default="10,50,100,300")
    bench.add_argument("--seeds", default="0,1")
    bench.add_argument("--max-degree", type=int, default=6)
    bench.add_argument("--protocols", default="par_tree")
    bench.set_defaults(fn=cmd_bench)

    args = parser.parse_args(argv)
    if args.command == "run" and not (args.builtin or args.topology):
        parser.error("need --topology or --builtin")
    try:
        return args.fn(args)
    except TopologyError as exc:
        print(f"topology error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
