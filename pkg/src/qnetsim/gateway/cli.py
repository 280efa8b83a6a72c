"""Command-line entry points.

    qnetsim run <scenario> --out <dir> [--seed N]
    qnetsim validate <topology-or-scenario file>
    qnetsim sweep-coexistence <scenario> --powers 0,3,6.8 [--out csv]
    qnetsim report <results-dir>
    qnetsim serve <scenario> [--listen host:port] [--portal-dir dir] [--pace x]

Environment: QNET_TOKEN (bearer token for mutating API calls),
QNET_LISTEN_ADDR (default listen address for serve).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..topology import SchemaError, load_topology_file
from .results import read_results, summarize
from .runner import run_scenario, sweep_coexistence, _write_sweep_csv
from .scenario import ScenarioError, load_scenario_file


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_scenario(scenario, args.out, seed_override=args.seed)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2


def _cmd_validate(args) -> int:
    path = Path(args.file)
    errors = []
    import yaml

    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        print(f"unreadable: {exc}", file=sys.stderr)
        return 2
    if isinstance(doc, dict) and "topology" in doc:
        try:
            scenario = load_scenario_file(path)
            scenario.load_graph()
            print(f"ok: scenario with {len(scenario.requests)} request(s)")
            return 0
        except ScenarioError as exc:
            errors.append(str(exc))
    else:
        try:
            graph = load_topology_file(path)
            print(f"ok: topology with {len(graph.nodes)} node(s), "
                  f"{len(graph.links)} link(s), {len(graph.grid)} channel(s)")
            return 0
        except SchemaError as exc:
            errors.append(str(exc))
    for err in errors:
        print(f"invalid: {err}", file=sys.stderr)
    return 2


def _cmd_sweep(args) -> int:
    try:
        scenario = load_scenario_file(args.scenario)
        powers = [float(p) for p in args.powers.split(",")] if args.powers \
            else scenario.coexistence_sweep
        if not powers:
            print("no powers given and scenario has no coexistence_sweep",
                  file=sys.stderr)
            return 2
        rows = sweep_coexistence(scenario, powers)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        _write_sweep_csv(rows, args.out)
        print(f"wrote {args.out}")
    else:
        for row in rows:
            print(f"{row['launch_power_dbm']:7.2f} dBm  "
                  f"V_hv={row['visibility_hv']:.4f}  "
                  f"V_da={row['visibility_da']:.4f}  "
                  f"{'nonclassical' if row['nonclassical'] else 'classical'}")
    return 0


def _cmd_report(args) -> int:
    results_path = Path(args.results_dir) / "results.ndjson"
    if not results_path.exists():
        print(f"no results.ndjson under {args.results_dir}", file=sys.stderr)
        return 2
    records = read_results(results_path)
    summary = summarize(records)
    print(json.dumps(summary, indent=2, sort_keys=True))
    for rec in records:
        line = (f"{rec.request_id:12s} {rec.final_state:10s} "
                f"ebits={rec.ebits_delivered}/{rec.target_ebits}")
        if rec.failure_reason:
            line += f" reason={rec.failure_reason}"
        if rec.rejection_reason:
            line += f" reason={rec.rejection_reason}"
        print(line)
    return 0


def _cmd_serve(args) -> int:
    from .api import GatewayServer, LiveSession

    try:
        scenario = load_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    listen = args.listen or os.environ.get("QNET_LISTEN_ADDR", "127.0.0.1:8077")
    host, _, port = listen.rpartition(":")
    session = LiveSession(scenario, pace=args.pace)
    server = GatewayServer(session, host=host or "127.0.0.1", port=int(port),
                           portal_dir=args.portal_dir)
    print(f"gateway listening on http://{server.address[0]}:{server.address[1]}",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qnetsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario headlessly")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a topology or scenario")
    p_val.add_argument("file")
    p_val.set_defaults(fn=_cmd_validate)

    p_sweep = sub.add_parser("sweep-coexistence",
                             help="visibility vs classical launch power")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--powers", help="comma-separated dBm values")
    p_sweep.add_argument("--out", help="write CSV here instead of stdout")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_rep = sub.add_parser("report", help="summarize a results directory")
    p_rep.add_argument("results_dir")
    p_rep.set_defaults(fn=_cmd_report)

    p_srv = sub.add_parser("serve", help="serve the HTTP API for the portal")
    p_srv.add_argument("scenario")
    p_srv.add_argument("--listen", default=None)
    p_srv.add_argument("--portal-dir", default=None)
    p_srv.add_argument("--pace", type=float, default=0.0,
                       help="wall seconds per virtual second (0 = fast)")
    p_srv.set_defaults(fn=_cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
