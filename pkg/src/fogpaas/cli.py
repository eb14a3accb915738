"""``fogctl``: run the PaaS server, talk to it, or run the benchmarks.

Exit codes: 0 success, 1 validation failure (bad input or a 4xx answer),
2 transport failure (server unreachable or a 5xx answer).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import urllib.error
import urllib.request
from pathlib import Path

from .appgraph import parse_application_descriptor
from .errors import FogPaaSError, ScenarioError

DEFAULT_API = "http://127.0.0.1:8080"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_TRANSPORT = 2


class TransportError(Exception):
    pass


def api_url(args) -> str:
    return (args.api or os.environ.get("FOGCTL_API") or DEFAULT_API).rstrip("/")


def request(base: str, method: str, path: str, body=None, timeout: float = 30.0) -> tuple[int, object]:
    data = None if body is None else json.dumps(body).encode("utf-8")
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            status, raw = resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        status, raw = exc.code, exc.read()
    except (urllib.error.URLError, OSError) as exc:
        raise TransportError(f"cannot reach {base}: {exc}") from None
    return status, (json.loads(raw) if raw else None)


def _report(status: int, payload) -> int:
    if payload is not None:
        print(json.dumps(payload, indent=2, sort_keys=True))
    if status >= 500:
        return EXIT_TRANSPORT
    if status >= 400:
        return EXIT_INVALID
    return EXIT_OK


# -- subcommands -------------------------------------------------------------


def cmd_serve(args) -> int:
    from .api import PaaSApi, PaaSServer
    from .fixtures import populate
    from .infra import InfrastructureGraph, InfrastructureRepository
    from .nodesim import SimConfig, Simulator

    try:
        config = SimConfig.load(args.config) if args.config else SimConfig(uniform_latency_ms=10)
    except (OSError, ValueError) as exc:
        print(f"fogctl: bad sim config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    host, _, port = args.listen.rpartition(":")
    repo = InfrastructureRepository(journal=args.journal)
    if args.infra:
        try:
            populate(repo, InfrastructureGraph.from_dict(json.loads(Path(args.infra).read_text())))
        except (OSError, ValueError, FogPaaSError) as exc:
            print(f"fogctl: bad infrastructure file: {exc}", file=sys.stderr)
            return EXIT_INVALID
    api = PaaSApi(repo, Simulator(config))
    api.sync_sim()
    server = PaaSServer(api, host or "127.0.0.1", int(port))
    print(f"fogctl: serving on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_deploy(args) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8")
        d = parse_application_descriptor(text)
    except OSError as exc:
        print(f"fogctl: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FogPaaSError, ValueError) as exc:
        print(f"fogctl: invalid descriptor: {exc}", file=sys.stderr)
        return EXIT_INVALID
    body = d.to_dict()
    if args.assignment:
        body = {"descriptor": body, "assignment": json.loads(args.assignment)}
    return _report(*request(api_url(args), "POST", "/applications", body))


def cmd_migrate(args) -> int:
    body = {"component": args.component, "reason": args.reason}
    if args.to:
        body["hint"] = args.to
    return _report(*request(api_url(args), "POST", f"/applications/{args.app}/migrations", body))


def cmd_status(args) -> int:
    return _report(*request(api_url(args), "GET", f"/applications/{args.app}"))


def cmd_domains(args) -> int:
    return _report(*request(api_url(args), "GET", "/domains"))


def cmd_bench(args) -> int:
    from .bench import emit_report, parse_scenarios, run_benchmark

    try:
        ids = parse_scenarios(args.scenario)
        rows = []
        for sid in ids:
            result = run_benchmark(sid, seed=args.seed, repetitions=args.reps)
            rows += result.rows
            for metric, s in result.summary.items():
                print(f"{sid} {metric}: mean {s['mean']:.1f} ms, min {s['min']}, max {s['max']}")
    except ScenarioError as exc:
        print(f"fogctl: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        csv_path, plot_path = emit_report(rows, args.out, args.plot)
        print(f"wrote {csv_path} and {plot_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogctl", description=__doc__.splitlines()[0])
    p.add_argument("--api", help=f"server URL (default: $FOGCTL_API or {DEFAULT_API})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run the HTTP server")
    s.add_argument("--config", help="SimConfig JSON file")
    s.add_argument("--listen", default="127.0.0.1:8080", help="HOST:PORT")
    s.add_argument("--infra", help="infrastructure JSON to publish at startup")
    s.add_argument("--journal", help="repository journal (JSON lines)")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("deploy", help="deploy an application descriptor")
    s.add_argument("-f", "--file", required=True)
    s.add_argument("--assignment", help="JSON object pinning components to nodes")
    s.set_defaults(func=cmd_deploy)

    s = sub.add_parser("migrate", help="migrate one component")
    s.add_argument("app")
    s.add_argument("component")
    s.add_argument("--to", help="preferred target node")
    s.add_argument("--reason", default="manual", choices=["mobility", "bottleneck", "manual"])
    s.set_defaults(func=cmd_migrate)

    s = sub.add_parser("status", help="show an application record")
    s.add_argument("app")
    s.set_defaults(func=cmd_status)

    s = sub.add_parser("domains", help="list cloud/fog domains")
    s.set_defaults(func=cmd_domains)

    s = sub.add_parser("bench", help="run latency benchmarks")
    s.add_argument("--scenario", default="tc1..tc6", help="tc1..tc6, tc2, tc1,tc3 or all")
    s.add_argument("--reps", type=int, default=None, help="repetitions (default 15)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="CSV output path")
    s.add_argument("--plot", help="gnuplot data path (default: CSV path with .dat)")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except TransportError as exc:
        print(f"fogctl: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
