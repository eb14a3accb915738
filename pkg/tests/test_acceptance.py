"""One test per acceptance criterion; each prints a PASS or FAIL line."""

from __future__ import annotations

import csv
import json
import random
import subprocess
import sys
import time
import urllib.error
import urllib.request

import conftest
import oracles
from fogpaas import fixtures as fx
from fogpaas.api import PaaSApi, PaaSServer
from fogpaas.appgraph import ApplicationDescriptor, ComponentDescriptor, flatten_to_vnffg
from fogpaas.bench import SCENARIOS, format_csv, run_benchmark
from fogpaas.chaining import verify_chains
from fogpaas.errors import FogPaaSError
from fogpaas.infra import InfrastructureRepository, LinkRecord, SubscriberInbox
from fogpaas.migration import MigrationRequest
from fogpaas.nodesim import SimConfig, Simulator, default_sim_config
from fogpaas.orchestrator import Orchestrator, orchestration_latency
from generators import graph, oracle_suite, random_app


def verdict(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} ({detail})"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


# -- 1 ---------------------------------------------------------------------------


def test_criterion_1_e2e_ordering_every_repetition(tmp_path):
    out = tmp_path / "e2e.csv"
    t0 = time.perf_counter()
    r = subprocess.run(
        [sys.executable, "-m", "fogpaas.cli", "bench", "--scenario", "tc1..tc3", "--out", str(out)],
        capture_output=True, text=True, timeout=60,
    )
    elapsed = time.perf_counter() - t0
    e2e: dict[str, dict[int, int]] = {}
    for row in csv.DictReader(out.open()):
        if row["metric"] == "e2e":
            e2e.setdefault(row["scenario"], {})[int(row["repetition"])] = int(row["value_ms"])
    reps = sorted(e2e["tc1"])
    ordered = all(e2e["tc2"][i] < e2e["tc1"][i] < e2e["tc3"][i] for i in reps)
    ok = r.returncode == 0 and len(reps) == 15 and ordered and elapsed < 10
    verdict(1, "e2e tc2 < tc1 < tc3 in every repetition", ok,
            f"{len(reps)} repetitions, e.g. {e2e['tc2'][1]} < {e2e['tc1'][1]} < {e2e['tc3'][1]} ms, {elapsed:.2f} s")


# -- 2 ---------------------------------------------------------------------------


def _uniform_run(m: int):
    infra = fx.tc_infra("tc1")
    repo = InfrastructureRepository(clock=lambda: 0)
    fx.populate(repo, infra)
    base = default_sim_config(infra, modules=fx.PAAS_MODULES)
    sim = Simulator(SimConfig(uniform_latency_ms=m, bandwidth_mbps=base.bandwidth_mbps,
                              processing_ms={k: 0 for k in base.processing_ms}), infra)
    d = fx.parade_bench_descriptor()
    d = ApplicationDescriptor(
        d.name, tuple(ComponentDescriptor(**{**c.to_dict(), "image_size": 0}) for c in d.components), d.structure
    )
    orch = Orchestrator(repo, sim)
    rec = orch.handle_deploy(d, fx.TC_LAYOUTS["tc1"])
    deploy = orchestration_latency(rec.plans[-1])
    n_d = sum(1 for e in sim.events if e.kind == "message")
    mark = len(sim.events)
    orch.handle_migrate(MigrationRequest(rec.id, fx.ANALYZER))
    migrate = orchestration_latency(rec.plans[-1])
    n_m = sum(1 for e in sim.events[mark:] if e.kind == "message")
    return deploy, migrate, n_d, n_m


def test_criterion_2_deploy_exceeds_migrate():
    worst = None
    for sid in sorted(SCENARIOS):
        by_rep: dict[int, dict[str, int]] = {}
        for row in run_benchmark(sid).rows:
            by_rep.setdefault(row.repetition, {})[row.metric] = row.value_ms
        for rep, v in by_rep.items():
            gap = v["deploy_latency"] - v["migrate_latency"]
            worst = gap if worst is None else min(worst, gap)
    identity = []
    for m in (1, 7, 10, 25):
        deploy, migrate, n_d, n_m = _uniform_run(m)
        identity.append(deploy - migrate == (n_d - n_m) * m and n_d > n_m)
    counts = _uniform_run(10)[2:]
    expected = (oracles.deploy_messages(3, 2, 3), oracles.migrate_messages(1))
    ok = worst > 0 and all(identity) and counts == expected
    verdict(2, "deploy latency > migrate latency; message-count identity", ok,
            f"smallest per-repetition gap {worst} ms over tc1-tc6; N_d={counts[0]}, N_m={counts[1]}")


# -- 3 ---------------------------------------------------------------------------


def test_criterion_3_distributed_paas():
    s = {tc: run_benchmark(tc).summary for tc in ("tc4", "tc5", "tc6")}
    mig = {tc: s[tc]["migrate_latency"]["mean"] for tc in s}
    dep4, dep5 = s["tc4"]["deploy_latency"]["mean"], s["tc5"]["deploy_latency"]["mean"]
    spread = abs(dep4 - dep5) / max(dep4, dep5)
    ok = mig["tc4"] <= mig["tc5"] and mig["tc4"] <= mig["tc6"] and spread <= 0.05
    verdict(3, "migration engine near the destination migrates fastest", ok,
            f"migrate means tc4 {mig['tc4']:.0f}, tc5 {mig['tc5']:.0f}, tc6 {mig['tc6']:.0f} ms; "
            f"deploy tc4 vs tc5 differ by {spread:.2%}")


# -- 4 ---------------------------------------------------------------------------


def test_criterion_4_placement_oracle_suite():
    t0 = time.perf_counter()
    r = oracle_suite(range(100))
    elapsed = time.perf_counter() - t0
    ok = not r.mismatches and not r.greedy_infeasible_returns and r.consistent >= 95 and elapsed < 30
    verdict(4, "exhaustive equals re-enumeration; greedy within 1.5x", ok,
            f"{len(r.mismatches)} mismatches, greedy within bound on {r.within} seeds, "
            f"{r.infeasible} seeds infeasible for both, {r.dead_ends} dead ends, {elapsed:.2f} s")


# -- 5 ---------------------------------------------------------------------------


def _storm_infra():
    nodes = [fx.fog_node(f"fog-{i}", "fog") for i in range(1, 7)] + [fx.cloud_node(f"cloud-{i}", "cloud") for i in (1, 2)]
    links = [
        LinkRecord(a.id, b.id, 1 + (i * 7 + j * 3) % 40)
        for i, a in enumerate(nodes) for j, b in enumerate(nodes) if i < j
    ]
    return graph(nodes, links)


def test_criterion_5_chain_consistency_storm():
    rng = random.Random(2024)
    infra = _storm_infra()
    repo = InfrastructureRepository(clock=lambda: 0)
    fx.populate(repo, infra)
    sim = Simulator(default_sim_config(infra, modules=fx.PAAS_MODULES), infra)
    orch = Orchestrator(repo, sim, planner="greedy", cached_discovery=True)
    apps = []
    for i in range(20):
        rec = orch.handle_deploy(random_app(rng, rng.randint(2, 6), name=f"storm{i}"))
        apps.append(rec)
    moved = failed = 0
    violations: list[str] = []
    for step in range(1000):
        rec = rng.choice(apps)
        comp = rng.choice(rec.descriptor.component_ids)
        hint = rng.choice([None, rng.choice(infra.node_ids)])
        if rng.random() < 0.05:
            sim.inject_failure(rng.choice(["stop", "push", "pull", "start", "chain"]))
        try:
            orch.handle_migrate(MigrationRequest(rec.id, comp, rng.choice(["mobility", "bottleneck", "manual"]), hint))
            moved += 1
        except FogPaaSError:
            failed += 1
        sim.clear_failures()
        fg = flatten_to_vnffg(rec.descriptor)
        violations += [f"step {step}: {v}" for v in verify_chains(fg, rec.deployment_plan, rec.chaining_plan, infra)]
        violations += [f"step {step}: {v}" for v in orch.verify(rec.id)]
        if len(fg.edges) != len(rec.chaining_plan.links):
            violations.append(f"step {step}: {rec.id} edge/link count differs")
    running: set[tuple[str, str]] = set()
    doubles = 0
    for e in sim.events:
        if e.kind != "instance-change":
            continue
        key = (e.payload["app"], e.payload["component"])
        if e.payload["state"] == "running":
            doubles += key in running
            running.add(key)
        else:
            running.discard(key)
    ok = not violations and doubles == 0 and moved + failed == 1000 and moved > 500
    verdict(5, "1000 random migrations keep chains consistent", ok,
            f"{moved} migrated, {failed} refused or rolled back, {len(violations)} violations, "
            f"{doubles} double instances")


# -- 6 ---------------------------------------------------------------------------


def test_criterion_6_pubsub_exactly_once():
    rng = random.Random(6)
    repo = InfrastructureRepository(clock=lambda: 0)
    repo.register_domain("fog-a")
    inboxes = {f"http://sub-{i}": SubscriberInbox() for i in range(10)}
    for uri in inboxes:
        repo.subscribe(uri)
    redelivered = 0

    def lossy(uri, payload):
        nonlocal redelivered
        roll = rng.random()
        if roll < 0.15:
            raise ConnectionError("request lost")
        inboxes[uri].receive(payload)
        if roll < 0.35:
            # delivered but the acknowledgment is lost, so it comes again
            redelivered += 1
            return False
        return True

    live: list[str] = []
    for i in range(200):
        if live and rng.random() < 0.4:
            repo.remove_node(live.pop(rng.randrange(len(live))))
        else:
            nid = f"n{i}"
            repo.publish_node(fx.fog_node(nid, "fog-a"))
            live.append(nid)
        if rng.random() < 0.3:
            repo.deliver_pending(lossy)
    for _ in range(1000):
        if all(repo.pending(u) == 0 for u in inboxes):
            break
        repo.deliver_pending(lossy)
    expected = list(range(1, 201))
    ok = all([e["event_id"] for e in box.events] == expected for box in inboxes.values()) and redelivered > 0
    verdict(6, "200 events reach 10 subscribers exactly once, in order", ok,
            f"{redelivered} redeliveries injected, counts {sorted({len(b.events) for b in inboxes.values()})}")


# -- 7 ---------------------------------------------------------------------------


def _http(url, method, path, payload=None):
    data = None if payload is None else json.dumps(payload).encode()
    req = urllib.request.Request(url + path, data=data, method=method)
    try:
        with urllib.request.urlopen(req, timeout=5) as r:
            return r.status, r.read()
    except urllib.error.HTTPError as e:
        return e.code, e.read()


def test_criterion_7_rest_conformance():
    api = PaaSApi()
    server = PaaSServer(api, "127.0.0.1", 0)
    server.start()
    try:
        checks = {
            "GET /domains": _http(server.url, "GET", "/domains") == (200, b"[]\n"),
            "POST /fognodes": _http(server.url, "POST", "/fognodes?fromuri=http://cb")[0] == 201,
            "DELETE /fognodes": _http(server.url, "DELETE", "/fognodes?fromuri=http://cb") == (204, b""),
        }
        samples = {
            r"^/nodes/([^/]+)$": "/nodes/probe",
            r"^/applications/([^/]+)$": "/applications/probe",
            r"^/applications/([^/]+)/migrations$": "/applications/probe/migrations",
            r"^/migrations/([^/]+)$": "/migrations/probe",
            r"^/fognodes$": "/fognodes?fromuri=http://probe",
        }
        unrouted = []
        for method, pattern in api.documented_routes():
            path = samples.get(pattern, pattern.strip("^$"))
            status, raw = _http(server.url, method, path, {})
            if status == 404 and json.loads(raw)["error"] == "NotFound":
                unrouted.append(f"{method} {path}")
        ok = all(checks.values()) and not unrouted
        verdict(7, "REST routes respond as documented", ok,
                f"{sum(checks.values())}/3 table checks, {len(api.documented_routes())} routes, "
                f"{len(unrouted)} unrouted")
    finally:
        server.stop()


# -- 8 ---------------------------------------------------------------------------


def test_criterion_8_deterministic_csv(tmp_path):
    paths = []
    for run in ("a", "b"):
        rows = [row for sid in sorted(SCENARIOS) for row in run_benchmark(sid, seed=42).rows]
        path = tmp_path / f"{run}.csv"
        path.write_text(format_csv(rows))
        paths.append(path)
    a, b = (p.read_bytes() for p in paths)
    ok = a == b and len(a.splitlines()) > 1
    verdict(8, "identical seeds give byte-identical CSV", ok, f"{len(a.splitlines()) - 1} rows, {len(a)} bytes")
