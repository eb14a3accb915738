"""Simulated cloud/fog domains and the monitoring engine.

A single ``Simulator`` owns the simulated clock (integer ms), the instance
table, per-node forwarding tables and an append-only event log ordered by
(time, sequence). Every interaction between PaaS modules, nodes and the
image registry goes through ``message`` or ``transfer_image`` so the
clock reflects the configured latency matrix.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
import random
import threading
import time as _time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .appgraph import ApplicationDescriptor, processing_time, structure_time
from .errors import (
    AppNotRunning,
    CapacityExceeded,
    DuplicateInstance,
    InjectedFault,
    UnknownInstance,
    UnknownNode,
    Unreachable,
)
from .infra import InfrastructureGraph, NodeRecord
from .migration import MigrationRequest

REGISTRY = "registry"

# default processing delays in ms; invented stand-ins, not measurements
DEFAULT_PROCESSING_MS = {
    "blueprint_install": 1500,
    "placement": 20,
    "instance_start": 300,
    "instance_stop": 100,
    "chain_apply": 20,
    "execution_start": 20,
    "monitor_register": 5,
}


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def _parse_pairs(doc: Mapping[str, Any], what: str) -> dict[tuple[str, str], float]:
    out: dict[tuple[str, str], float] = {}
    for key, value in doc.items():
        parts = key.split("|")
        if len(parts) != 2:
            raise ValueError(f"{what}: key {key!r} is not of the form 'a|b'")
        if value < 0:
            raise ValueError(f"{what}: {key} is negative")
        k = _pair(*parts)
        if k in out and out[k] != value:
            raise ValueError(f"{what}: asymmetric entries for {k}")
        out[k] = value
    return out


@dataclass
class SimConfig:
    """Latency matrix, bandwidths and processing delays for one simulation.

    ``latency_ms`` is keyed by unordered pairs of locations. Entities (PaaS
    modules, nodes, the registry, clients) map to a location through
    ``locations``; an entity without an entry is its own location. Two
    entities at the same location talk in 0 ms.
    """

    latency_ms: dict[tuple[str, str], float] = field(default_factory=dict)
    bandwidth_mbps: dict[tuple[str, str], float] = field(default_factory=dict)
    locations: dict[str, str] = field(default_factory=dict)
    uniform_latency_ms: float | None = None
    processing_ms: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_PROCESSING_MS))
    monitor_period_ms: int = 100
    seed: int = 0
    jitter: float = 0.0
    wall_clock: bool = False
    # when set, nodes synced later get category-default entries relative to it
    paas_location: str | None = None

    def __post_init__(self):
        self.latency_ms = {_pair(*k): v for k, v in self.latency_ms.items()}
        self.bandwidth_mbps = {_pair(*k): v for k, v in self.bandwidth_mbps.items()}
        if any(v < 0 for v in self.latency_ms.values()):
            raise ValueError("latencies must be >= 0")
        if any(v <= 0 for v in self.bandwidth_mbps.values()):
            raise ValueError("bandwidths must be > 0")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")
        if self.monitor_period_ms <= 0:
            raise ValueError("monitor_period_ms must be > 0")

    def location(self, entity: str) -> str:
        return self.locations.get(entity, entity)

    def latency(self, a: str, b: str) -> float:
        la, lb = self.location(a), self.location(b)
        if la == lb:
            return 0
        for key in (_pair(la, lb), _pair(a, b)):
            if key in self.latency_ms:
                return self.latency_ms[key]
        if self.uniform_latency_ms is not None:
            return self.uniform_latency_ms
        raise Unreachable(f"no latency entry between {a!r} and {b!r}")

    def add_node_defaults(self, infra: InfrastructureGraph, registry_bandwidth: float = 100.0) -> None:
        """Fill missing entries for ``infra``'s nodes with category defaults.

        Fog-fog 1 ms, fog-cloud 50, PaaS-fog 10, PaaS-cloud 40; node pairs
        use the infra link latency where a link exists. The registry sits
        with the cloud, 40 ms from the PaaS. Existing entries are kept.
        """
        paas = self.paas_location
        nodes = list(infra.nodes)
        for i, a in enumerate(nodes):
            if paas is not None:
                self.latency_ms.setdefault(_pair(paas, a.id), 10 if a.tier == "fog" else 40)
            self.latency_ms.setdefault(_pair(REGISTRY, a.id), 40 if a.tier == "fog" else 1)
            bw = a.registry_bandwidth if a.registry_bandwidth else registry_bandwidth
            self.bandwidth_mbps.setdefault(_pair(a.id, REGISTRY), bw)
            for b in nodes[i + 1:]:
                link = infra.latency(a.id, b.id)
                if link is None:
                    link = 50 if a.tier != b.tier else 1
                self.latency_ms.setdefault(_pair(a.id, b.id), link)
        if paas is not None:
            self.latency_ms.setdefault(_pair(paas, REGISTRY), 40)

    def bandwidth(self, a: str, b: str) -> float:
        try:
            return self.bandwidth_mbps[_pair(a, b)]
        except KeyError:
            raise Unreachable(f"no bandwidth entry between {a!r} and {b!r}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "latency_ms": {f"{a}|{b}": v for (a, b), v in sorted(self.latency_ms.items())},
            "bandwidth_mbps": {f"{a}|{b}": v for (a, b), v in sorted(self.bandwidth_mbps.items())},
            "locations": dict(sorted(self.locations.items())),
            "uniform_latency_ms": self.uniform_latency_ms,
            "processing_ms": dict(sorted(self.processing_ms.items())),
            "monitor_period_ms": self.monitor_period_ms,
            "seed": self.seed,
            "jitter": self.jitter,
            "wall_clock": self.wall_clock,
            "paas_location": self.paas_location,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> SimConfig:
        known = {
            "latency_ms", "bandwidth_mbps", "locations", "uniform_latency_ms",
            "processing_ms", "monitor_period_ms", "seed", "jitter", "wall_clock", "paas_location",
        }
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown SimConfig field(s) {sorted(unknown)}")
        processing = dict(DEFAULT_PROCESSING_MS)
        processing.update(doc.get("processing_ms", {}))
        return cls(
            latency_ms=_parse_pairs(doc.get("latency_ms", {}), "latency_ms"),
            bandwidth_mbps=_parse_pairs(doc.get("bandwidth_mbps", {}), "bandwidth_mbps"),
            locations=dict(doc.get("locations", {})),
            uniform_latency_ms=doc.get("uniform_latency_ms"),
            processing_ms=processing,
            monitor_period_ms=doc.get("monitor_period_ms", 100),
            seed=doc.get("seed", 0),
            jitter=doc.get("jitter", 0.0),
            wall_clock=doc.get("wall_clock", False),
            paas_location=doc.get("paas_location"),
        )

    @classmethod
    def load(cls, path: str | Path) -> SimConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SimEvent:
    time: int
    seq: int
    kind: str
    payload: dict

    def to_dict(self) -> dict[str, Any]:
        return {"time": self.time, "seq": self.seq, "kind": self.kind, "payload": self.payload}


@dataclass
class Instance:
    id: str
    app_id: str
    component: str
    node: str
    state: str  # created | running | stopped
    resources: tuple[float, float, float]


@dataclass(frozen=True, order=True)
class _Injected:
    at: int
    node: str
    event_id: int
    kind: str = field(compare=False)
    hint: str | None = field(compare=False, default=None)


class Simulator:
    def __init__(self, config: SimConfig | None = None, infra: InfrastructureGraph | None = None):
        self.config = config or SimConfig()
        self.now = 0
        self.events: list[SimEvent] = []
        self.rng = random.Random(self.config.seed)
        self.nodes: dict[str, NodeRecord] = {}
        self.used: dict[str, list[float]] = {}
        self.instances: dict[str, Instance] = {}
        self.forwarding: dict[str, dict[tuple[str, str], tuple]] = {}
        self.monitoring: dict[str, dict[str, str]] = {}
        self._faults: list[list] = []
        self._pending: list[_Injected] = []
        self._observed: set[int] = set()
        self._next_instance = 1
        self._next_injected = 1
        self._lock = threading.RLock()
        if infra is not None:
            self.sync_nodes(infra)

    # -- clock and log -----------------------------------------------------

    def _log(self, kind: str, **payload: Any) -> SimEvent:
        event = SimEvent(self.now, len(self.events), kind, payload)
        self.events.append(event)
        return event

    def record(self, kind: str, **payload: Any) -> SimEvent:
        """Append an event at the current simulated time."""
        with self._lock:
            return self._log(kind, **payload)

    def advance(self, delta_ms: float) -> int:
        if delta_ms < 0:
            raise ValueError("delta_ms must be >= 0")
        step = int(math.ceil(delta_ms))
        with self._lock:
            self.now += step
        if self.config.wall_clock and step:
            _time.sleep(step / 1000)
        return step

    def run_until(self, t: int) -> None:
        if t > self.now:
            self.advance(t - self.now)

    def _jittered(self, value: float) -> int:
        if self.config.jitter and value:
            value = value * (1 + self.rng.uniform(-self.config.jitter, self.config.jitter))
        return int(round(value))

    def message(self, src: str, dst: str, label: str) -> int:
        """One-way message; advances the clock by the src-dst latency."""
        with self._lock:
            lat = self._jittered(self.config.latency(src, dst))
            self.advance(lat)
            self._log("message", src=src, dst=dst, label=label, latency=lat)
            return lat

    def exchange(self, src: str, dst: str, label: str) -> int:
        """Request plus response between two entities."""
        return self.message(src, dst, label) + self.message(dst, src, label + ":ack")

    def process(self, name: str, where: str = "") -> int:
        with self._lock:
            delay = self._jittered(self.config.processing_ms.get(name, 0))
            self.advance(delay)
            self._log("processing", name=name, where=where, duration=delay)
            return delay

    # -- faults ------------------------------------------------------------

    def inject_failure(self, op: str, target: str | None = None, count: int = 1) -> None:
        """Make the next ``count`` matching operations raise InjectedFault.

        ``op`` is one of start, stop, push, pull, chain; ``target`` narrows
        it to a node (start/stop/push/pull) or application (chain).
        """
        with self._lock:
            self._faults.append([op, target, count])

    def clear_failures(self) -> None:
        """Drop injected failures that have not fired yet."""
        with self._lock:
            self._faults.clear()

    def _check_fault(self, op: str, target: str | None) -> None:
        for f in self._faults:
            if f[0] == op and (f[1] is None or f[1] == target) and f[2] > 0:
                f[2] -= 1
                self._log("fault", op=op, target=target)
                raise InjectedFault(f"injected {op} failure on {target}")

    # -- nodes and instances -----------------------------------------------

    def sync_nodes(self, infra: InfrastructureGraph) -> None:
        with self._lock:
            if self.config.paas_location is not None:
                self.config.add_node_defaults(infra)
            for n in infra.nodes:
                self.nodes[n.id] = n
                self.used.setdefault(n.id, [0, 0, 0])

    def register_node(self, node: NodeRecord) -> None:
        with self._lock:
            self.nodes[node.id] = node
            self.used.setdefault(node.id, [0, 0, 0])

    def residual(self, node_id: str) -> tuple[float, float, float]:
        n = self.nodes[node_id]
        u = self.used[node_id]
        return (n.cpu_cap - u[0], n.memory_cap - u[1], n.disk_cap - u[2])

    def usage(self) -> dict[str, tuple[float, float, float]]:
        return {nid: tuple(u) for nid, u in self.used.items()}

    def instance_for(self, app_id: str, component: str) -> Instance | None:
        for inst in self.instances.values():
            if inst.app_id == app_id and inst.component == component and inst.state == "running":
                return inst
        return None

    def running_instances(self, app_id: str | None = None) -> list[Instance]:
        return [
            i for i in self.instances.values()
            if i.state == "running" and (app_id is None or i.app_id == app_id)
        ]

    def start_instance(self, node: str, component, app_id: str = "default") -> Instance:
        with self._lock:
            if node not in self.nodes:
                raise UnknownNode(f"node {node!r} unknown to the simulator")
            if self.instance_for(app_id, component.id) is not None:
                raise DuplicateInstance(f"{app_id}/{component.id} already has a running instance")
            need = (component.cpu_req, component.memory_req, component.disk_req)
            if any(n > r for n, r in zip(need, self.residual(node))):
                raise CapacityExceeded(
                    f"{node}: residual {self.residual(node)} cannot host {component.id} needing {need}"
                )
            self._check_fault("start", node)
            self.process("instance_start", node)
            inst = Instance(f"i{self._next_instance}", app_id, component.id, node, "running", need)
            self._next_instance += 1
            self.instances[inst.id] = inst
            self.used[node] = [u + n for u, n in zip(self.used[node], need)]
            self._log("instance-change", instance=inst.id, app=app_id, component=component.id,
                      node=node, state="running")
            return inst

    def stop_instance(self, instance_id: str) -> None:
        with self._lock:
            inst = self.instances.get(instance_id)
            if inst is None or inst.state != "running":
                raise UnknownInstance(f"no running instance {instance_id!r}")
            self._check_fault("stop", inst.node)
            self.process("instance_stop", inst.node)
            inst.state = "stopped"
            self.used[inst.node] = [u - n for u, n in zip(self.used[inst.node], inst.resources)]
            for table in self.forwarding.values():
                table.pop((inst.app_id, inst.component), None)
            self._log("instance-change", instance=inst.id, app=inst.app_id, component=inst.component,
                      node=inst.node, state="stopped")

    # -- image transfer ----------------------------------------------------

    def transfer_image(self, src: str, dst: str, size_mb: float) -> int:
        """Move an image, via the registry unless one end is the registry."""
        with self._lock:
            hops = [(src, dst)] if REGISTRY in (src, dst) else [(src, REGISTRY), (REGISTRY, dst)]
            durations = []
            for a, b in hops:
                bw = self.config.bandwidth(a, b)
                durations.append(0 if size_mb == 0 else math.ceil(size_mb * 1000 / bw))
            for (a, b), d in zip(hops, durations):
                if b == REGISTRY:
                    self._check_fault("push", a)
                if a == REGISTRY:
                    self._check_fault("pull", b)
                self.advance(d)
                self._log("transfer", src=a, dst=b, size_mb=size_mb, duration=d)
            return sum(durations)

    # -- chaining data plane -----------------------------------------------

    def set_forwarding(self, app_id: str, tables: Mapping[str, Mapping[str, tuple]]) -> None:
        """Replace an application's forwarding entries.

        ``tables`` maps node -> component -> tuple of (dst component, dst node, kind).
        """
        with self._lock:
            self._check_fault("chain", app_id)
            for table in self.forwarding.values():
                for key in [k for k in table if k[0] == app_id]:
                    del table[key]
            for node, entries in tables.items():
                table = self.forwarding.setdefault(node, {})
                for comp, outs in entries.items():
                    table[(app_id, comp)] = tuple(outs)
            self.process("chain_apply", app_id)
            self._log("chain", app=app_id, nodes=sorted(tables))

    def clear_forwarding(self, app_id: str) -> None:
        with self._lock:
            for table in self.forwarding.values():
                for key in [k for k in table if k[0] == app_id]:
                    del table[key]

    def forwarding_table(self, node: str) -> dict:
        return dict(self.forwarding.get(node, {}))

    # -- monitoring engine -------------------------------------------------

    def register_monitoring(self, app_id: str, assignment: Mapping[str, str]) -> None:
        with self._lock:
            self.monitoring[app_id] = dict(assignment)
            self._log("monitor", app=app_id, assignment=dict(sorted(assignment.items())))

    def unregister_monitoring(self, app_id: str) -> None:
        with self._lock:
            self.monitoring.pop(app_id, None)

    def inject_event(self, kind: str, node: str, at: int, hint: str | None = None) -> int:
        if kind not in ("mobility", "bottleneck"):
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            if node not in self.nodes:
                raise UnknownNode(f"node {node!r} unknown to the simulator")
            ev = _Injected(at, node, self._next_injected, kind, hint)
            self._next_injected += 1
            heapq.heappush(self._pending, ev)
            return ev.event_id

    def next_poll(self, t: int) -> int:
        period = self.config.monitor_period_ms
        return -(-t // period) * period

    def monitor_tick(self, now: int) -> list[MigrationRequest]:
        """Migration requests for events observed by the poll at ``now``."""
        with self._lock:
            self.run_until(now)
            due: list[_Injected] = []
            while self._pending and self.next_poll(self._pending[0].at) <= now:
                due.append(heapq.heappop(self._pending))
            due.sort(key=lambda e: (self.next_poll(e.at), e.node, e.event_id))
            requests: list[MigrationRequest] = []
            for ev in due:
                if ev.event_id in self._observed:
                    continue
                self._observed.add(ev.event_id)
                self._log(ev.kind, node=ev.node, at=ev.at, event_id=ev.event_id)
                for app_id in sorted(self.monitoring):
                    for comp, node in sorted(self.monitoring[app_id].items()):
                        if node == ev.node:
                            requests.append(MigrationRequest(app_id, comp, ev.kind, ev.hint, ev.event_id))
            return requests

    # -- end to end measurement --------------------------------------------

    def measure_e2e(
        self,
        app: ApplicationDescriptor,
        chaining,
        footage_units: float = 1,
        trace: list | None = None,
    ) -> int:
        """Source-to-sink traversal time of a footage workload in ms.

        Each leaf processes ``footage_units * workload`` units on its host and
        each hop costs the chained route latency.
        """
        app_id = chaining.app_id
        with self._lock:
            hosts: dict[str, str] = {}
            for cid in app.component_ids:
                inst = self.instance_for(app_id, cid)
                if inst is None:
                    raise AppNotRunning(f"{app_id}: {cid} has no running instance")
                hosts[cid] = inst.node
            routes = {}
            for link in chaining.links:
                if hosts.get(link.source) != link.source_node or hosts.get(link.target) != link.target_node:
                    raise AppNotRunning(f"{app_id}: chain link {link.source}->{link.target} is stale")
                table = self.forwarding.get(link.source_node, {}).get((app_id, link.source), ())
                if (link.target, link.target_node, link.kind) not in table:
                    raise AppNotRunning(f"{app_id}: chain {link.source}->{link.target} not applied")
                routes[(link.source, link.target)] = link.route_latency

            def leaf_time(cid: str):
                node = self.nodes[hosts[cid]]
                return processing_time(footage_units * app.component(cid).workload, node.processing_rate)

            def latency(x: str, y: str):
                lat = self._jittered(routes[(x, y)])
                if trace is not None:
                    trace.append((x, y, lat))
                return lat

            return int(structure_time(app.structure, leaf_time, latency))

    # -- export ------------------------------------------------------------

    def export_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for e in self.events:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")

    def export_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "seq", "kind", "payload"])
            for e in self.events:
                w.writerow([e.time, e.seq, e.kind, json.dumps(e.payload, sort_keys=True)])


def default_sim_config(
    infra: InfrastructureGraph,
    paas_location: str = "paas",
    modules: Iterable[str] = (),
    registry_bandwidth: float = 100.0,
    **overrides: Any,
) -> SimConfig:
    """Category-default matrix for ``infra`` (see ``SimConfig.add_node_defaults``).

    All named PaaS modules share ``paas_location``. Nodes that join later
    receive the same defaults when the simulator syncs them.
    """
    locations = {m: paas_location for m in modules}
    cfg = SimConfig(locations=locations, paas_location=paas_location, **overrides)
    cfg.add_node_defaults(infra, registry_bandwidth)
    return cfg
