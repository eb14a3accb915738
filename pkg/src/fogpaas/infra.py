"""Infrastructure repository and publication/discovery engine.

The repository stores domains, cloud/fog nodes and links as a property
graph. Writers are serialized by a lock; every commit swaps in a new
immutable ``InfrastructureGraph`` so readers never see a torn state.

Node joins and leaves are queued per subscriber and pushed by a delivery
loop with at-least-once semantics. Receivers de-duplicate on ``event_id``
(see ``SubscriberInbox``), which gives exactly-once, in-order observation.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .errors import DanglingLink, DuplicateNode, DuplicateSubscription, UnknownNode, UnknownSubscription

log = logging.getLogger(__name__)

JOINED = "joined"
LEFT = "left"


@dataclass(frozen=True)
class NodeRecord:
    id: str
    domain_id: str
    tier: str
    cpu_cap: int = 0
    memory_cap: int = 0
    disk_cap: int = 0
    processing_rate: float = 1
    cpu_price: float = 0.0
    memory_price: float = 0.0
    disk_price: float = 0.0
    # MB/s towards the shared image registry; None when the node cannot reach it
    registry_bandwidth: float | None = None
    status: str = JOINED

    def validate(self) -> None:
        if self.tier not in ("cloud", "fog"):
            raise ValueError(f"node {self.id}: unknown tier {self.tier!r}")
        for name in ("cpu_cap", "memory_cap", "disk_cap", "cpu_price", "memory_price", "disk_price"):
            if getattr(self, name) < 0:
                raise ValueError(f"node {self.id}: {name} must be >= 0")
        if self.processing_rate <= 0:
            raise ValueError(f"node {self.id}: processing_rate must be > 0")
        if self.registry_bandwidth is not None and self.registry_bandwidth <= 0:
            raise ValueError(f"node {self.id}: registry_bandwidth must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> NodeRecord:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown node field(s) {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class LinkRecord:
    endpoint_a: str
    endpoint_b: str
    latency: int
    bandwidth: float = 100.0

    def __post_init__(self):
        # one record per unordered pair, stored with endpoints sorted
        if self.endpoint_b < self.endpoint_a:
            a, b = self.endpoint_b, self.endpoint_a
            object.__setattr__(self, "endpoint_a", a)
            object.__setattr__(self, "endpoint_b", b)

    @property
    def key(self) -> tuple[str, str]:
        return (self.endpoint_a, self.endpoint_b)

    def validate(self) -> None:
        if self.endpoint_a == self.endpoint_b:
            raise ValueError(f"link {self.key}: endpoints must differ")
        if self.latency < 0:
            raise ValueError(f"link {self.key}: latency must be >= 0")
        if self.bandwidth <= 0:
            raise ValueError(f"link {self.key}: bandwidth must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> LinkRecord:
        return cls(**doc)


@dataclass(frozen=True)
class DomainRecord:
    id: str
    node_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "node_ids": list(self.node_ids)}


@dataclass(frozen=True)
class InfrastructureGraph:
    domains: tuple[DomainRecord, ...] = ()
    nodes: tuple[NodeRecord, ...] = ()
    links: tuple[LinkRecord, ...] = ()
    _nodes_by_id: dict = field(default=None, init=False, repr=False, compare=False, hash=False)
    _links_by_key: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "domains", tuple(self.domains))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "_nodes_by_id", {n.id: n for n in self.nodes})
        object.__setattr__(self, "_links_by_key", {l.key: l for l in self.links})

    def node(self, node_id: str) -> NodeRecord | None:
        return self._nodes_by_id.get(node_id)

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def link(self, a: str, b: str) -> LinkRecord | None:
        return self._links_by_key.get((a, b) if a <= b else (b, a))

    def latency(self, a: str, b: str) -> int | None:
        """Link latency in ms, 0 for co-location, None when there is no link."""
        if a == b:
            return 0 if a in self._nodes_by_id else None
        link = self.link(a, b)
        return None if link is None else link.latency

    def bandwidth(self, a: str, b: str) -> float | None:
        link = self.link(a, b)
        return None if link is None else link.bandwidth

    def violations(self) -> list[str]:
        out = []
        for l in self.links:
            for end in l.key:
                if end not in self._nodes_by_id:
                    out.append(f"link {l.key} names absent node {end!r}")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "domains": [d.to_dict() for d in self.domains],
            "nodes": [n.to_dict() for n in self.nodes],
            "links": [l.to_dict() for l in self.links],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> InfrastructureGraph:
        return cls(
            domains=[DomainRecord(d["id"], tuple(d.get("node_ids", ()))) for d in doc.get("domains", [])],
            nodes=[NodeRecord.from_dict(n) for n in doc.get("nodes", [])],
            links=[LinkRecord.from_dict(l) for l in doc.get("links", [])],
        )


@dataclass(frozen=True)
class Subscription:
    subscriber_uri: str
    created_at: int


@dataclass(frozen=True)
class InfraEvent:
    event_id: int
    type: str  # node-joined | node-left
    node: NodeRecord

    def to_dict(self) -> dict[str, Any]:
        return {"event_id": self.event_id, "type": self.type, "node": self.node.to_dict()}


# transport(uri, payload) -> True when the receiver acknowledged
Transport = Callable[[str, dict], bool]


class InfrastructureRepository:
    def __init__(
        self,
        journal: str | Path | None = None,
        clock: Callable[[], int] | None = None,
        transport: Transport | None = None,
    ):
        self._lock = threading.Lock()
        self._domains: dict[str, None] = {}
        self._nodes: dict[str, NodeRecord] = {}
        self._links: dict[tuple[str, str], LinkRecord] = {}
        self._subscriptions: dict[str, Subscription] = {}
        self._outboxes: dict[str, deque[InfraEvent]] = {}
        self._next_event_id = 1
        self._clock = clock or (lambda: int(time.monotonic() * 1000))
        self.transport = transport
        self._delivery_lock = threading.Lock()
        self._delivery_thread: threading.Thread | None = None
        self._stop_delivery = threading.Event()
        self._journal = Path(journal) if journal is not None else None
        self._snapshot = InfrastructureGraph()
        if self._journal is not None and self._journal.exists():
            self._replay()

    # -- journal -----------------------------------------------------------

    def _append(self, entry: dict) -> None:
        if self._journal is None:
            return
        with self._journal.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def _replay(self) -> None:
        with self._journal.open(encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = json.loads(line)
                op = entry["op"]
                if op == "domain":
                    self._domains.setdefault(entry["id"], None)
                elif op == "publish":
                    node = NodeRecord.from_dict(entry["node"])
                    self._domains.setdefault(node.domain_id, None)
                    self._nodes[node.id] = node
                    for l in entry["links"]:
                        link = LinkRecord.from_dict(l)
                        self._links[link.key] = link
                elif op == "link":
                    link = LinkRecord.from_dict(entry["link"])
                    self._links[link.key] = link
                elif op == "remove":
                    self._drop_node(entry["id"])
                else:
                    raise ValueError(f"journal: unknown op {op!r}")
        self._commit()

    # -- writes ------------------------------------------------------------

    def _commit(self) -> None:
        joined = sorted((n for n in self._nodes.values() if n.status == JOINED), key=lambda n: n.id)
        domains = [
            DomainRecord(d, tuple(n.id for n in joined if n.domain_id == d)) for d in sorted(self._domains)
        ]
        links = sorted(self._links.values(), key=lambda l: l.key)
        self._snapshot = InfrastructureGraph(domains, joined, links)

    def _is_joined(self, node_id: str) -> bool:
        n = self._nodes.get(node_id)
        return n is not None and n.status == JOINED

    def _emit(self, type_: str, node: NodeRecord) -> None:
        event = InfraEvent(self._next_event_id, type_, node)
        self._next_event_id += 1
        for box in self._outboxes.values():
            box.append(event)

    def register_domain(self, domain_id: str) -> None:
        with self._lock:
            if domain_id in self._domains:
                return
            self._domains[domain_id] = None
            self._append({"op": "domain", "id": domain_id})
            self._commit()

    def publish_node(self, node: NodeRecord, adjacent_links: Iterable[LinkRecord] = ()) -> None:
        links = list(adjacent_links)
        node = replace(node, status=JOINED)
        node.validate()
        for l in links:
            l.validate()
        with self._lock:
            if self._is_joined(node.id):
                raise DuplicateNode(f"node {node.id!r} already joined")
            for l in links:
                for end in l.key:
                    if end != node.id and not self._is_joined(end):
                        raise DanglingLink(f"link {l.key} names absent node {end!r}")
            self._domains.setdefault(node.domain_id, None)
            self._nodes[node.id] = node
            for l in links:
                self._links[l.key] = l
            self._append({"op": "publish", "node": node.to_dict(), "links": [l.to_dict() for l in links]})
            self._commit()
            self._emit("node-joined", node)

    def publish_link(self, link: LinkRecord) -> None:
        link.validate()
        with self._lock:
            for end in link.key:
                if not self._is_joined(end):
                    raise DanglingLink(f"link {link.key} names absent node {end!r}")
            self._links[link.key] = link
            self._append({"op": "link", "link": link.to_dict()})
            self._commit()

    def _drop_node(self, node_id: str) -> NodeRecord:
        node = replace(self._nodes[node_id], status=LEFT)
        self._nodes[node_id] = node
        for key in [k for k in self._links if node_id in k]:
            del self._links[key]
        return node

    def remove_node(self, node_id: str) -> None:
        with self._lock:
            if not self._is_joined(node_id):
                raise UnknownNode(f"node {node_id!r} is not joined")
            node = self._drop_node(node_id)
            self._append({"op": "remove", "id": node_id})
            self._commit()
            self._emit("node-left", node)

    # -- reads -------------------------------------------------------------

    def snapshot(self) -> InfrastructureGraph:
        return self._snapshot

    def list_domains(self) -> list[DomainRecord]:
        return list(self._snapshot.domains)

    def tombstones(self) -> list[NodeRecord]:
        with self._lock:
            return sorted((n for n in self._nodes.values() if n.status == LEFT), key=lambda n: n.id)

    # -- subscriptions -----------------------------------------------------

    def subscribe(self, subscriber_uri: str) -> Subscription:
        with self._lock:
            if subscriber_uri in self._subscriptions:
                raise DuplicateSubscription(f"{subscriber_uri!r} already subscribed")
            sub = Subscription(subscriber_uri, self._clock())
            self._subscriptions[subscriber_uri] = sub
            self._outboxes[subscriber_uri] = deque()
            return sub

    def unsubscribe(self, subscriber_uri: str) -> None:
        with self._lock:
            if subscriber_uri not in self._subscriptions:
                raise UnknownSubscription(f"{subscriber_uri!r} is not subscribed")
            del self._subscriptions[subscriber_uri]
            del self._outboxes[subscriber_uri]

    def subscriptions(self) -> list[Subscription]:
        with self._lock:
            return list(self._subscriptions.values())

    def pending(self, subscriber_uri: str) -> int:
        with self._lock:
            return len(self._outboxes.get(subscriber_uri, ()))

    def deliver_pending(self, transport: Transport | None = None) -> int:
        """Push queued events; returns the number acknowledged.

        A subscriber whose transport fails keeps its head event and is retried
        on the next call, so per-subscriber order is preserved.
        """
        transport = transport or self.transport
        if transport is None:
            raise RuntimeError("no transport configured")
        acked = 0
        with self._delivery_lock:
            with self._lock:
                uris = list(self._outboxes)
            for uri in uris:
                while True:
                    with self._lock:
                        box = self._outboxes.get(uri)
                        if not box:
                            break
                        event = box[0]
                    try:
                        ok = transport(uri, event.to_dict())
                    except Exception as exc:  # transport errors mean retry later
                        log.debug("delivery of event %s to %s failed: %s", event.event_id, uri, exc)
                        ok = False
                    if not ok:
                        break
                    with self._lock:
                        box = self._outboxes.get(uri)
                        if box and box[0] is event:
                            box.popleft()
                    acked += 1
        return acked

    def start_delivery(self, interval: float = 0.05) -> None:
        if self._delivery_thread is not None:
            return
        self._stop_delivery.clear()

        def loop():
            while not self._stop_delivery.wait(interval):
                self.deliver_pending()

        self._delivery_thread = threading.Thread(target=loop, name="infra-delivery", daemon=True)
        self._delivery_thread.start()

    def stop_delivery(self) -> None:
        if self._delivery_thread is None:
            return
        self._stop_delivery.set()
        self._delivery_thread.join()
        self._delivery_thread = None


class SubscriberInbox:
    """Receiver side of a subscription: drops redelivered events by id."""

    def __init__(self):
        self.events: list[dict] = []
        self._last_id = 0
        self._lock = threading.Lock()

    def receive(self, payload: Mapping[str, Any]) -> bool:
        with self._lock:
            event_id = payload["event_id"]
            if event_id <= self._last_id:
                return False
            self._last_id = event_id
            self.events.append(dict(payload))
            return True

    def __call__(self, uri: str, payload: Mapping[str, Any]) -> bool:
        self.receive(payload)
        return True
