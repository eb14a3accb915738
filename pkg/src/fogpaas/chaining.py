"""Execution engine, chaining half.

A chaining plan holds one directed link per forwarding-graph edge, resolved
to the hosting nodes of both endpoints. Plans are immutable; every update
yields a new plan with a higher version.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Mapping

from .appgraph import ForwardingGraph
from .errors import InfraError, InstanceNotRunning, PlanError, UnknownComponent


@dataclass(frozen=True)
class ChainLink:
    source: str
    source_node: str
    target: str
    target_node: str
    kind: str
    route_latency: int

    @property
    def edge(self) -> tuple[str, str, str]:
        return (self.source, self.target, self.kind)

    def to_dict(self) -> dict[str, Any]:
        return {
            "from": [self.source, self.source_node],
            "to": [self.target, self.target_node],
            "edge_kind": self.kind,
            "route_latency": self.route_latency,
        }


@dataclass(frozen=True)
class ChainingPlan:
    app_id: str
    links: tuple[ChainLink, ...]
    version: int = 1
    # component -> host at the time of chaining, sorted by component
    placement: tuple[tuple[str, str], ...] = ()

    @property
    def hosts(self) -> dict[str, str]:
        return dict(self.placement)

    def to_dict(self) -> dict[str, Any]:
        return {
            "app_id": self.app_id,
            "version": self.version,
            "links": [l.to_dict() for l in self.links],
        }


def _route(infra, a: str, b: str) -> int:
    lat = infra.latency(a, b)
    if lat is None:
        raise InfraError(f"no route between {a!r} and {b!r}")
    return lat


def derive_chaining_plan(fg: ForwardingGraph, plan, infra, app_id: str = "app") -> ChainingPlan:
    assignment: Mapping[str, str] = plan.assignment if hasattr(plan, "assignment") else plan
    links = []
    for e in fg.edges:
        for c in (e.source, e.target):
            if c not in assignment:
                raise PlanError(f"component {c!r} has no assigned node")
        a, b = assignment[e.source], assignment[e.target]
        links.append(ChainLink(e.source, a, e.target, b, e.kind, _route(infra, a, b)))
    return ChainingPlan(app_id, tuple(links), 1, tuple(sorted(assignment.items())))


def forwarding_tables(cp: ChainingPlan) -> dict[str, dict[str, list]]:
    tables: dict[str, dict[str, list]] = {}
    for l in cp.links:
        tables.setdefault(l.source_node, {}).setdefault(l.source, []).append(
            (l.target, l.target_node, l.kind)
        )
    return tables


def apply_chaining_plan(cp: ChainingPlan, sim) -> None:
    """Install every node's outbound links for the application. Idempotent."""
    for l in cp.links:
        for comp, node in ((l.source, l.source_node), (l.target, l.target_node)):
            inst = sim.instance_for(cp.app_id, comp)
            if inst is None or inst.node != node:
                raise InstanceNotRunning(comp, node)
    sim.set_forwarding(cp.app_id, forwarding_tables(cp))


def rechain_after_migration(cp: ChainingPlan, component: str, new_node: str, infra) -> ChainingPlan:
    hosts = cp.hosts
    if component not in hosts:
        raise UnknownComponent(f"component {component!r} not in chaining plan of {cp.app_id!r}")
    hosts[component] = new_node
    links = []
    for l in cp.links:
        if component not in (l.source, l.target):
            links.append(l)
            continue
        a, b = hosts[l.source], hosts[l.target]
        links.append(replace(l, source_node=a, target_node=b, route_latency=_route(infra, a, b)))
    return ChainingPlan(cp.app_id, tuple(links), cp.version + 1, tuple(sorted(hosts.items())))


def verify_chains(fg: ForwardingGraph, plan, cp: ChainingPlan, infra=None) -> list[str]:
    """Violations of the chaining invariants; an empty list means ok."""
    assignment: Mapping[str, str] = plan.assignment if hasattr(plan, "assignment") else plan
    violations: list[str] = []
    expected = {e.as_tuple() for e in fg.edges}
    seen: set[tuple[str, str, str]] = set()
    for l in cp.links:
        if l.edge in seen:
            violations.append(f"non-bijective: duplicate link {l.edge}")
        seen.add(l.edge)
        if l.edge not in expected:
            violations.append(f"non-bijective: link {l.edge} has no forwarding-graph edge")
    for edge in sorted(expected - seen):
        violations.append(f"non-bijective: edge {edge} has no link")
    for l in cp.links:
        for comp, node in ((l.source, l.source_node), (l.target, l.target_node)):
            if assignment.get(comp) != node:
                violations.append(
                    f"endpoint mismatch: link {l.source}->{l.target} has {comp}@{node}, "
                    f"plan has {comp}@{assignment.get(comp)}"
                )
        if infra is not None:
            current = infra.latency(l.source_node, l.target_node)
            if current != l.route_latency:
                violations.append(
                    f"stale latency: link {l.source}->{l.target} caches {l.route_latency}, infra has {current}"
                )
    return violations
