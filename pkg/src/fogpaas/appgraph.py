"""Structured application graphs (VNF forwarding graphs).

An application is a set of components plus a structure tree built from
``Leaf``, ``Sequence``, ``Parallel``, ``Selection`` and ``Loop`` nodes.
The tree is flattened into a directed forwarding graph for chaining and is
evaluated recursively to estimate execution time over a placement.

All times are integer milliseconds. Leaf processing time is
``ceil(workload / processing_rate)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterator, Mapping, Sequence as Seq, Union

import yaml

from .errors import DescriptorSyntaxError, GraphError, InfraError, PlanError, SchemaError

TIERS = frozenset({"cloud", "fog"})
SCHEMA_VERSION = 1

RESOURCE_FIELDS = ("cpu_req", "memory_req", "disk_req", "traffic_req", "workload", "image_size")

EDGE_KINDS = ("sequence", "fork", "join", "select", "loopback")


@dataclass(frozen=True)
class ComponentDescriptor:
    id: str
    cpu_req: int = 0
    memory_req: int = 0
    disk_req: int = 0
    traffic_req: int = 0
    workload: int = 0
    allowed_tiers: frozenset[str] = TIERS
    image_size: int = 0

    def __post_init__(self):
        object.__setattr__(self, "allowed_tiers", frozenset(self.allowed_tiers))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "cpu_req": self.cpu_req,
            "memory_req": self.memory_req,
            "disk_req": self.disk_req,
            "traffic_req": self.traffic_req,
            "workload": self.workload,
            "allowed_tiers": sorted(self.allowed_tiers),
            "image_size": self.image_size,
        }


# -- structure tree ---------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    component: str


@dataclass(frozen=True)
class Sequence:
    children: tuple[StructureNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Parallel:
    branches: tuple[StructureNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))


@dataclass(frozen=True)
class Selection:
    """Exactly one branch runs. Without weights timing assumes the slowest."""

    branches: tuple[StructureNode, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(self.weights))


@dataclass(frozen=True)
class Loop:
    body: StructureNode
    iterations: int = 1


StructureNode = Union[Leaf, Sequence, Parallel, Selection, Loop]


def children_of(node: StructureNode) -> tuple[StructureNode, ...]:
    if isinstance(node, Leaf):
        return ()
    if isinstance(node, Sequence):
        return node.children
    if isinstance(node, (Parallel, Selection)):
        return node.branches
    if isinstance(node, Loop):
        return (node.body,)
    raise TypeError(f"not a structure node: {node!r}")


def iter_leaves(node: StructureNode) -> Iterator[str]:
    """Component ids in flattening order (depth first, left to right)."""
    if isinstance(node, Leaf):
        yield node.component
        return
    for child in children_of(node):
        yield from iter_leaves(child)


def depth(node: StructureNode) -> int:
    kids = children_of(node)
    return 1 + max((depth(k) for k in kids), default=0)


def entry_leaves(node: StructureNode) -> list[str]:
    if isinstance(node, Leaf):
        return [node.component]
    if isinstance(node, Sequence):
        return entry_leaves(node.children[0]) if node.children else []
    if isinstance(node, (Parallel, Selection)):
        return [c for b in node.branches for c in entry_leaves(b)]
    return entry_leaves(node.body)


def exit_leaves(node: StructureNode) -> list[str]:
    if isinstance(node, Leaf):
        return [node.component]
    if isinstance(node, Sequence):
        return exit_leaves(node.children[-1]) if node.children else []
    if isinstance(node, (Parallel, Selection)):
        return [c for b in node.branches for c in exit_leaves(b)]
    return exit_leaves(node.body)


# -- application descriptor -------------------------------------------------


@dataclass(frozen=True)
class ApplicationDescriptor:
    name: str
    components: tuple[ComponentDescriptor, ...]
    structure: StructureNode
    sinks: tuple[str, ...] | None = None
    qos: Mapping[str, Any] = field(default_factory=dict)
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if self.sinks is not None:
            object.__setattr__(self, "sinks", tuple(self.sinks))

    @property
    def source_component(self) -> str:
        return next(iter_leaves(self.structure))

    @property
    def sink_components(self) -> tuple[str, ...]:
        if self.sinks is not None:
            return self.sinks
        return tuple(exit_leaves(self.structure))

    def component(self, component_id: str) -> ComponentDescriptor:
        for c in self.components:
            if c.id == component_id:
                return c
        raise KeyError(component_id)

    @property
    def component_ids(self) -> list[str]:
        return [c.id for c in self.components]

    def flattening_order(self) -> list[str]:
        return list(iter_leaves(self.structure))

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "version": self.version,
            "name": self.name,
            "components": [c.to_dict() for c in self.components],
            "structure": structure_to_dict(self.structure),
        }
        if self.sinks is not None:
            doc["sinks"] = list(self.sinks)
        if self.qos:
            doc["qos"] = dict(self.qos)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def structure_to_dict(node: StructureNode) -> dict[str, Any]:
    if isinstance(node, Leaf):
        return {"kind": "leaf", "component": node.component}
    if isinstance(node, Sequence):
        return {"kind": "sequence", "children": [structure_to_dict(c) for c in node.children]}
    if isinstance(node, Parallel):
        return {"kind": "parallel", "branches": [structure_to_dict(b) for b in node.branches]}
    if isinstance(node, Selection):
        doc: dict[str, Any] = {
            "kind": "selection",
            "branches": [structure_to_dict(b) for b in node.branches],
        }
        if node.weights is not None:
            doc["weights"] = list(node.weights)
        return doc
    return {"kind": "loop", "iterations": node.iterations, "body": structure_to_dict(node.body)}


# -- parsing ----------------------------------------------------------------


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _parse_component(obj: Any, where: str) -> ComponentDescriptor:
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{where}: component must be an object")
    cid = _require(obj, "id", where)
    if not isinstance(cid, str) or not cid:
        raise SchemaError(f"{where}: id must be a non-empty string")
    values = {}
    for name in RESOURCE_FIELDS:
        value = _require(obj, name, f"{where} ({cid})")
        if not _is_number(value):
            raise SchemaError(f"{where} ({cid}): {name} must be a number")
        if value < 0:
            raise SchemaError(f"{where} ({cid}): {name} must be >= 0, got {value}")
        values[name] = value
    tiers = _require(obj, "allowed_tiers", f"{where} ({cid})")
    if isinstance(tiers, str) or not isinstance(tiers, Seq) or not tiers:
        raise SchemaError(f"{where} ({cid}): allowed_tiers must be a non-empty list")
    unknown = set(tiers) - TIERS
    if unknown:
        raise SchemaError(f"{where} ({cid}): unknown tier(s) {sorted(unknown)}")
    return ComponentDescriptor(id=cid, allowed_tiers=frozenset(tiers), **values)


def _parse_structure(obj: Any, where: str) -> StructureNode:
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{where}: structure node must be an object")
    kind = _require(obj, "kind", where)
    if kind == "leaf":
        comp = _require(obj, "component", where)
        if not isinstance(comp, str):
            raise SchemaError(f"{where}: leaf component must be a string")
        return Leaf(comp)
    if kind in ("sequence", "parallel", "selection"):
        key = "children" if kind == "sequence" else "branches"
        items = _require(obj, key, where)
        if not isinstance(items, list):
            raise SchemaError(f"{where}: {key} must be a list")
        parsed = [_parse_structure(c, f"{where}.{key}[{i}]") for i, c in enumerate(items)]
        if kind == "sequence":
            return Sequence(tuple(parsed))
        if kind == "parallel":
            return Parallel(tuple(parsed))
        weights = obj.get("weights")
        if weights is not None:
            if not isinstance(weights, list) or not all(_is_number(w) for w in weights):
                raise SchemaError(f"{where}: weights must be a list of numbers")
            weights = tuple(weights)
        return Selection(tuple(parsed), weights)
    if kind == "loop":
        iterations = _require(obj, "iterations", where)
        if not isinstance(iterations, int) or isinstance(iterations, bool):
            raise SchemaError(f"{where}: iterations must be an integer")
        return Loop(_parse_structure(_require(obj, "body", where), f"{where}.body"), iterations)
    raise SchemaError(f"{where}: unknown structure kind {kind!r}")


def load_document(text: str) -> Any:
    """Decode JSON, falling back to the YAML front-end."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DescriptorSyntaxError(f"descriptor is neither JSON nor YAML: {exc}") from exc


def descriptor_from_dict(doc: Any) -> ApplicationDescriptor:
    if not isinstance(doc, Mapping):
        raise SchemaError("descriptor must be an object")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported descriptor version {version!r}")
    name = _require(doc, "name", "descriptor")
    if not isinstance(name, str):
        raise SchemaError("descriptor: name must be a string")
    comps = _require(doc, "components", "descriptor")
    if not isinstance(comps, list):
        raise SchemaError("descriptor: components must be a list")
    components = tuple(_parse_component(c, f"components[{i}]") for i, c in enumerate(comps))
    structure = _parse_structure(_require(doc, "structure", "descriptor"), "structure")
    sinks = doc.get("sinks")
    if sinks is not None and (not isinstance(sinks, list) or not all(isinstance(s, str) for s in sinks)):
        raise SchemaError("descriptor: sinks must be a list of component ids")
    qos = doc.get("qos", {})
    if not isinstance(qos, Mapping):
        raise SchemaError("descriptor: qos must be an object")
    d = ApplicationDescriptor(
        name=name,
        components=components,
        structure=structure,
        sinks=tuple(sinks) if sinks is not None else None,
        qos=dict(qos),
    )
    source = doc.get("source")
    if source is not None and any(True for _ in iter_leaves(structure)) and source != d.source_component:
        raise GraphError(f"source {source!r} is not the first leaf {d.source_component!r}")
    return d


def parse_application_descriptor(text: str) -> ApplicationDescriptor:
    """Parse and validate a descriptor document (JSON or YAML)."""
    d = descriptor_from_dict(load_document(text))
    violations = validate_graph(d)
    if violations:
        raise GraphError("; ".join(violations), violations)
    return d


# -- validation -------------------------------------------------------------


def _structure_violations(node: StructureNode, path: str, out: list[str]) -> None:
    if isinstance(node, Leaf):
        return
    if isinstance(node, Loop):
        if node.iterations < 1:
            out.append(f"{path}: loop iteration_count {node.iterations} < 1")
        _structure_violations(node.body, f"{path}.body", out)
        return
    key = "children" if isinstance(node, Sequence) else "branches"
    kids = children_of(node)
    if not kids:
        out.append(f"{path}: {type(node).__name__.lower()} has no {key}")
    if isinstance(node, Selection) and node.weights is not None:
        if len(node.weights) != len(node.branches):
            out.append(
                f"{path}: {len(node.weights)} weights for {len(node.branches)} branches"
            )
        elif any(w < 0 for w in node.weights):
            out.append(f"{path}: negative selection weight")
        elif not math.isclose(sum(node.weights), 1.0, rel_tol=0, abs_tol=1e-9):
            out.append(f"{path}: selection weights sum != 1 (got {sum(node.weights):g})")
    for i, kid in enumerate(kids):
        _structure_violations(kid, f"{path}.{key}[{i}]", out)


def _leaf_paths(node: StructureNode, path: str) -> Iterator[tuple[str, str]]:
    if isinstance(node, Leaf):
        yield path, node.component
        return
    if isinstance(node, Loop):
        yield from _leaf_paths(node.body, f"{path}.body")
        return
    key = "children" if isinstance(node, Sequence) else "branches"
    for i, kid in enumerate(children_of(node)):
        yield from _leaf_paths(kid, f"{path}.{key}[{i}]")


def validate_graph(d: ApplicationDescriptor) -> list[str]:
    """Every invariant violation of ``d``, each naming the offending element."""
    violations: list[str] = []
    seen: set[str] = set()
    for c in d.components:
        if c.id in seen:
            violations.append(f"component {c.id!r}: duplicate id")
        seen.add(c.id)
        for name in RESOURCE_FIELDS:
            if getattr(c, name) < 0:
                violations.append(f"component {c.id!r}: {name} < 0")
        if not c.allowed_tiers:
            violations.append(f"component {c.id!r}: allowed_tiers is empty")
        elif not c.allowed_tiers <= TIERS:
            violations.append(f"component {c.id!r}: unknown tier(s) {sorted(c.allowed_tiers - TIERS)}")

    _structure_violations(d.structure, "structure", violations)

    placed: dict[str, str] = {}
    for path, comp in _leaf_paths(d.structure, "structure"):
        if comp not in seen:
            violations.append(f"{path}: leaf references undeclared component {comp!r}")
        if comp in placed:
            violations.append(f"{path}: component {comp!r} already appears at {placed[comp]}")
        else:
            placed[comp] = path
    for cid in sorted(seen - placed.keys()):
        violations.append(f"component {cid!r}: not referenced by any leaf")
    if d.sinks is not None:
        for s in d.sinks:
            if s not in seen:
                violations.append(f"sinks: undeclared component {s!r}")
    return violations


# -- forwarding graph -------------------------------------------------------


@dataclass(frozen=True)
class ForwardingEdge:
    source: str
    target: str
    kind: str

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.source, self.target, self.kind)


@dataclass(frozen=True)
class ForwardingGraph:
    edges: tuple[ForwardingEdge, ...]

    def as_tuples(self) -> list[tuple[str, str, str]]:
        return [e.as_tuple() for e in self.edges]

    def neighbours(self, component: str) -> list[str]:
        out: list[str] = []
        for e in self.edges:
            for a, b in ((e.source, e.target), (e.target, e.source)):
                if a == component and b != component and b not in out:
                    out.append(b)
        return out


def _tagged(node: StructureNode, edges: list[ForwardingEdge]):
    """Return (entries, exits) as lists of (component, tag), appending inner edges."""
    if isinstance(node, Leaf):
        return [(node.component, "sequence")], [(node.component, "sequence")]
    if isinstance(node, Sequence):
        first_entries = last_exits = None
        for child in node.children:
            entries, exits = _tagged(child, edges)
            if first_entries is None:
                first_entries = entries
            else:
                for x, xtag in last_exits:
                    for y, ytag in entries:
                        kind = ytag if ytag != "sequence" else xtag
                        edges.append(ForwardingEdge(x, y, kind))
            last_exits = exits
        return first_entries or [], last_exits or []
    if isinstance(node, (Parallel, Selection)):
        into, out = ("fork", "join") if isinstance(node, Parallel) else ("select", "select")
        entries, exits = [], []
        for b in node.branches:
            be, bx = _tagged(b, edges)
            entries += [(c, into) for c, _ in be]
            exits += [(c, out) for c, _ in bx]
        return entries, exits
    entries, exits = _tagged(node.body, edges)
    leaves = list(iter_leaves(node.body))
    edges.append(ForwardingEdge(leaves[-1], leaves[0], "loopback"))
    return entries, exits


def flatten_to_vnffg(d: ApplicationDescriptor) -> ForwardingGraph:
    violations = validate_graph(d)
    if violations:
        raise GraphError("cannot flatten an invalid graph: " + "; ".join(violations), violations)
    edges: list[ForwardingEdge] = []
    _tagged(d.structure, edges)
    unique: list[ForwardingEdge] = []
    seen: set[ForwardingEdge] = set()
    for e in edges:
        # nested loops sharing first/last leaves produce the same loopback twice
        if e not in seen:
            seen.add(e)
            unique.append(e)
    return ForwardingGraph(tuple(unique))


# -- execution time ---------------------------------------------------------

Latency = Callable[[str, str], Union[int, float]]


def structure_time(
    node: StructureNode,
    leaf_time: Callable[[str], Union[int, float]],
    latency: Latency,
) -> Union[int, float]:
    """Recursive time of a structure node.

    ``latency(a, b)`` is the link delay between the hosts of components a and
    b. Boundaries between consecutive children of a Sequence cost the largest
    latency over (exit leaf, entry leaf) pairs, which is where fork and join
    latencies of a Parallel or Selection land.
    """
    if isinstance(node, Leaf):
        return leaf_time(node.component)
    if isinstance(node, Sequence):
        total: Union[int, float] = 0
        prev = None
        for child in node.children:
            if prev is not None:
                total += max(latency(x, y) for x in exit_leaves(prev) for y in entry_leaves(child))
            total += structure_time(child, leaf_time, latency)
            prev = child
        return total
    if isinstance(node, Parallel):
        return max(structure_time(b, leaf_time, latency) for b in node.branches)
    if isinstance(node, Selection):
        times = [structure_time(b, leaf_time, latency) for b in node.branches]
        if node.weights is None:
            return max(times)
        if any(math.isinf(t) for t in times):
            return math.inf
        expected = sum(Fraction(str(w)) * t for w, t in zip(node.weights, times))
        return math.ceil(expected)
    leaves = list(iter_leaves(node.body))
    body = structure_time(node.body, leaf_time, latency)
    return node.iterations * (body + latency(leaves[-1], leaves[0]))


def processing_time(workload: Union[int, float], rate: Union[int, float]) -> Union[int, float]:
    if workload == 0:
        return 0
    if rate <= 0:
        return math.inf
    return math.ceil(Fraction(str(workload)) / Fraction(str(rate)))


def _assignment_of(plan: Any) -> Mapping[str, str]:
    return plan.assignment if hasattr(plan, "assignment") else plan


def estimate_execution_time(d: ApplicationDescriptor, plan: Any, infra: Any) -> Union[int, float]:
    """Execution time in ms of ``d`` under ``plan`` (a plan or an assignment mapping).

    Raises PlanError for an unassigned component and InfraError when an
    assigned node or a needed link is missing.
    """
    assignment = _assignment_of(plan)
    missing = [c for c in d.component_ids if c not in assignment]
    if missing:
        raise PlanError(f"components not assigned: {missing}")

    def leaf_time(cid: str):
        node = infra.node(assignment[cid])
        if node is None:
            raise InfraError(f"node {assignment[cid]!r} not in infrastructure")
        return processing_time(d.component(cid).workload, node.processing_rate)

    def latency(a: str, b: str):
        lat = infra.latency(assignment[a], assignment[b])
        if lat is None:
            raise InfraError(f"no link between {assignment[a]!r} and {assignment[b]!r}")
        return lat

    return structure_time(d.structure, leaf_time, latency)
