"""Deployment engine planning core.

The objective is ``alpha * time + (1 - alpha) * cost`` where time is the
estimated execution time of the structure tree and cost sums the resource
prices of each component's host. ``plan_exhaustive`` is the exact oracle;
``plan_greedy`` places components one at a time in flattening order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .appgraph import ApplicationDescriptor, processing_time, structure_time
from .errors import BudgetExceeded, Infeasible, InfraError, PlanError
from .infra import InfrastructureGraph

DEFAULT_ALPHA = 0.5
DEFAULT_BUDGET = 10**6

Usage = Mapping[str, tuple[float, float, float]]


@dataclass(frozen=True)
class PlacementProblem:
    app: ApplicationDescriptor
    infra: InfrastructureGraph
    alpha: float = DEFAULT_ALPHA
    # resources already debited on each node by other applications
    reserved: Usage = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Objective:
    time: float
    cost: float
    scalar: float

    def to_dict(self) -> dict[str, Any]:
        return {"time": _json_num(self.time), "cost": self.cost, "scalar": _json_num(self.scalar)}


@dataclass(frozen=True)
class DeploymentPlan:
    assignment: dict[str, str]
    objective: Objective

    def to_dict(self) -> dict[str, Any]:
        return {"assignment": dict(sorted(self.assignment.items())), "objective": self.objective.to_dict()}

    def with_move(self, component: str, node: str) -> DeploymentPlan:
        moved = dict(self.assignment)
        moved[component] = node
        return DeploymentPlan(moved, self.objective)


def _json_num(x: float) -> float | str:
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def _scalar(alpha: float, time: float, cost: float) -> float:
    # endpoints avoid 0 * inf when a route is missing
    if alpha == 1:
        return time
    if alpha == 0:
        return cost
    return alpha * time + (1 - alpha) * cost


def _node(infra: InfrastructureGraph, node_id: str):
    node = infra.node(node_id)
    if node is None:
        raise InfraError(f"node {node_id!r} not in infrastructure")
    return node


def _time(p: PlacementProblem, a: Mapping[str, str]) -> float:
    """Execution time; unassigned leaves and their links count as zero."""

    def leaf_time(cid: str):
        if cid not in a:
            return 0
        return processing_time(p.app.component(cid).workload, _node(p.infra, a[cid]).processing_rate)

    def latency(x: str, y: str):
        if x not in a or y not in a:
            return 0
        lat = p.infra.latency(a[x], a[y])
        return math.inf if lat is None else lat

    return structure_time(p.app.structure, leaf_time, latency)


def _cost(p: PlacementProblem, a: Mapping[str, str]) -> float:
    total = 0.0
    for cid, nid in a.items():
        c = p.app.component(cid)
        n = _node(p.infra, nid)
        total += c.cpu_req * n.cpu_price + c.memory_req * n.memory_price + c.disk_req * n.disk_price
    return total


def evaluate_plan(p: PlacementProblem, a: Mapping[str, str]) -> Objective:
    missing = [c for c in p.app.component_ids if c not in a]
    if missing:
        raise PlanError(f"components not assigned: {missing}")
    time = _time(p, a)
    cost = _cost(p, a)
    return Objective(time, cost, _scalar(p.alpha, time, cost))


def is_feasible(p: PlacementProblem, a: Mapping[str, str]) -> tuple[bool, list[str]]:
    violations: list[str] = []
    missing = [c for c in p.app.component_ids if c not in a]
    if missing:
        violations.append(f"unassigned components {missing}")
    used: dict[str, list[float]] = {}
    for cid in p.app.component_ids:
        if cid not in a:
            continue
        nid = a[cid]
        node = p.infra.node(nid)
        if node is None:
            violations.append(f"{cid}: node {nid!r} not joined")
            continue
        c = p.app.component(cid)
        if node.tier not in c.allowed_tiers:
            violations.append(f"{cid}: tier {node.tier} not in {sorted(c.allowed_tiers)}")
        u = used.setdefault(nid, list(p.reserved.get(nid, (0, 0, 0))))
        u[0] += c.cpu_req
        u[1] += c.memory_req
        u[2] += c.disk_req
    for nid in sorted(used):
        node = p.infra.node(nid)
        for (name, cap), amount in zip(
            (("cpu", node.cpu_cap), ("memory", node.memory_cap), ("disk", node.disk_cap)), used[nid]
        ):
            if amount > cap:
                violations.append(f"{nid} {name} {amount:g} > {cap:g}")
    if not violations and p.alpha > 0 and math.isinf(_time(p, a)):
        violations.append("no route between the hosts of two chained components")
    return (not violations, violations)


def _sorted_nodes(p: PlacementProblem) -> list[str]:
    return sorted(p.infra.node_ids)


def plan_exhaustive(p: PlacementProblem, budget: int = DEFAULT_BUDGET) -> DeploymentPlan:
    """Optimal plan by enumerating every assignment.

    Ties go to the lexicographically smallest assignment vector (components
    by id, node ids compared in order), which is the enumeration order here.
    """
    comps = sorted(p.app.component_ids)
    nodes = _sorted_nodes(p)
    if len(nodes) ** len(comps) > budget:
        raise BudgetExceeded(f"{len(nodes)}^{len(comps)} candidates exceed budget {budget}")
    best: tuple[float, dict[str, str], Objective] | None = None
    for combo in itertools.product(nodes, repeat=len(comps)):
        a = dict(zip(comps, combo))
        ok, _ = is_feasible(p, a)
        if not ok:
            continue
        obj = evaluate_plan(p, a)
        if best is None or obj.scalar < best[0]:
            best = (obj.scalar, a, obj)
    if best is None:
        raise Infeasible(f"no feasible assignment of {len(comps)} components onto {len(nodes)} nodes")
    return DeploymentPlan(best[1], best[2])


def plan_greedy(p: PlacementProblem) -> DeploymentPlan:
    """Place components in flattening order on the cheapest feasible node.

    A node is feasible for the current component if it fits and every later
    component still fits somewhere on its own afterwards. Routes are not
    looked ahead, so a later component can still dead-end on a missing link.
    """
    nodes = _sorted_nodes(p)
    partial: dict[str, str] = {}
    residual = {
        nid: [
            p.infra.node(nid).cpu_cap - p.reserved.get(nid, (0, 0, 0))[0],
            p.infra.node(nid).memory_cap - p.reserved.get(nid, (0, 0, 0))[1],
            p.infra.node(nid).disk_cap - p.reserved.get(nid, (0, 0, 0))[2],
        ]
        for nid in nodes
    }
    order = p.app.flattening_order()

    def fits(comp, nid, res) -> bool:
        if p.infra.node(nid).tier not in comp.allowed_tiers:
            return False
        return all(n <= r for n, r in zip((comp.cpu_req, comp.memory_req, comp.disk_req), res[nid]))

    for i, cid in enumerate(order):
        c = p.app.component(cid)
        need = (c.cpu_req, c.memory_req, c.disk_req)
        rest = [p.app.component(r) for r in order[i + 1:]]
        best: tuple[float, str] | None = None
        for nid in nodes:
            if not fits(c, nid, residual):
                continue
            # skip nodes whose use would leave a later component with no host at all
            after = dict(residual)
            after[nid] = [r - n for r, n in zip(residual[nid], need)]
            if not all(any(fits(r, m, after) for m in nodes) for r in rest):
                continue
            trial = dict(partial)
            trial[cid] = nid
            time = _time(p, trial)
            if p.alpha > 0 and math.isinf(time):
                continue
            score = _scalar(p.alpha, time, _cost(p, trial))
            if best is None or score < best[0]:
                best = (score, nid)
        if best is None:
            raise Infeasible(f"greedy dead end: no feasible node for {cid!r} after placing {sorted(partial)}")
        nid = best[1]
        partial[cid] = nid
        residual[nid] = [r - n for r, n in zip(residual[nid], need)]
    return DeploymentPlan(partial, evaluate_plan(p, partial))
