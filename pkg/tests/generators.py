"""Seeded random applications and infrastructures for oracle harnesses."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from fogpaas.appgraph import ApplicationDescriptor, ComponentDescriptor, Leaf, Loop, Parallel, Selection, Sequence
from fogpaas.infra import DomainRecord, InfrastructureGraph, LinkRecord, NodeRecord

ALPHAS = (0, 0.25, 0.5, 0.75, 1)


def random_tree(rng: random.Random, ids: list[str]):
    if len(ids) == 1:
        leaf = Leaf(ids[0])
        return Loop(leaf, rng.randint(1, 3)) if rng.random() < 0.15 else leaf
    cut = sorted(rng.sample(range(1, len(ids)), rng.randint(1, len(ids) - 1)))
    parts = [ids[a:b] for a, b in zip([0] + cut, cut + [len(ids)])]
    kids = tuple(random_tree(rng, p) for p in parts)
    kind = rng.choice(["seq", "seq", "par", "sel", "loop"])
    if kind == "seq":
        return Sequence(kids)
    if kind == "par":
        return Parallel(kids)
    if kind == "sel":
        if rng.random() < 0.5:
            return Selection(kids)
        raw = [rng.randint(1, 4) for _ in kids]
        # weights with exact binary fractions sum to 1 without rounding
        weights = [r / sum(raw) for r in raw]
        if sum(weights) != 1:
            return Selection(kids)
        return Selection(kids, tuple(weights))
    return Loop(Sequence(kids), rng.randint(1, 3))


def random_app(rng: random.Random, n: int, name: str = "rand") -> ApplicationDescriptor:
    comps = []
    for i in range(n):
        tiers = rng.choice([{"fog"}, {"cloud"}, {"fog", "cloud"}, {"fog", "cloud"}])
        comps.append(ComponentDescriptor(
            f"c{i}", rng.randint(1, 4), rng.randint(1, 4), rng.randint(1, 4), rng.randint(0, 9),
            rng.randint(0, 20), frozenset(tiers), rng.randint(0, 50),
        ))
    ids = [c.id for c in comps]
    rng.shuffle(ids)
    return ApplicationDescriptor(name, tuple(comps), random_tree(rng, ids))


def random_infra(rng: random.Random, n: int, link_p: float = 0.9) -> InfrastructureGraph:
    nodes = []
    for i in range(n):
        tier = rng.choice(["fog", "cloud"])
        nodes.append(NodeRecord(
            f"n{i}", f"d-{tier}", tier, rng.randint(4, 12), rng.randint(4, 12), rng.randint(4, 12),
            rng.randint(1, 4), rng.randint(0, 5), rng.randint(0, 5), rng.randint(0, 5),
            registry_bandwidth=float(rng.choice([50, 100, 200])),
        ))
    links = [
        LinkRecord(a.id, b.id, rng.randint(0, 20))
        for i, a in enumerate(nodes) for b in nodes[i + 1:] if rng.random() < link_p
    ]
    domains = sorted({n.domain_id for n in nodes})
    return InfrastructureGraph(
        [DomainRecord(d, tuple(n.id for n in nodes if n.domain_id == d)) for d in domains], nodes, links
    )


def random_instance(seed: int):
    rng = random.Random(seed)
    app = random_app(rng, rng.randint(1, 4))
    infra = random_infra(rng, rng.randint(1, 4))
    return app, infra, rng.choice(ALPHAS)


def graph(nodes, links=()) -> InfrastructureGraph:
    """Infrastructure from node and link records, one domain per tier."""
    domains = sorted({n.domain_id for n in nodes})
    return InfrastructureGraph(
        [DomainRecord(d, tuple(n.id for n in nodes if n.domain_id == d)) for d in domains], nodes, links
    )


@dataclass
class SuiteResult:
    within: int = 0
    infeasible: int = 0
    dead_ends: int = 0
    ratios: list = field(default_factory=list)
    mismatches: list = field(default_factory=list)
    greedy_infeasible_returns: list = field(default_factory=list)

    @property
    def consistent(self) -> int:
        # seeds where greedy is within bound, plus seeds nobody can place
        return self.within + self.infeasible


def oracle_suite(seeds) -> SuiteResult:
    """Compare both planners with the independent re-enumeration."""
    import oracles
    from fogpaas.errors import Infeasible
    from fogpaas.placement import PlacementProblem, plan_exhaustive, plan_greedy

    out = SuiteResult()
    for seed in seeds:
        app, infra, alpha = random_instance(seed)
        p = PlacementProblem(app, infra, alpha)
        best = oracles.brute_force(app, infra, alpha)
        try:
            plan = plan_exhaustive(p)
        except Infeasible:
            plan = None
        if best is None:
            if plan is not None:
                out.mismatches.append(seed)
            out.infeasible += 1
            continue
        if plan is None or plan.objective.scalar != best[0] or plan.assignment != best[1]:
            out.mismatches.append(seed)
        try:
            g = plan_greedy(p)
        except Infeasible:
            out.dead_ends += 1
            continue
        if not oracles.feasible(app, infra, alpha, g.assignment):
            out.greedy_infeasible_returns.append(seed)
        ratio = g.objective.scalar / best[0] if best[0] else (1.0 if g.objective.scalar == 0 else float("inf"))
        out.ratios.append((seed, ratio))
        if g.objective.scalar <= 1.5 * best[0]:
            out.within += 1
    return out
