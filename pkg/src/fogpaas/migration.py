"""Migration engine: target selection and cold stop/push/pull/start migration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import FogPaaSError, InfraError, NoCandidate, PlanError, StepFailed

STEPS = ("StopInstance", "PushImage", "PullImage", "StartInstance", "Rechain", "RegisterMonitoring")
REASONS = ("mobility", "bottleneck", "manual")


@dataclass(frozen=True)
class MigrationRequest:
    app_id: str
    component: str
    reason: str = "manual"
    # preferred node id, e.g. the fog node the crowd is moving towards
    hint: str | None = None
    event_id: int | None = None

    def __post_init__(self):
        if self.reason not in REASONS:
            raise ValueError(f"unknown migration reason {self.reason!r}")


@dataclass(frozen=True)
class MigrationPlan:
    component: str
    source: str
    target: str
    steps: tuple[str, ...] = STEPS
    estimated_transfer: int = 0

    def __post_init__(self):
        if self.source == self.target:
            raise PlanError(f"migration of {self.component!r}: source and target are both {self.source!r}")
        if tuple(self.steps) != STEPS:
            raise PlanError(f"steps must be {STEPS}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "component": self.component,
            "source": self.source,
            "target": self.target,
            "steps": list(self.steps),
            "estimated_transfer": self.estimated_transfer,
        }


@dataclass
class MigrationReport:
    component: str
    source: str
    target: str
    elapsed: int
    new_assignment: dict[str, str]
    step_durations: dict[str, int] = field(default_factory=dict)
    chaining: Any = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "component": self.component,
            "source": self.source,
            "target": self.target,
            "elapsed": self.elapsed,
            "new_assignment": dict(sorted(self.new_assignment.items())),
            "step_durations": dict(self.step_durations),
        }


def _residuals(infra, app, assignment: Mapping[str, str], usage) -> dict[str, list[float]]:
    out = {}
    for n in infra.nodes:
        if usage is not None:
            used = list(usage.get(n.id, (0, 0, 0)))
        else:
            used = [0, 0, 0]
            for cid, nid in assignment.items():
                if nid == n.id:
                    c = app.component(cid)
                    used = [used[0] + c.cpu_req, used[1] + c.memory_req, used[2] + c.disk_req]
        out[n.id] = [n.cpu_cap - used[0], n.memory_cap - used[1], n.disk_cap - used[2]]
    return out


def select_target(req: MigrationRequest, infra, plan, app, usage=None, fg=None) -> str:
    """Best node for ``req.component``.

    Candidates are joined nodes other than the source with an allowed tier
    and enough residual capacity. The score is the latency to the hint node
    when one is given, else the summed latency to the hosts of the
    component's chain neighbours (all other components without ``fg``).
    Ties go to the smallest node id.
    """
    assignment: Mapping[str, str] = plan.assignment if hasattr(plan, "assignment") else plan
    if req.component not in assignment:
        raise PlanError(f"component {req.component!r} is not deployed")
    source = assignment[req.component]
    comp = app.component(req.component)
    need = (comp.cpu_req, comp.memory_req, comp.disk_req)
    residual = _residuals(infra, app, assignment, usage)
    if fg is not None:
        neighbours = fg.neighbours(req.component)
    else:
        neighbours = [c for c in assignment if c != req.component]
    use_hint = req.hint is not None and infra.node(req.hint) is not None

    best: tuple[float, str] | None = None
    for node in sorted(infra.nodes, key=lambda n: n.id):
        if node.id == source or node.tier not in comp.allowed_tiers:
            continue
        if any(n > r for n, r in zip(need, residual[node.id])):
            continue
        if use_hint:
            lat = infra.latency(node.id, req.hint)
            score = math.inf if lat is None else lat
        else:
            score = 0
            for nbr in neighbours:
                lat = infra.latency(node.id, assignment[nbr])
                score += math.inf if lat is None else lat
        if math.isinf(score):
            continue
        if best is None or score < best[0]:
            best = (score, node.id)
    if best is None:
        raise NoCandidate(f"no node can host {req.component!r} away from {source!r}")
    return best[1]


def transfer_ms(size_mb: float, bandwidth: float) -> int:
    return 0 if size_mb == 0 else math.ceil(size_mb * 1000 / bandwidth)


def build_migration_plan(component, source: str, target: str, infra) -> MigrationPlan:
    """Plan with the image transfer estimate source -> registry -> target."""
    if source == target:
        raise PlanError(f"migration of {component.id!r}: source and target are both {source!r}")
    bws = []
    for nid in (source, target):
        node = infra.node(nid)
        if node is None:
            raise InfraError(f"node {nid!r} not in infrastructure")
        if node.registry_bandwidth is None:
            raise InfraError(f"node {nid!r} has no path to the image registry")
        bws.append(node.registry_bandwidth)
    estimate = transfer_ms(component.image_size, bws[0]) + transfer_ms(component.image_size, bws[1])
    return MigrationPlan(component.id, source, target, STEPS, estimate)


@dataclass
class MigrationContext:
    """What a migration needs besides its plan."""

    sim: Any
    app: Any
    app_id: str
    chaining: Any
    infra: Any
    assignment: dict[str, str]
    engine: str = "migration-engine"
    execution: str = "execution-engine"
    monitor: str = "monitoring-engine"
    orchestrator: str = "orchestrator"
    # called with each step name once it completes
    on_step: Any = None


def execute_migration(mp: MigrationPlan, ctx: MigrationContext) -> MigrationReport:
    """Drive the stop/push/pull/start/rechain/monitor sequence on the simulator.

    On a failed step the component is restarted on the source and the old
    chaining plan re-applied, then StepFailed is raised.
    """
    # nodesim imports this module at load time
    from .chaining import apply_chaining_plan, rechain_after_migration
    from .nodesim import REGISTRY

    sim = ctx.sim
    comp = ctx.app.component(mp.component)
    inst = sim.instance_for(ctx.app_id, mp.component)
    if inst is None or inst.node != mp.source:
        raise PlanError(f"{ctx.app_id}/{mp.component} is not running on {mp.source!r}")

    durations: dict[str, int] = {}
    stopped = started = False
    new_cp = None
    start_clock = sim.now
    step = mp.steps[0]
    try:
        for step in mp.steps:
            t0 = sim.now
            if step == "StopInstance":
                sim.exchange(ctx.engine, mp.source, "stop")
                sim.stop_instance(inst.id)
                stopped = True
            elif step == "PushImage":
                sim.exchange(ctx.engine, mp.source, "push")
                sim.transfer_image(mp.source, REGISTRY, comp.image_size)
            elif step == "PullImage":
                sim.exchange(ctx.engine, mp.target, "pull")
                sim.transfer_image(REGISTRY, mp.target, comp.image_size)
            elif step == "StartInstance":
                sim.exchange(ctx.engine, mp.target, "start")
                sim.start_instance(mp.target, comp, ctx.app_id)
                started = True
            elif step == "Rechain":
                new_cp = rechain_after_migration(ctx.chaining, mp.component, mp.target, ctx.infra)
                changed = sorted(
                    {l.source_node for l in new_cp.links if mp.component in (l.source, l.target)}
                )
                for node in changed:
                    sim.exchange(ctx.execution, node, "rechain")
                apply_chaining_plan(new_cp, sim)
            elif step == "RegisterMonitoring":
                sim.exchange(ctx.orchestrator, ctx.monitor, "monitor")
                moved = dict(ctx.assignment)
                moved[mp.component] = mp.target
                sim.register_monitoring(ctx.app_id, moved)
            durations[step] = sim.now - t0
            sim.record("migration-step", app=ctx.app_id, component=mp.component, step=step,
                     duration=durations[step])
            if ctx.on_step is not None:
                ctx.on_step(step)
    except FogPaaSError as exc:
        outcome = _rollback(ctx, mp, comp, stopped, started)
        raise StepFailed(step, exc, outcome) from exc

    new_assignment = dict(ctx.assignment)
    new_assignment[mp.component] = mp.target
    return MigrationReport(
        mp.component, mp.source, mp.target, sim.now - start_clock, new_assignment, durations, new_cp
    )


def _rollback(ctx: MigrationContext, mp: MigrationPlan, comp, stopped: bool, started: bool) -> str:
    from .chaining import apply_chaining_plan

    sim = ctx.sim
    if not stopped:
        return "nothing to undo"
    if started:
        target_inst = sim.instance_for(ctx.app_id, mp.component)
        if target_inst is not None:
            sim.stop_instance(target_inst.id)
    sim.start_instance(mp.source, comp, ctx.app_id)
    apply_chaining_plan(ctx.chaining, sim)
    sim.register_monitoring(ctx.app_id, ctx.assignment)
    return f"restarted on {mp.source}, chains restored"
