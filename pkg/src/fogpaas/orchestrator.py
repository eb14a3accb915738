"""Deployment and migration orchestration plans.

Each request runs as a small state machine whose steps are timed on the
simulator clock. Message exchanges between PaaS modules and nodes go
through the simulator, so latencies follow its matrix and the number of
exchanges per plan is fixed by the code below:

deployment (per application with k components, h distinct hosts and s
distinct chain source nodes)
    client -> orchestrator request                       1 message
    orchestrator <-> pub/disc engine                     1 exchange (skipped when cached)
    orchestrator <-> deployment engine (plan)            1 exchange
    orchestrator <-> deployment engine (deploy)          1 exchange
    deployment engine <-> each component's node          k exchanges
    orchestrator <-> execution engine (chain)            1 exchange
    execution engine <-> each chain source node          s exchanges
    orchestrator <-> execution engine (execute)          1 exchange
    execution engine <-> each host                       h exchanges
    orchestrator <-> monitoring engine                   1 exchange
    orchestrator -> client acknowledgment                1 message

migration (one component, c chain source nodes touched by the move)
    monitoring engine -> orchestrator request            1 message
    orchestrator <-> migration engine (select)           1 exchange
    orchestrator <-> pub/disc engine                     1 exchange (skipped when cached)
    migration engine <-> source (stop, push)             2 exchanges
    migration engine <-> target (pull, start)            2 exchanges
    execution engine <-> each touched source node        c exchanges
    orchestrator <-> monitoring engine                   1 exchange
    orchestrator -> monitoring engine acknowledgment     1 message
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

from .appgraph import ApplicationDescriptor, flatten_to_vnffg
from .chaining import ChainingPlan, apply_chaining_plan, derive_chaining_plan, verify_chains
from .errors import (
    BudgetExceeded,
    ChainingFailed,
    DeploymentFailed,
    FogPaaSError,
    Infeasible,
    InvalidState,
    NonTerminal,
    PlacementFailed,
    StepFailed,
    UnknownApplication,
    UnknownComponent,
)
from .infra import InfrastructureGraph, InfrastructureRepository
from .migration import (
    MigrationContext,
    MigrationReport,
    MigrationRequest,
    build_migration_plan,
    execute_migration,
    select_target,
)
from .nodesim import REGISTRY, Simulator
from .placement import (
    DeploymentPlan,
    PlacementProblem,
    evaluate_plan,
    is_feasible,
    plan_exhaustive,
    plan_greedy,
)

CLIENT = "app-graph-generator"
ORCHESTRATOR = "orchestrator"
PUBDISC = "pubdisc-engine"
DEPLOYMENT = "deployment-engine"
EXECUTION = "execution-engine"
MIGRATION = "migration-engine"
MONITORING = "monitoring-engine"

DEPLOY_STATES = (
    "Received", "Discovered", "Planned", "Instantiated", "Deployed", "Chained", "Executing", "Monitored",
)
MIGRATE_STATES = ("Received", "TargetSelected", "Migrated", "Rechained", "Monitored")

log = logging.getLogger(__name__)

STATUSES = ("deploying", "running", "migrating", "failed", "terminated")


@dataclass(frozen=True)
class StepEntry:
    state: str
    enter: int
    exit: int

    def to_dict(self) -> dict[str, Any]:
        return {"state": self.state, "enter": self.enter, "exit": self.exit}


@dataclass
class OrchestrationPlan:
    """One run of the deployment or migration state machine.

    ``transitions`` lists every state entered with its time; ``step_log``
    holds one entry per orchestrated step. Instantiation and deployment
    form a single step whose entry is logged under ``Deployed``.
    """

    kind: str
    app_id: str
    state: str = "Received"
    step_log: list[StepEntry] = field(default_factory=list)
    transitions: list[tuple[str, int]] = field(default_factory=list)
    failed_at: str | None = None

    def __post_init__(self):
        if self.kind not in ("deployment", "migration"):
            raise ValueError(f"unknown plan kind {self.kind!r}")

    @property
    def states(self) -> tuple[str, ...]:
        return DEPLOY_STATES if self.kind == "deployment" else MIGRATE_STATES

    @property
    def terminal(self) -> bool:
        return self.state in ("Monitored", "Failed")

    def enter(self, state: str, now: int) -> None:
        """Move to ``state``, which must be the next one in order."""
        if self.terminal:
            raise InvalidState(f"{self.kind} plan of {self.app_id} already {self.state}")
        order = self.states
        expected = order[order.index(self.state) + 1]
        if state != expected:
            raise InvalidState(f"{self.kind} plan: {self.state} -> {state} skips {expected}")
        self.state = state
        self.transitions.append((state, now))

    def log_step(self, state: str, enter: int, exit: int) -> None:
        self.step_log.append(StepEntry(state, enter, exit))

    def fail(self, at: str, now: int) -> None:
        self.failed_at = at
        self.state = "Failed"
        self.transitions.append((f"Failed({at})", now))

    def to_dict(self) -> dict[str, Any]:
        state = f"Failed({self.failed_at})" if self.state == "Failed" else self.state
        return {
            "kind": self.kind,
            "app_id": self.app_id,
            "state": state,
            "step_log": [s.to_dict() for s in self.step_log],
        }


def orchestration_latency(plan: OrchestrationPlan) -> int:
    """Last step exit minus first step enter, in simulated ms."""
    if not plan.terminal:
        raise NonTerminal(f"{plan.kind} plan of {plan.app_id} is still {plan.state}")
    if not plan.step_log:
        return 0
    return plan.step_log[-1].exit - plan.step_log[0].enter


@dataclass
class ApplicationRecord:
    id: str
    descriptor: ApplicationDescriptor
    deployment_plan: DeploymentPlan | None = None
    chaining_plan: ChainingPlan | None = None
    status: str = "deploying"
    plans: list[OrchestrationPlan] = field(default_factory=list)
    # snapshot the application was planned against
    infra: InfrastructureGraph | None = None
    error: str | None = None

    @property
    def assignment(self) -> dict[str, str]:
        return dict(self.deployment_plan.assignment) if self.deployment_plan else {}

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.descriptor.name,
            "status": self.status,
            "deployment_plan": self.deployment_plan.to_dict() if self.deployment_plan else None,
            "chaining_plan": self.chaining_plan.to_dict() if self.chaining_plan else None,
            "plans": [p.to_dict() for p in self.plans],
            "error": self.error,
        }


class _Step:
    """Times one orchestrated step and fails the plan if the body raises."""

    def __init__(self, plan: OrchestrationPlan, sim: Simulator, state: str):
        self.plan, self.sim, self.state = plan, sim, state

    def __enter__(self):
        self.t0 = self.sim.now
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None:
            self.plan.fail(self.state, self.sim.now)
            return False
        if self.plan.state != self.state:
            self.plan.enter(self.state, self.sim.now)
        self.plan.log_step(self.state, self.t0, self.sim.now)
        return False


class Orchestrator:
    """Coordinates discovery, placement, deployment, chaining and migration.

    ``cached_discovery`` reuses one repository snapshot (taken on first use
    or by ``refresh_discovery``) instead of querying the pub/disc engine on
    every request.
    """

    def __init__(
        self,
        repo: InfrastructureRepository,
        sim: Simulator,
        alpha: float = 0.5,
        planner: str = "auto",
        budget: int = 10**6,
        cached_discovery: bool = False,
    ):
        if planner not in ("auto", "exhaustive", "greedy"):
            raise ValueError(f"unknown planner {planner!r}")
        self.repo = repo
        self.sim = sim
        self.alpha = alpha
        self.planner = planner
        self.budget = budget
        self.cached_discovery = cached_discovery
        self._cache: InfrastructureGraph | None = None
        self._records: dict[str, ApplicationRecord] = {}
        self._app_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self.migrations: dict[str, dict[str, Any]] = {}
        self._migration_ids = itertools.count(1)

    # -- discovery ---------------------------------------------------------

    def refresh_discovery(self) -> InfrastructureGraph:
        self._cache = self.repo.snapshot()
        self.sim.sync_nodes(self._cache)
        return self._cache

    def _discover(self) -> InfrastructureGraph:
        if self.cached_discovery:
            return self._cache if self._cache is not None else self.refresh_discovery()
        self.sim.exchange(ORCHESTRATOR, PUBDISC, "discover")
        return self.refresh_discovery()

    # -- records -----------------------------------------------------------

    def _record(self, app_id: str) -> ApplicationRecord:
        with self._lock:
            rec = self._records.get(app_id)
        if rec is None:
            raise UnknownApplication(f"no application {app_id!r}")
        return rec

    def application_status(self, app_id: str) -> dict[str, Any]:
        return self._record(app_id).to_dict()

    def applications(self) -> list[str]:
        with self._lock:
            return sorted(self._records)

    def record(self, app_id: str) -> ApplicationRecord:
        return self._record(app_id)

    def _app_lock(self, app_id: str) -> threading.Lock:
        with self._lock:
            return self._app_locks.setdefault(app_id, threading.Lock())

    # -- deployment --------------------------------------------------------

    def _plan(self, d: ApplicationDescriptor, infra: InfrastructureGraph, pinned) -> DeploymentPlan:
        problem = PlacementProblem(d, infra, self.alpha, reserved=self.sim.usage())
        if pinned is not None:
            ok, violations = is_feasible(problem, pinned)
            if not ok:
                raise Infeasible("pinned assignment: " + "; ".join(violations))
            return DeploymentPlan(dict(pinned), evaluate_plan(problem, pinned))
        if self.planner == "greedy":
            return plan_greedy(problem)
        if self.planner == "exhaustive":
            return plan_exhaustive(problem, self.budget)
        try:
            return plan_exhaustive(problem, self.budget)
        except BudgetExceeded:
            return plan_greedy(problem)

    def _teardown_instances(self, app_id: str) -> None:
        for inst in self.sim.running_instances(app_id):
            self.sim.stop_instance(inst.id)
        self.sim.clear_forwarding(app_id)
        self.sim.unregister_monitoring(app_id)

    def handle_deploy(
        self, d: ApplicationDescriptor, assignment: Mapping[str, str] | None = None
    ) -> ApplicationRecord:
        """Run the deployment plan for ``d``.

        ``assignment`` pins every component to a node and skips the planner
        search; it is still checked for feasibility.
        """
        fg = flatten_to_vnffg(d)
        app_id = f"{d.name}-{next(self._ids)}"
        rec = ApplicationRecord(app_id, d)
        plan = OrchestrationPlan("deployment", app_id)
        rec.plans.append(plan)
        with self._lock:
            self._records[app_id] = rec
        sim = self.sim
        with self._app_lock(app_id):
            try:
                with _Step(plan, sim, "Discovered"):
                    sim.message(CLIENT, ORCHESTRATOR, "deploy")
                    sim.process("blueprint_install", ORCHESTRATOR)
                    infra = self._discover()
                rec.infra = infra

                try:
                    with _Step(plan, sim, "Planned"):
                        sim.exchange(ORCHESTRATOR, DEPLOYMENT, "plan")
                        sim.process("placement", DEPLOYMENT)
                        rec.deployment_plan = self._plan(d, infra, assignment)
                except (Infeasible, BudgetExceeded) as exc:
                    raise PlacementFailed(f"{app_id}: {exc}") from exc

                try:
                    with _Step(plan, sim, "Deployed"):
                        sim.process("blueprint_install", ORCHESTRATOR)
                        sim.exchange(ORCHESTRATOR, DEPLOYMENT, "deploy")
                        plan.enter("Instantiated", sim.now)
                        for cid in d.flattening_order():
                            node = rec.deployment_plan.assignment[cid]
                            sim.exchange(DEPLOYMENT, node, "instantiate")
                            sim.transfer_image(REGISTRY, node, d.component(cid).image_size)
                            sim.start_instance(node, d.component(cid), app_id)
                except FogPaaSError as exc:
                    raise DeploymentFailed(f"{app_id}: {exc}") from exc

                try:
                    with _Step(plan, sim, "Chained"):
                        sim.exchange(ORCHESTRATOR, EXECUTION, "chain")
                        cp = derive_chaining_plan(fg, rec.deployment_plan, infra, app_id)
                        for node in sorted({l.source_node for l in cp.links}):
                            sim.exchange(EXECUTION, node, "chain")
                        apply_chaining_plan(cp, sim)
                        rec.chaining_plan = cp
                except FogPaaSError as exc:
                    raise ChainingFailed(f"{app_id}: {exc}") from exc

                try:
                    with _Step(plan, sim, "Executing"):
                        sim.exchange(ORCHESTRATOR, EXECUTION, "execute")
                        for node in sorted(set(rec.deployment_plan.assignment.values())):
                            sim.exchange(EXECUTION, node, "execute")
                        sim.process("execution_start", EXECUTION)

                    with _Step(plan, sim, "Monitored"):
                        sim.exchange(ORCHESTRATOR, MONITORING, "monitor")
                        sim.register_monitoring(app_id, rec.deployment_plan.assignment)
                        sim.process("monitor_register", MONITORING)
                        sim.message(ORCHESTRATOR, CLIENT, "deploy:ack")
                except FogPaaSError as exc:
                    raise DeploymentFailed(f"{app_id}: {exc}") from exc
            except FogPaaSError as exc:
                self._teardown_instances(app_id)
                rec.status = "failed"
                rec.error = f"{type(exc).__name__}: {exc}"
                raise
            rec.status = "running"
        return rec

    # -- migration ---------------------------------------------------------

    def _migration_infra(self, rec: ApplicationRecord, source: str) -> InfrastructureGraph:
        infra = self._discover() if not self.cached_discovery else (self._cache or self.refresh_discovery())
        if infra.node(source) is None and rec.infra is not None and rec.infra.node(source) is not None:
            # the source left; keep its record and links so the image can still be
            # pushed and chains to components not yet moved off it stay routable
            kept = [
                l for l in rec.infra.links
                if source in l.key and all(n == source or infra.node(n) is not None for n in l.key)
            ]
            infra = InfrastructureGraph(
                infra.domains, list(infra.nodes) + [rec.infra.node(source)], list(infra.links) + kept
            )
        return infra

    def handle_migrate(self, req: MigrationRequest, on_step=None) -> MigrationReport:
        rec = self._record(req.app_id)
        with self._app_lock(req.app_id):
            if rec.status != "running":
                raise InvalidState(f"{req.app_id} is {rec.status}, not running")
            if req.component not in rec.assignment:
                raise UnknownComponent(f"{req.app_id} has no component {req.component!r}")
            sim = self.sim
            plan = OrchestrationPlan("migration", req.app_id)
            rec.plans.append(plan)
            rec.status = "migrating"
            source = rec.assignment[req.component]
            try:
                with _Step(plan, sim, "TargetSelected"):
                    sim.message(MONITORING, ORCHESTRATOR, "migrate")
                    sim.process("blueprint_install", ORCHESTRATOR)
                    sim.exchange(ORCHESTRATOR, MIGRATION, "select")
                    infra = self._migration_infra(rec, source)
                    fg = flatten_to_vnffg(rec.descriptor)
                    target = select_target(
                        req, infra, rec.deployment_plan, rec.descriptor, usage=sim.usage(), fg=fg
                    )
                    mp = build_migration_plan(rec.descriptor.component(req.component), source, target, infra)

                steps = {"t0": sim.now}

                def step_done(step: str) -> None:
                    if step == "StartInstance":
                        plan.enter("Migrated", sim.now)
                        plan.log_step("Migrated", steps["t0"], sim.now)
                        steps["t0"] = sim.now
                    elif step == "Rechain":
                        plan.enter("Rechained", sim.now)
                        plan.log_step("Rechained", steps["t0"], sim.now)
                        steps["t0"] = sim.now
                    if on_step is not None:
                        on_step(step)

                ctx = MigrationContext(
                    sim, rec.descriptor, req.app_id, rec.chaining_plan, infra, rec.assignment,
                    engine=MIGRATION, execution=EXECUTION, monitor=MONITORING,
                    orchestrator=ORCHESTRATOR, on_step=step_done,
                )
                try:
                    report = execute_migration(mp, ctx)
                except FogPaaSError:
                    nxt = MIGRATE_STATES[MIGRATE_STATES.index(plan.state) + 1]
                    plan.fail(nxt, sim.now)
                    raise
                sim.message(ORCHESTRATOR, MONITORING, "migrate:ack")
                plan.enter("Monitored", sim.now)
                plan.log_step("Monitored", steps["t0"], sim.now)
            except FogPaaSError:
                rec.status = "running"
                raise
            problem = PlacementProblem(rec.descriptor, infra, self.alpha)
            rec.deployment_plan = DeploymentPlan(
                report.new_assignment, evaluate_plan(problem, report.new_assignment)
            )
            rec.chaining_plan = report.chaining
            rec.infra = infra
            rec.status = "running"
            return report

    def submit_migration(self, req: MigrationRequest) -> str:
        """Run a migration and file its outcome under a new migration id."""
        mid = f"m{next(self._migration_ids)}"
        try:
            report = self.handle_migrate(req)
            self.migrations[mid] = {"id": mid, "status": "completed", "report": report.to_dict()}
        except StepFailed as exc:
            self.migrations[mid] = {"id": mid, "status": "failed", "error": str(exc)}
        return mid

    # -- teardown and events -----------------------------------------------

    def teardown(self, app_id: str) -> ApplicationRecord:
        rec = self._record(app_id)
        with self._app_lock(app_id):
            if rec.status == "terminated":
                return rec
            self._teardown_instances(app_id)
            rec.status = "terminated"
            return rec

    def verify(self, app_id: str) -> list[str]:
        """Violations of the running-record invariant; empty means ok."""
        rec = self._record(app_id)
        out = []
        if rec.chaining_plan is not None:
            out += verify_chains(flatten_to_vnffg(rec.descriptor), rec.deployment_plan, rec.chaining_plan)
        for cid, node in rec.assignment.items():
            inst = self.sim.instance_for(app_id, cid)
            if inst is None or inst.node != node:
                out.append(f"{cid} not running on {node}")
        return out

    def requests_for_node_left(self, node_id: str) -> list[MigrationRequest]:
        """Manual migration requests for every component hosted on ``node_id``."""
        out = []
        for app_id in self.applications():
            rec = self._record(app_id)
            if rec.status != "running":
                continue
            for cid, nid in sorted(rec.assignment.items()):
                if nid == node_id:
                    out.append(MigrationRequest(app_id, cid, "manual"))
        return out

    def on_infra_event(self, uri: str, payload: Mapping[str, Any]) -> bool:
        """Subscriber transport: migrate components away from nodes that left."""
        if payload.get("type") == "node-left":
            for req in self.requests_for_node_left(payload["node"]["id"]):
                try:
                    self.handle_migrate(req)
                except FogPaaSError as exc:
                    log.warning("could not move %s/%s off %s: %s", req.app_id, req.component,
                                payload["node"]["id"], exc)
        return True

    def run_monitoring(self, until: int) -> list[MigrationReport | FogPaaSError]:
        """Poll the monitoring engine up to ``until`` and act on its requests."""
        outcomes: list[MigrationReport | FogPaaSError] = []
        t = self.sim.next_poll(self.sim.now)
        period = self.sim.config.monitor_period_ms
        while t <= until:
            for req in self.sim.monitor_tick(t):
                rec = self._record(req.app_id)
                if rec.status != "running":
                    continue
                try:
                    outcomes.append(self.handle_migrate(req))
                except FogPaaSError as exc:
                    outcomes.append(exc)
            t = max(t + period, self.sim.next_poll(self.sim.now))
        return outcomes
