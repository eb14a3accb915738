"""IoT platform-as-a-service over simulated hybrid cloud/fog domains.

Applications are structured graphs of components (sequence, parallel,
selection, loop) flattened into forwarding graphs, placed onto published
cloud/fog nodes, chained, monitored and migrated by an orchestrator whose
message latencies come from a deterministic simulator.
"""

from .appgraph import (
    ApplicationDescriptor,
    ComponentDescriptor,
    ForwardingEdge,
    ForwardingGraph,
    Leaf,
    Loop,
    Parallel,
    Selection,
    Sequence,
    estimate_execution_time,
    flatten_to_vnffg,
    parse_application_descriptor,
    validate_graph,
)
from .chaining import ChainingPlan, ChainLink, apply_chaining_plan, derive_chaining_plan, verify_chains
from .infra import (
    DomainRecord,
    InfrastructureGraph,
    InfrastructureRepository,
    LinkRecord,
    NodeRecord,
    SubscriberInbox,
)
from .migration import MigrationPlan, MigrationReport, MigrationRequest, execute_migration, select_target
from .nodesim import SimConfig, Simulator, default_sim_config
from .orchestrator import ApplicationRecord, OrchestrationPlan, Orchestrator, orchestration_latency
from .placement import DeploymentPlan, PlacementProblem, evaluate_plan, is_feasible, plan_exhaustive, plan_greedy

__version__ = "0.1.0"
