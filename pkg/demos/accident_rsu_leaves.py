"""A roadside unit leaves while the accident application runs on it.

The orchestrator subscribes to infrastructure changes; when the node's
departure is delivered it migrates every component hosted there.
"""

from __future__ import annotations

from fogpaas import fixtures as fx
from fogpaas.infra import InfrastructureRepository
from fogpaas.nodesim import Simulator, default_sim_config
from fogpaas.orchestrator import Orchestrator


def main() -> None:
    infra = fx.prototype_infra(fog_nodes=3)
    repo = InfrastructureRepository()
    fx.populate(repo, infra)
    sim = Simulator(default_sim_config(infra, modules=fx.PAAS_MODULES), infra)
    orch = Orchestrator(repo, sim)
    repo.subscribe("internal:orchestrator")

    rec = orch.handle_deploy(fx.accident_descriptor())
    print(f"{rec.id} placed as {dict(sorted(rec.assignment.items()))}")
    leaving = sorted(set(rec.assignment.values()) & {"fog-1", "fog-2", "fog-3"})[0]
    print(f"{leaving} leaves the network")
    repo.remove_node(leaving)
    repo.deliver_pending(orch.on_infra_event)
    print(f"now placed as {dict(sorted(rec.assignment.items()))}")
    print(f"status {rec.status}, chains consistent: {orch.verify(rec.id) == []}")


if __name__ == "__main__":
    main()
