"""Deploy the smart parade application, then follow the crowd.

Run with ``python3 demos/parade_walkthrough.py``. Everything happens on the
simulated clock, so the numbers are the same on every machine.
"""

from __future__ import annotations

from fogpaas import fixtures as fx
from fogpaas.infra import InfrastructureRepository
from fogpaas.nodesim import Simulator, default_sim_config
from fogpaas.orchestrator import Orchestrator, orchestration_latency

CAPTURE = "capture-parade-footage"


def main() -> None:
    infra = fx.tc_infra("tc1")
    repo = InfrastructureRepository()
    fx.populate(repo, infra)
    sim = Simulator(default_sim_config(infra, modules=fx.PAAS_MODULES), infra)
    orch = Orchestrator(repo, sim)

    rec = orch.handle_deploy(fx.parade_descriptor())
    print(f"deployed {rec.id} in {orchestration_latency(rec.plans[0])} ms of simulated time")
    for step in rec.plans[0].step_log:
        print(f"  {step.state:<11} {step.enter:>6} -> {step.exit:>6} ms")
    print("placement:")
    for comp, node in sorted(rec.assignment.items()):
        print(f"  {comp:<26} {node}")
    print(f"one frame end to end: {sim.measure_e2e(rec.descriptor, rec.chaining_plan)} ms")

    # the parade moves past the camera's fog node
    source = rec.assignment[CAPTURE]
    sim.inject_event("mobility", source, sim.now + 250)
    for outcome in orch.run_monitoring(sim.now + 1000):
        print(f"monitoring moved {outcome.component}: {outcome.source} -> {outcome.target} "
              f"in {outcome.elapsed} ms")
    print(f"chains consistent: {orch.verify(rec.id) == []}")
    print(f"one frame end to end after the move: {sim.measure_e2e(rec.descriptor, rec.chaining_plan)} ms")


if __name__ == "__main__":
    main()
