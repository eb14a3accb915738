"""Reference applications and infrastructures.

Resource figures are invented but internally consistent: fog nodes are
small, slow and pricey; the cloud is large, fast and cheap.
"""

from __future__ import annotations

from .appgraph import ApplicationDescriptor, ComponentDescriptor, Leaf, Loop, Parallel, Sequence
from .infra import InfrastructureGraph, InfrastructureRepository, LinkRecord, NodeRecord

FOG = frozenset({"fog"})
CLOUD = frozenset({"cloud"})
ANY = frozenset({"fog", "cloud"})

PAAS_MODULES = (
    "app-graph-generator",
    "orchestrator",
    "pubdisc-engine",
    "deployment-engine",
    "execution-engine",
    "migration-engine",
    "monitoring-engine",
)

# per-frame face count driving the analyzer/displayer exchange loop
FACES_PER_FRAME = 5


def _c(id, cpu, mem, disk, traffic, work, tiers, image):
    return ComponentDescriptor(id, cpu, mem, disk, traffic, work, tiers, image)


def parade_descriptor() -> ApplicationDescriptor:
    """Smart parade application with all eight components.

    Footage flows capture -> pattern deriver. Derived patterns then fan out
    to the analyzer chain (analyzer -> facial recognition -> ad issuer), the
    warning alert issuer, historical storage and the results displayer.
    """
    comps = (
        _c("capture-parade-footage", 500, 256, 1024, 4000, 2, FOG, 150),
        _c("visible-pattern-deriver", 1000, 1024, 2048, 2000, 10, FOG, 300),
        _c("parade-footage-analyzer", 1500, 2048, 4096, 1000, 20, ANY, 400),
        _c("facial-recognition", 2000, 2048, 4096, 500, 30, ANY, 500),
        _c("advertisement-issuer", 250, 256, 512, 50, 2, ANY, 100),
        _c("warning-alert-issuer", 250, 256, 512, 50, 1, ANY, 100),
        _c("historical-storage", 500, 1024, 200000, 100, 5, CLOUD, 200),
        _c("results-displayer", 250, 512, 512, 200, 1, ANY, 100),
    )
    structure = Sequence((
        Leaf("capture-parade-footage"),
        Leaf("visible-pattern-deriver"),
        Parallel((
            Sequence((
                Leaf("parade-footage-analyzer"),
                Leaf("facial-recognition"),
                Leaf("advertisement-issuer"),
            )),
            Leaf("warning-alert-issuer"),
            Leaf("historical-storage"),
            Leaf("results-displayer"),
        )),
    ))
    return ApplicationDescriptor("smart-parade", comps, structure, qos={"deadline_ms": 1000})


def accident_descriptor() -> ApplicationDescriptor:
    """Smart accident management application.

    The car detector keeps coordinating with the traffic light manager while
    the ambulance moves, modelled as a bounded loop.
    """
    comps = (
        _c("collision-detector", 500, 512, 1024, 1000, 4, FOG, 120),
        _c("alert-issuer", 250, 256, 512, 100, 1, FOG, 80),
        _c("emergency-planner", 1000, 1024, 2048, 200, 10, ANY, 200),
        _c("road-planner", 1000, 1024, 2048, 200, 12, ANY, 200),
        _c("car-detector-notifier", 500, 512, 1024, 800, 3, FOG, 120),
        _c("traffic-light-manager", 250, 256, 512, 100, 1, FOG, 80),
        _c("diagnostics-prognostics", 2000, 4096, 100000, 300, 40, CLOUD, 600),
    )
    structure = Sequence((
        Leaf("collision-detector"),
        Leaf("alert-issuer"),
        Parallel((
            Leaf("emergency-planner"),
            Sequence((
                Leaf("road-planner"),
                Loop(Sequence((Leaf("car-detector-notifier"), Leaf("traffic-light-manager"))), 4),
            )),
            Leaf("diagnostics-prognostics"),
        )),
    ))
    return ApplicationDescriptor("smart-accident-management", comps, structure)


ANALYZER = "parade-footage-analyzer"
FOG_DISPLAYER = "fog-results-displayer"
CLOUD_DISPLAYER = "cloud-results-displayer"


def parade_bench_descriptor() -> ApplicationDescriptor:
    """The three-component parade deployment used by the latency benchmarks.

    The analyzer posts one result per detected face to the fog displayer,
    which answers before the next face; the fog displayer then forwards the
    frame summary to the cloud displayer.
    """
    comps = (
        _c(ANALYZER, 1500, 2048, 4096, 1000, 8, ANY, 200),
        _c(FOG_DISPLAYER, 250, 512, 512, 200, 1, ANY, 150),
        _c(CLOUD_DISPLAYER, 250, 512, 512, 200, 1, ANY, 150),
    )
    structure = Sequence((
        Loop(Sequence((Leaf(ANALYZER), Leaf(FOG_DISPLAYER))), FACES_PER_FRAME),
        Leaf(CLOUD_DISPLAYER),
    ))
    return ApplicationDescriptor("parade-bench", comps, structure)


def fog_node(id: str, domain: str, **kw) -> NodeRecord:
    base = dict(
        cpu_cap=4000, memory_cap=8192, disk_cap=100000, processing_rate=2,
        cpu_price=0.02, memory_price=0.002, disk_price=0.0001, registry_bandwidth=100.0,
    )
    base.update(kw)
    return NodeRecord(id, domain, "fog", **base)


def cloud_node(id: str, domain: str, **kw) -> NodeRecord:
    base = dict(
        cpu_cap=32000, memory_cap=65536, disk_cap=1000000, processing_rate=8,
        cpu_price=0.01, memory_price=0.001, disk_price=0.00005, registry_bandwidth=200.0,
    )
    base.update(kw)
    return NodeRecord(id, domain, "cloud", **base)


LAN_MS = 1
WAN_MS = 50


def _graph(nodes, links) -> InfrastructureGraph:
    nodes = sorted(nodes, key=lambda n: n.id)
    domains = sorted({n.domain_id for n in nodes})
    from .infra import DomainRecord

    return InfrastructureGraph(
        [DomainRecord(d, tuple(n.id for n in nodes if n.domain_id == d)) for d in domains],
        nodes,
        sorted(links, key=lambda l: l.key),
    )


def prototype_infra(fog_nodes: int = 2, cloud: bool = True) -> InfrastructureGraph:
    """Fog nodes on one LAN plus an optional cloud node across the WAN."""
    nodes = [fog_node(f"fog-{i}", f"fog-domain-{i}") for i in range(1, fog_nodes + 1)]
    links = [
        LinkRecord(a.id, b.id, LAN_MS, 100.0)
        for i, a in enumerate(nodes) for b in nodes[i + 1:]
    ]
    if cloud:
        c = cloud_node("cloud-1", "cloud-domain")
        links += [LinkRecord(f.id, c.id, WAN_MS, 20.0) for f in nodes]
        nodes.append(c)
    return _graph(nodes, links)


def tc_infra(tc: str) -> InfrastructureGraph:
    """Infrastructure of the centralized-PaaS test cases."""
    if tc == "tc1":
        return prototype_infra(2, cloud=True)
    if tc == "tc2":
        return prototype_infra(2, cloud=False)
    if tc == "tc3":
        return prototype_infra(1, cloud=True)
    raise ValueError(f"no centralized infrastructure for {tc!r}")


# component placements of the end-to-end test cases
TC_LAYOUTS = {
    "tc1": {ANALYZER: "fog-1", FOG_DISPLAYER: "fog-2", CLOUD_DISPLAYER: "cloud-1"},
    "tc2": {ANALYZER: "fog-2", FOG_DISPLAYER: "fog-1", CLOUD_DISPLAYER: "fog-2"},
    "tc3": {ANALYZER: "fog-1", FOG_DISPLAYER: "cloud-1", CLOUD_DISPLAYER: "cloud-1"},
}

IOWA = "azure-iowa"
VIRGINIA = "azure-virginia"


def distributed_infra() -> InfrastructureGraph:
    """Two public-cloud regions used by the distributed-PaaS test cases."""
    nodes = [cloud_node(IOWA, "azure"), cloud_node(VIRGINIA, "azure")]
    return _graph(nodes, [LinkRecord(IOWA, VIRGINIA, 15, 100.0)])


def populate(repo: InfrastructureRepository, infra: InfrastructureGraph) -> None:
    """Publish every domain, node and link of ``infra`` into ``repo``."""
    for d in infra.domains:
        repo.register_domain(d.id)
    published: set[str] = set()
    for n in infra.nodes:
        links = [
            l for l in infra.links
            if n.id in l.key and (set(l.key) - {n.id}) <= published
        ]
        repo.publish_node(n, links)
        published.add(n.id)
