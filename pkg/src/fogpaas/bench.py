"""Benchmark harness for the six latency test cases.

tc1-tc3 keep every PaaS module in one place and vary where the three
parade components run. tc4-tc6 pin the components on one public-cloud
region and vary where the deployment and migration engines sit, purely
through simulator latency coordinates ("simulated distribution").
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from . import fixtures as fx
from .errors import FogPaaSError, ScenarioError
from .infra import InfrastructureGraph, InfrastructureRepository
from .migration import MigrationRequest
from .nodesim import REGISTRY, SimConfig, Simulator, default_sim_config
from .orchestrator import (
    CLIENT,
    DEPLOYMENT,
    EXECUTION,
    MIGRATION,
    MONITORING,
    ORCHESTRATOR,
    PUBDISC,
    Orchestrator,
    orchestration_latency,
)

METRICS = ("deploy_latency", "migrate_latency", "e2e")
DEFAULT_REPETITIONS = 15
DEFAULT_JITTER = 0.05

# invented inter-site latencies (ms) standing in for the Montreal/Azure setup
SITE_LATENCY_MS = {
    ("montreal-lab", "montreal-lan"): 1,
    ("montreal-lab", "virginia"): 20,
    ("montreal-lan", "virginia"): 20,
    ("montreal-lab", "iowa"): 35,
    ("montreal-lan", "iowa"): 35,
    ("iowa", "virginia"): 15,
}

_OTHERS = (CLIENT, ORCHESTRATOR, PUBDISC, EXECUTION, MONITORING)


def _sites(deployment: str, migration: str, others: str) -> dict[str, str]:
    out = {m: others for m in _OTHERS}
    out[DEPLOYMENT] = deployment
    out[MIGRATION] = migration
    return out


@dataclass(frozen=True)
class BenchScenario:
    id: str
    # component -> node
    layout: Mapping[str, str]
    # PaaS module -> site; None keeps all modules together
    module_sites: Mapping[str, str] | None = None
    repetitions: int = DEFAULT_REPETITIONS
    e2e: bool = False
    migrate_component: str = fx.ANALYZER
    migrate_hint: str | None = None
    description: str = ""

    def __post_init__(self):
        if self.repetitions < 1:
            raise ScenarioError("repetitions must be >= 1")


@dataclass(frozen=True)
class BenchRow:
    scenario: str
    repetition: int
    metric: str
    # None marks a failed repetition
    value_ms: int | None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.value_ms is not None and self.value_ms < 0:
            raise ValueError("value_ms must be >= 0")


@dataclass
class BenchResult:
    scenario: BenchScenario
    rows: list[BenchRow]
    summary: dict[str, dict[str, float]] = field(default_factory=dict)


SCENARIOS: dict[str, BenchScenario] = {
    "tc1": BenchScenario("tc1", fx.TC_LAYOUTS["tc1"], e2e=True,
                         description="two fog nodes and a cloud node, cloud displayer in the cloud"),
    "tc2": BenchScenario("tc2", fx.TC_LAYOUTS["tc2"], e2e=True,
                         description="two fog nodes only"),
    "tc3": BenchScenario("tc3", fx.TC_LAYOUTS["tc3"], e2e=True,
                         description="one fog node, both displayers in the cloud"),
    "tc4": BenchScenario(
        "tc4", {c: fx.IOWA for c in (fx.ANALYZER, fx.FOG_DISPLAYER, fx.CLOUD_DISPLAYER)},
        module_sites=_sites("virginia", "virginia", "montreal-lab"), migrate_hint=fx.VIRGINIA,
        description="simulated distribution: engines next to the destination region",
    ),
    "tc5": BenchScenario(
        "tc5", {c: fx.IOWA for c in (fx.ANALYZER, fx.FOG_DISPLAYER, fx.CLOUD_DISPLAYER)},
        module_sites=_sites("montreal-lab", "montreal-lab", "montreal-lan"), migrate_hint=fx.VIRGINIA,
        description="simulated distribution: engines next to the other PaaS modules",
    ),
    "tc6": BenchScenario(
        "tc6", {c: fx.IOWA for c in (fx.ANALYZER, fx.FOG_DISPLAYER, fx.CLOUD_DISPLAYER)},
        module_sites=_sites("montreal-lab", "iowa", "montreal-lab"), migrate_hint=fx.VIRGINIA,
        description="simulated distribution: migration engine next to the source region",
    ),
}


def scenario_infra(s: BenchScenario) -> InfrastructureGraph:
    if s.module_sites is None:
        return fx.tc_infra(s.id) if s.id in ("tc1", "tc2", "tc3") else fx.prototype_infra()
    return fx.distributed_infra()


def scenario_config(s: BenchScenario, infra: InfrastructureGraph, seed: int, jitter: float) -> SimConfig:
    if s.module_sites is None:
        return default_sim_config(infra, modules=fx.PAAS_MODULES, seed=seed, jitter=jitter)
    locations = dict(s.module_sites)
    locations[fx.IOWA] = "iowa"
    locations[fx.VIRGINIA] = "virginia"
    bandwidth = {(n.id, REGISTRY): n.registry_bandwidth for n in infra.nodes}
    return SimConfig(
        latency_ms=dict(SITE_LATENCY_MS), bandwidth_mbps=bandwidth, locations=locations,
        seed=seed, jitter=jitter,
    )


def _check_layout(s: BenchScenario, infra: InfrastructureGraph) -> None:
    app = fx.parade_bench_descriptor()
    if set(s.layout) != set(app.component_ids):
        raise ScenarioError(f"{s.id}: layout must place exactly {sorted(app.component_ids)}")
    missing = sorted(n for n in s.layout.values() if infra.node(n) is None)
    if missing:
        raise ScenarioError(f"{s.id}: layout names unknown nodes {missing}")


def run_repetition(s: BenchScenario, seed: int, jitter: float = DEFAULT_JITTER) -> dict[str, int]:
    infra = scenario_infra(s)
    repo = InfrastructureRepository(clock=lambda: 0)
    fx.populate(repo, infra)
    sim = Simulator(scenario_config(s, infra, seed, jitter), infra)
    orch = Orchestrator(repo, sim)
    rec = orch.handle_deploy(fx.parade_bench_descriptor(), s.layout)
    out = {"deploy_latency": orchestration_latency(rec.plans[-1])}
    if s.e2e:
        out["e2e"] = sim.measure_e2e(rec.descriptor, rec.chaining_plan)
    orch.handle_migrate(MigrationRequest(rec.id, s.migrate_component, "mobility", s.migrate_hint))
    out["migrate_latency"] = orchestration_latency(rec.plans[-1])
    return out


def run_benchmark(
    s: BenchScenario | str,
    seed: int = 0,
    repetitions: int | None = None,
    jitter: float = DEFAULT_JITTER,
) -> BenchResult:
    """Run every repetition of ``s``; repetition r uses seed ``seed + r``."""
    if isinstance(s, str):
        if s not in SCENARIOS:
            raise ScenarioError(f"unknown scenario {s!r}; known: {sorted(SCENARIOS)}")
        s = SCENARIOS[s]
    reps = s.repetitions if repetitions is None else repetitions
    if reps < 1:
        raise ScenarioError("repetitions must be >= 1")
    _check_layout(s, scenario_infra(s))
    metrics = [m for m in METRICS if m != "e2e" or s.e2e]
    rows: list[BenchRow] = []
    for r in range(1, reps + 1):
        try:
            values = run_repetition(s, seed + r, jitter)
        except FogPaaSError:
            values = {}
        rows += [BenchRow(s.id, r, m, values.get(m)) for m in metrics]
    return BenchResult(s, rows, summarize(rows))


def summarize(rows: Iterable[BenchRow]) -> dict[str, dict[str, float]]:
    by_metric: dict[str, list[int]] = {}
    for row in rows:
        if row.value_ms is not None:
            by_metric.setdefault(row.metric, []).append(row.value_ms)
    return {
        m: {"mean": statistics.fmean(v), "min": min(v), "max": max(v), "n": len(v)}
        for m, v in sorted(by_metric.items())
    }


def _sorted(rows: Iterable[BenchRow]) -> list[BenchRow]:
    return sorted(rows, key=lambda r: (r.scenario, r.metric, r.repetition))


def format_csv(rows: Iterable[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "repetition", "metric", "value_ms"])
    for r in _sorted(rows):
        w.writerow([r.scenario, r.repetition, r.metric, "failed" if r.value_ms is None else r.value_ms])
    return buf.getvalue()


def format_plot_data(rows: Iterable[BenchRow]) -> str:
    """Whitespace-separated columns, one line per (scenario, metric)."""
    groups: dict[tuple[str, str], list[BenchRow]] = {}
    for r in _sorted(rows):
        groups.setdefault((r.scenario, r.metric), []).append(r)
    lines = ["# index scenario metric mean_ms min_ms max_ms n"]
    for i, ((scenario, metric), rs) in enumerate(sorted(groups.items())):
        stats = summarize(rs).get(metric)
        if stats is None:
            lines.append(f"{i} {scenario} {metric} NaN NaN NaN 0")
        else:
            lines.append(
                f"{i} {scenario} {metric} {stats['mean']:.3f} {stats['min']} {stats['max']} {stats['n']}"
            )
    return "\n".join(lines) + "\n"


def emit_report(rows: list[BenchRow], csv_path: str | Path, plot_path: str | Path | None = None) -> tuple[Path, Path]:
    """Write the CSV and a gnuplot data file (default: CSV path with .dat)."""
    if not rows:
        raise ValueError("no rows to report")
    csv_path = Path(csv_path)
    plot_path = Path(plot_path) if plot_path is not None else csv_path.with_suffix(".dat")
    csv_path.write_text(format_csv(rows), encoding="utf-8")
    plot_path.write_text(format_plot_data(rows), encoding="utf-8")
    return csv_path, plot_path


def parse_scenarios(spec: str) -> list[str]:
    """``all``, ``tc2``, ``tc1,tc3`` or a range like ``tc1..tc6``."""
    out: list[str] = []
    for part in spec.split(","):
        part = part.strip()
        if part == "all":
            out += sorted(SCENARIOS)
        elif ".." in part:
            lo, hi = part.split("..", 1)
            try:
                a, b = int(lo.removeprefix("tc")), int(hi.removeprefix("tc"))
            except ValueError:
                raise ScenarioError(f"bad scenario range {part!r}") from None
            out += [f"tc{i}" for i in range(a, b + 1)]
        else:
            out.append(part)
    for sid in out:
        if sid not in SCENARIOS:
            raise ScenarioError(f"unknown scenario {sid!r}; known: {sorted(SCENARIOS)}")
    return list(dict.fromkeys(out))
