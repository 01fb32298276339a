from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Optional
import logging
import math

import numpy as np
from scipy.stats import norm

from app.config.settings import EXPERIMENT_KINDS, SIGMA_THRESHOLD
from app.core.exceptions import ConfigurationError
from app.core.interlacement import (
    ab_forest,
    dynamics_run,
    hit_probability_test,
    sample_process,
    sample_tree,
)
from app.core.network import WiredQuotient
from app.core.replicas import run_replicas
from app.core.spanning import OrientedForest, enumerate_spanning_trees
from app.core.verification import counterexample_report, run_suite, stationarity_report
from app.models.experiment import ExperimentConfig
from app.models.records import ForestRecord, StatReport
from app.services.families import GeneratedNetwork, as_label, build_quotient, generate
from app.services.potential import (
    capacity,
    spanning_tree_count,
    ust_edge_probabilities,
    ust_edge_probability,
)
from app.services.stats import (
    EmpiricalDistribution,
    bernoulli_sigma,
    distribution_report,
    ks_exponential_test,
    tv_tolerance_for,
    z_score,
)
from app.utils.rng import Rng
from app.utils.serialization import digest, forest_to_dot, format_records

logger = logging.getLogger(__name__)

_ENUMERATION_LIMIT = 100_000


@dataclass
class RunResult:
    """Records emitted by one run, the rendered output and its digest."""

    records: List[Dict[str, Any]]
    passed: bool
    text: str = ""
    digest: str = ""
    forests: List[OrientedForest] = field(default_factory=list)


def _forest_task(sampler: str, wq: WiredQuotient, index: int, rng: Rng) -> OrientedForest:
    return sample_tree(wq, sampler, rng)


def _process_task(wq: WiredQuotient, a: float, b: float, emit: str, index: int, rng: Rng) -> Dict[str, Any]:
    process = sample_process(wq, a, b, rng)
    if emit == "process":
        return {"process": process.to_record().model_dump()}
    if emit == "forest":
        return {"forest": ab_forest(process, a, b).to_record().model_dump()}
    return {"count": len(process), "offsets": [x.time - a for x in process.arrivals]}


def _dynamics_task(wq: WiredQuotient, grid: List[float], index: int, rng: Rng) -> np.ndarray:
    indicators = np.zeros((len(grid), wq.network.num_edges), dtype=np.int8)
    for j, state in enumerate(dynamics_run(wq, grid, rng)):
        indicators[j, sorted(state.edge_ids())] = 1
    return indicators


def _bonferroni_threshold(tests: int) -> float:
    """Two-sided z threshold keeping the family-wise false alarm rate of one 3-sigma test."""
    alpha = 2 * norm.sf(SIGMA_THRESHOLD)
    return float(norm.isf(alpha / (2 * max(tests, 1))))


class ExperimentRunner:
    """Runs one ExperimentConfig deterministically from its seed."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.rng = Rng(config.seed)
        self._generated: Optional[GeneratedNetwork] = None
        self._wq: Optional[WiredQuotient] = None
        self._handlers: Dict[str, Callable[[], RunResult]] = {
            EXPERIMENT_KINDS["SAMPLE_UST"]: self._sample_ust,
            EXPERIMENT_KINDS["SAMPLE_INTERLACEMENT"]: self._sample_interlacement,
            EXPERIMENT_KINDS["DYNAMICS"]: self._dynamics,
            EXPERIMENT_KINDS["HITTING"]: self._hitting,
            EXPERIMENT_KINDS["CAPACITY"]: self._capacity,
            EXPERIMENT_KINDS["COUNTEREXAMPLE"]: self._counterexample,
            EXPERIMENT_KINDS["VERIFY"]: self._verify,
        }

    def run(self) -> RunResult:
        config = self.config
        logger.info(f"Running {config.kind} with seed {config.seed}")
        result = self._handlers[config.kind]()
        for record in result.records:
            record.setdefault("kind", config.kind)
            record["seed"] = config.seed

        if config.format == "dot":
            if not result.forests:
                raise ConfigurationError(f"{config.kind} emits no forest to render as DOT")
            network = self._quotient().network
            result.text = "".join(forest_to_dot(f, network) for f in result.forests)
        else:
            result.text = format_records(result.records, config.format)
        result.digest = digest(result.text)
        logger.info(f"{config.kind} finished: {len(result.records)} records, passed={result.passed}, "
                    f"sha256={result.digest}")
        return result

    def _quotient(self) -> WiredQuotient:
        if self._wq is None:
            self._generated = generate(self.config.family)
            self._wq = build_quotient(self._generated, self.config.quotient)
        return self._wq

    def _vertices(self, labels: List[Any]) -> List[int]:
        wq = self._quotient()
        return [wq.to_quotient(self._generated.network.vertex_of(as_label(x))) for x in labels]

    @staticmethod
    def _from_reports(reports: List[StatReport]) -> RunResult:
        return RunResult(
            records=[r.model_dump(by_alias=True) for r in reports],
            passed=all(r.passed for r in reports),
        )

    def _sample_ust(self) -> RunResult:
        config = self.config
        wq = self._quotient()
        forests = run_replicas(partial(_forest_task, config.sampler, wq), config.samples, self.rng, config.threads)
        if config.emit == "forest":
            records = [{"index": i, "sampler": config.sampler, "forest": f.to_record().model_dump()}
                       for i, f in enumerate(forests)]
            return RunResult(records=records, passed=True, forests=forests)

        try:
            exact = enumerate_spanning_trees(wq.network, wq.boundary, limit=_ENUMERATION_LIMIT)
        except ValueError:
            exact = None
        if exact is not None:
            emp = EmpiricalDistribution.from_samples(f.canonical_key() for f in forests)
            return self._from_reports([distribution_report(f"ust_law[{config.sampler}]", emp, exact,
                                                           tv_tolerance=tv_tolerance_for(exact, emp.total))])

        # too many trees to enumerate: compare edge marginals with the Kirchhoff values
        counts = np.zeros(wq.network.num_edges)
        for f in forests:
            counts[sorted(f.edge_ids())] += 1
        observed = counts / len(forests)
        expected = ust_edge_probabilities(wq.network)
        z = [z_score(o, p, bernoulli_sigma(p, len(forests))) for o, p in zip(observed, expected)]
        max_z = max((abs(v) for v in z), default=0.0)
        report = StatReport(
            test=f"ust_edge_marginals[{config.sampler}]",
            statistic=max_z,
            passed=max_z <= _bonferroni_threshold(len(z)),
            details={"samples": len(forests), "edges": len(z)},
        )
        return self._from_reports([report])

    def _sample_interlacement(self) -> RunResult:
        config = self.config
        wq = self._quotient()
        a, b = config.window
        task = partial(_process_task, wq, a, b, config.emit)
        outcomes = run_replicas(task, config.samples, self.rng, config.threads)
        if config.emit in ("process", "forest"):
            records = [dict(index=i, **outcome) for i, outcome in enumerate(outcomes)]
            forests = []
            if config.emit == "forest":
                forests = [OrientedForest.from_record(ForestRecord.model_validate(o["forest"])) for o in outcomes]
            return RunResult(records=records, passed=True, forests=forests)

        counts = np.array([o["count"] for o in outcomes], dtype=float)
        # replicas laid end to end form one process on [0, samples * (b - a))
        times = [i * (b - a) + x for i, o in enumerate(outcomes) for x in o["offsets"]]
        gaps = np.diff([0.0] + times) * wq.boundary_conductance
        expected = wq.boundary_conductance * (b - a)
        count_z = z_score(counts.mean(), expected, math.sqrt(expected / len(counts))) if len(counts) else 0.0
        reports = [StatReport(
            test="arrival_count",
            statistic=count_z,
            passed=abs(count_z) <= SIGMA_THRESHOLD,
            details={"mean": float(counts.mean()) if len(counts) else 0.0, "expected": expected},
        )]
        if len(gaps):
            statistic, p_value = ks_exponential_test(gaps, 1.0)
            reports.append(StatReport(test="interarrival_ks", statistic=statistic, p_value=p_value,
                                      passed=p_value > 0.001, details={"gaps": len(gaps)}))
        return self._from_reports(reports)

    def _dynamics(self) -> RunResult:
        config = self.config
        wq = self._quotient()
        grid = [float(t) for t in config.t_grid]
        indicators = np.array(run_replicas(partial(_dynamics_task, wq, grid), config.samples, self.rng,
                                           config.threads))
        records: List[Dict[str, Any]] = [
            {"t": t, "marginals": indicators[:, j, :].mean(axis=0).tolist(),
             "base_edges": wq.edge_map.tolist()}
            for j, t in enumerate(grid)
        ]
        passed = True
        if len(grid) > 1 and config.samples > 1:
            report = stationarity_report(wq, indicators[:, -1, :], indicators[:, 0, :], grid[0] - grid[-1])
            records.append(report.model_dump(by_alias=True))
            passed = report.passed
        return RunResult(records=records, passed=passed)

    def _hitting(self) -> RunResult:
        config = self.config
        a, b = config.window
        result = hit_probability_test(self._quotient(), self._vertices(config.K), b - a, config.samples, self.rng)
        return self._from_reports([result.to_report()])

    def _capacity(self) -> RunResult:
        config = self.config
        wq = self._quotient()
        if config.query == "capacity":
            K = self._vertices(config.K)
            solved = capacity(wq, K)
            escape = capacity(wq, K, method="escape")
            agree = math.isclose(solved, escape, rel_tol=1e-8, abs_tol=1e-12)
            return RunResult(records=[{"query": "capacity", "K": config.K, "capacity": solved,
                                       "escape": escape, "agree": agree}], passed=agree)
        if config.query == "treecount":
            count = spanning_tree_count(wq.network)
            return RunResult(records=[{"query": "treecount", "count": count, "log10": math.log10(count)}],
                             passed=True)
        if config.edge is not None:
            if config.edge >= wq.network.num_edges:
                raise ConfigurationError(f"Edge {config.edge} is not an edge of the quotient")
            probabilities = {config.edge: ust_edge_probability(wq.network, config.edge)}
        else:
            probabilities = dict(enumerate(ust_edge_probabilities(wq.network).tolist()))
        records = [{"query": "edgeprob", "edge": e, "base_edge": wq.base_edge(e), "probability": p}
                   for e, p in probabilities.items()]
        return RunResult(records=records, passed=True)

    def _counterexample(self) -> RunResult:
        config = self.config
        report = counterexample_report(config.k, config.m, list(range(2, config.depth + 1)), config.depth,
                                       config.samples, self.rng, config.stretch)
        return self._from_reports([report])

    def _verify(self) -> RunResult:
        return self._from_reports(run_suite(self.config.scale, self.rng, self.config.threads))


def run(config: ExperimentConfig) -> RunResult:
    """Run `config`; identical configs give byte-identical output."""
    return ExperimentRunner(config).run()
